"""Linear Rayleigh-Taylor instability of two viscous fluid layers: growth
rates from a variational eigenproblem, normal-mode fields and the
flattening geometry."""
__version__ = "0.1.0"

from .params import FluidConfig, Frequency, classify_regime, lattice_frequencies  # noqa: E402,F401
from .discretize import Mesh, Profile, build_mesh, default_mesh  # noqa: E402,F401
from .eigen import oracle_alpha, solve_alpha  # noqa: E402,F401
from .growth import dispersion_curve, growth_rate, sharp_rate  # noqa: E402,F401
from .modes import build_mode, sample_fields  # noqa: E402,F401
