import numpy as np
import pytest

from rtmodes.discretize import assemble_all, build_mesh
from rtmodes.params import FluidConfig

# heavy fluid on top, no surface tension; lambda(|xi| = 1) is the main regression number
REFERENCE = FluidConfig(2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0)
# surface tension below critical: sigma_c = 1, |xi|_c = sqrt(20)
TENSION = FluidConfig(2.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.05, 1.0, 1.0, 1.0)


@pytest.fixture
def reference():
    return REFERENCE


@pytest.fixture
def tension():
    return TENSION


@pytest.fixture(scope="session")
def mesh32():
    return build_mesh(1.0, 32, 32)


@pytest.fixture(scope="session")
def forms_ref_32(mesh32):
    return assemble_all(mesh32, REFERENCE, 1.0)


def random_config(rng, *, sigma=False, unstable=True):
    rho_minus = float(rng.uniform(0.5, 2.0))
    ratio = float(rng.uniform(1.2, 4.0)) if unstable else float(rng.uniform(0.2, 0.9))
    data = dict(
        rho_plus=ratio * rho_minus,
        rho_minus=rho_minus,
        mu_plus=float(rng.uniform(0.2, 3.0)),
        mu_minus=float(rng.uniform(0.2, 3.0)),
        g=float(rng.uniform(0.5, 2.0)),
        sigma_plus=0.0,
        sigma_minus=0.0,
        b=float(rng.uniform(0.5, 2.0)),
        L1=float(rng.uniform(0.6, 1.5)),
        L2=float(rng.uniform(0.6, 1.5)),
    )
    if sigma:
        data["sigma_plus"] = float(rng.uniform(0.1, 1.0))
        data["sigma_minus"] = float(rng.uniform(0.0, 0.5))
    return FluidConfig(**data)


def random_profile(rng, mesh):
    return rng.standard_normal(mesh.n_dof)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
