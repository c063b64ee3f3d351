"""Normal-mode reconstruction.

From a growth-rate solve (psi, lambda) at a lattice frequency xi we rebuild
the complex normal mode

    w1 = -i phi(x3) e^{i xi.x'},  w2 = -i theta(x3) e^{i xi.x'},
    w3 = psi(x3) e^{i xi.x'},     p~ = pi(x3) e^{i xi.x'},

together with the surface amplitudes eta_+ = psi(1)/lambda and
eta_- = psi(0)/lambda.  Physical fields are real parts times e^{lambda t}:
u1 = phi sin(xi.x'), u2 = theta sin(xi.x'), u3 = psi cos(xi.x'),
p = pi cos(xi.x'), eta = eta_amp cos(xi.x').
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .discretize import Mesh, Profile, assemble_all, evaluate_profile, quadrature_points
from .growth import DispersionPoint, Unstable
from .params import FluidConfig, Frequency, jump_density

NORMALIZATIONS = ("J", "unit_norm")


class ModeError(ValueError):
    """The requested frequency does not carry a growing mode."""


def torus_area(cfg: FluidConfig) -> float:
    """Area of the horizontal cross-section (2 pi L1) x (2 pi L2)."""
    return 4.0 * math.pi**2 * cfg.L1 * cfg.L2


@dataclass(frozen=True, eq=False)
class HorizontalProfile:
    """``factor * (-psi' / |xi|)`` and its derivatives.

    With ``factor = 1`` this is the rotated-frame profile phi_{|xi|}; the
    factors xi1/|xi| and xi2/|xi| give phi and theta for a general xi.  It is
    a derivative of a Hermite cubic (piecewise quadratic), so it is kept as a
    view on psi rather than as another Hermite profile.
    """

    psi: Profile
    mesh: Mesh
    xi_abs: float
    factor: float = 1.0

    def __call__(self, x3, deriv: int = 0, side: str = "right"):
        if deriv not in (0, 1, 2):
            raise ValueError("deriv must be 0, 1 or 2")
        d = evaluate_profile(self.psi, self.mesh, x3, deriv + 1, side)
        return -self.factor * d / self.xi_abs


def recover_horizontal(psi: Profile, mesh: Mesh, xi: Frequency):
    """(phi, theta) = R_xi^{-1} (phi_{|xi|}, 0) with phi_{|xi|} = -psi'/|xi|."""
    k = xi.magnitude
    if not k > 0:
        raise ValueError("xi must be nonzero")
    return (
        HorizontalProfile(psi, mesh, k, xi.xi1 / k),
        HorizontalProfile(psi, mesh, k, xi.xi2 / k),
    )


def _pi_prime(x, psi, mesh, cfg, lam, k, upper):
    rho = np.where(upper, cfg.rho_plus, cfg.rho_minus)
    mu = np.where(upper, cfg.mu_plus, cfg.mu_minus)
    p0 = evaluate_profile(psi, mesh, x, 0)
    p2 = evaluate_profile(psi, mesh, x, 2)
    return -lam * rho * p0 - mu * (k * k * p0 - p2)


@dataclass(frozen=True, eq=False)
class PressureProfile:
    """Vertical pressure profile pi, piecewise quartic, with a jump at x3 = 0.

    ``node_values[i]`` is pi at node i taken from above (for the interface
    node that is pi_+(0)); ``below_interface`` is pi_-(0).
    """

    psi: Profile
    mesh: Mesh
    cfg: FluidConfig
    lam: float
    xi_abs: float
    node_values: np.ndarray
    below_interface: float
    jump: float

    def __call__(self, x3, side: str = "right"):
        scalar = np.ndim(x3) == 0
        x = np.atleast_1d(np.asarray(x3, dtype=float))
        nodes = self.mesh.nodes
        if np.any(x < nodes[0]) or np.any(x > nodes[-1]):
            raise ValueError("x3 outside the domain")
        e = np.searchsorted(nodes, x, side="right" if side == "right" else "left") - 1
        e = np.clip(e, 0, self.mesh.n_elements - 1)
        top = nodes[e + 1]
        upper = e >= self.mesh.n_lower
        top_val = np.where(e + 1 == self.mesh.interface_node, self.below_interface, self.node_values[e + 1])
        # pi(x) = pi(top) - int_x^top pi'; the integrand is a cubic, 4-point Gauss is exact
        length = top - x
        xq = x[:, None] + length[:, None] * kernels.GAUSS_T[None, :]
        xq = np.minimum(xq, top[:, None])
        up = np.broadcast_to(upper[:, None], xq.shape)
        vals = _pi_prime(xq.ravel(), self.psi, self.mesh, self.cfg, self.lam, self.xi_abs, up.ravel()).reshape(xq.shape)
        out = top_val - length * (vals @ kernels.GAUSS_W)
        return float(out[0]) if scalar else out

    def quadrature_samples(self):
        """(x3, pi) at the Gauss points of every element."""
        x, _, _ = quadrature_points(self.mesh)
        return x, self(x)


def interface_jump(cfg: FluidConfig, lam: float, xi_abs: float, psi0: float, dpsi0: float) -> float:
    """pi_+(0) - pi_-(0) from the normal-stress jump condition."""
    k2 = xi_abs * xi_abs
    return ((cfg.g * jump_density(cfg) - cfg.sigma_minus * k2) * psi0) / lam + 2.0 * (cfg.mu_plus - cfg.mu_minus) * dpsi0


def top_pressure(cfg: FluidConfig, lam: float, xi_abs: float, psi1: float, dpsi1: float) -> float:
    """pi_+(1) from the normal-stress condition on the upper surface."""
    return (cfg.g * cfg.rho_plus + cfg.sigma_plus * xi_abs * xi_abs) * psi1 / lam + 2.0 * cfg.mu_plus * dpsi1


def recover_pressure(psi: Profile, lam: float, xi_abs: float, mesh: Mesh, cfg: FluidConfig) -> PressureProfile:
    """Integrate pi' = -lambda rho psi - mu(|xi|^2 psi - psi'') down from x3 = 1."""
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    nodes = mesh.nodes
    h = np.diff(nodes)
    xq = nodes[:-1, None] + h[:, None] * kernels.GAUSS_T[None, :]
    upper = np.repeat((np.arange(mesh.n_elements) >= mesh.n_lower)[:, None], kernels.GAUSS_T.size, axis=1)
    dp = _pi_prime(xq.ravel(), psi, mesh, cfg, lam, xi_abs, upper.ravel()).reshape(xq.shape)
    increments = h * (dp @ kernels.GAUSS_W)

    ev = lambda x, d: evaluate_profile(psi, mesh, x, d)  # noqa: E731
    jump = interface_jump(cfg, lam, xi_abs, ev(0.0, 0), ev(0.0, 1))
    vals = np.empty(nodes.size)
    vals[-1] = top_pressure(cfg, lam, xi_abs, ev(1.0, 0), ev(1.0, 1))
    below = math.nan
    for i in range(mesh.n_elements - 1, -1, -1):
        above = vals[i + 1]
        if i + 1 == mesh.interface_node:
            below = vals[i + 1] - jump
            above = below
        vals[i] = above - increments[i]
    vals.setflags(write=False)
    return PressureProfile(psi, mesh, cfg, float(lam), float(xi_abs), vals, float(below), float(jump))


@dataclass(frozen=True, eq=False)
class NormalMode:
    xi: Frequency
    lam: float
    psi: Profile
    phi_mag: HorizontalProfile
    phi: HorizontalProfile
    theta: HorizontalProfile
    pi: PressureProfile
    eta_plus: complex
    eta_minus: complex
    mesh: Mesh
    cfg: FluidConfig
    normalization: str = "J"
    energy_residual: float = math.nan  # (lambda^2 J + lambda E1 + E0) / J

    @property
    def xi_abs(self) -> float:
        return self.xi.magnitude


def modal_energy_residual(psi: Profile, lam: float, xi_abs: float, mesh: Mesh, cfg: FluidConfig) -> float:
    """(lambda^2 J + lambda E1 + E0)(psi) / J(psi)."""
    forms = assemble_all(mesh, cfg, xi_abs)
    Jv = forms.J.value(psi)
    if Jv == 0:
        return 0.0
    return (lam * lam * Jv + lam * forms.E1.value(psi) + forms.E0.value(psi)) / Jv


def _assemble_mode(xi, lam, psi, mesh, cfg, normalization):
    k = xi.magnitude
    phi, theta = recover_horizontal(psi, mesh, xi)
    pi = recover_pressure(psi, lam, k, mesh, cfg)
    eta_p = complex(evaluate_profile(psi, mesh, 1.0) / lam)
    eta_m = complex(evaluate_profile(psi, mesh, 0.0) / lam)
    res = modal_energy_residual(psi, lam, k, mesh, cfg)
    return NormalMode(
        xi, float(lam), psi, HorizontalProfile(psi, mesh, k), phi, theta, pi, eta_p, eta_m, mesh, cfg, normalization, res
    )


def build_mode(point: DispersionPoint, mesh: Mesh, cfg: FluidConfig, *, normalization: str = "J") -> NormalMode:
    """Full normal mode at an Unstable lattice point.

    ``normalization="J"`` keeps J(psi) = 1; ``"unit_norm"`` rescales so that
    ||u(0)||_0^2 + ||eta(0)||_0^2 = 1 over one period cell.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    if point.xi is None:
        raise ModeError("a lattice frequency is required")
    if not isinstance(point.result, Unstable):
        raise ModeError(f"frequency ({point.xi.n1}, {point.xi.n2}) is not unstable")
    psi = point.result.psi
    if psi.coeffs.size != mesh.n_dof:
        raise ValueError("psi was computed on a different mesh")
    mode = _assemble_mode(point.xi, point.result.lam, psi, mesh, cfg, "J")
    return renormalize(mode, normalization)


def mode_norm(mode: NormalMode) -> float:
    """||(u, eta)||_0 at t = 0 over one period cell."""
    x, w, _ = quadrature_points(mode.mesh)
    u2 = mode.phi(x) ** 2 + mode.theta(x) ** 2 + evaluate_profile(mode.psi, mode.mesh, x) ** 2
    area = torus_area(mode.cfg)
    u_sq = 0.5 * area * float(w @ u2)
    eta_sq = 0.5 * area * (abs(mode.eta_plus) ** 2 + abs(mode.eta_minus) ** 2)
    return math.sqrt(u_sq + eta_sq)


def renormalize(mode: NormalMode, normalization: str) -> NormalMode:
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    if normalization == mode.normalization:
        return mode
    forms = assemble_all(mode.mesh, mode.cfg, mode.xi_abs)
    if normalization == "J":
        c = 1.0 / math.sqrt(forms.J.value(mode.psi))
    else:
        c = 1.0 / mode_norm(mode)
    return _assemble_mode(mode.xi, mode.lam, c * mode.psi, mode.mesh, mode.cfg, normalization)


def scale_mode(mode: NormalMode, factor: float) -> NormalMode:
    """Every field multiplied by ``factor`` (the linear problem is homogeneous)."""
    return _assemble_mode(mode.xi, mode.lam, factor * mode.psi, mode.mesh, mode.cfg, "scaled")


def negate_frequency(mode: NormalMode) -> NormalMode:
    """The same real mode described from -xi (the conjugate Fourier component)."""
    return replace(mode, **_frequency_parts(mode, mode.xi.negated()))


def _frequency_parts(mode, xi):
    phi, theta = recover_horizontal(mode.psi, mode.mesh, xi)
    return {"xi": xi, "phi": phi, "theta": theta}


def with_frequency(mode: NormalMode, xi: Frequency) -> NormalMode:
    """Mode with the same |xi| profiles attached to another frequency of equal magnitude."""
    if abs(xi.magnitude - mode.xi_abs) > 1e-12 * mode.xi_abs:
        raise ValueError("frequency magnitudes differ")
    return replace(mode, **_frequency_parts(mode, xi))


# ---------------------------------------------------------------------------
# field sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    n1: int
    n2: int
    n3: int

    def __post_init__(self):
        if min(self.n1, self.n2, self.n3) < 2:
            raise ValueError("grid resolution must be >= 2 in every direction")

    def axes(self, cfg: FluidConfig):
        """Periodic horizontal axes (endpoint excluded) and the closed vertical axis."""
        x1 = 2.0 * math.pi * cfg.L1 * np.arange(self.n1) / self.n1
        x2 = 2.0 * math.pi * cfg.L2 * np.arange(self.n2) / self.n2
        x3 = np.linspace(-cfg.b, 1.0, self.n3)
        return x1, x2, x3


@dataclass(frozen=True, eq=False)
class FieldSample:
    grid: tuple  # (x1, x2, x3) axes
    u: np.ndarray  # (3, n1, n2, n3)
    p_tilde: np.ndarray  # (n1, n2, n3)
    eta: np.ndarray  # (2, n1, n2): rows Sigma_+, Sigma_-
    time: float
    lam: float
    xi: Frequency


def sample_fields(mode: NormalMode, t: float, grid: GridSpec) -> FieldSample:
    """Real-part fields at time ``t`` on a tensor grid.

    On the plane x3 = 0 the pressure is the upper-layer limit pi_+(0).
    """
    if not t >= 0:
        raise ValueError("t must be >= 0")
    x1, x2, x3 = grid.axes(mode.cfg)
    growth = math.exp(mode.lam * t)
    ph = mode.xi.xi1 * x1[:, None] + mode.xi.xi2 * x2[None, :]
    s, c = np.sin(ph), np.cos(ph)
    phi = mode.phi(x3)
    theta = mode.theta(x3)
    psi = evaluate_profile(mode.psi, mode.mesh, x3)
    pi = mode.pi(x3)
    u = np.stack(
        [
            growth * s[:, :, None] * phi[None, None, :],
            growth * s[:, :, None] * theta[None, None, :],
            growth * c[:, :, None] * psi[None, None, :],
        ]
    )
    p = growth * c[:, :, None] * pi[None, None, :]
    eta = np.stack([growth * (mode.eta_plus * np.exp(1j * ph)).real, growth * (mode.eta_minus * np.exp(1j * ph)).real])
    return FieldSample((x1, x2, x3), u, p, eta, float(t), mode.lam, mode.xi)


def sample_l2(values: np.ndarray, cell: float) -> float:
    """Discrete L2 norm of grid samples with uniform cell measure ``cell``."""
    return math.sqrt(cell * float(np.sum(values * values)))


def eta_l2(sample: FieldSample, cfg: FluidConfig) -> float:
    n1, n2 = sample.eta.shape[1:]
    return sample_l2(sample.eta, torus_area(cfg) / (n1 * n2))


def discrete_divergence(sample: FieldSample) -> np.ndarray:
    """Spectral horizontal derivatives plus second-order differences in x3."""
    x1, x2, x3 = sample.grid
    n1, n2 = x1.size, x2.size
    k1 = 2.0 * math.pi * np.fft.fftfreq(n1, d=x1[1] - x1[0])
    k2 = 2.0 * math.pi * np.fft.fftfreq(n2, d=x2[1] - x2[0])
    d1 = np.fft.ifft(1j * k1[:, None, None] * np.fft.fft(sample.u[0], axis=0), axis=0).real
    d2 = np.fft.ifft(1j * k2[None, :, None] * np.fft.fft(sample.u[1], axis=1), axis=1).real
    d3 = np.gradient(sample.u[2], x3, axis=2, edge_order=2)
    return d1 + d2 + d3


# ---------------------------------------------------------------------------
# strong-form checks and the energy identity
# ---------------------------------------------------------------------------


def momentum_residual(mode: NormalMode) -> float:
    """RMS over Gauss points of the horizontal momentum balance in the rotated frame,
    lambda^2 rho phi + mu lambda (|xi|^2 phi - phi'') - lambda |xi| pi."""
    x, w, upper = quadrature_points(mode.mesh)
    k, lam, cfg = mode.xi_abs, mode.lam, mode.cfg
    rho = np.where(upper, cfg.rho_plus, cfg.rho_minus)
    mu = np.where(upper, cfg.mu_plus, cfg.mu_minus)
    phi = mode.phi_mag(x)
    r = lam * lam * rho * phi + mu * lam * (k * k * phi - mode.phi_mag(x, 2)) - lam * k * mode.pi(x)
    return float(np.sqrt(np.mean(r * r)))


def pressure_formula(mode: NormalMode, x3) -> np.ndarray:
    """pi from the eliminated form lambda |xi|^2 pi = -(lambda^2 rho psi' + lambda mu (|xi|^2 psi' - psi'''))."""
    x = np.atleast_1d(np.asarray(x3, dtype=float))
    upper = x > 0
    rho = np.where(upper, mode.cfg.rho_plus, mode.cfg.rho_minus)
    mu = np.where(upper, mode.cfg.mu_plus, mode.cfg.mu_minus)
    k, lam = mode.xi_abs, mode.lam
    d1 = evaluate_profile(mode.psi, mode.mesh, x, 1)
    d3 = evaluate_profile(mode.psi, mode.mesh, x, 3)
    return -(lam * lam * rho * d1 + lam * mu * (k * k * d1 - d3)) / (lam * k * k)


def tangential_stress(mode: NormalMode) -> dict:
    """Tangential-stress conditions for the general-xi mode.

    ``top``: mu_+ lambda (xi_i psi - phi_i') at x3 = 1; ``jump``: the jump of
    mu lambda (xi_i psi - phi_i') across x3 = 0, each the max over i = 1, 2.
    """
    lam, cfg, m = mode.lam, mode.cfg, mode.mesh

    def stress(x, side, mu):
        psi = evaluate_profile(mode.psi, m, x)
        return np.array(
            [
                mu * lam * (mode.xi.xi1 * psi - mode.phi(x, 1, side)),
                mu * lam * (mode.xi.xi2 * psi - mode.theta(x, 1, side)),
            ]
        )

    top = stress(1.0, "left", cfg.mu_plus)
    jump = stress(0.0, "right", cfg.mu_plus) - stress(0.0, "left", cfg.mu_minus)
    return {"top": float(np.max(np.abs(top))), "jump": float(np.max(np.abs(jump)))}


def tangential_stress_bc(mode: NormalMode) -> dict:
    """The same conditions in the rotated frame, using second derivatives of psi:
    mu lambda (|xi|^2 psi + psi'') / |xi|."""
    lam, cfg, m, k = mode.lam, mode.cfg, mode.mesh, mode.xi_abs

    def val(x, side, mu):
        return mu * lam * (k * k * evaluate_profile(mode.psi, m, x) + evaluate_profile(mode.psi, m, x, 2, side)) / k

    return {
        "top": abs(val(1.0, "left", cfg.mu_plus)),
        "jump": abs(val(0.0, "right", cfg.mu_plus) - val(0.0, "left", cfg.mu_minus)),
    }


@dataclass(frozen=True)
class ModalIntegrals:
    """Period-cell integrals of the t = 0 real fields.

    kinetic = int rho |u|^2, surface = surface-energy bracket of the identity,
    dissipation = 1/2 int mu |D u|^2 (D u = grad u + grad u^T).
    """

    kinetic: float
    surface: float
    dissipation: float


def modal_integrals(mode: NormalMode) -> ModalIntegrals:
    x, w, upper = quadrature_points(mode.mesh)
    cfg, xi = mode.cfg, mode.xi
    a1, a2 = xi.xi1, xi.xi2
    rho = np.where(upper, cfg.rho_plus, cfg.rho_minus)
    mu = np.where(upper, cfg.mu_plus, cfg.mu_minus)
    phi, dphi = mode.phi(x), mode.phi(x, 1)
    th, dth = mode.theta(x), mode.theta(x, 1)
    psi = evaluate_profile(mode.psi, mode.mesh, x)
    dpsi = evaluate_profile(mode.psi, mode.mesh, x, 1)
    area = torus_area(cfg)
    # cos^2 and sin^2 of xi.x' both average to 1/2 over the period cell
    kinetic = 0.5 * area * float(w @ (rho * (phi**2 + th**2 + psi**2)))
    d_sq = 0.5 * (4 * a1**2 * phi**2 + 4 * a2**2 * th**2 + 4 * dpsi**2 + 2 * (a2 * phi + a1 * th) ** 2) + (
        (dphi - a1 * psi) ** 2 + (dth - a2 * psi) ** 2
    )
    dissipation = 0.5 * area * float(w @ (mu * d_sq))
    k2 = xi.magnitude**2
    psi1 = evaluate_profile(mode.psi, mode.mesh, 1.0)
    psi0 = evaluate_profile(mode.psi, mode.mesh, 0.0)
    surface = 0.5 * area * (
        (cfg.sigma_plus * k2 + cfg.rho_plus * cfg.g) * psi1**2 + (cfg.sigma_minus * k2 - jump_density(cfg) * cfg.g) * psi0**2
    )
    return ModalIntegrals(kinetic, surface, dissipation)


def check_energy_identity(mode: NormalMode, t0: float, t1: float) -> float:
    """Relative residual of the energy identity integrated over [t0, t1].

    With u = w e^{lambda t}: the bracketed energy is
    e^{2 lambda t} (lambda^2 kinetic + surface) and the dissipation rate is
    lambda^2 e^{2 lambda t} dissipation, so the identity reads
    1/2 [B(t1) - B(t0)] + int_{t0}^{t1} D = 0.
    """
    if not (t1 > t0 >= 0):
        raise ValueError("need t1 > t0 >= 0")
    if not np.any(mode.psi.coeffs):
        return 0.0
    m = modal_integrals(mode)
    lam = mode.lam
    g0, g1 = math.exp(2 * lam * t0), math.exp(2 * lam * t1)
    b0 = g0 * (lam * lam * m.kinetic + m.surface)
    b1 = g1 * (lam * lam * m.kinetic + m.surface)
    dis = lam * lam * m.dissipation * (g1 - g0) / (2 * lam)
    scale = 0.5 * (g1 + g0) * (lam * lam * m.kinetic + abs(m.surface)) + abs(dis)
    return abs(0.5 * (b1 - b0) + dis) / scale
