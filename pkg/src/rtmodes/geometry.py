"""Poisson extensions of surface functions and the flattening map Theta.

Surface functions are finite Fourier sums f(x') = Re sum_n c_n e^{i xi_n.x'}.
They extend into the slab with exponential kernels:

* ``minus_at_1``: e^{|xi|(x3 - 1)}, downward from x3 = 1 (extends eta_+);
* ``minus_at_0``: e^{|xi| x3}, downward from x3 = 0;
* ``plus_at_0``:  sum_j alpha_j e^{-|xi| lambda_j x3}, upward from x3 = 0,
  where V alpha = (1, ..., 1) with V_ij = (-lambda_j)^i makes the first m
  vertical derivatives agree with ``minus_at_0`` at x3 = 0.

eta_- is extended by ``plus_at_0`` above the interface and ``minus_at_0``
below it.  Theta moves only the vertical coordinate:

    upper: Theta3 = x3 + x3^2 (ebar_+ - (1 + 1/b) ebar_-) + bt ebar_-
    lower: Theta3 = x3 + bt ebar_-,        bt = 1 + x3 / b.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .params import FluidConfig, Frequency

EXTENSIONS = ("minus_at_1", "minus_at_0", "plus_at_0")
DEFAULT_RATES = (1.0, 2.0, 3.0, 4.0, 5.0)


class IllConditioned(RuntimeError):
    pass


class DegenerateJacobian(RuntimeError):
    def __init__(self, message, point=None, value=None):
        super().__init__(message)
        self.point = point
        self.value = value


@dataclass(frozen=True, eq=False)
class SurfaceFunction:
    """Finite Fourier sum over lattice frequencies (``freqs[i]`` carries ``coeffs[i]``)."""

    freqs: tuple
    coeffs: np.ndarray
    zero_average: bool = True

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (len(self.freqs),):
            raise ValueError("one coefficient per frequency")
        if self.zero_average:
            for f, a in zip(self.freqs, c):
                if f.n1 == 0 and f.n2 == 0 and a != 0:
                    raise ValueError("zero-average surface function has a nonzero xi = 0 amplitude")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def single(cls, xi: Frequency, amplitude: complex) -> "SurfaceFunction":
        return cls((xi,), np.array([amplitude], dtype=complex))

    @property
    def xi1(self) -> np.ndarray:
        return np.array([f.xi1 for f in self.freqs], dtype=float)

    @property
    def xi2(self) -> np.ndarray:
        return np.array([f.xi2 for f in self.freqs], dtype=float)

    def scaled(self, c: float) -> "SurfaceFunction":
        return SurfaceFunction(self.freqs, c * self.coeffs, self.zero_average)

    def __call__(self, x1, x2, d1: int = 0, d2: int = 0):
        return kernels.poisson_sum(self.xi1, self.xi2, self.coeffs, [1.0], [0.0], 0.0, x1, x2, 0.0, d1, d2, 0)


def zero_surface() -> SurfaceFunction:
    return SurfaceFunction((), np.zeros(0, dtype=complex))


@dataclass(frozen=True, eq=False)
class ExtensionCoeffs:
    decay_rates: np.ndarray
    alphas: np.ndarray
    residual: float = 0.0

    @property
    def m(self) -> int:
        return self.decay_rates.size - 1


def vandermonde_coeffs(decay_rates=DEFAULT_RATES) -> ExtensionCoeffs:
    rates = np.asarray(decay_rates, dtype=float)
    if rates.ndim != 1 or rates.size == 0:
        raise ValueError("need at least one decay rate")
    if np.any(rates <= 0) or np.any(np.diff(rates) <= 0):
        raise ValueError("decay rates must be positive and strictly increasing")
    V = np.vander(-rates, increasing=True).T  # V[i, j] = (-rate_j)^i
    q = np.ones(rates.size)
    alphas = np.linalg.solve(V, q)
    res = float(np.max(np.abs(V @ alphas - q)))
    if not res <= 1e-8:
        raise IllConditioned(f"Vandermonde residual {res:.3e} exceeds 1e-8 (m = {rates.size - 1})")
    return ExtensionCoeffs(rates, alphas, res)


def _kernel(which, coeffs):
    if which == "minus_at_1":
        return [1.0], [1.0], 1.0
    if which == "minus_at_0":
        return [1.0], [1.0], 0.0
    if which == "plus_at_0":
        if coeffs is None:
            raise ValueError("plus_at_0 needs extension coefficients")
        return coeffs.alphas, -coeffs.decay_rates, 0.0
    raise ValueError(f"which must be one of {EXTENSIONS}")


def poisson_extend(f: SurfaceFunction, which: str, coeffs: ExtensionCoeffs | None, x1, x2, x3, d1=0, d2=0, d3=0):
    """Extension of ``f`` (or a partial derivative of it) at points (x1, x2, x3)."""
    w, c, x0 = _kernel(which, coeffs)
    x3a = np.asarray(x3, dtype=float)
    if which == "minus_at_1" and np.any(x3a > 1.0):
        raise ValueError("minus_at_1 is defined for x3 <= 1")
    if which == "minus_at_0" and np.any(x3a > 0.0):
        raise ValueError("minus_at_0 is defined for x3 <= 0")
    if which == "plus_at_0" and np.any(x3a < 0.0):
        raise ValueError("plus_at_0 is defined for x3 >= 0")
    return kernels.poisson_sum(f.xi1, f.xi2, f.coeffs, w, c, x0, x1, x2, x3a, d1, d2, d3)


def extend_minus(f: SurfaceFunction, coeffs: ExtensionCoeffs, x1, x2, x3, d1=0, d2=0, d3=0, branch: str = "auto"):
    """ebar_-: ``plus_at_0`` for x3 > 0, ``minus_at_0`` for x3 <= 0.

    ``branch`` = "upper" or "lower" forces one side (used for one-sided values at 0).
    """
    x1, x2, x3 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, x2, x3)))
    if branch == "upper":
        up = np.ones(x3.shape, bool)
    elif branch == "lower":
        up = np.zeros(x3.shape, bool)
    else:
        up = x3 > 0
    out = np.empty(x3.shape)
    if up.any():
        out[up] = poisson_extend(f, "plus_at_0", coeffs, x1[up], x2[up], x3[up], d1, d2, d3)
    if (~up).any():
        out[~up] = poisson_extend(f, "minus_at_0", coeffs, x1[~up], x2[~up], x3[~up], d1, d2, d3)
    return out


@dataclass(frozen=True, eq=False)
class FlattenSample:
    theta3: np.ndarray
    A: np.ndarray
    B: np.ndarray
    J_jac: np.ndarray
    K: np.ndarray
    W: np.ndarray | None = None
    # rows: Sigma_+ (eta_+), Sigma_- (eta_-); columns: x1, x2, x3 components
    N: np.ndarray | None = None
    T1: np.ndarray | None = None
    T2: np.ndarray | None = None
    branch: np.ndarray = field(default=None)  # True where the upper formula was used


def _theta_parts(eta_plus, eta_minus, coeffs, b, x1, x2, x3, up, d1=0, d2=0, d3=0):
    """Derivative (d1, d2, d3) of the ebar_+ and ebar_- fields."""
    ep = poisson_extend(eta_plus, "minus_at_1", None, x1, x2, x3, d1, d2, d3) if eta_plus.freqs else np.zeros(x3.shape)
    em = np.empty(x3.shape)
    if eta_minus.freqs:
        if up.any():
            em[up] = poisson_extend(eta_minus, "plus_at_0", coeffs, x1[up], x2[up], x3[up], d1, d2, d3)
        if (~up).any():
            em[~up] = poisson_extend(eta_minus, "minus_at_0", coeffs, x1[~up], x2[~up], x3[~up], d1, d2, d3)
    else:
        em[:] = 0.0
    return ep, em


def theta3(eta_plus, eta_minus, coeffs, cfg: FluidConfig, x1, x2, x3, branch: str = "auto"):
    """Mapped vertical coordinate Theta3."""
    x1, x2, x3 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, x2, x3)))
    up = _branch_mask(x3, branch)
    b = cfg.b
    ep, em = _theta_parts(eta_plus, eta_minus, coeffs, b, x1, x2, x3, up)
    bt = 1.0 + x3 / b
    upper = x3 + x3**2 * (ep - (1.0 + 1.0 / b) * em) + bt * em
    lower = x3 + bt * em
    return np.where(up, upper, lower)


def _branch_mask(x3, branch):
    if branch == "upper":
        return np.ones(x3.shape, bool)
    if branch == "lower":
        return np.zeros(x3.shape, bool)
    if branch != "auto":
        raise ValueError("branch must be 'auto', 'upper' or 'lower'")
    return x3 > 0


def flatten_map(
    eta_plus: SurfaceFunction,
    eta_minus: SurfaceFunction,
    coeffs: ExtensionCoeffs,
    cfg: FluidConfig,
    x1,
    x2,
    x3,
    *,
    eta_plus_t: SurfaceFunction | None = None,
    eta_minus_t: SurfaceFunction | None = None,
    branch: str = "auto",
    check: bool = True,
) -> FlattenSample:
    """Theta3, the Jacobian entries A, B, J, K and (given d/dt eta) W, plus N and T^i.

    Points with x3 > 0 use the upper formulas and x3 <= 0 the lower ones;
    ``branch`` forces a side (one-sided values at x3 = 0).  With ``check``
    a nonpositive J raises :class:`DegenerateJacobian` naming the first
    failing point.
    """
    x1, x2, x3 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, x2, x3)))
    if np.any(x3 < -cfg.b) or np.any(x3 > 1.0):
        raise ValueError("x3 outside [-b, 1]")
    up = _branch_mask(x3, branch)
    b = cfg.b
    cb = 1.0 + 1.0 / b
    bt = 1.0 + x3 / b
    parts = lambda d1, d2, d3: _theta_parts(eta_plus, eta_minus, coeffs, b, x1, x2, x3, up, d1, d2, d3)  # noqa: E731
    ep, em = parts(0, 0, 0)
    ep1, em1 = parts(1, 0, 0)
    ep2, em2 = parts(0, 1, 0)
    ep3, em3 = parts(0, 0, 1)

    th_up = x3 + x3**2 * (ep - cb * em) + bt * em
    th_lo = x3 + bt * em
    A_up = x3**2 * (ep1 - cb * em1) + em1 * bt
    B_up = x3**2 * (ep2 - cb * em2) + em2 * bt
    J_up = 1.0 + 2.0 * x3 * (ep - cb * em) + x3**2 * (ep3 - cb * em3) + em / b + em3 * bt
    A_lo = em1 * bt
    B_lo = em2 * bt
    J_lo = 1.0 + em / b + em3 * bt

    th = np.where(up, th_up, th_lo)
    A = np.where(up, A_up, A_lo)
    B = np.where(up, B_up, B_lo)
    J = np.where(up, J_up, J_lo)
    if check and np.any(J <= 0):
        i = int(np.flatnonzero((J <= 0).ravel())[0])
        pt = (float(x1.ravel()[i]), float(x2.ravel()[i]), float(x3.ravel()[i]))
        raise DegenerateJacobian(f"J = {J.ravel()[i]:.6g} <= 0 at x = {pt}", pt, float(J.ravel()[i]))
    with np.errstate(divide="ignore"):
        K = np.where(J != 0, 1.0 / np.where(J != 0, J, 1.0), np.inf)

    W = None
    if eta_plus_t is not None or eta_minus_t is not None:
        ept = eta_plus_t if eta_plus_t is not None else zero_surface()
        emt = eta_minus_t if eta_minus_t is not None else zero_surface()
        tp, tm = _theta_parts(ept, emt, coeffs, b, x1, x2, x3, up)
        dth = np.where(up, x3**2 * (tp - cb * tm) + bt * tm, bt * tm)
        W = dth * K

    N, T1, T2 = surface_vectors(eta_plus, eta_minus, x1, x2)
    return FlattenSample(th, A, B, J, K, W, N, T1, T2, up)


def surface_vectors(eta_plus: SurfaceFunction, eta_minus: SurfaceFunction, x1, x2):
    """N = (-d1 eta, -d2 eta, 1) and T^i = e_i + d_i eta e_3 on Sigma_+ and Sigma_-.

    Returned with shape (2, ..., 3): index 0 uses eta_+, index 1 eta_-.
    """
    x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    grads = []
    for eta in (eta_plus, eta_minus):
        if eta.freqs:
            grads.append((eta(x1, x2, 1, 0), eta(x1, x2, 0, 1)))
        else:
            grads.append((np.zeros(x1.shape), np.zeros(x1.shape)))
    one, zero = np.ones(x1.shape), np.zeros(x1.shape)
    N = np.stack([np.stack([-g1, -g2, one], axis=-1) for g1, g2 in grads])
    T1 = np.stack([np.stack([one, zero, g1], axis=-1) for g1, _ in grads])
    T2 = np.stack([np.stack([zero, one, g2], axis=-1) for _, g2 in grads])
    return N, T1, T2


# ---------------------------------------------------------------------------
# physical-domain rendering of a mode
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PhysicalSample:
    y: np.ndarray  # (3, n1, n2, n3) physical coordinates Theta(t, x)
    u: np.ndarray
    p: np.ndarray
    J_jac: np.ndarray
    time: float


def mode_surfaces(mode, t: float = 0.0):
    """eta_+ and eta_- of a normal mode at time t, as surface functions."""
    g = math.exp(mode.lam * t)
    return (
        SurfaceFunction.single(mode.xi, g * mode.eta_plus),
        SurfaceFunction.single(mode.xi, g * mode.eta_minus),
    )


def push_mode_to_physical(mode, sample, eta_plus=None, eta_minus=None, coeffs: ExtensionCoeffs | None = None):
    """Re-index flat field samples to physical coordinates y = Theta(t, x).

    Defaults to the mode's own surfaces at the sample time.  Field values are
    unchanged (u(t, x) = v(t, Theta(t, x))); only the coordinates move.
    """
    if eta_plus is None or eta_minus is None:
        ep, em = mode_surfaces(mode, sample.time)
        eta_plus = ep if eta_plus is None else eta_plus
        eta_minus = em if eta_minus is None else eta_minus
    coeffs = coeffs if coeffs is not None else vandermonde_coeffs()
    x1, x2, x3 = np.meshgrid(*sample.grid, indexing="ij")
    fs = flatten_map(eta_plus, eta_minus, coeffs, mode.cfg, x1, x2, x3)
    y = np.stack([x1, x2, fs.theta3])
    return PhysicalSample(y, sample.u, sample.p_tilde, fs.J_jac, sample.time)
