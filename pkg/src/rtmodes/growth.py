"""Growth rates from the fixed point s = sqrt(-alpha(s)).

For a fixed |xi|, h(s) = s^2 + alpha(s) is strictly increasing (alpha is
increasing in s) with h(0+) = alpha(0+).  When alpha(0+) < 0 the unique root
of h is the physical growth rate; otherwise the frequency is stable.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .discretize import Mesh, ModalForms, Profile, assemble_all, build_mesh
from .eigen import alpha_pair, solve_alpha
from .params import (
    FluidConfig,
    Frequency,
    classify_regime,
    growth_ceiling,
    jump_density,
    lattice_frequencies,
    xi_critical,
)

STABLE_ALPHA_TOL = 1e-12
S_LO_FACTOR = 1e-8
MAX_DOUBLINGS = 10
SCAN_K = 3
SCAN_FRACTION = 0.5
SCAN_CAP_SPACINGS = 64
ENVELOPE_POINTS = 24


class BracketFailure(RuntimeError):
    pass


class NotUnstable(ValueError):
    pass


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Unstable:
    lam: float
    s_star: float
    alpha_at_star: float
    psi: Profile
    iterations: int = 0
    trace: tuple = ()  # (s, h(s)) for every bisection evaluation

    verdict = "unstable"


@dataclass(frozen=True, eq=False)
class Stable:
    alpha_floor: float
    s_probe: float

    verdict = "stable"
    lam = None


@dataclass(frozen=True, eq=False)
class DispersionPoint:
    xi: Frequency | None
    xi_abs: float
    result: Unstable | Stable | None
    error: str | None = None

    @property
    def unstable(self) -> bool:
        return isinstance(self.result, Unstable)

    @property
    def lam(self) -> float:
        return self.result.lam if self.unstable else 0.0


def _scale(cfg: FluidConfig) -> float:
    c = growth_ceiling(cfg)
    if c > 0:
        return c
    # lighter fluid on top: any positive probe scale works, alpha >= 0 there
    return cfg.b * cfg.g * max(abs(jump_density(cfg)), cfg.rho_minus) / (4.0 * cfg.mu_minus)


def growth_rate(mesh: Mesh | ModalForms, cfg: FluidConfig, xi_abs: float, *, tol: float = 1e-10) -> Unstable | Stable:
    """Stable verdict or the growth rate at |xi| by bisection on s^2 + alpha(s)."""
    forms = mesh if isinstance(mesh, ModalForms) else assemble_all(mesh, cfg, xi_abs)
    scale = _scale(cfg)
    s_lo = S_LO_FACTOR * scale
    a_lo, v_lo = alpha_pair(forms, s_lo)
    if a_lo >= -STABLE_ALPHA_TOL:
        return Stable(a_lo, s_lo)

    # alpha is increasing in s: alpha(s_lo) bounds alpha from below on the bracket
    trace = [(s_lo, s_lo * s_lo + a_lo)]
    s_hi = scale
    for _ in range(MAX_DOUBLINGS + 1):
        a_hi, v_hi = alpha_pair(forms, s_hi, a_lo, v_lo)
        h_hi = s_hi * s_hi + a_hi
        trace.append((s_hi, h_hi))
        if h_hi > 0:
            break
        s_lo, a_lo, v_lo = s_hi, a_hi, v_hi
        s_hi *= 2.0
    else:
        raise BracketFailure(f"s^2 + alpha(s) still <= 0 at s = {s_hi / 2:.6g} after {MAX_DOUBLINGS} doublings")

    it = 0
    while s_hi - s_lo > tol * s_hi:
        mid = 0.5 * (s_lo + s_hi)
        a_mid, v_mid = alpha_pair(forms, mid, a_lo, v_lo)
        h_mid = mid * mid + a_mid
        trace.append((mid, h_mid))
        if h_mid > 0:
            s_hi = mid
        else:
            s_lo, a_lo, v_lo = mid, a_mid, v_mid
        it += 1
    s_star = 0.5 * (s_lo + s_hi)
    res = solve_alpha(forms, cfg, forms.xi_abs, s_star)
    return Unstable(s_star, s_star, res.alpha, res.psi, it, tuple(trace))


def _point(mesh, cfg, xi, xi_abs, tol):
    try:
        return DispersionPoint(xi, xi_abs, growth_rate(mesh, cfg, xi_abs, tol=tol))
    except Exception as exc:  # reported per point, the scan goes on
        return DispersionPoint(xi, xi_abs, None, f"{type(exc).__name__}: {exc}")


def dispersion_curve(
    mesh: Mesh, cfg: FluidConfig, frequencies: list[Frequency], *, workers: int = 1, tol: float = 1e-10
) -> list[DispersionPoint]:
    """Growth verdict per frequency; equal-|xi| frequencies share one solve."""
    if not frequencies:
        raise ValueError("frequencies must be nonempty")
    shells: dict[float, Frequency] = {}
    for f in frequencies:
        if f.n1 == 0 and f.n2 == 0:
            raise ValueError("zero frequency is excluded")
        shells.setdefault(f.shell_key, f)
    keys = sorted(shells)

    def work(key):
        return _point(mesh, cfg, shells[key], shells[key].magnitude, tol)

    if workers > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(keys, pool.map(work, keys)))
    else:
        results = {k: work(k) for k in keys}
    out = []
    for f in frequencies:
        r = results[f.shell_key]
        out.append(DispersionPoint(f, f.magnitude, r.result, r.error))
    return out


def lambda_at(mesh: Mesh, cfg: FluidConfig, xi_abs: float, *, tol: float = 1e-10) -> float:
    r = growth_rate(mesh, cfg, xi_abs, tol=tol)
    return r.lam if isinstance(r, Unstable) else 0.0


@dataclass(frozen=True, eq=False)
class SharpRate:
    value: float
    achieved_at: Frequency | float | None
    mode: str  # "LatticeMax" or "ContinuousEnvelope"
    truncation: dict | None = None


@dataclass(frozen=True, eq=False)
class SharpRateReport:
    lattice: SharpRate
    envelope: SharpRate
    points: list = field(default_factory=list)


def _golden_max(fun, a, b, tol=1e-6, maxiter=60):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = fun(c), fun(d)
    best = max((fc, c), (fd, d))
    for _ in range(maxiter):
        if abs(b - a) <= tol * (abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fun(d)
        best = max(best, (fc, c), (fd, d))
    return best


def _envelope(mesh, cfg, upper, lattice_best, tol):
    grid = upper * (np.arange(ENVELOPE_POINTS) + 0.5) / ENVELOPE_POINTS
    vals = [lambda_at(mesh, cfg, float(x), tol=tol) for x in grid]
    i = int(np.argmax(vals))
    a = grid[i - 1] if i > 0 else 0.5 * grid[0]
    b = grid[i + 1] if i + 1 < grid.size else min(upper, grid[i] + 0.5 * (grid[1] - grid[0]))
    val, where = _golden_max(lambda x: lambda_at(mesh, cfg, x, tol=tol), float(a), float(b))
    cand = [(val, where), (vals[i], float(grid[i]))]
    if lattice_best is not None:
        cand.append((lattice_best.lam, lattice_best.xi_abs))
    return max(cand)


def _best(points):
    best = None
    for p in points:
        if not p.unstable:
            continue
        if best is None or p.lam > best.lam:
            best = p  # ties keep the earlier (smaller |xi|, lexicographic) point
    return best


def sharp_rate(mesh: Mesh, cfg: FluidConfig, *, tol: float = 1e-10, workers: int = 1) -> SharpRateReport:
    """Largest growth rate: over the lattice, and over continuous |xi| (envelope)."""
    regime = classify_regime(cfg)
    if not regime.label.unstable:
        raise NotUnstable(f"regime {regime.label.value}: no unstable frequencies")
    xc = xi_critical(cfg)
    spacing = min(1.0 / cfg.L1, 1.0 / cfg.L2)

    if math.isfinite(xc):
        freqs = [f for f in lattice_frequencies(cfg, xc) if f.magnitude < xc]
        points = dispersion_curve(mesh, cfg, freqs, workers=workers, tol=tol)
        best = _best(points)
        lattice = SharpRate(best.lam if best else 0.0, best.xi if best else None, "LatticeMax")
        env_val, env_at = _envelope(mesh, cfg, xc, best, tol)
        return SharpRateReport(lattice, SharpRate(env_val, env_at, "ContinuousEnvelope"), points)

    cap = SCAN_CAP_SPACINGS * spacing
    all_freqs = lattice_frequencies(cfg, cap)
    shells: dict[float, list[Frequency]] = {}
    for f in all_freqs:
        shells.setdefault(f.shell_key, []).append(f)
    points = []
    running = None
    decreasing = 0
    prev = None
    stopped = False
    last_xi = None
    for key in sorted(shells):
        group = shells[key]
        pts = dispersion_curve(mesh, cfg, group, workers=1, tol=tol)
        points.extend(pts)
        lam = pts[0].lam
        last_xi = group[0].magnitude
        if running is None or lam > running.lam:
            running = pts[0]
        if prev is not None and lam < prev and running is not None and lam < SCAN_FRACTION * running.lam:
            decreasing += 1
        else:
            decreasing = 0
        prev = lam
        if decreasing >= SCAN_K:
            stopped = True
            break
    truncation = {
        "K": SCAN_K,
        "fraction": SCAN_FRACTION,
        "cap_xi": cap,
        "last_shell_xi": last_xi,
        "shells_scanned": len({p.xi.shell_key for p in points}),
        "hit_cap": not stopped,
    }
    if not stopped:
        warnings.warn(f"shell scan reached the cap |xi| <= {cap:.6g} before the stopping rule", TruncationWarning)
    best = _best(points)
    ceiling = growth_ceiling(cfg)
    truncation["ceiling"] = ceiling
    lattice = SharpRate(best.lam if best else 0.0, best.xi if best else None, "LatticeMax", truncation)
    env_val, env_at = _envelope(mesh, cfg, last_xi, best, tol)
    if max(env_val, lattice.value) > ceiling + 1e-8:
        raise RuntimeError(f"growth rate above the ceiling b g [rho] / (4 mu_-) = {ceiling:.6g}")
    return SharpRateReport(lattice, SharpRate(env_val, env_at, "ContinuousEnvelope", truncation), points)



@dataclass(frozen=True)
class ConvergenceStudy:
    meshes: tuple  # elements per layer
    lams: tuple
    deltas: tuple  # |lambda_i - lambda_{i-1}|, first entry nan
    order: float  # Richardson estimate from the last three meshes
    extrapolated: float


def convergence_study(cfg: FluidConfig, xi_abs: float, meshes, *, tol: float = 1e-10) -> ConvergenceStudy:
    """lambda at |xi| on successively refined meshes with a Richardson estimate."""
    meshes = tuple(int(n) for n in meshes)
    if len(meshes) < 3:
        raise ValueError("need at least 3 mesh sizes")
    lams = []
    for n in meshes:
        r = growth_rate(build_mesh(cfg.b, n, n), cfg, xi_abs, tol=tol)
        if not isinstance(r, Unstable):
            raise NotUnstable(f"|xi| = {xi_abs:.6g} is stable; nothing to converge")
        lams.append(r.lam)
    deltas = [math.nan] + [abs(b - a) for a, b in zip(lams, lams[1:])]
    d1, d2 = deltas[-2], deltas[-1]
    ratio = meshes[-1] / meshes[-2]
    order = math.nan
    extrap = lams[-1]
    if d1 > 0 and d2 > 0 and ratio > 1:
        order = math.log(d1 / d2) / math.log(ratio)
        extrap = lams[-1] + (lams[-1] - lams[-2]) / (ratio**order - 1.0)
    return ConvergenceStudy(meshes, tuple(lams), tuple(deltas), order, extrap)
