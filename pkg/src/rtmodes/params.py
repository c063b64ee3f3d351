"""Physical parameters, critical quantities, the frequency lattice and the
stability-regime table."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path

# relative width of the band treated as exact equality near criticality
CRITICAL_RTOL = 1e-12


class ConfigError(ValueError):
    """Invalid or malformed fluid configuration."""


class NotApplicable(ValueError):
    """Quantity undefined for this configuration (e.g. lighter fluid on top)."""


@dataclass(frozen=True)
class FluidConfig:
    """Two-layer equilibrium: upper layer on (0, 1), lower layer on (-b, 0).

    Inputs are assumed already nondimensionalized so that the upper layer has
    unit equilibrium depth.
    """

    rho_plus: float
    rho_minus: float
    mu_plus: float
    mu_minus: float
    g: float
    sigma_plus: float
    sigma_minus: float
    b: float
    L1: float
    L2: float

    def __post_init__(self):
        for name in ("rho_plus", "rho_minus", "mu_plus", "mu_minus", "g", "b", "L1", "L2"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name}: must be a finite number > 0, got {v!r}")
        for name in ("sigma_plus", "sigma_minus"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name}: must be a finite number >= 0, got {v!r}")
        if self.sigma_plus == 0 and self.sigma_minus > 0:
            raise ConfigError(
                "sigma_plus, sigma_minus: surface tension must be either zero on both "
                "surfaces or positive on the upper surface"
            )

    @property
    def has_surface_tension(self) -> bool:
        return self.sigma_plus > 0

    def replace(self, **changes) -> "FluidConfig":
        data = self.to_dict()
        data.update(changes)
        return FluidConfig(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "FluidConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        names = [f.name for f in fields(cls)]
        unknown = sorted(set(data) - set(names))
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown key (allowed: {', '.join(names)})")
        missing = [n for n in names if n not in data]
        if missing:
            raise ConfigError(f"{missing[0]}: missing required key")
        for n in names:
            v = data[n]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{n}: expected a number, got {type(v).__name__}")
        return cls(**{n: float(data[n]) for n in names})

    @classmethod
    def from_json(cls, path) -> "FluidConfig":
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(data)


def jump_density(cfg: FluidConfig) -> float:
    return cfg.rho_plus - cfg.rho_minus


def _jump_sign(cfg: FluidConfig) -> int:
    jump = jump_density(cfg)
    if abs(jump) <= CRITICAL_RTOL * max(cfg.rho_plus, cfg.rho_minus):
        return 0
    return 1 if jump > 0 else -1


def sigma_critical(cfg: FluidConfig) -> float:
    """Surface tension above which no lattice frequency is unstable."""
    if _jump_sign(cfg) <= 0:
        raise NotApplicable("sigma_c is defined only when the heavier fluid is on top")
    return cfg.g * jump_density(cfg) * max(cfg.L1**2, cfg.L2**2)


def xi_critical(cfg: FluidConfig) -> float:
    """Critical wavenumber; ``math.inf`` when the interface carries no tension."""
    if _jump_sign(cfg) <= 0:
        raise NotApplicable("|xi|_c is defined only when the heavier fluid is on top")
    if cfg.sigma_minus == 0:
        return math.inf
    return math.sqrt(cfg.g * jump_density(cfg) / cfg.sigma_minus)


def growth_ceiling(cfg: FluidConfig) -> float:
    """Upper bound b g [rho] / (4 mu_-) on every growth rate."""
    return cfg.b * cfg.g * jump_density(cfg) / (4.0 * cfg.mu_minus)


def proof_bound_sq(cfg: FluidConfig, xi_abs: float) -> float:
    """Bound on lambda^2 at |xi|: 2 |xi| (g [rho] - sigma_- |xi|^2) / rho_-."""
    return 2.0 * xi_abs * (cfg.g * jump_density(cfg) - cfg.sigma_minus * xi_abs**2) / cfg.rho_minus


class RegimeLabel(str, Enum):
    UNSTABLE_NO_ST = "UnstableNoST"
    UNSTABLE_ST = "UnstableST"
    STABLE_ALMOST_EXP = "StableAlmostExp"
    STABLE_EXP = "StableExp"
    CRITICAL_LWP = "CriticalLWP"

    @property
    def unstable(self) -> bool:
        return self in (RegimeLabel.UNSTABLE_NO_ST, RegimeLabel.UNSTABLE_ST)


@dataclass(frozen=True)
class Regime:
    label: RegimeLabel
    jump_sign: int
    # "none" (sigma = 0), "below", "critical" or "above" sigma_c; "n/a" when sigma_c is undefined
    st_case: str


def classify_regime(cfg: FluidConfig) -> Regime:
    sign = _jump_sign(cfg)
    if not cfg.has_surface_tension:
        label = {
            -1: RegimeLabel.STABLE_ALMOST_EXP,
            0: RegimeLabel.CRITICAL_LWP,
            1: RegimeLabel.UNSTABLE_NO_ST,
        }[sign]
        return Regime(label, sign, "none")
    if sign <= 0:
        return Regime(RegimeLabel.STABLE_EXP, sign, "n/a")
    sc = sigma_critical(cfg)
    if abs(cfg.sigma_minus - sc) <= CRITICAL_RTOL * sc:
        return Regime(RegimeLabel.CRITICAL_LWP, sign, "critical")
    if cfg.sigma_minus < sc:
        return Regime(RegimeLabel.UNSTABLE_ST, sign, "below")
    return Regime(RegimeLabel.STABLE_EXP, sign, "above")


@dataclass(frozen=True, order=False)
class Frequency:
    """Lattice frequency (n1 / L1, n2 / L2) kept as its integer indices."""

    n1: int
    n2: int
    L1: float
    L2: float

    @property
    def xi1(self) -> float:
        return self.n1 / self.L1

    @property
    def xi2(self) -> float:
        return self.n2 / self.L2

    @property
    def magnitude(self) -> float:
        return math.hypot(self.xi1, self.xi2)

    @property
    def shell_key(self) -> float:
        # |xi|^2 L1^2 L2^2; exact for integer-equal shells when L1 == L2
        return self.n1 * self.n1 * self.L2 * self.L2 + self.n2 * self.n2 * self.L1 * self.L1

    def negated(self) -> "Frequency":
        return Frequency(-self.n1, -self.n2, self.L1, self.L2)


def lattice_frequencies(cfg: FluidConfig, xi_max: float) -> list[Frequency]:
    """Nonzero lattice points with |xi| <= xi_max, sorted by |xi| then (n1, n2)."""
    if not xi_max > 0:
        raise ValueError("xi_max must be > 0")
    if math.isinf(xi_max):
        raise ValueError("xi_max must be finite")
    m1 = int(math.floor(xi_max * cfg.L1))
    m2 = int(math.floor(xi_max * cfg.L2))
    bound = xi_max * xi_max * cfg.L1**2 * cfg.L2**2
    out = []
    for n1 in range(-m1, m1 + 1):
        for n2 in range(-m2, m2 + 1):
            if n1 == 0 and n2 == 0:
                continue
            f = Frequency(n1, n2, cfg.L1, cfg.L2)
            if f.shell_key <= bound:
                out.append(f)
    out.sort(key=lambda f: (f.shell_key, f.n1, f.n2))
    return out
