"""Market and insider configuration.

The market has a risk-free rate r(t), a base drift mu0(t), a volatility
sigma(t) and a price-impact coefficient varrho(t): a position pi shifts the
risky drift to mu0(t) + varrho(t)*pi.  All coefficients are deterministic
piecewise-constant functions of time, which keeps every time integral exact.

Derived symbols used throughout the package:

    iota(t)        = (mu0(t) - r(t)) / sigma(t)      market price of risk
    sigma_tilde(t) = sigma(t) - 2*varrho(t)/sigma(t) impact-adjusted volatility

The insider, when present, observes Y0 = int_0^T0 phi(u) dW_u at time zero
for some weight function phi on [0, T0] with T0 beyond the trading horizon T.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "PiecewiseConstant",
    "MarketParams",
    "InsiderKind",
    "InsiderSpec",
    "ScenarioConfig",
    "ValidationError",
    "DomainError",
    "iota",
    "sigma_tilde",
    "phi_norm_sq",
    "validate",
]


class ValidationError(ValueError):
    """Configuration violates an invariant. `code` is machine-readable."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class DomainError(ValueError):
    """Evaluation requested outside the declared time domain."""


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step function on [0, inf).

    `breakpoints` must start at 0.0 and increase strictly; the function takes
    `values[k]` on [breakpoints[k], breakpoints[k+1]).  A constant function is
    the single-breakpoint case.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(bp) == 0 or len(bp) != len(vals):
            raise ValidationError("piecewise_shape", "need one value per breakpoint")
        if bp[0] != 0.0:
            raise ValidationError("piecewise_origin", "first breakpoint must be 0")
        if any(b >= c for b, c in zip(bp, bp[1:])):
            raise ValidationError("piecewise_order", "breakpoints must increase strictly")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float) -> "PiecewiseConstant":
        return cls((0.0,), (float(value),))

    def __call__(self, t):
        """Evaluate at scalar or array t >= 0."""
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        out = np.asarray(self.values, dtype=float)[idx]
        return float(out) if np.ndim(t) == 0 else out

    def integral(self, a: float, b: float, power: int = 1) -> float:
        """Exact integral of f(t)**power over [a, b]."""
        if b < a:
            raise DomainError(f"integral bounds reversed: [{a}, {b}]")
        knots = [a] + [t for t in self.breakpoints if a < t < b] + [b]
        total = 0.0
        for lo, hi in zip(knots, knots[1:]):
            total += self(lo) ** power * (hi - lo)
        return total

    def bounds_on(self, a: float, b: float) -> tuple[float, float]:
        """(min, max) of the function over [a, b]."""
        pts = [a] + [t for t in self.breakpoints if a < t < b]
        vals = [self(t) for t in pts]
        return min(vals), max(vals)


def _as_function(x) -> PiecewiseConstant:
    if isinstance(x, PiecewiseConstant):
        return x
    return PiecewiseConstant.constant(float(x))


@dataclass(frozen=True)
class MarketParams:
    """Market coefficients on [0, T] plus initial wealth.

    Units: r, mu0, varrho are rates (1/time); sigma scales like 1/sqrt(time);
    T is a time; X0 a currency amount.  `vol_floor` is the lower bound eps
    enforced on sigma.
    """

    r: PiecewiseConstant
    mu0: PiecewiseConstant
    sigma: PiecewiseConstant
    varrho: PiecewiseConstant
    T: float
    X0: float
    vol_floor: float = 1e-6

    def __post_init__(self):
        for name in ("r", "mu0", "sigma", "varrho"):
            object.__setattr__(self, name, _as_function(getattr(self, name)))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "X0", float(self.X0))

    def breakpoints_union(self) -> list[float]:
        """Sorted coefficient breakpoints inside (0, T)."""
        pts = set()
        for fn in (self.r, self.mu0, self.sigma, self.varrho):
            pts.update(b for b in fn.breakpoints if 0.0 < b < self.T)
        return sorted(pts)

    def is_constant(self) -> bool:
        return all(
            len(fn.breakpoints) == 1 for fn in (self.r, self.mu0, self.sigma, self.varrho)
        )


class InsiderKind(Enum):
    NO_INSIDER = "none"
    INITIAL_ENLARGEMENT = "enlargement"


@dataclass(frozen=True)
class InsiderSpec:
    """Information regime.

    For INITIAL_ENLARGEMENT the trader knows Y0 = int_0^T0 phi dW from time
    zero; `phi_weight` is the deterministic weight (default constant 1) and T0
    the information horizon, strictly beyond the market horizon T.
    """

    kind: InsiderKind = InsiderKind.NO_INSIDER
    T0: float | None = None
    phi_weight: PiecewiseConstant = field(default_factory=lambda: PiecewiseConstant.constant(1.0))

    def __post_init__(self):
        object.__setattr__(self, "phi_weight", _as_function(self.phi_weight))
        if self.T0 is not None:
            object.__setattr__(self, "T0", float(self.T0))

    @classmethod
    def none(cls) -> "InsiderSpec":
        return cls(kind=InsiderKind.NO_INSIDER)

    @classmethod
    def enlargement(cls, T0: float, phi_weight=1.0) -> "InsiderSpec":
        return cls(kind=InsiderKind.INITIAL_ENLARGEMENT, T0=T0, phi_weight=_as_function(phi_weight))

    def has_signal(self) -> bool:
        return self.kind is InsiderKind.INITIAL_ENLARGEMENT

    def phi_is_one(self) -> bool:
        return self.phi_weight.breakpoints == (0.0,) and self.phi_weight.values == (1.0,)


@dataclass(frozen=True)
class ScenarioConfig:
    """Full run configuration: market + insider + discretisation + RNG seed."""

    market: MarketParams
    insider: InsiderSpec
    robust: bool = True
    n_steps: int = 200
    n_steps_tail: int | None = None
    n_paths: int = 10_000
    seed: int = 0


# -- derived symbol evaluation ------------------------------------------------


def _check_time(market: MarketParams, t) -> None:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > market.T):
        raise DomainError(f"time outside [0, {market.T}]")


def iota(market: MarketParams, t):
    """Market price of risk (mu0(t) - r(t)) / sigma(t)."""
    _check_time(market, t)
    return (market.mu0(t) - market.r(t)) / market.sigma(t)


def sigma_tilde(market: MarketParams, t):
    """Impact-adjusted volatility sigma(t) - 2*varrho(t)/sigma(t)."""
    _check_time(market, t)
    return market.sigma(t) - 2.0 * market.varrho(t) / market.sigma(t)


def phi_norm_sq(insider: InsiderSpec, s: float, t: float) -> float:
    """Exact int_s^t phi(u)^2 du of the signal weight."""
    if t < s:
        raise DomainError(f"norm bounds reversed: [{s}, {t}]")
    return insider.phi_weight.integral(s, t, power=2)


# -- validation ---------------------------------------------------------------


def _validate_market(market: MarketParams) -> None:
    if not np.isfinite(market.T) or market.T <= 0.0:
        raise ValidationError("horizon_positive", f"T must be positive, got {market.T}")
    if not np.isfinite(market.X0) or market.X0 <= 0.0:
        raise ValidationError("wealth_positive", f"X0 must be positive, got {market.X0}")
    for name in ("r", "mu0", "sigma", "varrho"):
        fn: PiecewiseConstant = getattr(market, name)
        if not all(np.isfinite(v) for v in fn.values):
            raise ValidationError("coefficient_bounded", f"{name} must be finite on [0, T]")
    # check on the union of pieces so every constant segment is covered
    pts = [0.0] + market.breakpoints_union()
    for t in pts:
        sig = market.sigma(t)
        rho = market.varrho(t)
        if sig < market.vol_floor:
            raise ValidationError(
                "sigma_floor", f"sigma({t}) = {sig} below floor {market.vol_floor}"
            )
        if rho < 0.0 or rho >= 0.5 * sig**2:
            raise ValidationError(
                "varrho_range", f"need 0 <= varrho < sigma^2/2, got varrho({t}) = {rho}"
            )


def _validate_insider(insider: InsiderSpec, T: float) -> None:
    if insider.kind is InsiderKind.NO_INSIDER:
        return
    if insider.T0 is None or not np.isfinite(insider.T0):
        raise ValidationError("t0_required", "enlargement requires a finite T0")
    if insider.T0 <= T:
        raise ValidationError("t0_after_horizon", f"need T0 > T, got T0 = {insider.T0}, T = {T}")
    if not all(np.isfinite(v) for v in insider.phi_weight.values):
        raise ValidationError("phi_bounded", "signal weight must be finite")
    if phi_norm_sq(insider, T, insider.T0) <= 0.0:
        raise ValidationError("phi_tail_norm", "signal weight must have mass on [T, T0]")


def validate(config: ScenarioConfig) -> None:
    """Raise ValidationError (with a machine-readable code) on any violation."""
    _validate_market(config.market)
    _validate_insider(config.insider, config.market.T)
    if config.n_steps < 2:
        raise ValidationError("n_steps_min", f"need n_steps >= 2, got {config.n_steps}")
    if config.n_steps_tail is not None and config.n_steps_tail < 1:
        raise ValidationError("n_steps_tail_min", "need n_steps_tail >= 1 when given")
    if config.n_paths < 1:
        raise ValidationError("n_paths_min", f"need n_paths >= 1, got {config.n_paths}")
    if not (0 <= int(config.seed) < 2**64):
        raise ValidationError("seed_range", "seed must fit in 64 bits")
