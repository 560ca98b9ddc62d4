"""Closed-form optimal portfolio pi* and worst-case distortion theta*.

Regimes combine insider information (none / initial enlargement) with
ambiguity aversion (robust / non-robust) and price impact (small / large
trader).  Every closed-form regime satisfies the first-order relation

    theta* = sigma_tilde * pi* - (iota + phi)

with phi the information drift (zero without a signal), and pi* is affine in
the residual signal, so slopes with respect to the current noise level are
exact.  The robust large trader has no closed form; recover it from the
quadratic backward solver instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import (
    DomainError,
    InsiderSpec,
    MarketParams,
    ValidationError,
    iota,
    phi_norm_sq,
    sigma_tilde,
)
from .paths import PathBatch, partial_signals

__all__ = [
    "StrategyKind",
    "StrategyProfile",
    "pi_no_insider_robust",
    "theta_no_insider_robust",
    "pi_small_insider_robust",
    "theta_small_insider_robust",
    "pi_large_insider_nonrobust",
    "theta_from_pi",
    "build_profile",
]


class StrategyKind(Enum):
    NO_INSIDER_ROBUST = "no_insider_robust"
    NO_INSIDER_NONROBUST = "no_insider_nonrobust"
    SMALL_INSIDER_ROBUST = "small_insider_robust"
    SMALL_INSIDER_NONROBUST = "small_insider_nonrobust"
    LARGE_INSIDER_NONROBUST = "large_insider_nonrobust"
    LARGE_INSIDER_ROBUST = "large_insider_robust"


ROBUST_KINDS = {StrategyKind.NO_INSIDER_ROBUST, StrategyKind.SMALL_INSIDER_ROBUST,
                StrategyKind.LARGE_INSIDER_ROBUST}


@dataclass(frozen=True)
class StrategyProfile:
    """Per-path, per-step (pi, theta) at left endpoints of the steps in [0, T).

    Arrays broadcast over paths: deterministic regimes store a single row.
    theta is identically zero for non-robust kinds.
    """

    kind: StrategyKind
    pi: np.ndarray
    theta: np.ndarray
    grid: object

    def __post_init__(self):
        if not (np.all(np.isfinite(self.pi)) and np.all(np.isfinite(self.theta))):
            raise ValidationError("profile_finite", "pi and theta must be finite everywhere")

    def scaled(self, pi_factor: float = 1.0, theta_factor: float = 1.0) -> "StrategyProfile":
        """Perturbed copy (for saddle checks and negative controls)."""
        return StrategyProfile(
            kind=self.kind,
            pi=self.pi * pi_factor,
            theta=self.theta * theta_factor,
            grid=self.grid,
        )


# -- no insider ----------------------------------------------------------------


def pi_no_insider_robust(market: MarketParams, t):
    """(mu0 - r) / (2 sigma^2): half the log-utility fraction, the price of
    ambiguity aversion.  Requires varrho = 0."""
    return iota(market, t) / (2.0 * market.sigma(t))


def theta_no_insider_robust(market: MarketParams, t):
    """Worst-case distortion -iota/2 for the uninformed robust trader."""
    return -0.5 * iota(market, t)


def pi_no_insider_nonrobust(market: MarketParams, t):
    """(mu0 - r) / (sigma sigma_tilde); the classical fraction when varrho=0."""
    return iota(market, t) / sigma_tilde(market, t)


# -- insider closed forms -------------------------------------------------------


def _signal_state(market, insider, y0, b_t, t):
    """Shared pieces: residual signal and the weighted run-out integrals."""
    if t >= market.T:
        raise DomainError(f"strategy defined on [0, T), got t = {t}")
    w = insider.phi_weight(t)
    norm_t = phi_norm_sq(insider, t, insider.T0)
    norm_T = phi_norm_sq(insider, market.T, insider.T0)
    # int_t^T phi_weight * iota ds, exact on merged constant pieces
    knots = sorted(
        {t, market.T}
        | {b for b in insider.phi_weight.breakpoints if t < b < market.T}
        | {b for b in market.breakpoints_union() if t < b < market.T}
    )
    cross = sum(
        insider.phi_weight(lo) * iota(market, lo) * (hi - lo)
        for lo, hi in zip(knots, knots[1:])
    )
    return w, norm_t, norm_T, np.asarray(y0) - np.asarray(b_t), cross


def pi_small_insider_robust(market: MarketParams, insider: InsiderSpec, y0, b_t, t):
    """Robust informed fraction (no price impact):

        iota/(2 sigma) + phi_w(t) * (Y0 - B_t + (1/2) int_t^T phi_w iota ds)
                         / (sigma * (||phi_w||^2_[t,T0] + ||phi_w||^2_[T,T0]))

    with B_t the running weighted noise integral.  For phi_w = 1 this reduces
    to iota/(2 sigma) + (W_T0 - W_t + (1/2) int_t^T iota ds) / (sigma (2T0 - t - T)).
    """
    w, norm_t, norm_T, resid, cross = _signal_state(market, insider, y0, b_t, t)
    sig = market.sigma(t)
    return iota(market, t) / (2.0 * sig) + w * (resid + 0.5 * cross) / (sig * (norm_t + norm_T))


def theta_small_insider_robust(market: MarketParams, insider: InsiderSpec, y0, b_t, t):
    """Worst-case distortion paired with the robust informed fraction."""
    w, norm_t, norm_T, resid, cross = _signal_state(market, insider, y0, b_t, t)
    return (
        -0.5 * iota(market, t)
        + w * (resid + 0.5 * cross) / (norm_t + norm_T)
        - w * resid / norm_t
    )


def pi_small_insider_nonrobust(market: MarketParams, insider: InsiderSpec, y0, b_t, t):
    """Informed fraction without ambiguity aversion or impact:
    iota/sigma + phi_t/sigma."""
    if t >= market.T:
        raise DomainError(f"strategy defined on [0, T), got t = {t}")
    w = insider.phi_weight(t)
    norm_t = phi_norm_sq(insider, t, insider.T0)
    phi = (np.asarray(y0) - np.asarray(b_t)) * w / norm_t
    sig = market.sigma(t)
    return (iota(market, t) + phi) / sig


def pi_large_insider_nonrobust(market: MarketParams, insider: InsiderSpec, y0, w_t, t):
    """Impact-adjusted informed fraction for full knowledge of W_T0:

        (mu0 - r)/(sigma sigma_tilde) + (W_T0 - W_t) / (sigma_tilde (T0 - t)).

    Requires unit signal weight, so Y0 = W_T0.
    """
    if not insider.phi_is_one():
        raise ValidationError("phi_not_one", "large-insider closed form needs phi_weight = 1")
    if t >= market.T:
        raise DomainError(f"strategy defined on [0, T), got t = {t}")
    st = sigma_tilde(market, t)
    return iota(market, t) / st + (np.asarray(y0) - np.asarray(w_t)) / (st * (insider.T0 - t))


def theta_from_pi(market: MarketParams, phi, pi, t):
    """Distortion implied by a fraction: sigma_tilde*pi - (iota + phi).

    Feeding a non-robust regime its own optimal fraction returns zero.
    """
    return sigma_tilde(market, t) * np.asarray(pi) - (iota(market, t) + np.asarray(phi))


# -- profile assembly -----------------------------------------------------------


_NO_IMPACT_KINDS = {
    StrategyKind.NO_INSIDER_ROBUST,
    StrategyKind.SMALL_INSIDER_ROBUST,
    StrategyKind.SMALL_INSIDER_NONROBUST,
}


def build_profile(
    kind: StrategyKind,
    batch: PathBatch,
    market: MarketParams,
    insider: InsiderSpec,
) -> StrategyProfile:
    """Evaluate the closed form of `kind` on every path and step of `batch`."""
    grid = batch.grid
    m = grid.index_T
    t_left = grid.knots[:m]

    if kind in _NO_IMPACT_KINDS and any(v != 0.0 for v in market.varrho.values):
        raise ValidationError("impact_not_allowed", f"{kind.value} requires varrho = 0")

    if kind is StrategyKind.LARGE_INSIDER_ROBUST:
        raise ValidationError(
            "no_closed_form",
            "the robust large insider has no closed form; solve the quadratic "
            "backward equation and use recover_controls",
        )

    if kind is StrategyKind.NO_INSIDER_ROBUST:
        pi = pi_no_insider_robust(market, t_left)[None, :]
        theta = theta_no_insider_robust(market, t_left)[None, :]
    elif kind is StrategyKind.NO_INSIDER_NONROBUST:
        pi = pi_no_insider_nonrobust(market, t_left)[None, :]
        theta = np.zeros_like(pi)
    else:
        if not insider.has_signal():
            raise ValidationError("signal_required", f"{kind.value} needs an insider signal")
        b = partial_signals(grid, batch.dW, insider)[:, :-1]
        pi = np.empty((batch.n_paths, m))
        if kind is StrategyKind.SMALL_INSIDER_ROBUST:
            for i, t in enumerate(t_left):
                pi[:, i] = pi_small_insider_robust(market, insider, batch.Y0, b[:, i], t)
            theta = np.empty_like(pi)
            for i, t in enumerate(t_left):
                theta[:, i] = theta_small_insider_robust(market, insider, batch.Y0, b[:, i], t)
        elif kind is StrategyKind.SMALL_INSIDER_NONROBUST:
            for i, t in enumerate(t_left):
                pi[:, i] = pi_small_insider_nonrobust(market, insider, batch.Y0, b[:, i], t)
            theta = np.zeros_like(pi)
        elif kind is StrategyKind.LARGE_INSIDER_NONROBUST:
            for i, t in enumerate(t_left):
                pi[:, i] = pi_large_insider_nonrobust(market, insider, batch.Y0, b[:, i], t)
            theta = np.zeros_like(pi)
        else:  # pragma: no cover - enum is exhaustive
            raise ValidationError("unknown_kind", str(kind))

    return StrategyProfile(kind=kind, pi=pi, theta=theta, grid=grid)
