"""Backward solvers for the two equations characterising the robust optimum.

Small insider (no price impact): the optimal wealth X and its control z solve
the linear backward equation

    dX_t = (r_t X_t + phitilde_t z_t) dt + z_t dWH_t,
    X_T  = X0 / (E[sqrt(Pi(0,T)) | H_0] * sqrt(Pi(0,T))),

where Pi(t1,t2) = exp{-int r - int phitilde dWH - 1/2 int phitilde^2} and
phitilde = iota + phi.  The optimal fraction is pi = z / (sigma X).

Large insider under ambiguity: L = ln(eps * X) and z = sigma*pi + theta solve
the quadratic backward equation

    dL_t = -f_Q(t, z_t) dt + z_t dWH_t,   L_T = c2,
    f_Q(t, z) = z^2/4 - phitilde z/2 - r - phitilde^2/4
                - (sigma - sigma_tilde)/(4 (sigma + sigma_tilde)) (z + phitilde)^2,

with the constant (or, under enlargement, signal-dependent) terminal c2 shot
so that L_0 = ln X0.  Controls are recovered via pi = (z + phitilde) /
(sigma + sigma_tilde), theta = (sigma_tilde z - sigma phitilde) /
(sigma + sigma_tilde).

Both numerical solvers are explicit backward Euler schemes with conditional
expectations estimated by polynomial least-squares regression on the Markov
state (the running noise level, plus the signal under enlargement).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import InsiderKind, InsiderSpec, MarketParams, ValidationError, iota, sigma_tilde
from .paths import PathBatch, partial_signals
from .simulate import mean_se
from .strategies import StrategyKind, StrategyProfile, pi_small_insider_robust, pi_no_insider_robust

__all__ = [
    "RegressionError",
    "ShootingError",
    "PiStarFunctional",
    "BsdeSolution",
    "pi_star_functional",
    "enlargement_normalizer",
    "solve_linear_closed_form",
    "solve_linear_lsmc",
    "solve_quadratic_lsmc",
    "recover_controls",
    "value_from_bsde",
    "knot_table",
]


class RegressionError(RuntimeError):
    """Least-squares design matrix is rank deficient."""

    def __init__(self, t: float, rank: int, n_columns: int, cond: float):
        super().__init__(
            f"rank-deficient regression at t={t}: rank {rank} < {n_columns} "
            f"columns (condition number {cond:.3e})"
        )
        self.t = t
        self.rank = rank
        self.n_columns = n_columns
        self.cond = cond


class ShootingError(RuntimeError):
    """Terminal-constant shooting failed to converge."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"shooting residual {residual:.3e} after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations


# -- the multiplicative functional Pi ------------------------------------------


@dataclass(frozen=True)
class PiStarFunctional:
    """Per-path Pi(t1, t2) via its additive exponent at the knots of [0, T].

    Multiplicativity Pi(t1,t3) = Pi(t1,t2) * Pi(t2,t3) holds exactly on the
    grid because the exponent is additive.
    """

    grid: object
    exponent: np.ndarray  # (n_paths, index_T + 1), exponent[:, 0] = 0

    def values(self, t1: float, t2: float) -> np.ndarray:
        if t2 < t1:
            raise ValueError(f"need t1 <= t2, got [{t1}, {t2}]")
        i, j = self.grid.index_of(t1), self.grid.index_of(t2)
        return np.exp(self.exponent[:, j] - self.exponent[:, i])

    def sqrt_values(self, t1: float, t2: float) -> np.ndarray:
        i, j = self.grid.index_of(t1), self.grid.index_of(t2)
        return np.exp(0.5 * (self.exponent[:, j] - self.exponent[:, i]))


def _phitilde(batch: PathBatch, market: MarketParams) -> np.ndarray:
    m = batch.grid.index_T
    t_left = batch.grid.knots[:m]
    return iota(market, t_left) + batch.phi


def pi_star_functional(batch: PathBatch, market: MarketParams) -> PiStarFunctional:
    """Left-point discretisation of
    Pi(t1,t2) = exp{-int r ds - int phitilde dWH - 1/2 int phitilde^2 ds}."""
    grid = batch.grid
    m = grid.index_T
    dt = grid.dt[:m]
    r = market.r(grid.knots[:m])
    phit = _phitilde(batch, market)
    incr = -(r + 0.5 * phit**2) * dt - phit * batch.dWH
    expo = np.zeros((batch.n_paths, m + 1))
    np.cumsum(np.broadcast_to(incr, (batch.n_paths, m)), axis=1, out=expo[:, 1:])
    return PiStarFunctional(grid=grid, exponent=expo)


# -- Gaussian closed forms -------------------------------------------------------


def _require_constant(market: MarketParams) -> None:
    if not market.is_constant():
        raise ValidationError(
            "constant_required", "enlargement closed forms need constant coefficients"
        )


def _require_unit_phi(insider: InsiderSpec) -> None:
    if not insider.phi_is_one():
        raise ValidationError("unsupported_phi", "closed forms need unit signal weight")


def enlargement_normalizer(market: MarketParams, insider: InsiderSpec, y) -> np.ndarray:
    """E[sqrt(Pi(0,T)) | H_0] as a function of the signal y = W_T0.

    Gaussian integration for constant coefficients and unit weight gives

        (T0/v)^{1/4} sqrt(2v/a0) exp{-rT/2 - iota^2 T/8
                                     - (y + iota T/2)^2/(2 a0) + y^2/(4 T0)}

    with v = T0 - T and a0 = 2 T0 - T.
    """
    _require_constant(market)
    _require_unit_phi(insider)
    T, T0 = market.T, float(insider.T0)
    v, a0 = T0 - T, 2.0 * T0 - T
    io, r = iota(market, 0.0), market.r(0.0)
    y = np.asarray(y, dtype=float)
    expo = (
        -0.5 * r * T
        - io**2 * T / 8.0
        - (y + 0.5 * io * T) ** 2 / (2.0 * a0)
        + y**2 / (4.0 * T0)
    )
    return (T0 / v) ** 0.25 * math.sqrt(2.0 * v / a0) * np.exp(expo)


# -- solutions -------------------------------------------------------------------


@dataclass(frozen=True)
class BsdeSolution:
    """Backward-solved fields on the grid of [0, T].

    Y holds the value at every knot (wealth X for the linear equation, L for
    the quadratic one); Z the control on every step.  `c` is the shooting
    constant (scalar, or polynomial coefficients in the signal under
    enlargement; the Monte-Carlo normaliser for the linear solver).
    `residual` is |Y_0 - target| and `trace` the shooting iterations.
    """

    grid: object
    Y: np.ndarray
    Z: np.ndarray
    c: object
    residual: float
    trace: tuple = field(default_factory=tuple)


def solve_linear_closed_form(
    batch: PathBatch, market: MarketParams, insider: InsiderSpec
) -> BsdeSolution:
    """Exact solution of the linear backward equation.

    Without a signal (valid for piecewise-constant coefficients):

        X_t = X0 exp{int_0^t r + (3/8) int_0^t iota^2 + (1/2) int_0^t iota dW}.

    Under enlargement (constant coefficients, unit weight), with
    a_t = 2 T0 - T - t and m_t = Y0 - W_t + iota (T - t) / 2:

        X_t = X0 sqrt(a0/a_t) exp{r t + (3/8) iota^2 t + (1/2) iota W_t
                                  - m_t^2/(2 a_t) + m_0^2/(2 a0)}.
    """
    grid = batch.grid
    m = grid.index_T
    knots = grid.knots[: m + 1]
    t_left = grid.knots[:m]
    dt = grid.dt[:m]

    if insider.kind is InsiderKind.NO_INSIDER:
        io_left = iota(market, t_left)
        cum_r = np.concatenate(([0.0], np.cumsum(market.r(t_left) * dt)))
        cum_io2 = np.concatenate(([0.0], np.cumsum(io_left**2 * dt)))
        cum_iodW = np.zeros((batch.n_paths, m + 1))
        np.cumsum(io_left * batch.dW[:, :m], axis=1, out=cum_iodW[:, 1:])
        Y = market.X0 * np.exp(cum_r + 0.375 * cum_io2 + 0.5 * cum_iodW)
        pi = pi_no_insider_robust(market, t_left)[None, :]
        normalizer = math.exp(-0.5 * cum_r[-1] - cum_io2[-1] / 8.0)
    else:
        _require_constant(market)
        _require_unit_phi(insider)
        T, T0 = market.T, float(insider.T0)
        io, r = iota(market, 0.0), market.r(0.0)
        a0 = 2.0 * T0 - T
        a_t = 2.0 * T0 - T - knots
        W = np.zeros((batch.n_paths, m + 1))
        np.cumsum(batch.dW[:, :m], axis=1, out=W[:, 1:])
        y = batch.Y0[:, None]
        m_t = y - W + 0.5 * io * (T - knots)
        expo = (
            r * knots
            + 0.375 * io**2 * knots
            + 0.5 * io * W
            - m_t**2 / (2.0 * a_t)
            + (y + 0.5 * io * T) ** 2 / (2.0 * a0)
        )
        Y = market.X0 * np.sqrt(a0 / a_t) * np.exp(expo)
        b = W[:, :m]
        pi = np.empty((batch.n_paths, m))
        for i, t in enumerate(t_left):
            pi[:, i] = pi_small_insider_robust(market, insider, batch.Y0, b[:, i], t)
        normalizer = enlargement_normalizer(market, insider, batch.Y0)

    Z = market.sigma(t_left) * pi * Y[:, :m]
    Z = np.broadcast_to(Z, (batch.n_paths, m)).copy()
    Yb = np.broadcast_to(Y, (batch.n_paths, m + 1))
    residual = abs(mean_se(Yb[:, 0])[0] - market.X0)
    return BsdeSolution(grid=grid, Y=Yb, Z=Z, c=normalizer, residual=residual)


# -- least-squares regression machinery ------------------------------------------


def _poly_basis(states: list[np.ndarray], order: int) -> np.ndarray:
    """All monomials of total degree <= order in the given state columns."""
    n = states[0].shape[0]
    cols = [np.ones(n)]
    if len(states) == 1:
        for k in range(1, order + 1):
            cols.append(states[0] ** k)
    elif len(states) == 2:
        x, y = states
        for total in range(1, order + 1):
            for a in range(total + 1):
                cols.append(x ** (total - a) * y**a)
    else:
        raise ValueError("only 1- or 2-dimensional states are supported")
    return np.column_stack(cols)


def _regress(basis: np.ndarray, target: np.ndarray, t: float) -> np.ndarray:
    """Fitted values of an OLS regression; degenerate (constant-zero) columns
    are dropped, genuine collinearity raises RegressionError."""
    scale = np.abs(basis).max(axis=0)
    keep = scale > 1e-12
    keep[0] = True
    design = basis[:, keep] / scale[keep]
    coef, _, rank, sv = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
        raise RegressionError(t=t, rank=int(rank), n_columns=design.shape[1], cond=cond)
    return design @ coef


def _regression_states(batch: PathBatch, insider: InsiderSpec):
    """Markov state: per-knot noise level, plus the signal when present."""
    if insider.kind is InsiderKind.NO_INSIDER:
        m = batch.grid.index_T
        W = np.zeros((batch.n_paths, m + 1))
        np.cumsum(batch.dW[:, :m], axis=1, out=W[:, 1:])
        return W, None
    return partial_signals(batch.grid, batch.dW, insider), batch.Y0


def _state_picker(batch: PathBatch, insider: InsiderSpec):
    level, signal = _regression_states(batch, insider)
    if signal is None:
        return lambda i: [level[:, i]]
    return lambda i: [level[:, i], signal]


def solve_linear_lsmc(
    batch: PathBatch,
    market: MarketParams,
    insider: InsiderSpec,
    basis_order: int = 3,
) -> BsdeSolution:
    """Explicit backward Euler with regression for the linear equation,
    integrated in logarithmic coordinates.

    The unknown X is positive with exponential spread across paths (it loses
    finite variance as T0 approaches 2T), so least-squares fits of X levels
    are tail-dominated and polynomial bases cannot track the surface.  Its
    logarithm L = ln X, however, is a quadratic polynomial in the Markov
    state for every Gaussian signal, and the transformed dynamics

        dL_t = (r_t + phitilde_t zeta_t - zeta_t^2 / 2) dt + zeta_t dWH_t,
        zeta = z / X,

    stay inside the polynomial family step by step.  The scheme is

        zeta_i = E[(L_{i+1} - E[L_{i+1}|s_i]) dWH_i | s_i] / dt_i,
        L_i    = E[L_{i+1}|s_i] - (r_i + phitilde_i zeta_i - zeta_i^2/2) dt_i,

    and (Y, Z) = (exp L, zeta exp L) is returned.  The terminal uses the
    pathwise Pi(0,T); the conditional normaliser is a Monte-Carlo scalar
    without a signal and the Gaussian closed form under enlargement.
    """
    grid = batch.grid
    m = grid.index_T
    dt = grid.dt[:m]
    t_left = grid.knots[:m]
    r = market.r(t_left)
    phit = np.broadcast_to(_phitilde(batch, market), (batch.n_paths, m))
    dWH = np.broadcast_to(batch.dWH, (batch.n_paths, m))

    pist = pi_star_functional(batch, market)
    log_pi_T = pist.exponent[:, m]
    if insider.kind is InsiderKind.NO_INSIDER:
        normalizer = mean_se(np.exp(0.5 * log_pi_T))[0]
        log_norm = math.log(normalizer)
    else:
        normalizer = enlargement_normalizer(market, insider, batch.Y0)
        log_norm = np.log(normalizer)
    state_of = _state_picker(batch, insider)

    L = np.empty((batch.n_paths, m + 1))
    zeta = np.empty((batch.n_paths, m))
    L[:, m] = math.log(market.X0) - log_norm - 0.5 * log_pi_T
    for i in range(m - 1, -1, -1):
        basis = _poly_basis(state_of(i), basis_order)
        l_next = L[:, i + 1]
        l_hat = _regress(basis, l_next, t_left[i])
        zeta[:, i] = _regress(basis, (l_next - l_hat) * dWH[:, i], t_left[i]) / dt[i]
        L[:, i] = l_hat - (r[i] + phit[:, i] * zeta[:, i] - 0.5 * zeta[:, i] ** 2) * dt[i]
    Y = np.exp(L)
    Z = zeta * Y[:, :m]
    residual = abs(mean_se(Y[:, 0])[0] - market.X0)
    return BsdeSolution(grid=grid, Y=Y, Z=Z, c=normalizer, residual=residual)


# -- quadratic equation -----------------------------------------------------------


def _quadratic_driver(market: MarketParams, t_left: np.ndarray):
    """f_Q(t, z) with the impact weight; the leading z^2 coefficient reduces
    exactly to   sigma_tilde / (2 (sigma + sigma_tilde))."""
    sig = market.sigma(t_left)
    st = sigma_tilde(market, t_left)
    r = market.r(t_left)
    k = (sig - st) / (4.0 * (sig + st))
    lead = 0.25 - k
    assert np.all(np.abs(lead - st / (2.0 * (sig + st))) < 1e-15)

    def f(i: int, z: np.ndarray, phit_i: np.ndarray) -> np.ndarray:
        return (
            0.25 * z**2
            - 0.5 * phit_i * z
            - r[i]
            - 0.25 * phit_i**2
            - k[i] * (z + phit_i) ** 2
        )

    return f


def _sweep_quadratic(batch, market, insider, terminal, basis_order):
    """One backward pass of the quadratic scheme from a terminal field."""
    grid = batch.grid
    m = grid.index_T
    dt = grid.dt[:m]
    t_left = grid.knots[:m]
    phit = np.broadcast_to(_phitilde(batch, market), (batch.n_paths, m))
    dWH = np.broadcast_to(batch.dWH, (batch.n_paths, m))
    f_q = _quadratic_driver(market, t_left)
    state_of = _state_picker(batch, insider)

    L = np.empty((batch.n_paths, m + 1))
    Z = np.empty((batch.n_paths, m))
    L[:, m] = terminal
    for i in range(m - 1, -1, -1):
        basis = _poly_basis(state_of(i), basis_order)
        l_next = L[:, i + 1]
        l_hat = _regress(basis, l_next, t_left[i])
        Z[:, i] = _regress(basis, (l_next - l_hat) * dWH[:, i], t_left[i]) / dt[i]
        L[:, i] = l_hat + f_q(i, Z[:, i], phit[:, i]) * dt[i]
    return L, Z


def solve_quadratic_lsmc(
    batch: PathBatch,
    market: MarketParams,
    insider: InsiderSpec,
    c2_init: float | None = None,
    basis_order: int = 3,
    c2_order: int = 2,
    shoot_tol: float = 1e-3,
    max_iter: int = 50,
) -> BsdeSolution:
    """Backward solve of the quadratic equation with terminal shooting.

    Without a signal the terminal is a constant c2 found by secant iteration
    on the initial-value mismatch L_0 - ln X0 (the map c2 -> L_0 is affine
    with unit slope, so this converges immediately up to regression noise).
    Under enlargement the terminal is a polynomial c2(Y0) of degree
    `c2_order`, updated by projecting the mismatch onto the same basis; the
    residual reported is the root-mean-square projected mismatch.
    """
    ln_x0 = math.log(market.X0)
    trace: list[tuple] = []

    if insider.kind is InsiderKind.NO_INSIDER:
        c2 = ln_x0 if c2_init is None else float(c2_init)
        prev: tuple[float, float] | None = None
        for iteration in range(max_iter):
            L, Z = _sweep_quadratic(batch, market, insider, np.full(batch.n_paths, c2), basis_order)
            l0 = mean_se(L[:, 0])[0]
            resid = l0 - ln_x0
            trace.append((iteration, c2, resid, l0))
            if abs(resid) <= shoot_tol:
                return BsdeSolution(
                    grid=batch.grid, Y=L, Z=Z, c=c2, residual=abs(resid), trace=tuple(trace)
                )
            if prev is None or abs(resid - prev[1]) < 1e-15:
                step = -resid  # unit-slope Newton guess
            else:
                step = -resid * (c2 - prev[0]) / (resid - prev[1])
            prev = (c2, resid)
            c2 += step
        raise ShootingError(residual=abs(trace[-1][2]), iterations=max_iter)

    # enlargement: polynomial terminal in the signal
    y = batch.Y0
    y_basis = _poly_basis([y], c2_order)
    scale = np.abs(y_basis).max(axis=0)
    coef = np.zeros(y_basis.shape[1])
    coef[0] = ln_x0 if c2_init is None else float(c2_init)
    for iteration in range(max_iter):
        terminal = y_basis @ coef
        L, Z = _sweep_quadratic(batch, market, insider, terminal, basis_order)
        design = y_basis / scale
        delta, _, rank, sv = np.linalg.lstsq(design, L[:, 0] - ln_x0, rcond=None)
        if rank < design.shape[1]:
            cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
            raise RegressionError(t=0.0, rank=int(rank), n_columns=design.shape[1], cond=cond)
        projected = design @ delta
        resid = math.sqrt(float(np.mean(projected**2)))
        trace.append((iteration, tuple(coef), resid, mean_se(L[:, 0])[0]))
        if resid <= shoot_tol:
            return BsdeSolution(
                grid=batch.grid, Y=L, Z=Z, c=tuple(coef), residual=resid, trace=tuple(trace)
            )
        coef = coef - delta / scale
    raise ShootingError(residual=trace[-1][2], iterations=max_iter)


def recover_controls(
    sol: BsdeSolution,
    market: MarketParams,
    batch: PathBatch,
    kind: StrategyKind,
) -> StrategyProfile:
    """Controls implied by a backward solution.

    Quadratic regimes:  pi = (z + phitilde)/(sigma + sigma_tilde) and
    theta = (sigma_tilde z - sigma phitilde)/(sigma + sigma_tilde), so that
    sigma pi + theta = z and theta = sigma_tilde pi - phitilde hold exactly.
    Linear (small-insider) regimes:  pi = z/(sigma X), theta = sigma pi - phitilde.
    """
    m = batch.grid.index_T
    t_left = batch.grid.knots[:m]
    sig = market.sigma(t_left)
    st = sigma_tilde(market, t_left)
    phit = np.broadcast_to(_phitilde(batch, market), (batch.n_paths, m))
    if kind in (StrategyKind.LARGE_INSIDER_ROBUST,):
        pi = (sol.Z + phit) / (sig + st)
        theta = (st * sol.Z - sig * phit) / (sig + st)
    else:
        pi = sol.Z / (sig * sol.Y[:, :m])
        theta = sig * pi - phit
    return StrategyProfile(kind=kind, pi=pi, theta=theta, grid=batch.grid)


def value_from_bsde(sol: BsdeSolution) -> tuple[float, float]:
    """Game value estimate E[L_T] with its standard error."""
    return mean_se(sol.Y[:, -1])


def knot_table(sol: BsdeSolution, oracle: BsdeSolution | None = None) -> tuple[list[str], list[list]]:
    """Per-knot summary rows (t, mean Y, mean Z, oracle Y, oracle Z, RMSE)."""
    grid = sol.grid
    m = grid.index_T
    header = ["t", "mean_Y", "mean_Z", "oracle_Y", "oracle_Z", "rmse_Y"]
    rows = []
    for i in range(m + 1):
        t = float(grid.knots[i])
        mean_y = mean_se(sol.Y[:, i])[0]
        mean_z = mean_se(sol.Z[:, i])[0] if i < m else ""
        if oracle is not None:
            o_y = mean_se(oracle.Y[:, i])[0]
            o_z = mean_se(oracle.Z[:, i])[0] if i < m else ""
            rmse = math.sqrt(float(np.mean((sol.Y[:, i] - oracle.Y[:, i]) ** 2)))
        else:
            o_y, o_z, rmse = "", "", ""
        rows.append([t, mean_y, mean_z, o_y, o_z, rmse])
    return header, rows
