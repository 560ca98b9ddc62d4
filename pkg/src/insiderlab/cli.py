"""Command-line entry point.

Subcommands: value, simulate, martingale, bsde-linear, bsde-quadratic,
forward-check, critical-t0, figures, selftest.  Every run reads an optional
INI config (sections [market], [insider], [run]), applies flag overrides,
writes CSVs under --out (default $INSIDERLAB_OUT or ./out) and prints a run
report.  Exit codes: 0 success, 1 validation/usage error or failed selftest,
2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import analysis
from ._csvio import write_csv
from .bsde import (
    RegressionError,
    ShootingError,
    knot_table,
    recover_controls,
    solve_linear_closed_form,
    solve_linear_lsmc,
    solve_quadratic_lsmc,
    value_from_bsde,
)
from .anticipating import TestIntegrand, convergence_table
from .model import (
    DomainError,
    InsiderKind,
    InsiderSpec,
    MarketParams,
    PiecewiseConstant,
    ScenarioConfig,
    ValidationError,
    validate,
)
from .paths import sample_paths
from .selftest import run_selftest
from .simulate import (
    estimate_J,
    entropy_identity_check,
    martingale_diagnostic,
    simulate_density,
    simulate_wealth,
)
from .strategies import StrategyKind, build_profile

_REGIME_CHOICES = [k.value for k in StrategyKind if k is not StrategyKind.LARGE_INSIDER_ROBUST]


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on bad flags, per the CLI contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def parse_piecewise(text: str) -> PiecewiseConstant:
    """`0.35` means constant; `0:0.3, 0.5:0.4` means breakpoint:value pairs."""
    text = text.strip()
    if ":" not in text:
        return PiecewiseConstant.constant(float(text))
    bps, vals = [], []
    for part in text.split(","):
        b, v = part.split(":")
        bps.append(float(b))
        vals.append(float(v))
    return PiecewiseConstant(tuple(bps), tuple(vals))


_DEFAULTS = {
    "market": {"r": "0.0", "mu0": "0.15", "sigma": "0.35", "varrho": "0.0", "T": "1.0", "X0": "1.0"},
    "insider": {"kind": "enlargement", "T0": "2.0", "phi": "1.0"},
    "run": {"robust": "true", "n_steps": "200", "n_paths": "100000", "seed": "20240801"},
}


def _describe(fn: PiecewiseConstant) -> str:
    if len(fn.breakpoints) == 1:
        return repr(fn.values[0])
    return ", ".join(f"{b}:{v}" for b, v in zip(fn.breakpoints, fn.values))


def echo_config(config: ScenarioConfig) -> str:
    market, insider = config.market, config.insider
    parts = [
        f"r={_describe(market.r)}",
        f"mu0={_describe(market.mu0)}",
        f"sigma={_describe(market.sigma)}",
        f"varrho={_describe(market.varrho)}",
        f"T={market.T!r}",
        f"X0={market.X0!r}",
        f"kind={insider.kind.value}",
    ]
    if insider.has_signal():
        parts += [f"T0={insider.T0!r}", f"phi={_describe(insider.phi_weight)}"]
    parts += [
        f"robust={str(config.robust).lower()}",
        f"n_steps={config.n_steps}",
        f"n_paths={config.n_paths}",
        f"seed={config.seed}",
    ]
    return " ".join(parts)


def load_config(path: str | None, overrides: argparse.Namespace) -> ScenarioConfig:
    """Merge defaults <- config file <- command-line flags (flags win)."""
    ini = configparser.ConfigParser()
    ini.read_dict(_DEFAULTS)
    if path is not None:
        if not os.path.exists(path):
            raise ValidationError("config_missing", f"no such config file: {path}")
        ini.read(path)

    def flag(name, section, key):
        val = getattr(overrides, name, None)
        return str(val) if val is not None else ini[section][key]

    market = MarketParams(
        r=parse_piecewise(flag("r", "market", "r")),
        mu0=parse_piecewise(flag("mu", "market", "mu0")),
        sigma=parse_piecewise(flag("sigma", "market", "sigma")),
        varrho=parse_piecewise(flag("varrho", "market", "varrho")),
        T=float(flag("T", "market", "T")),
        X0=float(flag("x0", "market", "X0")),
    )
    kind_txt = flag("kind", "insider", "kind").strip().lower()
    if kind_txt in ("none", "no_insider"):
        insider = InsiderSpec.none()
    elif kind_txt in ("enlargement", "initial_enlargement"):
        insider = InsiderSpec.enlargement(
            T0=float(flag("t0", "insider", "T0")),
            phi_weight=parse_piecewise(flag("phi", "insider", "phi")),
        )
    else:
        raise ValidationError("insider_kind", f"unknown insider kind {kind_txt!r}")

    robust_txt = flag("robust", "run", "robust").strip().lower()
    tail = getattr(overrides, "n_steps_tail", None)
    if tail is None and ini.has_option("run", "n_steps_tail"):
        tail = ini.getint("run", "n_steps_tail")
    config = ScenarioConfig(
        market=market,
        insider=insider,
        robust=robust_txt in ("1", "true", "yes", "on"),
        n_steps=int(flag("n_steps", "run", "n_steps")),
        n_steps_tail=tail,
        n_paths=int(flag("n_paths", "run", "n_paths")),
        seed=int(flag("seed", "run", "seed")),
    )
    validate(config)
    setattr(overrides, "config_echo", echo_config(config))
    return config


def _default_regime(config: ScenarioConfig) -> str:
    informed = config.insider.kind is InsiderKind.INITIAL_ENLARGEMENT
    if config.robust:
        return "small_insider_robust" if informed else "no_insider_robust"
    if informed:
        impact = any(v != 0.0 for v in config.market.varrho.values)
        return "large_insider_nonrobust" if impact else "small_insider_nonrobust"
    return "no_insider_nonrobust"


def _no_impact(market: MarketParams) -> MarketParams:
    return replace(market, varrho=PiecewiseConstant.constant(0.0))


def _strategy_market(kind: StrategyKind, market: MarketParams) -> MarketParams:
    if kind in (StrategyKind.NO_INSIDER_NONROBUST, StrategyKind.LARGE_INSIDER_NONROBUST):
        return market
    return _no_impact(market)


def _analytic_value(kind: StrategyKind, market: MarketParams, insider: InsiderSpec):
    small = _no_impact(market)
    if kind is StrategyKind.NO_INSIDER_ROBUST:
        return analysis.value_no_insider_robust(small).total
    if kind is StrategyKind.NO_INSIDER_NONROBUST:
        return analysis.value_no_insider_nonrobust(market).total
    if kind is StrategyKind.SMALL_INSIDER_ROBUST:
        return analysis.value_small_insider_robust(small, insider).total
    if kind is StrategyKind.SMALL_INSIDER_NONROBUST:
        return analysis.value_small_insider_nonrobust(small, insider).total
    if kind is StrategyKind.LARGE_INSIDER_NONROBUST:
        return analysis.value_large_insider_nonrobust(market, insider).total
    return ""


# -- subcommand handlers ---------------------------------------------------------


def _cmd_value(args, out: list[str]) -> int:
    config = load_config(args.config, args)
    market, insider = config.market, config.insider
    small = _no_impact(market)
    rows = []
    breakdowns = [
        analysis.value_no_insider_robust(small),
        analysis.value_no_insider_nonrobust(market),
    ]
    if insider.has_signal():
        breakdowns += [
            analysis.value_small_insider_robust(small, insider),
            analysis.value_small_insider_nonrobust(small, insider),
            analysis.value_large_insider_nonrobust(market, insider),
        ]
    for b in breakdowns:
        rows.append([b.regime, b.base, b.merton, b.rent, b.penalty_adjust, b.total])
    out.append(
        write_csv(
            os.path.join(args.out, "values.csv"),
            ["regime", "base", "merton", "rent", "penalty_adjust", "total"],
            rows,
        )
    )
    return 0


def _profile_for(args, config: ScenarioConfig, batch):
    kind = StrategyKind(args.regime or _default_regime(config))
    market = _strategy_market(kind, config.market)
    return kind, market, build_profile(kind, batch, market, config.insider)


def _cmd_simulate(args, out: list[str]) -> int:
    config = load_config(args.config, args)
    batch = sample_paths(config, threads=args.threads)
    kind, market, profile = _profile_for(args, config, batch)
    wealth = simulate_wealth(batch, profile, market)
    density = simulate_density(batch, profile)
    j = estimate_J(batch, profile, wealth, density, market)
    ent = entropy_identity_check(batch, profile, density)
    out.append(
        write_csv(
            os.path.join(args.out, "j_report.csv"),
            ["regime", "J_mean", "J_se", "n_paths", "n_steps", "seed", "analytic_value"],
            [[kind.value, j.mean, j.std_error, j.n_paths, config.n_steps, config.seed,
              _analytic_value(kind, config.market, config.insider)]],
        )
    )
    out.append(
        write_csv(
            os.path.join(args.out, "entropy_check.csv"),
            ["lhs_mean", "lhs_se", "rhs_mean", "rhs_se", "gap", "gap_se", "z"],
            [[ent.lhs_mean, ent.lhs_se, ent.rhs_mean, ent.rhs_se, ent.gap, ent.gap_se, ent.z]],
        )
    )
    return 0


def _cmd_martingale(args, out: list[str]) -> int:
    config = load_config(args.config, args)
    batch = sample_paths(config, threads=args.threads)
    kind, market, profile = _profile_for(args, config, batch)
    if args.perturb_pi != 1.0:
        profile = profile.scaled(pi_factor=args.perturb_pi)
    stats = martingale_diagnostic(batch, profile, market)
    rows = [[s.t, s.h, s.estimate, s.std_error, s.z] for s in stats]
    out.append(
        write_csv(
            os.path.join(args.out, "martingale.csv"),
            ["t", "h", "estimate", "SE", "z"],
            rows,
        )
    )
    return 0


def _cmd_bsde_linear(args, out: list[str]) -> int:
    config = load_config(args.config, args)
    batch = sample_paths(config, threads=args.threads)
    market, insider = _no_impact(config.market), config.insider
    oracle = solve_linear_closed_form(batch, market, insider)
    sol = solve_linear_lsmc(batch, market, insider, basis_order=args.basis_order)
    header, rows = knot_table(sol, oracle)
    out.append(write_csv(os.path.join(args.out, "bsde_linear.csv"), header, rows))
    out.append(
        write_csv(
            os.path.join(args.out, "bsde_linear_report.csv"),
            ["residual", "normalizer_mc", "Y0_mean", "X0"],
            [[sol.residual, sol.c if np.ndim(sol.c) == 0 else "", float(np.mean(sol.Y[:, 0])),
              market.X0]],
        )
    )
    return 0


def _cmd_bsde_quadratic(args, out: list[str]) -> int:
    config = load_config(args.config, args)
    batch = sample_paths(config, threads=args.threads)
    market, insider = config.market, config.insider
    sol = solve_quadratic_lsmc(
        batch, market, insider, basis_order=args.basis_order, shoot_tol=args.shoot_tol
    )
    header, rows = knot_table(sol)
    out.append(write_csv(os.path.join(args.out, "bsde_quadratic.csv"), header, rows))
    trace_rows = [[it, repr(c2), resid, l0] for it, c2, resid, l0 in sol.trace]
    out.append(
        write_csv(
            os.path.join(args.out, "bsde_quadratic_trace.csv"),
            ["iteration", "c2", "residual", "L0_mean"],
            trace_rows,
        )
    )
    v, se = value_from_bsde(sol)
    controls = recover_controls(sol, market, batch, StrategyKind.LARGE_INSIDER_ROBUST)
    out.append(
        write_csv(
            os.path.join(args.out, "bsde_quadratic_value.csv"),
            ["value", "value_se", "residual", "mean_abs_z", "mean_pi_0"],
            [[v, se, sol.residual, float(np.mean(np.abs(sol.Z))),
              float(np.mean(controls.pi[:, 0]))]],
        )
    )
    return 0


def _cmd_forward_check(args, out: list[str]) -> int:
    config = load_config(args.config, args)
    flat = replace(
        config,
        insider=InsiderSpec.none(),
        n_steps=args.forward_steps,
        n_paths=args.forward_paths,
    )
    batch = sample_paths(flat, threads=args.threads)
    W = np.zeros((batch.n_paths, batch.grid.n_steps + 1))
    np.cumsum(batch.dW, axis=1, out=W[:, 1:])
    dt = float(batch.grid.dt[0])
    kind = TestIntegrand(args.integrand)
    header, rows = convergence_table(W, dt, kind, eps_steps_list=[8, 4, 2])
    out.append(write_csv(os.path.join(args.out, f"forward_{kind.value}.csv"), header, rows))
    return 0


def _cmd_critical_t0(args, out: list[str]) -> int:
    config = load_config(args.config, args)
    market = _no_impact(config.market)
    t0_star = analysis.critical_T0(market)
    gap = (
        analysis.value_small_insider_robust(market, InsiderSpec.enlargement(T0=t0_star)).total
        - analysis.value_no_insider_nonrobust(market).total
    )
    out.append(
        write_csv(
            os.path.join(args.out, "critical_t0.csv"),
            ["mu", "sigma", "r", "T", "T0_star", "equation_gap"],
            [[market.mu0(0.0), market.sigma(0.0), market.r(0.0), market.T, t0_star, gap]],
        )
    )
    return 0


def _cmd_figures(args, out: list[str]) -> int:
    config = load_config(args.config, args)
    market = config.market
    if args.fig_kind == "fig3" and args.mu is None:
        market = replace(market, mu0=PiecewiseConstant.constant(0.08))
    T = market.T
    if args.fig_kind in ("fig1", "fig3"):
        t0s = [x * T for x in (1.2, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0)]
        bsde_values = None
        if args.with_bsde:
            bsde_values = {}
            for t0 in t0s:
                cfg = replace(
                    config,
                    market=market,
                    insider=InsiderSpec.enlargement(T0=t0),
                    n_paths=args.bsde_paths,
                    n_steps=args.bsde_steps,
                )
                b = sample_paths(cfg, threads=args.threads)
                sol = solve_quadratic_lsmc(b, market, cfg.insider, shoot_tol=5e-3)
                bsde_values[t0] = value_from_bsde(sol)[0] - math.log(market.X0)
        header, rows = analysis.fig_value_table(market, t0s, bsde_values)
        out.append(write_csv(os.path.join(args.out, f"{args.fig_kind}.csv"), header, rows))
    elif args.fig_kind == "fig2":
        mus = [0.10, 0.125, 0.15, 0.175, 0.20]
        sigmas = [0.25, 0.30, 0.35, 0.40, 0.45]
        header, rows = analysis.fig_critical_table(market, mus, sigmas)
        out.append(write_csv(os.path.join(args.out, "fig2.csv"), header, rows))
    else:  # strategy_lines
        insider = config.insider
        if not insider.has_signal():
            raise ValidationError("signal_required", "strategy lines need an enlargement signal")
        w_values = [(-2.0 + 0.1 * i) for i in range(41)]
        header, rows = analysis.strategy_line_table(
            market, insider, t=0.5 * T, w_values=w_values, y0=args.signal_level
        )
        out.append(write_csv(os.path.join(args.out, "strategy_lines.csv"), header, rows))
    return 0


def _cmd_selftest(args, out: list[str]) -> int:
    seed = args.seed if args.seed is not None else 20240801
    rows = run_selftest(seed=seed)
    out.append(
        write_csv(
            os.path.join(args.out, "selftest.csv"),
            ["check", "passed", "metric"],
            [[name, ok, metric] for name, ok, metric in rows],
        )
    )
    failures = [name for name, ok, _ in rows if not ok]
    for name, ok, metric in rows:
        print(f"{'PASS' if ok else 'FAIL'} {name} (metric={metric:.3e})")
    return 1 if failures else 0


# -- parser ------------------------------------------------------------------------


def _add_common(p: _Parser) -> None:
    p.add_argument("--config", help="INI config file with [market]/[insider]/[run] sections")
    p.add_argument("--out", default=None, help="output directory (default $INSIDERLAB_OUT or ./out)")
    p.add_argument("--threads", type=int, default=1, help="worker cap for path generation; results are thread-count independent")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (64-bit integer)")
    p.add_argument("--n-paths", dest="n_paths", type=int, default=None, help="Monte-Carlo ensemble size")
    p.add_argument("--n-steps", dest="n_steps", type=int, default=None, help="grid steps on [0, T]")
    p.add_argument("--n-steps-tail", dest="n_steps_tail", type=int, default=None, help="extra steps on (T, T0]")
    p.add_argument("--mu", type=float, default=None, help="base drift mu0 (1/time), overrides config")
    p.add_argument("--sigma", type=float, default=None, help="volatility (1/sqrt(time)), overrides config")
    p.add_argument("--r", type=float, default=None, help="risk-free rate (1/time), overrides config")
    p.add_argument("--varrho", type=float, default=None, help="price-impact coefficient (1/time)")
    p.add_argument("--T", type=float, default=None, help="trading horizon (time)")
    p.add_argument("--x0", type=float, default=None, help="initial wealth (currency)")
    p.add_argument("--t0", type=float, default=None, help="information horizon T0 > T (time)")
    p.add_argument("--phi", type=str, default=None, help="signal weight, constant or 't:v' pairs")
    p.add_argument("--kind", type=str, default=None, help="insider kind: none | enlargement")
    p.add_argument("--robust", type=str, default=None, help="model uncertainty on/off (true/false)")


def _build_parser() -> _Parser:
    parser = _Parser(prog="insiderlab", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("value", parents=[], help="analytic value decomposition per regime")
    _add_common(p)
    p.set_defaults(handler=_cmd_value)

    p = sub.add_parser("simulate", help="Monte-Carlo game functional J for one regime")
    _add_common(p)
    p.add_argument("--regime", choices=_REGIME_CHOICES, default=None)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("martingale", help="density-weighted martingale increments")
    _add_common(p)
    p.add_argument("--regime", choices=_REGIME_CHOICES, default=None)
    p.add_argument("--perturb-pi", dest="perturb_pi", type=float, default=1.0,
                   help="scale factor on pi for negative controls")
    p.set_defaults(handler=_cmd_martingale)

    p = sub.add_parser("bsde-linear", help="linear backward solver vs closed form")
    _add_common(p)
    p.add_argument("--basis-order", dest="basis_order", type=int, default=3)
    p.set_defaults(handler=_cmd_bsde_linear)

    p = sub.add_parser("bsde-quadratic", help="quadratic backward solver with shooting")
    _add_common(p)
    p.add_argument("--basis-order", dest="basis_order", type=int, default=3)
    p.add_argument("--shoot-tol", dest="shoot_tol", type=float, default=1e-3)
    p.set_defaults(handler=_cmd_bsde_quadratic)

    p = sub.add_parser("forward-check", help="forward-integral convergence tables")
    _add_common(p)
    p.add_argument("--integrand", choices=[k.value for k in TestIntegrand], default="wt")
    p.add_argument("--forward-steps", dest="forward_steps", type=int, default=4096)
    p.add_argument("--forward-paths", dest="forward_paths", type=int, default=2000)
    p.set_defaults(handler=_cmd_forward_check)

    p = sub.add_parser("critical-t0", help="horizon where robust informed = neutral uninformed")
    _add_common(p)
    p.set_defaults(handler=_cmd_critical_t0)

    p = sub.add_parser("figures", help="CSV series behind the standard figures")
    _add_common(p)
    p.add_argument("--fig-kind", dest="fig_kind",
                   choices=["fig1", "fig2", "fig3", "strategy_lines"], default="fig1")
    p.add_argument("--with-bsde", dest="with_bsde", action="store_true",
                   help="add the numerically solved robust large-trader series")
    p.add_argument("--bsde-paths", dest="bsde_paths", type=int, default=20000)
    p.add_argument("--bsde-steps", dest="bsde_steps", type=int, default=50)
    p.add_argument("--signal-level", dest="signal_level", type=float, default=1.0,
                   help="fixed W_T0 for strategy lines")
    p.set_defaults(handler=_cmd_figures)

    p = sub.add_parser("selftest", help="run the invariant suite; nonzero exit on failure")
    _add_common(p)
    p.set_defaults(handler=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.out is None:
        args.out = os.environ.get("INSIDERLAB_OUT", "out")
    outputs: list[str] = []
    start = time.time()
    try:
        code = args.handler(args, outputs)
    except (ValidationError, DomainError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except (ShootingError, RegressionError) as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return 2
    wall = time.time() - start
    print(f"command={args.command}")
    echo = getattr(args, "config_echo", None)
    if echo is not None:
        print(f"config={echo}")
    print(f"seed={args.seed if args.seed is not None else 'config-default'}")
    for path in outputs:
        print(f"output={path}")
    print(f"wall_time_s={wall:.3f}")
    return code


if __name__ == "__main__":
    sys.exit(main())
