import math

import numpy as np
import pytest

from insiderlab.analysis import value_no_insider_robust, value_small_insider_robust
from insiderlab.model import InsiderSpec, MarketParams, ScenarioConfig
from insiderlab.paths import sample_paths
from insiderlab.simulate import (
    entropy_identity_check,
    estimate_J,
    martingale_diagnostic,
    mean_se,
    simulate_density,
    simulate_wealth,
)
from insiderlab.strategies import StrategyKind, StrategyProfile, build_profile

IOTA = 0.15 / 0.35
IOTA_SQ = IOTA**2


def constant_profile(batch, pi_value, theta_value, kind=StrategyKind.NO_INSIDER_ROBUST):
    m = batch.grid.index_T
    return StrategyProfile(
        kind=kind,
        pi=np.full((1, m), float(pi_value)),
        theta=np.full((1, m), float(theta_value)),
        grid=batch.grid,
    )


def per_path_J(batch, profile, wealth, density):
    m = batch.grid.index_T
    dt = batch.grid.dt[:m]
    eps_left = np.exp(density.logE[:, :-1])
    penalty = np.sum(eps_left * 0.5 * profile.theta**2 * dt, axis=1)
    return np.exp(density.terminal) * wealth.terminal + penalty


class TestWealth:
    def test_bond_only(self, batch_flat_100k):
        market = MarketParams(r=0.03, mu0=0.03, sigma=0.35, varrho=0.0, T=1.0, X0=2.0)
        prof = constant_profile(batch_flat_100k, 0.0, 0.0)
        wealth = simulate_wealth(batch_flat_100k, prof, market)
        assert np.allclose(wealth.terminal, math.log(2.0) + 0.03, atol=1e-12)

    def test_constant_exposure_pathwise_identity(self, batch_flat_100k, market):
        flat = MarketParams(r=0.0, mu0=0.0, sigma=0.35, varrho=0.0, T=1.0, X0=1.0)
        c = 0.2
        prof = constant_profile(batch_flat_100k, c / 0.35, 0.0)
        wealth = simulate_wealth(batch_flat_100k, prof, flat)
        w_T = batch_flat_100k.dW.sum(axis=1)
        np.testing.assert_allclose(wealth.terminal, -0.5 * c**2 + c * w_T, atol=1e-10)

    def test_expected_log_wealth_robust_fraction(self, batch_flat_100k, market, insider):
        # E[ln X_T] = (iota c - c^2/2) T with c = iota/2: frozen 0.0688775510
        prof = build_profile(StrategyKind.NO_INSIDER_ROBUST, batch_flat_100k, market, insider)
        wealth = simulate_wealth(batch_flat_100k, prof, market)
        mean, se = mean_se(wealth.terminal)
        assert abs(mean - 0.06887755102040816) < 3.0 * se

    def test_grid_mismatch_rejected(self, batch_flat_100k, batch_small, market):
        prof = constant_profile(batch_small, 0.1, 0.0)
        with pytest.raises(ValueError):
            simulate_wealth(batch_flat_100k, prof, market)

    def test_initial_condition(self, batch_small, market):
        prof = constant_profile(batch_small, 0.5, 0.0)
        wealth = simulate_wealth(batch_small, prof, market)
        assert np.all(wealth.logX[:, 0] == math.log(market.X0))


class TestDensity:
    def test_zero_distortion_gives_unit_density(self, batch_small):
        prof = constant_profile(batch_small, 0.3, 0.0)
        dens = simulate_density(batch_small, prof)
        assert not np.any(dens.logE)

    def test_martingale_property_constant_theta(self, batch_flat_100k):
        prof = constant_profile(batch_flat_100k, 0.0, -0.5 * IOTA)
        dens = simulate_density(batch_flat_100k, prof)
        mean, se = mean_se(np.exp(dens.terminal))
        assert abs(mean - 1.0) < 3.0 * se

    def test_mean_one_at_every_knot(self, batch_100k, market):
        # positive exact exponential per path; unit mean within 4 SE throughout
        prof = build_profile(
            StrategyKind.SMALL_INSIDER_ROBUST, batch_100k, market, InsiderSpec.enlargement(T0=2.0)
        )
        dens = simulate_density(batch_100k, prof)
        assert np.all(np.exp(dens.logE) > 0.0)
        for i in range(20, batch_100k.grid.index_T + 1, 40):
            mean, se = mean_se(np.exp(dens.logE[:, i]))
            assert abs(mean - 1.0) < 4.0 * se, (i, mean, se)

    def test_gaussian_tilt_entropy(self, batch_flat_100k):
        # E[eps_T ln eps_T] = theta^2 T / 2 for constant theta
        prof = constant_profile(batch_flat_100k, 0.0, -0.5 * IOTA)
        dens = simulate_density(batch_flat_100k, prof)
        val = np.exp(dens.terminal) * dens.terminal
        mean, se = mean_se(val)
        assert abs(mean - IOTA_SQ / 8.0) < 3.0 * se


class TestEstimateJ:
    def test_reduces_to_expected_log_utility(self, batch_flat_100k, market, insider):
        prof = build_profile(StrategyKind.NO_INSIDER_ROBUST, batch_flat_100k, market, insider)
        no_theta = prof.scaled(theta_factor=0.0)
        wealth = simulate_wealth(batch_flat_100k, no_theta, market)
        dens = simulate_density(batch_flat_100k, no_theta)
        j = estimate_J(batch_flat_100k, no_theta, wealth, dens, market)
        mean, _ = mean_se(wealth.terminal)
        assert j.mean == pytest.approx(mean, abs=1e-12)

    def test_matches_uninformed_robust_value(self, batch_flat_100k, market, insider):
        prof = build_profile(StrategyKind.NO_INSIDER_ROBUST, batch_flat_100k, market, insider)
        wealth = simulate_wealth(batch_flat_100k, prof, market)
        dens = simulate_density(batch_flat_100k, prof)
        j = estimate_J(batch_flat_100k, prof, wealth, dens, market)
        assert abs(j.mean - value_no_insider_robust(market).total) < 3.0 * j.std_error
        assert j.std_error > 0.0

    def test_matches_informed_robust_value(self, batch_100k, market, insider):
        prof = build_profile(StrategyKind.SMALL_INSIDER_ROBUST, batch_100k, market, insider)
        wealth = simulate_wealth(batch_100k, prof, market)
        dens = simulate_density(batch_100k, prof)
        j = estimate_J(batch_100k, prof, wealth, dens, market)
        target = value_small_insider_robust(market, insider).total
        assert abs(j.mean - target) < 3.0 * j.std_error

    def test_discretisation_bias_below_noise(self, market, insider, no_insider):
        # doubling the grid moves the estimate by less than one standard error
        js = []
        for n_steps in (200, 400):
            cfg = ScenarioConfig(
                market=market, insider=no_insider, n_steps=n_steps,
                n_paths=100_000, seed=998877,
            )
            batch = sample_paths(cfg)
            prof = build_profile(StrategyKind.NO_INSIDER_ROBUST, batch, market, insider)
            wealth = simulate_wealth(batch, prof, market)
            dens = simulate_density(batch, prof)
            js.append(estimate_J(batch, prof, wealth, dens, market))
        assert abs(js[0].mean - js[1].mean) < max(js[0].std_error, js[1].std_error)

    def test_saddle_point(self, batch_flat_100k, market, insider):
        # local max in pi, local min in theta, via paired comparisons
        base = build_profile(StrategyKind.NO_INSIDER_ROBUST, batch_flat_100k, market, insider)

        def j_per_path(profile):
            wealth = simulate_wealth(batch_flat_100k, profile, market)
            dens = simulate_density(batch_flat_100k, profile)
            return per_path_J(batch_flat_100k, profile, wealth, dens)

        j_star = j_per_path(base)
        for factor in (0.8, 1.2):
            diff, se = mean_se(j_star - j_per_path(base.scaled(pi_factor=factor)))
            assert diff > -3.0 * se, (factor, diff, se)
            diff, se = mean_se(j_per_path(base.scaled(theta_factor=factor)) - j_star)
            assert diff > -3.0 * se, (factor, diff, se)


class TestEntropyIdentity:
    def test_zero_distortion_trivial(self, batch_small):
        prof = constant_profile(batch_small, 0.2, 0.0)
        res = entropy_identity_check(batch_small, prof, simulate_density(batch_small, prof))
        assert res.lhs_mean == 0.0
        assert res.rhs_mean == 0.0

    def test_constant_theta_gaussian_value(self, batch_flat_100k):
        prof = constant_profile(batch_flat_100k, 0.0, -0.5 * IOTA)
        res = entropy_identity_check(batch_flat_100k, prof, simulate_density(batch_flat_100k, prof))
        assert abs(res.lhs_mean - IOTA_SQ / 8.0) < 3.0 * res.lhs_se
        assert abs(res.rhs_mean - IOTA_SQ / 8.0) < 3.0 * res.rhs_se

    def test_informed_robust_gap_within_tolerance(self, batch_100k, market, insider):
        prof = build_profile(StrategyKind.SMALL_INSIDER_ROBUST, batch_100k, market, insider)
        res = entropy_identity_check(batch_100k, prof, simulate_density(batch_100k, prof))
        assert abs(res.z) < 3.0


class TestMartingaleDiagnostic:
    def test_uninformed_robust_within_tolerance(self, batch_flat_100k, market, insider):
        prof = build_profile(StrategyKind.NO_INSIDER_ROBUST, batch_flat_100k, market, insider)
        stats = martingale_diagnostic(batch_flat_100k, prof, market)
        assert len(stats) == 10
        assert all(abs(s.z) < 4.0 for s in stats), [round(s.z, 2) for s in stats]

    def test_informed_robust_within_tolerance(self, batch_100k, market, insider):
        prof = build_profile(StrategyKind.SMALL_INSIDER_ROBUST, batch_100k, market, insider)
        stats = martingale_diagnostic(batch_100k, prof, market)
        assert all(abs(s.z) < 4.0 for s in stats), [round(s.z, 2) for s in stats]

    def test_perturbed_fraction_detected(self, batch_flat_100k, market, insider):
        prof = build_profile(StrategyKind.NO_INSIDER_ROBUST, batch_flat_100k, market, insider)
        stats = martingale_diagnostic(batch_flat_100k, prof.scaled(pi_factor=1.3), market)
        assert any(abs(s.z) > 4.0 for s in stats), [round(s.z, 2) for s in stats]

    def test_custom_checkpoints(self, batch_small, market, insider):
        prof = build_profile(StrategyKind.SMALL_INSIDER_ROBUST, batch_small, market, insider)
        stats = martingale_diagnostic(batch_small, prof, market, checkpoints=[(0.0, 0.5)])
        assert len(stats) == 1
        assert stats[0].t == 0.0 and stats[0].h == 0.5


class TestReductions:
    def test_mean_se_order_insensitive(self):
        rng = np.random.default_rng(3)
        x = rng.lognormal(size=50_000)
        m1, s1 = mean_se(x)
        perm = rng.permutation(len(x))
        m2, s2 = mean_se(x[perm])
        assert abs(m1 - m2) <= 1e-12 * abs(m1)
        assert abs(s1 - s2) <= 1e-12 * abs(s1)
