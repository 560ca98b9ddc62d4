import numpy as np
import pytest

from insiderlab.model import (
    DomainError,
    InsiderSpec,
    MarketParams,
    ScenarioConfig,
    ValidationError,
    iota,
    sigma_tilde,
)
from insiderlab.paths import partial_signals, sample_paths
from insiderlab.strategies import (
    StrategyKind,
    build_profile,
    pi_large_insider_nonrobust,
    pi_no_insider_robust,
    pi_small_insider_nonrobust,
    pi_small_insider_robust,
    theta_from_pi,
    theta_no_insider_robust,
    theta_small_insider_robust,
)

IOTA = 0.15 / 0.35


class TestNoInsiderClosedForms:
    def test_robust_fraction(self, market):
        # (mu0 - r) / (2 sigma^2), frozen arithmetic
        assert pi_no_insider_robust(market, 0.3) == pytest.approx(0.6122448979591837, abs=1e-15)

    def test_zero_excess_return(self):
        m = MarketParams(r=0.02, mu0=0.02, sigma=0.35, varrho=0.0, T=1.0, X0=1.0)
        assert pi_no_insider_robust(m, 0.1) == 0.0
        assert theta_no_insider_robust(m, 0.1) == 0.0

    def test_half_of_log_utility_fraction(self, market):
        merton = (market.mu0(0.0) - market.r(0.0)) / market.sigma(0.0) ** 2
        assert pi_no_insider_robust(market, 0.0) == pytest.approx(0.5 * merton, abs=1e-15)

    def test_robust_distortion(self, market):
        assert theta_no_insider_robust(market, 0.7) == pytest.approx(-0.2142857142857143, abs=1e-15)

    def test_distortion_consistent_with_first_order_relation(self, market):
        pi = pi_no_insider_robust(market, 0.4)
        implied = theta_from_pi(market, 0.0, pi, 0.4)
        assert implied == pytest.approx(theta_no_insider_robust(market, 0.4), abs=1e-15)


class TestSmallInsiderRobust:
    """Sample state: unit weight, t = 0.5, T = 1, T0 = 2, W_T0 - W_t = 1."""

    def test_sample_state_fraction(self, market, insider):
        # iota/(2 sigma) + (1 + iota/4) / (0.35 * 2.5), frozen
        pi = pi_small_insider_robust(market, insider, y0=1.0, b_t=0.0, t=0.5)
        assert pi == pytest.approx(1.8775510204081633, abs=1e-12)

    def test_sample_state_distortion(self, market, insider):
        th = theta_small_insider_robust(market, insider, y0=1.0, b_t=0.0, t=0.5)
        assert th == pytest.approx(-0.4380952380952381, abs=1e-12)

    def test_vanishes_without_signal_or_excess_return(self, insider):
        m = MarketParams(r=0.0, mu0=0.0, sigma=0.35, varrho=0.0, T=1.0, X0=1.0)
        assert pi_small_insider_robust(m, insider, y0=0.3, b_t=0.3, t=0.5) == 0.0
        assert theta_small_insider_robust(m, insider, y0=0.3, b_t=0.3, t=0.5) == 0.0

    def test_matches_unit_weight_specialisation(self, market, insider):
        # general-weight formula vs the unit-weight closed form, independent route
        rng = np.random.default_rng(5)
        for _ in range(20):
            t = float(rng.uniform(0.0, 0.99))
            w_t = float(rng.normal())
            y0 = float(rng.normal(0.0, np.sqrt(2.0)))
            a_t = 2.0 * insider.T0 - t - market.T
            half_int = 0.5 * IOTA * (market.T - t)
            direct = IOTA / (2 * 0.35) + (y0 - w_t + half_int) / (0.35 * a_t)
            assert pi_small_insider_robust(market, insider, y0, w_t, t) == pytest.approx(
                direct, abs=1e-12
            )

    def test_rejects_evaluation_at_horizon(self, market, insider):
        with pytest.raises(DomainError):
            pi_small_insider_robust(market, insider, 1.0, 0.0, 1.0)


class TestLargeInsiderNonRobust:
    def test_merton_degeneracy_without_signal_term(self, market, insider):
        pi = pi_large_insider_nonrobust(market, insider, y0=0.0, w_t=0.0, t=0.0)
        merton = IOTA / 0.35
        assert pi == pytest.approx(merton, abs=1e-12)

    def test_impact_amplified_first_term(self, market_impact, insider):
        pi = pi_large_insider_nonrobust(market_impact, insider, y0=0.0, w_t=0.0, t=0.0)
        assert pi == pytest.approx(2.4489795918367347, abs=1e-12)

    def test_sample_state(self, market_impact, insider):
        pi = pi_large_insider_nonrobust(market_impact, insider, y0=1.0, w_t=0.0, t=0.5)
        assert pi == pytest.approx(6.258503401360544, abs=1e-12)

    def test_slope_in_noise_level(self, market_impact, insider):
        t, h = 0.5, 1e-6
        up = pi_large_insider_nonrobust(market_impact, insider, 1.0, h, t)
        dn = pi_large_insider_nonrobust(market_impact, insider, 1.0, -h, t)
        slope = (up - dn) / (2 * h)
        assert slope == pytest.approx(-1.0 / (0.175 * 1.5), rel=1e-9)

    def test_requires_unit_weight(self, market):
        ins = InsiderSpec.enlargement(T0=2.0, phi_weight=2.0)
        with pytest.raises(ValidationError):
            pi_large_insider_nonrobust(market, ins, 1.0, 0.0, 0.5)


class TestThetaFromPi:
    def test_reproduces_no_insider_distortion(self, market):
        pi = pi_no_insider_robust(market, 0.2)
        assert theta_from_pi(market, 0.0, pi, 0.2) == pytest.approx(
            -0.5 * iota(market, 0.2), abs=1e-15
        )

    def test_nonrobust_fractions_give_zero(self, market_impact, insider):
        # the unconstrained optimum phi_tilde / sigma_tilde zeroes the distortion
        for phi in (-0.3, 0.0, 0.8):
            pi = (iota(market_impact, 0.1) + phi) / sigma_tilde(market_impact, 0.1)
            assert theta_from_pi(market_impact, phi, pi, 0.1) == pytest.approx(0.0, abs=1e-14)

    def test_matches_small_insider_distortion(self, market, insider):
        t, y0, b = 0.25, 0.7, -0.2
        pi = pi_small_insider_robust(market, insider, y0, b, t)
        phi = (y0 - b) / (insider.T0 - t)
        assert theta_from_pi(market, phi, pi, t) == pytest.approx(
            theta_small_insider_robust(market, insider, y0, b, t), abs=1e-13
        )


class TestRegimeDegeneracyLattice:
    def test_large_without_impact_is_small_nonrobust(self, market, insider):
        rng = np.random.default_rng(11)
        for _ in range(30):
            t = float(rng.uniform(0, 0.99))
            y0 = float(rng.normal())
            w = float(rng.normal())
            a = pi_large_insider_nonrobust(market, insider, y0, w, t)
            b = pi_small_insider_nonrobust(market, insider, y0, w, t)
            assert a == pytest.approx(b, abs=1e-14)

    def test_small_robust_without_drift_is_no_insider_robust(self, market, insider):
        # zero the signal term by choosing the residual to cancel the run-out
        for t in (0.1, 0.5, 0.9):
            half_int = 0.5 * IOTA * (market.T - t)
            pi = pi_small_insider_robust(market, insider, y0=-half_int, b_t=0.0, t=t)
            assert pi == pytest.approx(pi_no_insider_robust(market, t), abs=1e-14)


class TestLinearityInSignal:
    def test_affine_with_exact_slope(self, market, insider):
        t = 0.5
        a_t = 2.0 * insider.T0 - t - market.T
        analytic = 1.0 / (0.35 * a_t)  # slope in (W_T0 - W_t)
        base = pi_small_insider_robust(market, insider, 0.0, 0.0, t)
        h = 1e-5
        fd = (
            pi_small_insider_robust(market, insider, h, 0.0, t)
            - pi_small_insider_robust(market, insider, -h, 0.0, t)
        ) / (2 * h)
        assert fd == pytest.approx(analytic, abs=1e-10)
        # affine: second difference is numerically zero
        second = (
            pi_small_insider_robust(market, insider, h, 0.0, t)
            - 2.0 * base
            + pi_small_insider_robust(market, insider, -h, 0.0, t)
        )
        assert abs(second) < 1e-12


class TestProfiles:
    def test_nonrobust_profiles_have_zero_theta(self, market, insider, batch_small):
        for kind in (
            StrategyKind.NO_INSIDER_NONROBUST,
            StrategyKind.SMALL_INSIDER_NONROBUST,
            StrategyKind.LARGE_INSIDER_NONROBUST,
        ):
            prof = build_profile(kind, batch_small, market, insider)
            assert not np.any(prof.theta)
            assert np.all(np.isfinite(prof.pi))

    def test_half_characterization_identity(self, market, insider, batch_small):
        # mu0 + 2 varrho pi - r - sigma^2 pi + sigma (phi + theta) = 0 per knot
        grid = batch_small.grid
        t = grid.knots[: grid.index_T]
        for kind, drift in (
            (StrategyKind.NO_INSIDER_ROBUST, np.zeros((1, len(t)))),
            (StrategyKind.SMALL_INSIDER_ROBUST, batch_small.phi),
            (StrategyKind.SMALL_INSIDER_NONROBUST, batch_small.phi),
            (StrategyKind.LARGE_INSIDER_NONROBUST, batch_small.phi),
        ):
            prof = build_profile(kind, batch_small, market, insider)
            resid = (
                market.mu0(t)
                + 2.0 * market.varrho(t) * prof.pi
                - market.r(t)
                - market.sigma(t) ** 2 * prof.pi
                + market.sigma(t) * (drift + prof.theta)
            )
            assert np.max(np.abs(resid)) < 1e-12, kind

    def test_half_characterization_with_impact(self, market_impact, insider, batch_small):
        prof = build_profile(
            StrategyKind.LARGE_INSIDER_NONROBUST, batch_small, market_impact, insider
        )
        grid = batch_small.grid
        t = grid.knots[: grid.index_T]
        resid = (
            market_impact.mu0(t)
            + 2.0 * market_impact.varrho(t) * prof.pi
            - market_impact.r(t)
            - market_impact.sigma(t) ** 2 * prof.pi
            + market_impact.sigma(t) * (batch_small.phi + prof.theta)
        )
        assert np.max(np.abs(resid)) < 1e-12

    def test_large_insider_robust_is_delegated(self, market, insider, batch_small):
        with pytest.raises(ValidationError) as err:
            build_profile(StrategyKind.LARGE_INSIDER_ROBUST, batch_small, market, insider)
        assert err.value.code == "no_closed_form"

    def test_impact_rejected_for_small_trader_forms(self, market_impact, insider, batch_small):
        with pytest.raises(ValidationError) as err:
            build_profile(StrategyKind.NO_INSIDER_ROBUST, batch_small, market_impact, insider)
        assert err.value.code == "impact_not_allowed"

    def test_profile_matches_pointwise_formula(self, market, insider, batch_small):
        prof = build_profile(StrategyKind.SMALL_INSIDER_ROBUST, batch_small, market, insider)
        grid = batch_small.grid
        b = partial_signals(grid, batch_small.dW, insider)
        i = grid.index_T // 2
        t = float(grid.knots[i])
        expect = pi_small_insider_robust(market, insider, batch_small.Y0, b[:, i], t)
        np.testing.assert_allclose(prof.pi[:, i], expect, atol=1e-14)
