"""Causal estimands, reliability, prediction, and censoring rules."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from resistscm import (
    Configuration,
    DeviceRecord,
    DomainError,
    FitSpec,
    Intervention,
    IntervalCensored,
    PosteriorDraws,
    QueryError,
    Regime,
    RightCensored,
    adjusted_outcome_density,
    censor_classify,
    delta1,
    delta_contrast,
    delta_contrast_posterior,
    mean_y0,
    mean_yt,
    params_view,
    predictive_failure_time,
    reliability_known_y0,
    reliability_unknown_y0,
    slope_sum,
)

CONFIG_1111 = Configuration(1, 1, 1, -1)


def truth_draws(truth, constants_ns, g=64):
    """Fake posterior draws where every row is the reference truth."""
    layout = FitSpec(regime=Regime.NS, constants=constants_ns).layout()
    row = layout.constrained_row(truth)
    return PosteriorDraws(
        values=np.tile(row, (g, 1)),
        names=layout.constrained_names(),
        chains=2,
        draws_per_chain=g // 2,
        seed=0,
        provenance={"divergences": 0},
    )


class TestDelta1:
    def test_truth_anchors(self, truth, constants_as):
        assert delta1(CONFIG_1111, 0.72, truth, constants_as) == \
            pytest.approx(7.3296, abs=1e-9)
        assert delta1(CONFIG_1111, 3.0, truth, constants_as) == \
            pytest.approx(61.53, abs=1e-9)
        assert delta1(CONFIG_1111, 3.6, truth, constants_as) == \
            pytest.approx(163.58304, abs=1e-9)

    def test_matches_mean_increment(self, truth, constants_as):
        config = Configuration(3, 2, 4, 1)
        for w in (0.5, 2.0, 3.1):
            expected = mean_yt(1000.0, config, w, Regime.AS, truth,
                               constants_as) - 1000.0
            assert delta1(config, w, truth, constants_as) == \
                pytest.approx(expected, abs=1e-9)

    def test_negative_time_rejected(self, truth, constants_as):
        with pytest.raises(DomainError):
            delta1(CONFIG_1111, -0.1, truth, constants_as)

    def test_vectorizes_over_draws(self, truth, constants_ns):
        draws = truth_draws(truth, constants_ns, g=8)
        view = params_view(draws.names, draws.values)
        values = delta1(CONFIG_1111, 3.0, view)
        assert np.shape(values) == (8,)
        np.testing.assert_allclose(values, 61.53, atol=1e-9)


class TestContrast:
    def test_truth_value(self, truth, constants_as):
        c2 = Configuration(2, 1, 1, -1)
        got = delta_contrast(CONFIG_1111, c2, -1, 3.0, truth, constants_as)
        # Effect steps: slope difference 0.2 per unit time, cubic
        # difference 10.04 past the knot.
        assert got == pytest.approx(0.2 * 3.0 + 10.04, abs=1e-9)

    def test_humidity_in_configs_is_overridden(self, truth, constants_as):
        a = delta_contrast(Configuration(1, 1, 1, -1), Configuration(2, 1, 1, -1),
                           1, 3.0, truth, constants_as)
        b = delta_contrast(Configuration(1, 1, 1, 1), Configuration(2, 1, 1, -1),
                           1, 3.0, truth, constants_as)
        assert a == b

    def test_antisymmetry(self, truth, constants_as):
        c2 = Configuration(4, 2, 3, 1)
        ab = delta_contrast(CONFIG_1111, c2, -1, 2.5, truth, constants_as)
        ba = delta_contrast(c2, CONFIG_1111, -1, 2.5, truth, constants_as)
        assert ab == pytest.approx(-ba, abs=1e-12)

    def test_posterior_contrast_covers_truth(self, as_fit_quick, constants_as):
        c2 = Configuration(2, 1, 1, -1)
        result = delta_contrast_posterior(CONFIG_1111, c2, -1, 3.0,
                                          as_fit_quick, constants_as)
        assert result.values.shape == (as_fit_quick.g,)
        assert result.summary["hdi_low"] < 10.64 < result.summary["hdi_high"]


class TestReliabilityKnownBaseline:
    def test_matches_normal_cdf(self, truth, constants_ns):
        y0 = 1002.0
        config = Configuration(2, 3, 1, 1)
        for t in (10.0, 40.0, 70.0, 90.0):
            mu_t = mean_yt(y0, config, t, Regime.NS, truth, constants_ns)
            expected = stats.norm.cdf((1.1 * y0 - mu_t) / truth.sigma_y)
            got = reliability_known_y0(t, y0, config, Regime.NS, truth, constants_ns)
            assert got == pytest.approx(expected, abs=1e-12)

    def test_starts_at_one_and_decreases(self, truth, constants_ns):
        config = Configuration(1, 1, 1, 1)
        grid = np.linspace(0.0, 120.0, 25)
        values = [reliability_known_y0(t, 1000.0, config, Regime.NS, truth,
                                       constants_ns) for t in grid]
        assert values[0] == pytest.approx(1.0, abs=1e-12)
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-6

    def test_monte_carlo_agreement(self, truth, constants_ns, rng):
        y0, t = 1000.0, 78.0
        config = Configuration(1, 1, 4, 1)
        n = 200_000
        mu_t = mean_yt(y0, config, t, Regime.NS, truth, constants_ns)
        y_t = mu_t + rng.normal(0.0, truth.sigma_y, size=n)
        emp = np.mean(y_t < 1.1 * y0)
        got = reliability_known_y0(t, y0, config, Regime.NS, truth, constants_ns)
        se = math.sqrt(got * (1 - got) / n)
        assert emp == pytest.approx(got, abs=4 * se + 1e-4)


class TestReliabilityUnknownBaseline:
    def test_monte_carlo_agreement(self, truth, constants_ns, rng):
        t = 80.0
        config = Configuration(1, 1, 4, 1)
        n = 200_000
        m0 = mean_y0(config, truth)
        y0 = m0 + rng.normal(0.0, truth.sigma0, size=n)
        slope = slope_sum(config, truth)
        y_t = y0 + slope * t / constants_ns.gamma \
            + rng.normal(0.0, truth.sigma_y, size=n)
        emp = np.mean(y_t < 1.1 * y0)
        got = reliability_unknown_y0(t, config, Regime.NS, truth, constants_ns)
        se = math.sqrt(max(got * (1 - got), 1e-6) / n)
        assert emp == pytest.approx(got, abs=4 * se + 1e-3)

    def test_extra_baseline_uncertainty_widens_the_transition(self, truth,
                                                              constants_ns):
        # Same median crossing, flatter curve than the known-baseline one.
        config = Configuration(1, 1, 4, 1)
        m0 = mean_y0(config, truth)
        t = 80.4
        known = reliability_known_y0(t, m0, config, Regime.NS, truth, constants_ns)
        unknown = reliability_unknown_y0(t, config, Regime.NS, truth, constants_ns)
        assert abs(unknown - 0.5) < abs(known - 0.5) + 1e-12


class TestAdjustedDensity:
    def test_integrates_to_one(self, truth, constants_ns):
        intervention = Intervention(x_s=2)
        y0 = 1000.0
        total, _ = integrate.quad(
            lambda y: adjusted_outcome_density(y, y0, intervention, 21.6,
                                               truth, constants_ns),
            y0 - 20.0, y0 + 120.0, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_matches_manual_mixture(self, truth, constants_ns):
        # do(x_S = 1, x_T = 2, x_P = 3): only humidity left to mix over.
        intervention = Intervention(x_s=1, x_t=2, x_p=3)
        y0, w = 998.0, 21.6
        ys = np.linspace(1010.0, 1035.0, 7)
        for y in ys:
            expected = 0.0
            for h in (-1, 1):
                config = Configuration(1, 2, 3, h)
                mu = mean_yt(y0, config, w, Regime.NS, truth, constants_ns)
                weight = truth.pi_h[Configuration(1, 2, 3, h).h_level - 1]
                expected += weight * stats.norm.pdf(y, mu, truth.sigma_y)
            got = adjusted_outcome_density(y, y0, intervention, w,
                                           truth, constants_ns)
            assert got == pytest.approx(expected, rel=1e-10, abs=1e-12)

    def test_mixes_unassigned_factors_with_their_tables(self, truth, constants_ns):
        intervention = Intervention(x_s=4)
        y0, w = 1000.0, 21.6
        y = 1025.0
        expected = 0.0
        for h in (-1, 1):
            hl = Configuration(4, 1, 1, h).h_level - 1
            for xt in range(1, 5):
                for xp in range(1, 5):
                    config = Configuration(4, xt, xp, h)
                    mu = mean_yt(y0, config, w, Regime.NS, truth, constants_ns)
                    weight = (truth.pi_h[hl] * truth.pi_t[hl][xt - 1]
                              * truth.pi_p[xp - 1])
                    expected += weight * stats.norm.pdf(y, mu, truth.sigma_y)
        got = adjusted_outcome_density(y, y0, intervention, w, truth, constants_ns)
        assert got == pytest.approx(expected, rel=1e-10)

    def test_requires_stress_assignment(self, truth, constants_ns):
        with pytest.raises(QueryError):
            adjusted_outcome_density(1010.0, 1000.0, Intervention(x_t=1), 21.6,
                                     truth, constants_ns)

    def test_rejects_humidity_assignment(self, truth, constants_ns):
        with pytest.raises(QueryError):
            adjusted_outcome_density(1010.0, 1000.0,
                                     Intervention(x_s=1, x_h=1), 21.6,
                                     truth, constants_ns)


class TestPredictiveFailureTime:
    def test_truth_draws_match_mixture_oracle(self, truth, constants_ns):
        intervention = Intervention(x_s=1, x_t=1, x_p=4)
        draws = truth_draws(truth, constants_ns, g=64)
        sample = predictive_failure_time(
            intervention, draws, constants_ns,
            rng=np.random.default_rng(0), n_mc=40_000)
        # Conditional on humidity the failure time is Gaussian:
        # w = gamma * (0.1 * y0 - u) / slope.
        gamma = constants_ns.gamma
        m0 = mean_y0(Configuration(1, 1, 4, -1), truth)
        means, variances, weights = [], [], []
        for h in (-1, 1):
            slope = slope_sum(Configuration(1, 1, 4, h), truth)
            means.append(gamma * 0.1 * m0 / slope)
            variances.append(gamma**2 * (0.01 * truth.sigma0**2
                                         + truth.sigma_y**2) / slope**2)
            weights.append(truth.pi_h[Configuration(1, 1, 4, h).h_level - 1])
        mix_mean = sum(w * m for w, m in zip(weights, means))
        mix_var = sum(w * (v + (m - mix_mean) ** 2)
                      for w, m, v in zip(weights, means, variances))
        assert sample.values.size == 40_000
        assert sample.n_flagged == 0
        assert sample.values.mean() == pytest.approx(mix_mean, abs=0.05)
        assert sample.values.std() == pytest.approx(math.sqrt(mix_var), rel=0.03)

    def test_default_size_is_one_per_draw(self, truth, constants_ns):
        draws = truth_draws(truth, constants_ns, g=50)
        sample = predictive_failure_time(Intervention(x_s=1, x_t=1, x_p=1),
                                         draws, constants_ns,
                                         rng=np.random.default_rng(1))
        assert sample.values.size == 50
        assert set(sample.summary) >= {"min", "q05", "q25", "q50", "q75",
                                       "q95", "max", "mean", "sd", "n",
                                       "n_flagged"}

    def test_deterministic_given_rng_seed(self, truth, constants_ns):
        draws = truth_draws(truth, constants_ns, g=50)
        a = predictive_failure_time(Intervention(x_s=1, x_t=1, x_p=1), draws,
                                    constants_ns, rng=np.random.default_rng(3))
        b = predictive_failure_time(Intervention(x_s=1, x_t=1, x_p=1), draws,
                                    constants_ns, rng=np.random.default_rng(3))
        np.testing.assert_array_equal(a.values, b.values)

    def test_requires_full_stress_assignment(self, truth, constants_ns):
        draws = truth_draws(truth, constants_ns, g=10)
        with pytest.raises(QueryError):
            predictive_failure_time(Intervention(x_s=1, x_t=1), draws,
                                    constants_ns)

    def test_rejects_humidity_assignment(self, truth, constants_ns):
        draws = truth_draws(truth, constants_ns, g=10)
        with pytest.raises(QueryError):
            predictive_failure_time(Intervention(x_s=1, x_t=1, x_p=1, x_h=-1),
                                    draws, constants_ns)

    def test_nonpositive_slopes_flagged(self, truth, constants_ns):
        draws = truth_draws(truth, constants_ns, g=20)
        i = draws.names.index("beta1")
        bad = draws.values.copy()
        bad[:, i] = -5.0  # every slope negative: failure never happens
        broken = PosteriorDraws(values=bad, names=draws.names, chains=2,
                                draws_per_chain=10, seed=0,
                                provenance={"divergences": 0})
        with pytest.raises(QueryError):
            predictive_failure_time(Intervention(x_s=1, x_t=1, x_p=1),
                                    broken, constants_ns,
                                    rng=np.random.default_rng(0))


class TestCensorClassify:
    def _record(self, resistances, times=(0.0, 7.2, 21.6, 36.0)):
        return DeviceRecord(
            device_id="c", config=CONFIG_1111, regime=Regime.NS,
            times=np.asarray(times, dtype=float),
            resistances=np.asarray(resistances, dtype=float),
        )

    def test_interval_between_measurements(self):
        rec = self._record([1000.0, 1030.0, 1120.0, 1150.0])
        assert censor_classify(rec) == IntervalCensored(7.2, 21.6)

    def test_right_censored(self):
        rec = self._record([1000.0, 1030.0, 1060.0, 1090.0])
        assert censor_classify(rec) == RightCensored(36.0)

    def test_tie_counts_as_failed(self):
        rec = self._record([1000.0, 1030.0, 1100.0, 1150.0])
        assert censor_classify(rec) == IntervalCensored(7.2, 21.6)

    def test_failed_at_first_measurement(self):
        rec = self._record([1000.0, 1130.0, 1150.0, 1180.0])
        assert censor_classify(rec) == IntervalCensored(0.0, 7.2)

    def test_missing_middle_widens_interval(self):
        rec = self._record([1000.0, 1030.0, math.nan, 1150.0])
        assert censor_classify(rec) == IntervalCensored(7.2, 36.0)

    def test_right_censoring_uses_last_observed_time(self):
        rec = self._record([1000.0, 1030.0, 1060.0, math.nan])
        assert censor_classify(rec) == RightCensored(21.6)

    def test_threshold_factor_must_exceed_one(self):
        rec = self._record([1000.0, 1030.0, 1060.0, 1090.0])
        with pytest.raises(DomainError):
            censor_classify(rec, threshold_factor=1.0)


class TestIntervention:
    def test_rejects_bad_levels(self):
        with pytest.raises(DomainError):
            Intervention(x_s=0)
        with pytest.raises(DomainError):
            Intervention(x_h=2)

    def test_none_means_unassigned(self):
        iv = Intervention(x_s=3)
        assert iv.x_t is None and iv.x_p is None and iv.x_h is None
