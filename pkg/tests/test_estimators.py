"""Monte Carlo estimator tests: closed-form agreement, determinism.

The statistical tests use fixed seeds and 4 to 4.5 sigma acceptance
bands on the estimator's own reported standard error, so a correct
implementation fails with probability well under 1e-4 per assertion
while a biased statistic or a broken error bar fails loudly.
"""

import math

import numpy as np
import pytest

from ghostlab.analytics import (
    GiParameters,
    g_back,
    g_max,
    plain_excess_ratio,
    var_g_back,
    visibility,
)
from ghostlab.estimators import (
    CorrelationStats,
    DegenerateBatchError,
    Estimate,
    Regime,
    TrialBatch,
    estimate_cf,
    estimate_snr,
    estimate_visibility,
    ordering_dominance,
)
from ghostlab.estimators import _batch_layout


def within(measured: float, expected: float, se: float, sigmas: float = 4.5) -> bool:
    assert se > 0.0 and math.isfinite(se)
    return abs(measured - expected) <= sigmas * se


class TestBatchLayout:
    @pytest.mark.parametrize("trials", [2, 3, 7, 199, 1000, 123_456])
    @pytest.mark.parametrize("n_modes", [2, 3, 11])
    def test_sizes_partition_trials(self, trials, n_modes):
        sizes = _batch_layout(trials, n_modes)
        assert sum(sizes) == trials
        assert min(sizes) >= 1
        assert max(sizes) - min(sizes) <= 1

    def test_small_jobs_get_one_batch(self):
        assert _batch_layout(3, 2) == [3]

    def test_large_jobs_split_for_memory(self):
        sizes = _batch_layout(50_000_000, 11)
        assert len(sizes) > 100
        assert max(sizes) * 11 <= 4_100_000


class TestValidation:
    def test_rejects_single_trial(self):
        with pytest.raises(ValueError, match="trials"):
            TrialBatch(GiParameters(2, 1, 1.0), trials=1, regime="classical_intensity")

    def test_rejects_negative_seed(self):
        with pytest.raises(ValueError, match="seed"):
            TrialBatch(GiParameters(2, 1, 1.0), 100, "classical_intensity", seed=-1)

    def test_rejects_unknown_regime(self):
        with pytest.raises(ValueError):
            TrialBatch(GiParameters(2, 1, 1.0), 100, "photon_counting")

    def test_regime_coerced_from_string(self):
        batch = TrialBatch(GiParameters(2, 1, 1.0), 100, "photocount_plain")
        assert batch.regime is Regime.PHOTOCOUNT_PLAIN

    def test_rejects_zero_threads(self):
        batch = TrialBatch(GiParameters(2, 1, 1.0), 100, "classical_intensity")
        with pytest.raises(ValueError, match="threads"):
            estimate_cf(batch, threads=0)


class TestClassicalRegime:
    @pytest.mark.parametrize(
        "n,m,i", [(2, 1, 1.0), (3, 2, 0.5), (2, 10, 0.1), (4, 1, 1.0)]
    )
    def test_levels_match_closed_forms(self, n, m, i):
        params = GiParameters(n, m, i)
        batch = TrialBatch(params, 200_000, "classical_intensity", seed=11)
        stats = estimate_cf(batch)
        assert within(stats.g_max_hat, g_max(params), stats.std_errors["g_max"])
        assert within(stats.g_back_hat, g_back(params), stats.std_errors["g_back"])

    def test_background_variance_two_detector(self):
        # x_back = I0 * I1 with independent exponentials: the variance
        # is <I0^2><I1^2> - I^4 = 3 I^4.
        for i in (0.5, 1.0):
            params = GiParameters(2, 1, i)
            batch = TrialBatch(params, 200_000, "classical_intensity", seed=12)
            stats = estimate_cf(batch)
            assert within(stats.var_back_hat, 3.0 * i**4, stats.std_errors["var_back"])

    def test_visibility_single_mode(self):
        params = GiParameters(2, 1, 1.0)
        batch = TrialBatch(params, 200_000, "classical_intensity", seed=13)
        est = estimate_visibility(batch)
        assert within(est.value, visibility(2, 1), est.std_error)


class TestPhotocountFactorialRegime:
    @pytest.mark.parametrize(
        "n,m,i", [(2, 1, 1.0), (3, 1, 1.0), (2, 10, 0.1), (3, 2, 0.5)]
    )
    def test_levels_match_closed_forms(self, n, m, i):
        params = GiParameters(n, m, i)
        batch = TrialBatch(params, 200_000, "photocount_factorial", seed=21)
        stats = estimate_cf(batch)
        assert within(stats.g_max_hat, g_max(params), stats.std_errors["g_max"])
        assert within(stats.g_back_hat, g_back(params), stats.std_errors["g_back"])

    @pytest.mark.parametrize("n,m,i", [(2, 1, 1.0), (2, 10, 0.5), (3, 1, 1.0)])
    def test_background_variance_matches_closed_form(self, n, m, i):
        params = GiParameters(n, m, i)
        batch = TrialBatch(params, 400_000, "photocount_factorial", seed=22)
        stats = estimate_cf(batch)
        assert within(
            stats.var_back_hat, var_g_back(params), stats.std_errors["var_back"]
        )

    def test_visibility_single_mode(self):
        params = GiParameters(2, 1, 1.0)
        batch = TrialBatch(params, 200_000, "photocount_factorial", seed=23)
        est = estimate_visibility(batch)
        assert within(est.value, 1.0 / 3.0, est.std_error)

    def test_degenerate_at_vanishing_intensity(self):
        # Essentially every trial yields zero photons everywhere, so the
        # trial statistics have no spread and no noise scale exists.
        params = GiParameters(2, 1, 1e-12)
        batch = TrialBatch(params, 1000, "photocount_factorial", seed=24)
        with pytest.raises(DegenerateBatchError):
            estimate_cf(batch)


class TestPhotocountPlainRegime:
    def test_background_level_keeps_self_coincidences(self):
        # Plain second power of a thermal count: <k^2> = 2 I^2 + I, so
        # the plain background level is (2 I^2 + I) * M I, above the
        # ordered level 2! I^2 * M I whenever I is finite.
        n, m, i = 3, 2, 0.5
        params = GiParameters(n, m, i)
        batch = TrialBatch(params, 300_000, "photocount_plain", seed=31)
        stats = estimate_cf(batch)
        expected = (2.0 * i**2 + i) * m * i
        assert within(stats.g_back_hat, expected, stats.std_errors["g_back"])
        assert stats.g_back_hat > g_back(params)

    def test_matches_factorial_at_second_order(self):
        # k^1 is its own falling factorial, so the two photocount
        # regimes draw identical statistics at n = 2.
        params = GiParameters(2, 3, 0.7)
        plain = estimate_cf(TrialBatch(params, 50_000, "photocount_plain", seed=32))
        ordered = estimate_cf(
            TrialBatch(params, 50_000, "photocount_factorial", seed=32)
        )
        assert plain.g_back_hat == ordered.g_back_hat
        assert plain.var_back_hat == ordered.var_back_hat


class TestDeterminism:
    def test_repeat_call_is_bitwise_identical(self):
        batch = TrialBatch(GiParameters(3, 2, 1.0), 60_000, "photocount_factorial", seed=5)
        a = estimate_cf(batch)
        b = estimate_cf(batch)
        assert a == b

    @pytest.mark.parametrize("threads", [2, 4])
    def test_thread_count_never_changes_bits(self, threads):
        batch = TrialBatch(GiParameters(3, 2, 1.0), 60_000, "photocount_factorial", seed=6)
        serial = estimate_cf(batch, threads=1)
        parallel = estimate_cf(batch, threads=threads)
        assert serial == parallel

    def test_seed_changes_results(self):
        params = GiParameters(2, 1, 1.0)
        a = estimate_cf(TrialBatch(params, 10_000, "classical_intensity", seed=1))
        b = estimate_cf(TrialBatch(params, 10_000, "classical_intensity", seed=2))
        assert a.g_max_hat != b.g_max_hat

    def test_dominance_thread_invariance(self):
        params = GiParameters(3, 1, 0.5)
        serial = ordering_dominance(params, 40_000, seed=7, threads=1)
        parallel = ordering_dominance(params, 40_000, seed=7, threads=4)
        assert serial == parallel


class TestStandardErrorCalibration:
    def test_gmax_coverage_near_nominal(self):
        # 100 independent runs; the 1.96 sigma interval should cover the
        # true level about 95 times.  85 is a 3.3 sigma floor on the
        # binomial, so a materially underestimated error bar fails.
        params = GiParameters(2, 1, 1.0)
        truth = g_max(params)
        hits = 0
        for rep in range(100):
            batch = TrialBatch(params, 3000, "photocount_factorial", seed=1000 + rep)
            stats = estimate_cf(batch)
            if abs(stats.g_max_hat - truth) <= 1.96 * stats.std_errors["g_max"]:
                hits += 1
        assert hits >= 85


class TestWrappers:
    def test_estimates_mirror_correlation_stats(self):
        batch = TrialBatch(GiParameters(2, 1, 1.0), 20_000, "photocount_factorial", seed=9)
        stats = estimate_cf(batch)
        vis = estimate_visibility(batch)
        snr = estimate_snr(batch)
        assert isinstance(stats, CorrelationStats)
        assert vis == Estimate(stats.visibility_hat, stats.std_errors["visibility"])
        assert snr == Estimate(stats.snr_hat, stats.std_errors["snr"])

    def test_std_errors_cover_all_derived_fields(self):
        batch = TrialBatch(GiParameters(2, 1, 1.0), 20_000, "classical_intensity", seed=10)
        stats = estimate_cf(batch)
        assert set(stats.std_errors) == {
            "g_max",
            "g_back",
            "var_max",
            "var_back",
            "cov",
            "signal",
            "noise",
            "snr",
            "visibility",
        }
        assert all(math.isfinite(se) and se > 0.0 for se in stats.std_errors.values())


class TestOrderingDominance:
    def test_rejects_bad_arguments(self):
        params = GiParameters(3, 1, 0.5)
        with pytest.raises(ValueError, match="trials"):
            ordering_dominance(params, 1)
        with pytest.raises(ValueError, match="threads"):
            ordering_dominance(params, 100, threads=0)

    def test_third_order_excess(self):
        # Closed form: plain/ordered - 1 = 1 / (2 I) at n = 3.
        params = GiParameters(3, 1, 0.5)
        est = ordering_dominance(params, 400_000, seed=41)
        assert within(est.value, plain_excess_ratio(3, 0.5), est.std_error)
        assert est.value > 0.5  # dominance is order unity at I ~ 0.5

    def test_fourth_order_excess(self):
        params = GiParameters(4, 1, 1.0)
        est = ordering_dominance(params, 600_000, seed=42)
        assert within(est.value, plain_excess_ratio(4, 1.0), est.std_error)

    def test_excess_shrinks_with_intensity(self):
        lo = ordering_dominance(GiParameters(3, 1, 0.2), 200_000, seed=43)
        hi = ordering_dominance(GiParameters(3, 1, 20.0), 200_000, seed=43)
        assert lo.value > 10.0 * hi.value
