"""Closed-form tests against independent moment-algebra oracles.

The oracle machinery below rebuilds the first two moments of the
correlation statistics from scratch: Bose-Einstein factorial moments
(``<k^(d,falling)> = d! I^d``), the product rule for falling factorials
(``ff(k,a) ff(k,b) = sum_c c! C(a,c) C(b,c) ff(k, a+b-c)``), and plain
mode-sum moments.  It shares no expressions with the module under test,
so agreement to near machine precision pins every term of the noise
brackets.
"""

import math
from math import comb, factorial

import numpy as np
import pytest

from ghostlab.analytics import (
    AnalyticReport,
    GiParameters,
    SpdcParameters,
    analytic_report,
    g_back,
    g_max,
    ordering_coefficients,
    plain_excess_ratio,
    snr_high_intensity,
    snr_low_intensity,
    snr_spdc,
    snr_spdc_limit,
    snr_thermal,
    spdc_peak,
    var_g_back,
    visibility,
)
from ghostlab.modes import OrderOverflowError

GRID = [
    (n, m, i)
    for n in (2, 3, 4, 5, 6)
    for m in (1, 2, 10)
    for i in (0.1, 1.0, 10.0)
]


def ff_moment(depth: int, mean: float) -> float:
    """<ff(k, depth)> for a thermal mode: depth! * mean^depth."""
    return factorial(depth) * mean**depth


def ff_product_moment(a: int, b: int, mean: float) -> float:
    """<ff(k,a) ff(k,b)> via the falling-factorial product rule."""
    return sum(
        factorial(c) * comb(a, c) * comb(b, c) * ff_moment(a + b - c, mean)
        for c in range(min(a, b) + 1)
    )


def bucket_moments(modes: int, mean: float) -> tuple[float, float]:
    """Mean and second moment of a sum of `modes` independent counts."""
    first = modes * mean
    second_single = 2.0 * mean**2 + mean  # <k^2> = <I^2> + <I>
    second = modes * second_single + modes * (modes - 1) * mean**2
    return first, second


def oracle_moments(n: int, modes: int, mean: float) -> dict[str, float]:
    """First and second moments of the peak and background statistics.

    Peak statistic: ff(k1, n)  +  ff(k1, n-1) * R  with R the counts of
    the other modes in the mask; background: ff(k0, n-1) * (k1 + R).
    """
    er, er2 = bucket_moments(modes - 1, mean) if modes > 1 else (0.0, 0.0)
    eb, eb2 = bucket_moments(modes, mean)
    e_ff_n = ff_moment(n, mean)
    e_ff_n1 = ff_moment(n - 1, mean)
    e_ff_n_sq = ff_product_moment(n, n, mean)
    e_ff_cross = ff_product_moment(n, n - 1, mean)
    e_ff_n1_sq = ff_product_moment(n - 1, n - 1, mean)
    e_max = e_ff_n + e_ff_n1 * er
    e_max_sq = e_ff_n_sq + 2.0 * e_ff_cross * er + e_ff_n1_sq * er2
    e_back = e_ff_n1 * eb
    e_back_sq = e_ff_n1_sq * eb2
    # Cross moment: k0 is independent of every mask mode, so it
    # factorizes; inside the mask, k1 couples to its own factorials.
    e_ffn_k = ff_product_moment(n, 1, mean)
    e_ffn1_k = ff_product_moment(n - 1, 1, mean)
    inner = e_ffn_k + e_ff_n * er + e_ffn1_k * er + e_ff_n1 * er2
    e_cross = e_ff_n1 * inner
    return {
        "g_max": e_max,
        "g_back": e_back,
        "var_max": e_max_sq - e_max**2,
        "var_back": e_back_sq - e_back**2,
        "cov": e_cross - e_max * e_back,
    }


class TestCorrelationLevels:
    @pytest.mark.parametrize("n,m,i", GRID)
    def test_against_oracle(self, n, m, i):
        oracle = oracle_moments(n, m, i)
        params = GiParameters(n, m, i)
        assert g_max(params) == pytest.approx(oracle["g_max"], rel=1e-12)
        assert g_back(params) == pytest.approx(oracle["g_back"], rel=1e-12)

    def test_frozen_values(self):
        assert g_max(GiParameters(2, 1, 1.0)) == 2.0
        assert g_back(GiParameters(2, 1, 1.0)) == 1.0
        assert g_max(GiParameters(3, 1, 1.0)) == 6.0
        assert g_max(GiParameters(4, 1, 1.0)) == 24.0
        assert g_back(GiParameters(4, 10, 1.0)) == 60.0

    def test_scaling_in_intensity(self):
        a = g_max(GiParameters(3, 2, 0.5))
        b = g_max(GiParameters(3, 2, 1.0))
        assert b / a == pytest.approx(2.0**3, rel=1e-12)


class TestVisibility:
    def test_single_mode_exact(self):
        assert visibility(2, 1) == 1 / 3
        assert visibility(3, 1) == 1 / 2
        assert visibility(4, 1) == 3 / 5

    @pytest.mark.parametrize("n,m", [(2, 10), (3, 5), (4, 10), (6, 3)])
    def test_matches_levels(self, n, m):
        params = GiParameters(n, m, 1.0)
        hi, lo = g_max(params), g_back(params)
        assert visibility(n, m) == pytest.approx((hi - lo) / (hi + lo), rel=1e-14)

    def test_monotone(self):
        assert visibility(4, 1) > visibility(3, 1) > visibility(2, 1)
        assert visibility(2, 1) > visibility(2, 2) > visibility(2, 10)

    def test_bounds(self):
        for n in range(2, 10):
            for m in (1, 3, 50):
                assert 0.0 < visibility(n, m) < 1.0


class TestVarBack:
    @pytest.mark.parametrize("n,m,i", GRID)
    def test_against_oracle(self, n, m, i):
        oracle = oracle_moments(n, m, i)["var_back"]
        assert var_g_back(GiParameters(n, m, i)) == pytest.approx(oracle, rel=1e-12)

    @pytest.mark.parametrize("i", [0.1, 0.25, 1.0, 4.0, 10.0])
    def test_single_mode_second_order_polynomial(self, i):
        # Hand-expanded special case: Var = I^2 + 4 I^3 + 3 I^4.
        expected = i**2 + 4.0 * i**3 + 3.0 * i**4
        assert var_g_back(GiParameters(2, 1, i)) == pytest.approx(expected, rel=1e-12)


def oracle_snr(n: int, modes: int, mean: float) -> float:
    oracle = oracle_moments(n, modes, mean)
    signal = oracle["g_max"] - oracle["g_back"]
    noise_sq = oracle["var_max"] + oracle["var_back"] - 2.0 * oracle["cov"]
    assert noise_sq > 0.0
    return signal / math.sqrt(noise_sq)


class TestSnrThermal:
    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    @pytest.mark.parametrize("i", [0.1, 1.0, 10.0])
    def test_single_mode_against_oracle(self, n, i):
        assert snr_thermal(GiParameters(n, 1, i)) == pytest.approx(
            oracle_snr(n, 1, i), rel=1e-12
        )

    @pytest.mark.parametrize("n,m,i", [g for g in GRID if g[1] > 1])
    def test_multimode_noise_offset(self, n, m, i):
        # For M > 1 the closed form carries one extra shot-noise cross
        # term: its noise bracket exceeds the exact second-moment value
        # by 2 (n-1)(M-1) / I, in units of the squared background level
        # per (n-1)!.  Pinning the offset checks every remaining term.
        b_formula = ((n - 1) / snr_thermal(GiParameters(n, m, i))) ** 2
        b_oracle = ((n - 1) / oracle_snr(n, m, i)) ** 2
        offset = 2.0 * (n - 1) * (m - 1) / i
        assert b_formula - b_oracle == pytest.approx(offset, rel=1e-7)

    @pytest.mark.parametrize("n,m,i", [g for g in GRID if g[1] > 1])
    def test_multimode_deviation_is_small(self, n, m, i):
        # Monte Carlo sampling follows the exact bracket; the closed
        # form sits below it by at most 1.7% on this grid, so formula
        # comparisons at percent-level tolerances remain meaningful.
        formula = snr_thermal(GiParameters(n, m, i))
        exact = oracle_snr(n, m, i)
        assert formula < exact
        assert exact / formula - 1.0 < 0.017

    def test_hand_expanded_single_mode(self):
        # n=2, M=1: SNR = I / sqrt(15 I^2 + 20 I + 5).
        for i in (0.01, 0.1, 1.0, 30.0):
            expected = i / math.sqrt(15.0 * i**2 + 20.0 * i + 5.0)
            assert snr_thermal(GiParameters(2, 1, i)) == pytest.approx(expected, rel=1e-12)

    def test_increases_with_intensity(self):
        grid = np.logspace(-3, 3, 40)
        for n in (2, 3, 4):
            values = [snr_thermal(GiParameters(n, 1, float(i))) for i in grid]
            assert all(b > a for a, b in zip(values, values[1:]))

    def test_decreases_with_modes(self):
        for n in (2, 3):
            values = [snr_thermal(GiParameters(n, m, 1.0)) for m in (1, 2, 5, 20)]
            assert all(b < a for a, b in zip(values, values[1:]))


class TestSnrAsymptotes:
    @pytest.mark.parametrize("n", [2, 3, 4])
    @pytest.mark.parametrize("m", [1, 10])
    def test_low_intensity_limit(self, n, m):
        full = snr_thermal(GiParameters(n, m, 1e-6))
        asym = snr_low_intensity(GiParameters(n, m, 1e-6))
        assert abs(full / asym - 1.0) < 0.01

    @pytest.mark.parametrize("n", [2, 3, 4])
    @pytest.mark.parametrize("m", [1, 10])
    def test_high_intensity_limit(self, n, m):
        full = snr_thermal(GiParameters(n, m, 1e6))
        asym = snr_high_intensity(n, m)
        assert abs(full / asym - 1.0) < 1e-3

    def test_low_intensity_frozen_values(self):
        # (n-1) I^(n/2) / sqrt(2M - 1 + n^2) at n=2, M=1, I=0.01.
        assert snr_low_intensity(GiParameters(2, 1, 0.01)) == pytest.approx(
            0.01 / math.sqrt(5.0), rel=1e-12
        )
        assert snr_low_intensity(GiParameters(3, 1, 0.01)) == pytest.approx(
            2.0 * 0.01**1.5 / math.sqrt(10.0), rel=1e-12
        )

    def test_high_intensity_frozen_values(self):
        assert snr_high_intensity(2, 1) == pytest.approx(1.0 / math.sqrt(15.0), rel=1e-14)
        assert snr_high_intensity(2, 10) == pytest.approx(1.0 / math.sqrt(267.0), rel=1e-14)

    def test_plateau_scaling_power(self):
        # Between the limits the full curve stays between its asymptotes
        # and crosses over around I ~ 1.
        for n in (2, 3):
            low = snr_thermal(GiParameters(n, 1, 1e-4))
            ratio = low / snr_low_intensity(GiParameters(n, 1, 1e-4))
            assert 0.9 < ratio < 1.1


class TestSpdc:
    def test_limit_coincides_with_thermal_plateau(self):
        worst = max(
            abs(snr_high_intensity(2, m) - snr_spdc_limit(m)) for m in range(1, 101)
        )
        assert worst <= 1e-12

    def test_limit_frozen(self):
        assert snr_spdc_limit(1) == pytest.approx(1.0 / math.sqrt(15.0), rel=1e-14)

    def test_vanishes_at_zero(self):
        assert snr_spdc(SpdcParameters(0.0, 1)) == 0.0

    def test_approaches_limit(self):
        value = snr_spdc(SpdcParameters(1e5, 1))
        assert abs(value / snr_spdc_limit(1) - 1.0) < 1e-3

    @pytest.mark.parametrize("modes", [1, 2, 10])
    def test_peak_is_maximum(self, modes):
        m_peak, s_peak = spdc_peak(modes)
        assert snr_spdc(SpdcParameters(m_peak, modes)) == pytest.approx(s_peak, rel=1e-14)
        # Grid-scan oracle: nothing nearby beats the stationary point.
        grid = np.linspace(max(m_peak - 0.5, 1e-4), m_peak + 0.5, 2001)
        values = [snr_spdc(SpdcParameters(float(m), modes)) for m in grid]
        assert max(values) <= s_peak + 1e-12

    def test_peak_locations(self):
        m1, s1 = spdc_peak(1)
        assert m1 == pytest.approx((1.0 + math.sqrt(5.0)) / 4.0, rel=1e-14)
        m10, s10 = spdc_peak(10)
        assert m10 == pytest.approx((1.0 + math.sqrt(221.0)) / 220.0, rel=1e-14)
        assert s1 > s10


class TestOrderingCoefficients:
    def test_frozen_tables(self):
        assert ordering_coefficients(2).tolist() == [1.0]
        assert ordering_coefficients(3).tolist() == [1.0, 1.0]
        assert ordering_coefficients(4).tolist() == [1.0, 3.0, 1.0]
        assert ordering_coefficients(5).tolist() == [1.0, 7.0, 6.0, 1.0]

    @pytest.mark.parametrize("order", [2, 3, 4, 5, 6])
    def test_defining_identity(self, order):
        # k^(n-1) must equal the coefficient-weighted falling factorials
        # exactly, for every integer k.
        coefficients = ordering_coefficients(order)
        for k in range(12):
            total = 0.0
            for j, c in enumerate(coefficients, start=1):
                ff = 1.0
                for t in range(j):
                    ff *= k - t
                total += c * ff
            assert total == float(k ** (order - 1))


class TestPlainExcessRatio:
    @pytest.mark.parametrize("i", [0.05, 0.1, 1.0, 10.0, 1e3])
    def test_third_order_closed_form(self, i):
        assert plain_excess_ratio(3, i) == pytest.approx(1.0 / (2.0 * i), rel=1e-12)

    @pytest.mark.parametrize("i", [0.05, 0.1, 1.0, 10.0, 1e3])
    def test_fourth_order_closed_form(self, i):
        expected = 1.0 / (6.0 * i**2) + 1.0 / i
        assert plain_excess_ratio(4, i) == pytest.approx(expected, rel=1e-12)

    def test_second_order_has_no_excess(self):
        for i in (0.1, 1.0, 10.0):
            assert plain_excess_ratio(2, i) == 0.0

    def test_vanishes_at_high_intensity(self):
        assert plain_excess_ratio(4, 1e6) < 2e-6

    def test_frozen_low_intensity_values(self):
        assert plain_excess_ratio(3, 0.1) == pytest.approx(5.0, rel=1e-12)
        assert plain_excess_ratio(4, 0.1) == pytest.approx(80.0 / 3.0, rel=1e-12)


class TestValidationAndReport:
    def test_report_bundle(self):
        params = GiParameters(3, 2, 0.5)
        report = analytic_report(params)
        assert report.g_max == g_max(params)
        assert report.g_back == g_back(params)
        assert report.visibility == visibility(3, 2)
        assert report.var_back == var_g_back(params)
        assert report.snr == snr_thermal(params)

    def test_report_invariants_enforced(self):
        with pytest.raises(ValueError):
            AnalyticReport(g_max=1.0, g_back=2.0, visibility=0.1, var_back=1.0, snr=0.1)
        with pytest.raises(ValueError):
            AnalyticReport(g_max=2.0, g_back=1.0, visibility=1.5, var_back=1.0, snr=0.1)

    @pytest.mark.parametrize("order,modes,intensity", [(1, 1, 1.0), (2, 0, 1.0), (2, 1, 0.0)])
    def test_parameter_validation(self, order, modes, intensity):
        with pytest.raises(ValueError):
            GiParameters(order, modes, intensity)

    def test_order_overflow_guard(self):
        with pytest.raises(OrderOverflowError):
            visibility(21, 1)
        with pytest.raises(OrderOverflowError):
            GiParameters(25, 1, 1.0)
        assert snr_thermal(GiParameters(20, 1, 1.0)) > 0.0

    def test_spdc_validation(self):
        with pytest.raises(ValueError):
            SpdcParameters(-0.1, 1)
        with pytest.raises(ValueError):
            SpdcParameters(1.0, 0)
