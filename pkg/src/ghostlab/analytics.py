"""Closed-form results for n-th order correlations of thermal speckle.

Everything here is exact algebra on the mode model: correlation peak and
background levels, visibility, the variance of the background
correlation, the measurement signal-to-noise ratio with its low- and
high-intensity asymptotes, and the matching expressions for a
multimode two-photon (downconversion) source used as a comparison
point.  Monte Carlo counterparts live in :mod:`ghostlab.estimators`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial, sqrt

import numpy as np

from ghostlab.modes import OrderOverflowError

# Above this order the exact integer prefactors stop being representable
# alongside float64 intensity powers, so refuse rather than degrade.
MAX_ORDER = 20


class FormulaDomainError(ArithmeticError):
    """A closed-form expression was evaluated outside its valid domain."""


def _check_order(order: int) -> None:
    if order < 2:
        raise ValueError(f"correlation order must be >= 2, got {order}")
    if order > MAX_ORDER:
        raise OrderOverflowError(
            f"correlation order {order} exceeds supported maximum {MAX_ORDER}"
        )


@dataclass(frozen=True)
class GiParameters:
    """Parameters of one thermal ghost-imaging configuration.

    ``order`` is the correlation order n (n-1 reference detections plus
    the bucket), ``modes`` the number of speckle modes M collected by the
    bucket, ``mean_intensity`` the mean photon number per mode per
    exposure.
    """

    order: int
    modes: int
    mean_intensity: float

    def __post_init__(self) -> None:
        _check_order(self.order)
        if self.modes < 1:
            raise ValueError(f"modes must be >= 1, got {self.modes}")
        if not self.mean_intensity > 0.0:
            raise ValueError(
                f"mean_intensity must be positive, got {self.mean_intensity}"
            )


@dataclass(frozen=True)
class SpdcParameters:
    """Two-photon comparison source: mean photons per mode and mode count."""

    mean_photons: float
    modes: int

    def __post_init__(self) -> None:
        if self.mean_photons < 0.0:
            raise ValueError(
                f"mean_photons must be nonnegative, got {self.mean_photons}"
            )
        if self.modes < 1:
            raise ValueError(f"modes must be >= 1, got {self.modes}")


@dataclass(frozen=True)
class AnalyticReport:
    """Bundle of the closed-form quantities for one configuration."""

    g_max: float
    g_back: float
    visibility: float
    var_back: float
    snr: float

    def __post_init__(self) -> None:
        if not (self.g_max >= self.g_back > 0.0):
            raise ValueError("require g_max >= g_back > 0")
        if not (0.0 <= self.visibility < 1.0):
            raise ValueError("visibility must lie in [0, 1)")


def g_max(params: GiParameters) -> float:
    """Peak of the n-th order correlation: one reference mode inside the mask.

    Equals ``(n-1)! (M + n - 1) I^n``: the fully bunched same-mode term
    plus M-1 accidental cross terms.
    """
    n, m, i = params.order, params.modes, params.mean_intensity
    return factorial(n - 1) * (m + n - 1) * i**n


def g_back(params: GiParameters) -> float:
    """Background of the correlation: reference mode misses the mask.

    All M terms are accidental, giving ``(n-1)! M I^n``.
    """
    n, m, i = params.order, params.modes, params.mean_intensity
    return factorial(n - 1) * m * i**n


def visibility(order: int, modes: int) -> float:
    """Contrast ``(g_max - g_back) / (g_max + g_back)``.

    Reduces to the rational ``(n-1) / (2M + n - 1)``: raising the order
    raises contrast, adding modes buries the peak under background.
    """
    _check_order(order)
    if modes < 1:
        raise ValueError(f"modes must be >= 1, got {modes}")
    return (order - 1) / (2 * modes + order - 1)


def var_g_back(params: GiParameters) -> float:
    """Variance of the background correlation estimate for one trial.

    Derived from the moment algebra of independent exponential modes;
    the ``1/I`` ladder comes from shot noise on the photocounts.
    """
    n, m, i = params.order, params.modes, params.mean_intensity
    ladder = 0.0
    for j in range(n):
        ladder += (
            factorial(2 * n - j - 2)
            / (factorial(n - j - 1) ** 2 * factorial(j))
            * i ** (-j)
        )
    bracket = ladder * m * (m + 1 + 1.0 / i) - m**2
    return factorial(n - 1) ** 2 * i ** (2 * n) * bracket


def snr_thermal(params: GiParameters) -> float:
    """Single-trial signal-to-noise ratio of the correlation peak.

    The noise term collects every contribution of the photocount moment
    expansion: intensity fluctuations, shot noise, and their cross
    terms.  Multiplying by the square root of the number of trials gives
    the SNR of an averaged measurement.
    """
    n, m, i = params.order, params.modes, params.mean_intensity
    total = 0.0
    for j in range(n):
        coeff = (
            factorial(2 * n - j - 2)
            / (factorial(n - j - 1) ** 2 * factorial(j))
            * i ** (-j)
        )
        brace = (
            n**2 * (2 * n - j) * (2 * n - j - 1) / (n - j) ** 2
            + 2 * (m - 1) * n * (2 * n - j - 1) / (n - j)
            + 2 * m**2
            + (2 * m - 1) / i
        )
        total += coeff * brace
    total += n**2 / i**n
    total += 2 * (1 - m - n**2) / i
    total -= (m - 1) * (m + 4 * n - 1) + m**2 + 3 * n**2
    if not total > 0.0:
        raise FormulaDomainError(
            f"noise bracket is non-positive ({total}) for order={n} modes={m} "
            f"mean_intensity={i}"
        )
    return (n - 1) / sqrt(total)


def snr_low_intensity(params: GiParameters) -> float:
    """Shot-noise-dominated asymptote of the SNR, valid for I << 1.

    Keeping only the leading ``1/I^n`` terms of the noise bracket leaves
    ``(2M - 1 + n^2) / I^n`` under the root, so the SNR falls off as
    ``I^(n/2)``.
    """
    n, m, i = params.order, params.modes, params.mean_intensity
    return (n - 1) * i ** (n / 2.0) / sqrt(2 * m - 1 + n**2)


def snr_high_intensity(order: int, modes: int) -> float:
    """Intensity-independent SNR plateau reached for I >> 1.

    Only the fluctuation terms of the noise bracket survive; the bracket
    is an exact integer, evaluated as such before the root.
    """
    _check_order(order)
    if modes < 1:
        raise ValueError(f"modes must be >= 1, got {modes}")
    n, m = order, modes
    central = factorial(2 * n - 2) // factorial(n - 1) ** 2
    bracket = (
        2 * central * ((2 * n - 1) * (n + m - 1) + m**2)
        - 2 * (m - 1) * (m + 2 * n)
        - 3 * n**2
        - 1
    )
    if bracket <= 0:
        raise FormulaDomainError(
            f"noise bracket is non-positive ({bracket}) for order={n} modes={m}"
        )
    return (n - 1) / sqrt(bracket)


def snr_spdc(params: SpdcParameters) -> float:
    """Second-order SNR for a multimode two-photon (downconversion) source.

    With m mean photons per mode and M modes the bracket is quadratic in
    m; the ratio vanishes at m=0, peaks below one photon per mode, and
    decays toward the thermal plateau.
    """
    m, modes = params.mean_photons, params.modes
    p = 7 + 4 * modes
    q = 7 + 6 * modes + 2 * modes**2
    denom = 1.0 + p * m + q * m * m
    return sqrt(m * (m + 1.0)) / sqrt(denom)


def snr_spdc_limit(modes: int) -> float:
    """Large-m limit of the two-photon SNR: ``1 / sqrt(2M^2 + 6M + 7)``.

    Coincides exactly with the thermal high-intensity plateau at order 2,
    where the two-photon source has lost its nonclassical advantage.
    """
    if modes < 1:
        raise ValueError(f"modes must be >= 1, got {modes}")
    return 1.0 / sqrt(2 * modes**2 + 6 * modes + 7)


def spdc_peak(modes: int) -> tuple[float, float]:
    """Location and height of the two-photon SNR maximum over mean photons.

    Setting the derivative of the squared ratio to zero leaves the
    quadratic ``2M(M+1) m^2 - 2m - 1 = 0``, whose positive root is the
    peak location.
    """
    if modes < 1:
        raise ValueError(f"modes must be >= 1, got {modes}")
    gap = 2 * modes * (modes + 1)
    m_peak = (1.0 + sqrt(1.0 + gap)) / gap
    return m_peak, snr_spdc(SpdcParameters(mean_photons=m_peak, modes=modes))


@lru_cache(maxsize=None)
def _stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind, exact integer."""
    if k == n:
        return 1
    if k == 0 or k > n:
        return 0
    return k * _stirling2(n - 1, k) + _stirling2(n - 1, k - 1)


def ordering_coefficients(order: int) -> np.ndarray:
    """Expansion of the plain count power over falling-factorial powers.

    ``k^(n-1) = sum_j C_j k(k-1)...(k-j+1)`` with ``C_j`` the Stirling
    numbers of the second kind ``S(n-1, j)``; returned for j=1..n-1.
    The lower-order terms are the spurious same-detector coincidences
    that plain powers admit and normal ordering removes.
    """
    _check_order(order)
    return np.array(
        [float(_stirling2(order - 1, j)) for j in range(1, order)], dtype=np.float64
    )


def plain_excess_ratio(order: int, mean_intensity: float) -> float:
    """Relative excess of the plain-power statistic over the ordered one.

    For a thermal mode ``<k^(n-1)> = sum_j S(n-1,j) j! I^j`` while the
    ordered statistic averages to ``(n-1)! I^(n-1)``; the ratio minus one
    measures how much spurious background plain powers add.  Grows like
    ``1/I^(n-2)`` at low intensity and vanishes at high intensity.
    """
    _check_order(order)
    if not mean_intensity > 0.0:
        raise ValueError(f"mean_intensity must be positive, got {mean_intensity}")
    n, i = order, mean_intensity
    plain = 0.0
    for j in range(1, n):
        plain += _stirling2(n - 1, j) * factorial(j) * i**j
    ordered = factorial(n - 1) * i ** (n - 1)
    return plain / ordered - 1.0


def analytic_report(params: GiParameters) -> AnalyticReport:
    """All closed-form quantities for one configuration in one bundle."""
    return AnalyticReport(
        g_max=g_max(params),
        g_back=g_back(params),
        visibility=visibility(params.order, params.modes),
        var_back=var_g_back(params),
        snr=snr_thermal(params),
    )
