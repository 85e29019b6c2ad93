"""Monte Carlo estimators for the n-th order correlation functions.

A run is a map-reduce over disjoint RNG streams: the trial count is
split into fixed batches, each batch draws from its own counter-based
stream and reduces to a handful of sums, and the batches are merged in
index order with compensated addition.  The partitioning depends only on
the trial count and mode count, never on the worker pool, so results are
bit-identical for any thread count.  Batch means double as the source of
standard errors.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ghostlab._accum import CompensatedSum, compensated_column_sum
from ghostlab.analytics import GiParameters
from ghostlab.modes import (
    ModeEnsembleSpec,
    RngStream,
    falling_factorial,
    sample_photocounts,
    sample_thermal,
)

# Cap on samples held in memory per batch; batches grow in number, not
# size, once trials * modes exceeds it.
_BATCH_ENTRY_BUDGET = 4_000_000


class DegenerateBatchError(ArithmeticError):
    """All trial statistics were identical; no noise scale exists."""


class Regime(str, Enum):
    """What the simulated detectors report.

    ``classical_intensity``: noiseless intensities, the semiclassical
    reference.  ``photocount_plain``: integer counts correlated as plain
    powers, which keeps same-detector self-coincidences.
    ``photocount_factorial``: integer counts correlated as falling
    factorials, the normally-ordered statistic a coincidence circuit
    realizes.
    """

    CLASSICAL_INTENSITY = "classical_intensity"
    PHOTOCOUNT_PLAIN = "photocount_plain"
    PHOTOCOUNT_FACTORIAL = "photocount_factorial"


@dataclass(frozen=True)
class TrialBatch:
    """One Monte Carlo job: configuration, trial count, regime, seed."""

    params: GiParameters
    trials: int
    regime: Regime
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trials < 2:
            raise ValueError(f"trials must be >= 2, got {self.trials}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")
        # Accept plain strings from configs.
        object.__setattr__(self, "regime", Regime(self.regime))


@dataclass(frozen=True)
class Estimate:
    """A point estimate with its batch-means standard error."""

    value: float
    std_error: float


@dataclass(frozen=True)
class CorrelationStats:
    """Estimates of the correlation peak, background, and noise terms.

    ``signal`` is ``g_max_hat - g_back_hat``; ``noise`` is the standard
    deviation of the single-trial peak-minus-background statistic, so
    ``snr_hat`` is the single-trial ratio.  ``std_errors`` maps each
    field name to its batch-means standard error.
    """

    g_max_hat: float
    g_back_hat: float
    var_max_hat: float
    var_back_hat: float
    cov_hat: float
    signal: float
    noise: float
    snr_hat: float
    visibility_hat: float
    std_errors: dict[str, float]


def _batch_layout(trials: int, n_modes: int) -> list[int]:
    """Batch sizes, fixed by the job parameters alone.

    At least 100 batches when the trial count allows it (for stable
    standard errors), more when needed to respect the memory budget;
    every batch keeps at least 2 trials so within-batch variances exist.
    """
    target = max(100, math.ceil(trials * n_modes / _BATCH_ENTRY_BUDGET))
    n_batches = max(1, min(trials // 2, target))
    base, extra = divmod(trials, n_batches)
    return [base + 1 if b < extra else base for b in range(n_batches)]


def _trial_statistics(batch: TrialBatch, b_index: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial peak and background statistics for one batch."""
    p = batch.params
    spec = ModeEnsembleSpec(mode_count_in_mask=p.modes, mean_intensity=p.mean_intensity)
    rng = RngStream(batch.seed, 2 * b_index)
    sample = sample_thermal(spec, rng, trials=size)
    n = p.order
    if batch.regime is Regime.CLASSICAL_INTENSITY:
        ints = sample.intensities
        bucket = compensated_column_sum(ints[:, 1:])
        x_max = ints[:, 1] ** (n - 1) * bucket
        x_back = ints[:, 0] ** (n - 1) * bucket
        return x_max, x_back
    sample = sample_photocounts(sample, RngStream(batch.seed, 2 * b_index + 1))
    counts = sample.counts
    bucket = counts[:, 1:].sum(axis=1).astype(np.float64)  # integer sum, exact
    if batch.regime is Regime.PHOTOCOUNT_FACTORIAL:
        # The reference detector is itself part of the bucket, so the
        # normally-ordered product must not count any reference photon
        # twice: with n-1 photons committed to the reference factor the
        # bucket factor has n-1 fewer to offer.
        x_max = falling_factorial(counts[:, 1], n - 1) * (bucket - (n - 1))
        x_back = falling_factorial(counts[:, 0], n - 1) * bucket
    else:
        ref_max = counts[:, 1].astype(np.float64)
        ref_back = counts[:, 0].astype(np.float64)
        x_max = ref_max ** (n - 1) * bucket
        x_back = ref_back ** (n - 1) * bucket
    return x_max, x_back


_SUM_FIELDS = 5  # s_max, s_back, s_max2, s_back2, s_cross


def _batch_reduce(batch: TrialBatch, b_index: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Reduce one batch to its raw sums and derived batch statistics."""
    x_max, x_back = _trial_statistics(batch, b_index, size)
    sums = np.array(
        [
            x_max.sum(),
            x_back.sum(),
            (x_max * x_max).sum(),
            (x_back * x_back).sum(),
            (x_max * x_back).sum(),
        ]
    )
    mean_max = x_max.mean()
    mean_back = x_back.mean()
    var_max = x_max.var(ddof=1)
    var_back = x_back.var(ddof=1)
    cov = float(np.cov(x_max, x_back, ddof=1)[0, 1])
    signal = mean_max - mean_back
    noise = math.sqrt(max(var_max + var_back - 2.0 * cov, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = signal / noise if noise > 0.0 else math.nan
        total = mean_max + mean_back
        vis = signal / total if total != 0.0 else math.nan
    derived = np.array([mean_max, mean_back, var_max, var_back, cov, signal, noise, snr, vis])
    return sums, derived


_DERIVED_KEYS = (
    "g_max",
    "g_back",
    "var_max",
    "var_back",
    "cov",
    "signal",
    "noise",
    "snr",
    "visibility",
)


def _run_batches(batch: TrialBatch, threads: int) -> tuple[np.ndarray, np.ndarray]:
    """Run all batches, merge sums in index order, collect batch stats."""
    p = batch.params
    n_modes = p.modes + 1
    sizes = _batch_layout(batch.trials, n_modes)
    results: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(sizes)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(_batch_reduce, batch, b, size): b
                for b, size in enumerate(sizes)
            }
            for future, b in futures.items():
                results[b] = future.result()
    else:
        for b, size in enumerate(sizes):
            results[b] = _batch_reduce(batch, b, size)
    merged = CompensatedSum(shape=(_SUM_FIELDS,))
    derived = np.empty((len(sizes), len(_DERIVED_KEYS)))
    for b, result in enumerate(results):
        assert result is not None
        merged.add(result[0])
        derived[b] = result[1]
    return np.asarray(merged.value), derived


def estimate_cf(batch: TrialBatch, threads: int = 1) -> CorrelationStats:
    """Estimate the correlation peak, background, and noise by Monte Carlo.

    Results depend only on the batch parameters and seed; the thread
    count changes the schedule, never the bits.
    """
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    sums, derived = _run_batches(batch, threads)
    t = batch.trials
    s_max, s_back, s_max2, s_back2, s_cross = sums
    g_max_hat = s_max / t
    g_back_hat = s_back / t
    var_max_hat = (s_max2 - s_max * s_max / t) / (t - 1)
    var_back_hat = (s_back2 - s_back * s_back / t) / (t - 1)
    cov_hat = (s_cross - s_max * s_back / t) / (t - 1)
    signal = g_max_hat - g_back_hat
    noise_sq = var_max_hat + var_back_hat - 2.0 * cov_hat
    noise = math.sqrt(max(noise_sq, 0.0))
    if noise == 0.0:
        raise DegenerateBatchError(
            "trial statistics have zero spread; no noise scale to estimate"
        )
    snr_hat = signal / noise
    visibility_hat = signal / (g_max_hat + g_back_hat)
    if derived.shape[0] >= 2:
        ses = np.nanstd(derived, axis=0, ddof=1) / math.sqrt(derived.shape[0])
    else:
        ses = np.full(len(_DERIVED_KEYS), math.nan)
    std_errors = dict(zip(_DERIVED_KEYS, (float(se) for se in ses)))
    return CorrelationStats(
        g_max_hat=float(g_max_hat),
        g_back_hat=float(g_back_hat),
        var_max_hat=float(var_max_hat),
        var_back_hat=float(var_back_hat),
        cov_hat=float(cov_hat),
        signal=float(signal),
        noise=float(noise),
        snr_hat=float(snr_hat),
        visibility_hat=float(visibility_hat),
        std_errors=std_errors,
    )


def estimate_visibility(batch: TrialBatch, threads: int = 1) -> Estimate:
    """Monte Carlo visibility with its standard error."""
    stats = estimate_cf(batch, threads=threads)
    return Estimate(value=stats.visibility_hat, std_error=stats.std_errors["visibility"])


def estimate_snr(batch: TrialBatch, threads: int = 1) -> Estimate:
    """Monte Carlo single-trial SNR with its standard error."""
    stats = estimate_cf(batch, threads=threads)
    return Estimate(value=stats.snr_hat, std_error=stats.std_errors["snr"])


def _dominance_batch(params: GiParameters, seed: int, b_index: int, size: int) -> np.ndarray:
    """Batch sums and means of the plain and ordered background statistics."""
    spec = ModeEnsembleSpec(mode_count_in_mask=params.modes, mean_intensity=params.mean_intensity)
    sample = sample_thermal(spec, RngStream(seed, 2 * b_index), trials=size)
    sample = sample_photocounts(sample, RngStream(seed, 2 * b_index + 1))
    counts = sample.counts
    n = params.order
    bucket = counts[:, 1:].sum(axis=1).astype(np.float64)
    ref = counts[:, 0]
    plain = ref.astype(np.float64) ** (n - 1) * bucket
    ordered = falling_factorial(ref, n - 1) * bucket
    return np.array([plain.sum(), ordered.sum(), plain.mean(), ordered.mean()])


def ordering_dominance(
    params: GiParameters, trials: int, seed: int = 0, threads: int = 1
) -> Estimate:
    """Measured relative excess of plain count powers over ordered ones.

    Correlates a reference detector outside the mask against the bucket
    both ways and returns ``plain / ordered - 1`` with a delta-method
    standard error from batch means.  The closed-form counterpart is
    :func:`ghostlab.analytics.plain_excess_ratio`.
    """
    if trials < 2:
        raise ValueError(f"trials must be >= 2, got {trials}")
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    sizes = _batch_layout(trials, params.modes + 1)
    results: list[np.ndarray | None] = [None] * len(sizes)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(_dominance_batch, params, seed, b, size): b
                for b, size in enumerate(sizes)
            }
            for future, b in futures.items():
                results[b] = future.result()
    else:
        for b, size in enumerate(sizes):
            results[b] = _dominance_batch(params, seed, b, size)
    merged = CompensatedSum(shape=(2,))
    batch_means = np.empty((len(sizes), 2))
    for b, result in enumerate(results):
        assert result is not None
        merged.add(result[:2])
        batch_means[b] = result[2:]
    s_plain, s_ordered = np.asarray(merged.value)
    if s_ordered == 0.0:
        raise DegenerateBatchError(
            "ordered statistic vanished on every trial; ratio is undefined"
        )
    num = s_plain / trials
    den = s_ordered / trials
    value = num / den - 1.0
    n_batches = len(sizes)
    if n_batches >= 2:
        cov = np.cov(batch_means.T, ddof=1) / n_batches
        var = (
            cov[0, 0] / den**2
            + num**2 * cov[1, 1] / den**4
            - 2.0 * num * cov[0, 1] / den**3
        )
        std_error = math.sqrt(max(float(var), 0.0))
    else:
        std_error = math.nan
    return Estimate(value=float(value), std_error=std_error)
