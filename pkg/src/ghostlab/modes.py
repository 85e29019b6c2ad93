"""Discrete-mode statistical model of a pseudothermal source.

The field at the detection planes is reduced to a small set of
statistically independent speckle modes: ``M`` modes that fall inside
the object mask plus, optionally, one background mode that misses it.
Each mode carries an exponentially distributed instantaneous intensity
with a common mean, the classical limit of a single-mode chaotic field.
Photon counts are conditionally Poisson on top of those intensities,
which makes every marginal count Bose-Einstein distributed.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

# Factorials beyond this order overflow the exact-integer fast path and
# produce moments with no float64 headroom left for the intensity power.
MAX_MOMENT_ORDER = 40

_UINT64_MASK = (1 << 64) - 1


class OrderOverflowError(ValueError):
    """A requested moment or correlation order exceeds the supported range."""


@dataclass(frozen=True)
class ModeEnsembleSpec:
    """Mode layout and mean intensity of the source.

    ``mode_count_in_mask`` is the number of speckle modes the object mask
    admits; the background mode, present by default, is the reference
    mode that misses the mask entirely and carries pure accidental
    correlations.
    """

    mode_count_in_mask: int
    mean_intensity: float
    has_background_mode: bool = True

    def __post_init__(self) -> None:
        if self.mode_count_in_mask < 1:
            raise ValueError(
                f"mode_count_in_mask must be >= 1, got {self.mode_count_in_mask}"
            )
        if not self.mean_intensity > 0.0:
            raise ValueError(
                f"mean_intensity must be positive, got {self.mean_intensity}"
            )

    @property
    def n_modes(self) -> int:
        """Total number of sampled modes, background included."""
        return self.mode_count_in_mask + (1 if self.has_background_mode else 0)

    @property
    def mask_columns(self) -> slice:
        """Column slice of a sample array that holds the mask modes."""
        return slice(1, None) if self.has_background_mode else slice(0, None)


@dataclass(frozen=True)
class RngStream:
    """Handle for one independent, reproducible random stream.

    Streams are realized with the Philox counter-based generator keyed by
    ``(seed, stream_id)``, so any (seed, stream) pair can be regenerated
    bit-identically in isolation.  Workers that partition a job simply
    take disjoint stream ids; no jumping or state hand-off is involved.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be nonnegative")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array(
            [self.seed & _UINT64_MASK, self.stream_id & _UINT64_MASK],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def stream(self, stream_id: int) -> "RngStream":
        """Sibling stream under the same seed."""
        return RngStream(self.seed, stream_id)


@dataclass(frozen=True)
class ModeSample:
    """A stack of mode realizations.

    ``intensities`` has shape ``(trials, n_modes)``; row ``t`` is one
    realization of the instantaneous intensity vector.  When the sample
    has been pushed through photodetection, ``counts`` holds the matching
    integer photocounts and is ``None`` otherwise.  With a background
    mode present, column 0 is the background and columns 1.. are the
    mask modes.
    """

    intensities: np.ndarray
    counts: np.ndarray | None = None

    def __post_init__(self) -> None:
        ints = np.asarray(self.intensities, dtype=np.float64)
        if ints.ndim != 2:
            raise ValueError(f"intensities must be 2-D (trials, modes), got {ints.ndim}-D")
        if not np.all(ints >= 0.0):
            raise ValueError("intensities must be nonnegative")
        object.__setattr__(self, "intensities", ints)
        if self.counts is not None:
            counts = np.asarray(self.counts)
            if counts.shape != ints.shape:
                raise ValueError(
                    f"counts shape {counts.shape} does not match intensities {ints.shape}"
                )
            if not np.issubdtype(counts.dtype, np.integer):
                raise ValueError("counts must be integers")
            if not np.all(counts >= 0):
                raise ValueError("counts must be nonnegative")
            object.__setattr__(self, "counts", counts)

    @property
    def trials(self) -> int:
        return self.intensities.shape[0]


def sample_thermal(spec: ModeEnsembleSpec, rng: RngStream, trials: int = 1) -> ModeSample:
    """Draw i.i.d. exponential intensity vectors for the ensemble.

    Uses the inverse transform ``-I*log1p(-u)`` on uniform draws, which
    maps u=0 to intensity 0 and keeps the tail exact in float64.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    gen = rng.generator()
    u = gen.random((trials, spec.n_modes))
    intensities = -spec.mean_intensity * np.log1p(-u)
    return ModeSample(intensities=intensities)


def sample_photocounts(sample: ModeSample, rng: RngStream) -> ModeSample:
    """Add conditionally Poisson photocounts to an intensity sample.

    Pass a stream distinct from the one that produced the intensities;
    a Philox stream restarts from its origin every time a generator is
    built from it.
    """
    if sample.counts is not None:
        raise ValueError("sample already carries photocounts")
    gen = rng.generator()
    counts = gen.poisson(sample.intensities).astype(np.int64)
    return ModeSample(intensities=sample.intensities, counts=counts)


def thermal_moment(l: int, m: int, same_mode: bool, mean_intensity: float) -> float:
    """Closed-form mixed intensity moment ``<I_k^l I_k'^m>``.

    For one thermal mode the moments are ``(l+m)! I^(l+m)`` when both
    powers hit the same mode and ``l! m! I^(l+m)`` when the modes differ
    and factorize.  Orders above ``MAX_MOMENT_ORDER`` are refused rather
    than silently degraded.
    """
    if l < 0 or m < 0:
        raise ValueError("moment orders must be nonnegative")
    if l + m > MAX_MOMENT_ORDER:
        raise OrderOverflowError(
            f"combined moment order {l + m} exceeds supported maximum {MAX_MOMENT_ORDER}"
        )
    if not mean_intensity > 0.0:
        raise ValueError(f"mean_intensity must be positive, got {mean_intensity}")
    if same_mode:
        combinatorial = factorial(l + m)
    else:
        combinatorial = factorial(l) * factorial(m)
    return float(combinatorial) * mean_intensity ** (l + m)


def falling_factorial(values: np.ndarray, depth: int) -> np.ndarray:
    """Elementwise falling factorial ``v (v-1) ... (v-depth+1)``.

    ``depth=0`` gives ones.  The product is accumulated in float64; for
    photocounts this is the normally-ordered detection statistic, zero
    whenever the count is below ``depth``.
    """
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    v = np.asarray(values, dtype=np.float64)
    out = np.ones_like(v)
    for j in range(depth):
        out = out * (v - j)
    return out
