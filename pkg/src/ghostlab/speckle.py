"""Speckle-frame synthesis and n-th order ghost-image reconstruction.

Frames are fully developed speckle: a circular complex Gaussian field is
drawn in the Fourier domain, shaped by a Gaussian filter whose width
sets the speckle grain, and transformed back; the intensity at every
pixel is then exponentially distributed with the configured mean, and
the intensity autocorrelation is Gaussian with the configured FWHM.
A ghost image of order n is the frame average of ``I(r)^(n-1) * B``
with ``B`` the bucket signal behind a slit mask.

Accumulation is split into fixed 64-frame chunks merged in index order
with compensated addition, so a reconstruction is bit-identical however
the chunks are distributed over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.optimize import least_squares

from ghostlab._accum import CompensatedSum
from ghostlab.modes import RngStream

_CHUNK_FRAMES = 64
# Stream-id offsets for per-frame detector noise draws; frame synthesis
# itself uses stream ids equal to the frame index, far below these.
_CAMERA_NOISE_STREAM = 1 << 32
_BUCKET_NOISE_STREAM = 1 << 33

# Ratio of slit width to speckle FWHM per effective mode.  For ideal
# Gaussian speckle the mode count of a long slit is the slit length
# divided by roughly 1.06 FWHM; the default absorbs in addition the
# residual blur of a real imaging chain, and the fit routine treats it
# as a free parameter.
DEFAULT_MODE_SCALE = 1.19


class GridTooSmallError(ValueError):
    """The frame grid cannot hold even a few speckle grains."""


class InsufficientFramesError(ValueError):
    """A frame average needs at least two frames."""


class EmptyRegionError(ValueError):
    """A mask region contains no pixels."""


@dataclass(frozen=True)
class SpeckleConfig:
    """Synthesis parameters for one stack of speckle frames.

    ``grid`` is (width, height) in pixels; ``speckle_fwhm`` the full
    width at half maximum of the intensity autocorrelation in pixels.

    ``detector_noise`` is the standard deviation of additive Gaussian
    noise applied per pixel, independently in the camera arm and the
    bucket arm, when frames are detected by ``reconstruct_sweep``.  The
    default 0.0 leaves detection ideal.  ``generate_frames`` always
    yields the noiseless source frames.
    """

    grid: tuple[int, int] = (512, 512)
    speckle_fwhm: float = 30.0
    mean_intensity: float = 1.0
    frames: int = 5000
    seed: int = 0
    detector_noise: float = 0.0

    def __post_init__(self) -> None:
        width, height = self.grid
        if width < 1 or height < 1:
            raise ValueError(f"grid must be positive, got {self.grid}")
        if self.speckle_fwhm < 2.0:
            raise ValueError(
                f"speckle_fwhm must be >= 2 pixels to be resolvable, got {self.speckle_fwhm}"
            )
        if not self.mean_intensity > 0.0:
            raise ValueError(
                f"mean_intensity must be positive, got {self.mean_intensity}"
            )
        if self.frames < 2:
            raise InsufficientFramesError(
                f"frames must be >= 2, got {self.frames}"
            )
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")
        if self.detector_noise < 0.0:
            raise ValueError(
                f"detector_noise must be nonnegative, got {self.detector_noise}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape (height, width) of one frame."""
        return (self.grid[1], self.grid[0])


@dataclass(frozen=True)
class MaskGeometry:
    """Slit mask and background sampling region, in pixel coordinates.

    The slit is one pixel row tall: row ``slit_row``, columns
    ``slit_start`` to ``slit_start + slit_width``.  The background
    region is the half-open rectangle ``(row_start, row_stop,
    col_start, col_stop)`` and must not touch the slit.
    """

    slit_row: int
    slit_start: int
    slit_width: int
    background_region: tuple[int, int, int, int]

    def __post_init__(self) -> None:
        if self.slit_row < 0 or self.slit_start < 0:
            raise ValueError("slit position must be nonnegative")
        if self.slit_width < 1:
            raise ValueError(f"slit_width must be >= 1, got {self.slit_width}")
        r0, r1, c0, c1 = self.background_region
        if not (0 <= r0 < r1 and 0 <= c0 < c1):
            raise EmptyRegionError(
                f"background_region {self.background_region} is empty or inverted"
            )
        rows_hit = r0 <= self.slit_row < r1
        cols_hit = c0 < self.slit_start + self.slit_width and self.slit_start < c1
        if rows_hit and cols_hit:
            raise ValueError("background_region overlaps the slit")

    @classmethod
    def centered(
        cls,
        config: SpeckleConfig,
        slit_width: int,
        slit_row: int | None = None,
        clearance_fwhm: float = 3.0,
    ) -> "MaskGeometry":
        """Slit centered horizontally, background well below it.

        The background rectangle spans the full width and starts
        ``clearance_fwhm`` speckle widths under the slit row, far enough
        that its pixels are uncorrelated with the slit.
        """
        width, height = config.grid
        if slit_width > width:
            raise ValueError(
                f"slit_width {slit_width} exceeds grid width {width}"
            )
        row = height // 2 if slit_row is None else slit_row
        clearance = math.ceil(clearance_fwhm * config.speckle_fwhm)
        row_start = row + clearance
        if row_start >= height:
            raise ValueError(
                f"no room for a background region {clearance} px below row {row} "
                f"in a grid of height {height}"
            )
        return cls(
            slit_row=row,
            slit_start=(width - slit_width) // 2,
            slit_width=slit_width,
            background_region=(row_start, height, 0, width),
        )


@dataclass(frozen=True)
class GhostImage:
    """An order-n correlation image: frame average of ``I^(n-1) * B``."""

    order: int
    values: np.ndarray
    frames_used: int

    def __post_init__(self) -> None:
        if self.order < 2:
            raise ValueError(f"order must be >= 2, got {self.order}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got {values.ndim}-D")
        object.__setattr__(self, "values", values)
        if self.frames_used < 2:
            raise InsufficientFramesError(
                f"frames_used must be >= 2, got {self.frames_used}"
            )


@dataclass(frozen=True)
class ImageMetrics:
    """Contrast and noise figures read off one ghost image.

    ``snr_normalized`` is the sample SNR divided by the square root of
    the frame count, an intensive figure that stops depending on run
    length.  ``degenerate`` flags a zero noise estimate (for instance
    constant frames); the SNR fields are NaN in that case.
    ``effective_modes`` and ``g_n_calibration`` are filled in by
    pipelines that know the mask scale and the frame statistics.
    """

    visibility: float
    signal: float
    noise: float
    snr_sample: float
    snr_normalized: float
    degenerate: bool = False
    effective_modes: float | None = None
    g_n_calibration: tuple[float, ...] | None = None


def _check_mask(mask: MaskGeometry, shape: tuple[int, int]) -> None:
    height, width = shape
    if mask.slit_row >= height or mask.slit_start + mask.slit_width > width:
        raise ValueError(
            f"slit (row {mask.slit_row}, cols {mask.slit_start}.."
            f"{mask.slit_start + mask.slit_width}) falls outside a {width}x{height} frame"
        )
    r0, r1, c0, c1 = mask.background_region
    if r1 > height or c1 > width:
        raise ValueError(
            f"background_region {mask.background_region} falls outside a "
            f"{width}x{height} frame"
        )


def _spectral_filter(config: SpeckleConfig) -> tuple[np.ndarray, float]:
    """Gaussian Fourier filter and the deterministic intensity scale.

    The real-space field correlation is Gaussian with standard deviation
    ``a``; the intensity autocorrelation is its squared modulus, whose
    FWHM is ``2a*sqrt(2 ln 2)``.  The scale normalizes the mean
    intensity exactly, independent of grid size.
    """
    width, height = config.grid
    a = config.speckle_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    qx = 2.0 * math.pi * np.fft.fftfreq(width)
    qy = 2.0 * math.pi * np.fft.fftfreq(height)
    filt = np.exp(-0.5 * a * a * (qx[np.newaxis, :] ** 2 + qy[:, np.newaxis] ** 2))
    n_pix = width * height
    scale = math.sqrt(config.mean_intensity * n_pix * n_pix / float((filt * filt).sum()))
    return filt, scale


def _check_grid(config: SpeckleConfig) -> None:
    width, height = config.grid
    limit = 4.0 * config.speckle_fwhm
    if width < limit or height < limit:
        raise GridTooSmallError(
            f"grid {width}x{height} is smaller than 4 speckle widths "
            f"({limit:.0f} px) in at least one dimension"
        )


def _render_frame(
    config: SpeckleConfig, filt: np.ndarray, scale: float, index: int
) -> np.ndarray:
    """One intensity frame from the stream keyed by its frame index."""
    gen = RngStream(config.seed, index).generator()
    height, width = config.shape
    noise = gen.standard_normal((2, height, width))
    spectrum = (noise[0] + 1j * noise[1]) * (filt / math.sqrt(2.0))
    field = np.fft.ifft2(spectrum)
    return (field.real**2 + field.imag**2) * (scale * scale)


def generate_frames(config: SpeckleConfig) -> Iterator[np.ndarray]:
    """Yield the configured number of speckle frames.

    Each frame comes from its own counter-based stream, so frame ``k``
    is the same array no matter how many frames are consumed, skipped,
    or generated concurrently elsewhere.
    """
    _check_grid(config)
    filt, scale = _spectral_filter(config)
    for index in range(config.frames):
        yield _render_frame(config, filt, scale, index)


def bucket_signal(frame: np.ndarray, mask: MaskGeometry) -> float:
    """Total intensity the bucket detector collects behind the slit."""
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise ValueError(f"frame must be 2-D, got {frame.ndim}-D")
    _check_mask(mask, frame.shape)
    row = frame[mask.slit_row, mask.slit_start : mask.slit_start + mask.slit_width]
    return float(row.sum())


class _ChunkedAccumulator:
    """Plain sums within fixed 64-frame chunks, compensated merge across."""

    def __init__(self, shape: tuple[int, ...]) -> None:
        self._chunk = np.zeros(shape, dtype=np.float64)
        self._filled = 0
        self._merged = CompensatedSum(shape)

    def add(self, contribution: np.ndarray | float) -> None:
        self._chunk += contribution
        self._filled += 1
        if self._filled == _CHUNK_FRAMES:
            self.flush()

    def flush(self) -> None:
        if self._filled:
            self._merged.add(self._chunk)
            self._chunk = np.zeros_like(self._chunk)
            self._filled = 0

    @property
    def value(self) -> np.ndarray | float:
        self.flush()
        return self._merged.value


def _as_frame_iter(frames: Iterable[np.ndarray] | np.ndarray) -> Iterator[np.ndarray]:
    if isinstance(frames, np.ndarray):
        if frames.ndim != 3:
            raise ValueError(f"frame stack must be 3-D, got {frames.ndim}-D")
        return iter(frames)
    return iter(frames)


def reconstruct(
    frames: Iterable[np.ndarray] | np.ndarray, mask: MaskGeometry, order: int
) -> GhostImage:
    """Average ``I(r)^(n-1) * B`` over frames into an order-n ghost image."""
    if order < 2:
        raise ValueError(f"order must be >= 2, got {order}")
    acc: _ChunkedAccumulator | None = None
    count = 0
    for frame in _as_frame_iter(frames):
        frame = np.asarray(frame, dtype=np.float64)
        if acc is None:
            _check_mask(mask, frame.shape)
            acc = _ChunkedAccumulator(frame.shape)
        b = bucket_signal(frame, mask)
        # Successive multiplication, the same sequence the sweep driver
        # uses, so both paths produce bit-identical images.
        power_grid = frame
        for _ in range(order - 2):
            power_grid = power_grid * frame
        acc.add(power_grid * b)
        count += 1
    if acc is None or count < 2:
        raise InsufficientFramesError(f"need at least 2 frames, got {count}")
    values = np.asarray(acc.value) / count
    return GhostImage(order=order, values=values, frames_used=count)


@dataclass(frozen=True)
class SweepResult:
    """Everything one pass over a frame stack yields.

    ``images`` maps ``(order, mask_index)`` to the reconstruction;
    ``f_factors`` maps n to the measured autocorrelation calibration
    ``<I^n> / (n! <I>^n)``; ``saved_frames`` holds the first few frames
    for archiving.
    """

    images: dict[tuple[int, int], GhostImage]
    f_factors: dict[int, float]
    mean_intensity_hat: float
    saved_frames: list[np.ndarray] = field(default_factory=list)
    frames_used: int = 0


def _sweep_chunk(
    config: SpeckleConfig,
    filt: np.ndarray,
    scale: float,
    masks: Sequence[MaskGeometry],
    powers: Sequence[int],
    start: int,
    count: int,
    save_frames: int,
) -> tuple[dict[tuple[int, int], np.ndarray], dict[int, float], dict[int, np.ndarray]]:
    """Plain-sum accumulation of one chunk of frames.

    ``powers`` lists the exponents n-1 needed by the reconstructions;
    calibration moments go one exponent higher.
    """
    shape = config.shape
    max_power = max(powers) + 1
    images = {
        (p, j): np.zeros(shape, dtype=np.float64)
        for p in powers
        for j in range(len(masks))
    }
    moments = {k: 0.0 for k in range(1, max_power + 1)}
    saved: dict[int, np.ndarray] = {}
    for index in range(start, start + count):
        frame = _render_frame(config, filt, scale, index)
        if index < save_frames:
            saved[index] = frame
        camera = frame
        bucket_view = frame
        if config.detector_noise > 0.0:
            sigma = config.detector_noise
            camera = frame + sigma * RngStream(
                config.seed, _CAMERA_NOISE_STREAM + index
            ).generator().standard_normal(shape)
            bucket_view = frame + sigma * RngStream(
                config.seed, _BUCKET_NOISE_STREAM + index
            ).generator().standard_normal(shape)
        buckets = [bucket_signal(bucket_view, mask) for mask in masks]
        power_grid = camera
        for k in range(1, max_power + 1):
            if k > 1:
                power_grid = power_grid * camera
            moments[k] += float(power_grid.sum())
            if k in powers:
                for j, b in enumerate(buckets):
                    images[(k, j)] += power_grid * b
    return images, moments, saved


def reconstruct_sweep(
    config: SpeckleConfig,
    masks: Sequence[MaskGeometry],
    orders: Sequence[int],
    threads: int = 1,
    save_frames: int = 0,
) -> SweepResult:
    """Reconstruct every (order, mask) pair in one pass over the frames.

    Work is split into fixed chunks of frame indices handed to a worker
    pool; chunk results merge in index order with compensated addition,
    so the output is bit-identical for any ``threads``.  Also
    accumulates the intensity moments that calibrate the frame
    statistics against ideal thermal values.

    When ``config.detector_noise`` is positive, each frame is detected
    through two independently noisy arms: the camera arm feeds the
    per-pixel powers and the calibration moments, the bucket arm feeds
    the bucket sums.  Saved frames are always the noiseless source
    frames.
    """
    if not masks:
        raise ValueError("need at least one mask")
    orders = sorted(set(orders))
    if not orders:
        raise ValueError("need at least one order")
    if min(orders) < 2:
        raise ValueError(f"orders must be >= 2, got {min(orders)}")
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    _check_grid(config)
    for mask in masks:
        _check_mask(mask, config.shape)
    filt, scale = _spectral_filter(config)
    powers = sorted({n - 1 for n in orders})
    max_power = max(powers) + 1
    chunks = [
        (start, min(_CHUNK_FRAMES, config.frames - start))
        for start in range(0, config.frames, _CHUNK_FRAMES)
    ]

    def run(chunk: tuple[int, int]):
        return _sweep_chunk(
            config, filt, scale, masks, powers, chunk[0], chunk[1], save_frames
        )

    image_acc = {
        (p, j): CompensatedSum(config.shape) for p in powers for j in range(len(masks))
    }
    moment_acc = {k: CompensatedSum() for k in range(1, max_power + 1)}
    saved: dict[int, np.ndarray] = {}

    def merge(result) -> None:
        images, moments, chunk_saved = result
        for key, array in images.items():
            image_acc[key].add(array)
        for k, value in moments.items():
            moment_acc[k].add(value)
        saved.update(chunk_saved)

    # Merge chunk results as the in-order iterator yields them instead
    # of materializing all of them; a long sweep over many masks would
    # otherwise hold every chunk's full image set in memory at once.
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(run, chunks):
                merge(result)
    else:
        for chunk in chunks:
            merge(run(chunk))

    n_frames = config.frames
    n_pix = config.shape[0] * config.shape[1]
    mean_i = float(moment_acc[1].value) / (n_frames * n_pix)
    f_factors = {}
    for k in range(2, max_power + 1):
        moment_k = float(moment_acc[k].value) / (n_frames * n_pix)
        f_factors[k] = moment_k / (math.factorial(k) * mean_i**k)
    images_out = {}
    for n in orders:
        for j in range(len(masks)):
            values = np.asarray(image_acc[(n - 1, j)].value) / n_frames
            images_out[(n, j)] = GhostImage(order=n, values=values, frames_used=n_frames)
    return SweepResult(
        images=images_out,
        f_factors=f_factors,
        mean_intensity_hat=mean_i,
        saved_frames=[saved[i] for i in sorted(saved)],
        frames_used=n_frames,
    )


def measure_metrics(
    image: GhostImage,
    mask: MaskGeometry,
    noise_over_background: bool = False,
) -> ImageMetrics:
    """Contrast and noise of a ghost image against its mask regions.

    Signal is the mean over slit pixels minus the mean over background
    pixels.  Noise defaults to the standard deviation across the slit
    pixels (the spread of the reconstructed profile where the object is
    bright); setting ``noise_over_background`` reads it off the
    background region instead.
    """
    _check_mask(mask, image.values.shape)
    slit = image.values[mask.slit_row, mask.slit_start : mask.slit_start + mask.slit_width]
    r0, r1, c0, c1 = mask.background_region
    back = image.values[r0:r1, c0:c1].ravel()
    if slit.size == 0 or back.size == 0:
        raise EmptyRegionError("mask selects no pixels")
    mean_slit = float(slit.mean())
    mean_back = float(back.mean())
    signal = mean_slit - mean_back
    total = mean_slit + mean_back
    visibility = signal / total if total != 0.0 else 0.0
    if noise_over_background:
        noise = float(back.std(ddof=1)) if back.size > 1 else 0.0
    else:
        noise = float(slit.std(ddof=1)) if slit.size > 1 else 0.0
    degenerate = noise == 0.0
    snr_sample = signal / noise if not degenerate else math.nan
    snr_normalized = (
        snr_sample / math.sqrt(image.frames_used) if not degenerate else math.nan
    )
    return ImageMetrics(
        visibility=visibility,
        signal=signal,
        noise=noise,
        snr_sample=snr_sample,
        snr_normalized=snr_normalized,
        degenerate=degenerate,
    )


def estimate_effective_modes(
    mask: MaskGeometry, config: SpeckleConfig, mode_scale: float = DEFAULT_MODE_SCALE
) -> float:
    """Speckle modes the slit admits: width over (FWHM times mode scale)."""
    if not mode_scale > 0.0:
        raise ValueError(f"mode_scale must be positive, got {mode_scale}")
    return max(1.0, mask.slit_width / (config.speckle_fwhm * mode_scale))


def calibrate_autocorrelation(
    frames: Iterable[np.ndarray] | np.ndarray, order: int
) -> float:
    """Measured ``<I^n> / (n! <I>^n)`` over all pixels of all frames.

    Equals 1 for ideal single-mode thermal statistics; departures feed
    the calibration factors of the visibility model.  Constant frames
    give ``1/n!``.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    sum_i = _ChunkedAccumulator(())
    sum_in = _ChunkedAccumulator(())
    pixels = 0
    for frame in _as_frame_iter(frames):
        frame = np.asarray(frame, dtype=np.float64)
        sum_i.add(float(frame.sum()))
        sum_in.add(float((frame**order).sum()))
        pixels += frame.size
    if pixels == 0:
        raise InsufficientFramesError("no frames given")
    mean_i = float(sum_i.value) / pixels
    mean_in = float(sum_in.value) / pixels
    return mean_in / (math.factorial(order) * mean_i**order)


def measure_autocorrelation_fwhm(frames: Iterable[np.ndarray] | np.ndarray) -> float:
    """FWHM of the measured intensity autocorrelation, in pixels.

    Computes the circular spatial autocorrelation of every frame by
    FFT, averages, subtracts the uncorrelated baseline, and reads the
    half-maximum crossing along both axes by linear interpolation.
    """
    spectrum: CompensatedSum | None = None
    sum_i = 0.0
    count = 0
    shape: tuple[int, int] | None = None
    for frame in _as_frame_iter(frames):
        frame = np.asarray(frame, dtype=np.float64)
        if spectrum is None:
            shape = frame.shape
            spectrum = CompensatedSum(shape)
        transform = np.fft.fft2(frame)
        spectrum.add((transform * transform.conj()).real)
        sum_i += float(frame.mean())
        count += 1
    if spectrum is None or count < 2 or shape is None:
        raise InsufficientFramesError("need at least 2 frames")
    n_pix = shape[0] * shape[1]
    corr = np.fft.ifft2(np.asarray(spectrum.value) / count).real / n_pix
    mean_i = sum_i / count
    excess = corr / (mean_i * mean_i) - 1.0
    peak = excess[0, 0]
    if peak <= 0.0:
        raise ValueError("no intensity correlation peak; frames look uncorrelated")

    def half_crossing(cut: np.ndarray) -> float:
        half = 0.5 * peak
        below = np.nonzero(cut < half)[0]
        if below.size == 0:
            raise GridTooSmallError(
                "autocorrelation never falls to half maximum inside the grid"
            )
        k = int(below[0])
        if k == 0:
            return 0.5
        frac = (cut[k - 1] - half) / (cut[k - 1] - cut[k])
        return (k - 1) + float(frac)

    fwhm_x = 2.0 * half_crossing(excess[0, : shape[1] // 2])
    fwhm_y = 2.0 * half_crossing(excess[: shape[0] // 2, 0])
    return 0.5 * (fwhm_x + fwhm_y)


@dataclass(frozen=True)
class VisibilityFit:
    """Fit of measured visibilities to the calibrated mode model.

    The model is ``V(n, M) = (n F_n - F_(n-1)) / (n F_n + (2M-1) F_(n-1))``
    with ``M = max(1, slit_width / (fwhm * s_scale))``, ``F_1 = 1``, and
    the ``F_n`` and ``s_scale`` fitted.  The floor matches
    ``estimate_effective_modes``: a slit narrower than one speckle still
    admits one mode.
    """

    f_factors: dict[int, float]
    mode_scale: float
    predicted: np.ndarray
    max_rel_error: float

    def predict(self, order: int, slit_width: float, speckle_fwhm: float) -> float:
        f_hi = self.f_factors.get(order, 1.0)
        f_lo = self.f_factors.get(order - 1, 1.0)
        modes = max(1.0, slit_width / (speckle_fwhm * self.mode_scale))
        return (order * f_hi - f_lo) / (order * f_hi + (2.0 * modes - 1.0) * f_lo)


def fit_visibility_model(
    orders: Sequence[int],
    slit_widths: Sequence[float],
    visibilities: Sequence[float],
    speckle_fwhm: float,
) -> VisibilityFit:
    """Fit calibration factors and mode scale to measured visibilities.

    The three sequences are aligned records of one measurement each.
    Residuals are relative, so wide slits with small visibility count as
    much as narrow ones.
    """
    orders = np.asarray(orders, dtype=np.int64)
    widths = np.asarray(slit_widths, dtype=np.float64)
    values = np.asarray(visibilities, dtype=np.float64)
    if not (orders.size == widths.size == values.size) or orders.size == 0:
        raise ValueError("orders, slit_widths, visibilities must align and be nonempty")
    if np.any(values <= 0.0):
        raise ValueError("visibilities must be positive to fit relative residuals")
    fitted_orders = sorted({int(n) for n in orders if n >= 2})

    def unpack(theta: np.ndarray) -> tuple[dict[int, float], float]:
        factors = {1: 1.0}
        factors.update({n: float(t) for n, t in zip(fitted_orders, theta[:-1])})
        return factors, float(theta[-1])

    def residuals(theta: np.ndarray) -> np.ndarray:
        factors, scale = unpack(theta)
        modes = np.maximum(1.0, widths / (speckle_fwhm * scale))
        f_hi = np.array([factors.get(int(n), 1.0) for n in orders])
        f_lo = np.array([factors.get(int(n) - 1, 1.0) for n in orders])
        model = (orders * f_hi - f_lo) / (orders * f_hi + (2.0 * modes - 1.0) * f_lo)
        return model / values - 1.0

    theta0 = np.array([1.0] * len(fitted_orders) + [DEFAULT_MODE_SCALE])
    lower = np.array([0.2] * len(fitted_orders) + [0.5])
    upper = np.array([3.0] * len(fitted_orders) + [2.5])
    result = least_squares(residuals, theta0, bounds=(lower, upper))
    factors, scale = unpack(result.x)
    final = residuals(result.x)
    model = (final + 1.0) * values
    return VisibilityFit(
        f_factors={n: f for n, f in factors.items() if n >= 2},
        mode_scale=scale,
        predicted=model,
        max_rel_error=float(np.max(np.abs(final))),
    )
