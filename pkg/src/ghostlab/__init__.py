"""ghostlab: desk-scale simulation and analytics for higher-order ghost imaging.

The package models a pseudothermal source as a set of statistically
independent speckle modes, provides closed-form contrast and
signal-to-noise expressions for n-th order intensity correlations,
verifies them by Monte Carlo, and reconstructs ghost images from
synthetic speckle frames.
"""

from ghostlab.modes import (
    ModeEnsembleSpec,
    ModeSample,
    OrderOverflowError,
    RngStream,
    falling_factorial,
    sample_photocounts,
    sample_thermal,
    thermal_moment,
)
from ghostlab.analytics import (
    AnalyticReport,
    FormulaDomainError,
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
from ghostlab.speckle import (
    GhostImage,
    GridTooSmallError,
    ImageMetrics,
    InsufficientFramesError,
    MaskGeometry,
    SpeckleConfig,
    bucket_signal,
    calibrate_autocorrelation,
    estimate_effective_modes,
    fit_visibility_model,
    generate_frames,
    measure_autocorrelation_fwhm,
    measure_metrics,
    reconstruct,
)
from ghostlab.framefile import read_frames, write_frames, write_pgm

__version__ = "0.1.0"

__all__ = [
    "AnalyticReport",
    "CorrelationStats",
    "DegenerateBatchError",
    "Estimate",
    "FormulaDomainError",
    "GhostImage",
    "GiParameters",
    "GridTooSmallError",
    "ImageMetrics",
    "InsufficientFramesError",
    "MaskGeometry",
    "ModeEnsembleSpec",
    "ModeSample",
    "OrderOverflowError",
    "Regime",
    "RngStream",
    "SpdcParameters",
    "SpeckleConfig",
    "TrialBatch",
    "analytic_report",
    "bucket_signal",
    "calibrate_autocorrelation",
    "estimate_cf",
    "estimate_effective_modes",
    "estimate_snr",
    "estimate_visibility",
    "falling_factorial",
    "fit_visibility_model",
    "g_back",
    "g_max",
    "generate_frames",
    "measure_autocorrelation_fwhm",
    "measure_metrics",
    "ordering_coefficients",
    "ordering_dominance",
    "plain_excess_ratio",
    "read_frames",
    "reconstruct",
    "sample_photocounts",
    "sample_thermal",
    "snr_high_intensity",
    "snr_low_intensity",
    "snr_spdc",
    "snr_spdc_limit",
    "snr_thermal",
    "spdc_peak",
    "thermal_moment",
    "var_g_back",
    "visibility",
    "write_frames",
    "write_pgm",
]
