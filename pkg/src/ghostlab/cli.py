"""Command-line reports: closed forms, Monte Carlo checks, ghost images.

Four commands share a JSON config file and a common output layout:
``analytic`` sweeps the closed-form expressions, ``mc`` verifies them by
Monte Carlo and flags disagreements in sigma units, ``image`` runs the
speckle-frame pipeline end to end, and ``selftest`` runs a reduced
deterministic version of everything with pass/fail gates.

Every CSV starts with ``#`` comment lines recording the package
version, command, seed, and the resolved config, so a result file is
self-describing.  Floats are written with ``repr``, which round-trips
bit-exactly; rerunning a command with the same config, seed, and
version rewrites byte-identical files for any ``--threads`` value.
Wall-clock timings go to a separate ``timing.csv`` that is excluded
from that guarantee.
"""

from __future__ import annotations

import argparse
import difflib
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

import ghostlab
from ghostlab import figures
from ghostlab.analytics import (
    GiParameters,
    SpdcParameters,
    analytic_report,
    plain_excess_ratio,
    snr_high_intensity,
    snr_low_intensity,
    snr_spdc,
    snr_spdc_limit,
    snr_thermal,
    spdc_peak,
    visibility,
)
from ghostlab.estimators import (
    Regime,
    TrialBatch,
    estimate_cf,
    ordering_dominance,
)
from ghostlab.framefile import write_frames, write_pgm
from ghostlab.speckle import (
    MaskGeometry,
    SpeckleConfig,
    estimate_effective_modes,
    fit_visibility_model,
    measure_metrics,
    reconstruct_sweep,
)

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_CONFIG_ERROR = 2


class ConfigError(ValueError):
    """The config file could not be parsed or validated."""


def _log_intensities(lo: float, hi: float, points: int) -> list[float]:
    return [float(f"{v:.6g}") for v in np.logspace(math.log10(lo), math.log10(hi), points)]


@dataclass
class AnalyticSection:
    orders: list[int] = field(default_factory=lambda: [2, 3, 4])
    modes: list[int] = field(default_factory=lambda: [1, 10])
    intensities: list[float] = field(default_factory=lambda: _log_intensities(1e-3, 1e3, 25))
    spdc_modes: list[int] = field(default_factory=lambda: [1, 10])
    spdc_photons: list[float] = field(default_factory=lambda: _log_intensities(1e-3, 10.0, 25))


@dataclass
class McSection:
    orders: list[int] = field(default_factory=lambda: [2, 3])
    modes: list[int] = field(default_factory=lambda: [1, 10])
    intensities: list[float] = field(default_factory=lambda: [0.1, 1.0, 10.0])
    regimes: list[str] = field(
        default_factory=lambda: ["classical_intensity", "photocount_factorial"]
    )
    trials: int = 1_000_000
    flag_threshold: float = 4.0


@dataclass
class ImageSection:
    grid: list[int] = field(default_factory=lambda: [512, 512])
    speckle_fwhm: float = 30.0
    mean_intensity: float = 1.0
    frames: int = 5000
    orders: list[int] = field(default_factory=lambda: [2, 3, 4])
    slit_widths: list[int] = field(
        default_factory=lambda: [36, 71, 107, 143, 214, 286, 357, 428]
    )
    slit_row: int | None = None
    save_frames: int = 4
    noise_over_background: bool = False
    detector_noise: float = 0.0
    mode_scale: float = 1.19
    export_images: bool = True


@dataclass
class RootConfig:
    analytic: AnalyticSection = field(default_factory=AnalyticSection)
    mc: McSection = field(default_factory=McSection)
    image: ImageSection = field(default_factory=ImageSection)
    seed: int = 0
    threads: int | None = None


def _reject_unknown(given: Mapping[str, Any], known: Sequence[str], where: str) -> None:
    for key in given:
        if key not in known:
            hint = difflib.get_close_matches(key, known, n=1)
            suffix = f" (did you mean {hint[0]!r}?)" if hint else ""
            raise ConfigError(f"{where}{key}: unknown field{suffix}")


def _build_section(cls, data: Mapping[str, Any], where: str):
    known = [f.name for f in fields(cls)]
    _reject_unknown(data, known, where)
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where.rstrip('.')}: {exc}") from exc


def load_config(path: str | Path | None) -> RootConfig:
    """Load and strictly validate a JSON config; defaults when absent."""
    if path is None:
        return RootConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    known = [f.name for f in fields(RootConfig)]
    _reject_unknown(data, known, f"{path}: ")
    sections = {}
    for name, cls in (("analytic", AnalyticSection), ("mc", McSection), ("image", ImageSection)):
        if name in data:
            if not isinstance(data[name], dict):
                raise ConfigError(f"{path}: {name} must be a JSON object")
            sections[name] = _build_section(cls, data[name], f"{path}: {name}.")
    cfg = RootConfig(**sections)
    if "seed" in data:
        if not isinstance(data["seed"], int) or data["seed"] < 0:
            raise ConfigError(f"{path}: seed must be a nonnegative integer")
        cfg.seed = data["seed"]
    if "threads" in data:
        if not isinstance(data["threads"], int) or data["threads"] < 1:
            raise ConfigError(f"{path}: threads must be a positive integer")
        cfg.threads = data["threads"]
    return cfg


def _resolve_threads(flag: int | None, cfg: RootConfig) -> int:
    if flag is not None:
        if flag < 1:
            raise ConfigError(f"--threads must be >= 1, got {flag}")
        return flag
    env = os.environ.get("GHOSTLAB_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"GHOSTLAB_THREADS={env!r} is not an integer") from exc
        if value < 1:
            raise ConfigError(f"GHOSTLAB_THREADS must be >= 1, got {value}")
        return value
    if cfg.threads is not None:
        return cfg.threads
    return 1


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def _write_csv(
    path: Path,
    command: str,
    seed: int,
    section: Mapping[str, Any],
    columns: Sequence[str],
    rows: Sequence[Mapping[str, Any]],
) -> None:
    lines = [
        f"# ghostlab {ghostlab.__version__}",
        f"# command = {command}",
        f"# seed = {seed}",
        f"# config = {json.dumps(section, sort_keys=True, separators=(',', ':'))}",
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(_fmt(row.get(col)) for col in columns))
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path} ({len(rows)} rows)")


def _write_timing(out: Path, command: str, seconds: float) -> None:
    path = out / "timing.csv"
    lines = ["command,wall_seconds"]
    if path.exists():
        old = path.read_text().splitlines()
        lines += [l for l in old[1:] if l and not l.startswith(f"{command},")]
    lines.append(f"{command},{seconds:.3f}")
    path.write_text("\n".join(lines) + "\n")


def cmd_analytic(cfg: RootConfig, out: Path, seed: int, render: bool) -> int:
    """Sweep the closed forms over the configured grid."""
    sec = cfg.analytic
    rows = []
    for order in sec.orders:
        for modes in sec.modes:
            for intensity in sec.intensities:
                params = GiParameters(order=order, modes=modes, mean_intensity=intensity)
                report = analytic_report(params)
                rows.append(
                    {
                        "order": order,
                        "modes": modes,
                        "mean_intensity": intensity,
                        "g_max": report.g_max,
                        "g_back": report.g_back,
                        "visibility": report.visibility,
                        "var_back": report.var_back,
                        "snr": report.snr,
                        "snr_low": snr_low_intensity(params),
                        "snr_high": snr_high_intensity(order, modes),
                        "plain_excess": plain_excess_ratio(order, intensity),
                    }
                )
    columns = [
        "order", "modes", "mean_intensity", "g_max", "g_back", "visibility",
        "var_back", "snr", "snr_low", "snr_high", "plain_excess",
    ]
    _write_csv(out / "analytic.csv", "analytic", seed, asdict(sec), columns, rows)

    spdc_rows = []
    for modes in sec.spdc_modes:
        limit = snr_spdc_limit(modes)
        for photons in sec.spdc_photons:
            spdc_rows.append(
                {
                    "modes": modes,
                    "mean_photons": photons,
                    "snr_spdc": snr_spdc(SpdcParameters(mean_photons=photons, modes=modes)),
                    "snr_limit": limit,
                }
            )
    _write_csv(
        out / "spdc.csv", "analytic", seed, asdict(sec),
        ["modes", "mean_photons", "snr_spdc", "snr_limit"], spdc_rows,
    )
    peak_rows = []
    for modes in sec.spdc_modes:
        m_peak, s_peak = spdc_peak(modes)
        peak_rows.append({"modes": modes, "mean_photons_peak": m_peak, "snr_peak": s_peak})
    _write_csv(
        out / "spdc_peak.csv", "analytic", seed, asdict(sec),
        ["modes", "mean_photons_peak", "snr_peak"], peak_rows,
    )
    if render:
        figures.save_snr_vs_intensity(rows, out / "snr_vs_intensity.png")
        figures.save_spdc_comparison(rows, spdc_rows, out / "spdc_comparison.png")
        print(f"wrote {out / 'snr_vs_intensity.png'}, {out / 'spdc_comparison.png'}")
    return EXIT_OK


def _mc_flags(row: Mapping[str, Any], threshold: float) -> tuple[bool, list[str]]:
    """Check every populated flag column; returns (passed, failed names)."""
    failed = []
    for name in ("g_max_flag", "g_back_flag", "visibility_flag", "var_back_flag", "snr_flag"):
        flag = row.get(name)
        if flag is None:
            continue
        if not math.isfinite(flag) or flag > threshold:
            failed.append(name)
    return not failed, failed


def cmd_montecarlo(
    cfg: RootConfig, out: Path, seed: int, threads: int, render: bool
) -> int:
    """Monte Carlo sweep with sigma-distance flags against the closed forms."""
    sec = cfg.mc
    rows = []
    any_failed = False
    for order in sec.orders:
        for modes in sec.modes:
            for intensity in sec.intensities:
                for regime_name in sec.regimes:
                    try:
                        regime = Regime(regime_name)
                    except ValueError as exc:
                        raise ConfigError(
                            f"mc.regimes: {regime_name!r} is not a regime "
                            f"(choose from {[r.value for r in Regime]})"
                        ) from exc
                    params = GiParameters(order=order, modes=modes, mean_intensity=intensity)
                    batch = TrialBatch(
                        params=params, trials=sec.trials, regime=regime, seed=seed
                    )
                    stats = estimate_cf(batch, threads=threads)
                    row: dict[str, Any] = {
                        "order": order,
                        "modes": modes,
                        "mean_intensity": intensity,
                        "regime": regime.value,
                        "trials": sec.trials,
                        "g_max_hat": stats.g_max_hat,
                        "g_max_se": stats.std_errors["g_max"],
                        "g_back_hat": stats.g_back_hat,
                        "g_back_se": stats.std_errors["g_back"],
                        "var_back_hat": stats.var_back_hat,
                        "var_back_se": stats.std_errors["var_back"],
                        "snr_hat": stats.snr_hat,
                        "snr_se": stats.std_errors["snr"],
                        "visibility_hat": stats.visibility_hat,
                        "visibility_se": stats.std_errors["visibility"],
                    }
                    report = analytic_report(params)
                    row["g_max"] = report.g_max
                    row["g_back"] = report.g_back
                    row["visibility"] = report.visibility
                    row["var_back"] = report.var_back
                    row["snr"] = report.snr
                    # Plain powers deliberately deviate from the ordered
                    # closed forms, so they carry no agreement flags; the
                    # photocount variance and SNR forms apply only to the
                    # normally-ordered statistic.
                    if regime is not Regime.PHOTOCOUNT_PLAIN:
                        row["g_max_flag"] = _sigma(stats.g_max_hat, report.g_max, row["g_max_se"])
                        row["g_back_flag"] = _sigma(stats.g_back_hat, report.g_back, row["g_back_se"])
                        row["visibility_flag"] = _sigma(
                            stats.visibility_hat, report.visibility, row["visibility_se"]
                        )
                    if regime is Regime.PHOTOCOUNT_FACTORIAL:
                        row["var_back_flag"] = _sigma(
                            stats.var_back_hat, report.var_back, row["var_back_se"]
                        )
                        row["snr_flag"] = _sigma(stats.snr_hat, report.snr, row["snr_se"])
                    passed, failed = _mc_flags(row, sec.flag_threshold)
                    if not passed:
                        any_failed = True
                        print(
                            f"FLAG n={order} M={modes} I={intensity:g} {regime.value}: "
                            + ", ".join(failed),
                            file=sys.stderr,
                        )
                    rows.append(row)
    columns = [
        "order", "modes", "mean_intensity", "regime", "trials",
        "g_max_hat", "g_max_se", "g_max", "g_max_flag",
        "g_back_hat", "g_back_se", "g_back", "g_back_flag",
        "visibility_hat", "visibility_se", "visibility", "visibility_flag",
        "var_back_hat", "var_back_se", "var_back", "var_back_flag",
        "snr_hat", "snr_se", "snr", "snr_flag",
    ]
    _write_csv(out / "mc.csv", "mc", seed, asdict(sec), columns, rows)
    if render:
        comparable = [r for r in rows if r.get("snr_flag") is not None]
        if comparable:
            figures.save_mc_agreement(comparable, out / "mc_agreement.png")
            print(f"wrote {out / 'mc_agreement.png'}")
    return EXIT_GATE_FAILED if any_failed else EXIT_OK


def _sigma(measured: float, expected: float, se: float) -> float:
    if se > 0.0 and math.isfinite(se):
        return abs(measured - expected) / se
    return math.inf if measured != expected else 0.0


def cmd_image(
    cfg: RootConfig, out: Path, seed: int, threads: int, render: bool
) -> int:
    """Full speckle pipeline: frames, reconstructions, metrics, fit."""
    sec = cfg.image
    config = SpeckleConfig(
        grid=(sec.grid[0], sec.grid[1]),
        speckle_fwhm=sec.speckle_fwhm,
        mean_intensity=sec.mean_intensity,
        frames=sec.frames,
        seed=seed,
        detector_noise=sec.detector_noise,
    )
    masks = [
        MaskGeometry.centered(config, width, slit_row=sec.slit_row)
        for width in sec.slit_widths
    ]
    sweep = reconstruct_sweep(
        config, masks, sec.orders, threads=threads, save_frames=sec.save_frames
    )
    rows = []
    for order in sorted(set(sec.orders)):
        for j, (width, mask) in enumerate(zip(sec.slit_widths, masks)):
            image = sweep.images[(order, j)]
            metrics = measure_metrics(
                image, mask, noise_over_background=sec.noise_over_background
            )
            rows.append(
                {
                    "order": order,
                    "slit_width": width,
                    "effective_modes": estimate_effective_modes(
                        mask, config, mode_scale=sec.mode_scale
                    ),
                    "visibility": metrics.visibility,
                    "signal": metrics.signal,
                    "noise": metrics.noise,
                    "snr_sample": metrics.snr_sample,
                    "snr_normalized": metrics.snr_normalized,
                    "degenerate": metrics.degenerate,
                    "f_lo": sweep.f_factors.get(order - 1, 1.0),
                    "f_hi": sweep.f_factors.get(order, math.nan),
                }
            )

    fit = None
    fittable = [r for r in rows if r["visibility"] > 0.0]
    n_params = len({r["order"] for r in fittable}) + 1
    if len(fittable) > n_params:
        fit = fit_visibility_model(
            [r["order"] for r in fittable],
            [float(r["slit_width"]) for r in fittable],
            [r["visibility"] for r in fittable],
            sec.speckle_fwhm,
        )
        predicted = dict(
            zip(((r["order"], r["slit_width"]) for r in fittable), fit.predicted)
        )
        for row in rows:
            model = predicted.get((row["order"], row["slit_width"]))
            row["visibility_model"] = model
            row["rel_error"] = (
                row["visibility"] / model - 1.0 if model else math.nan
            )
    columns = [
        "order", "slit_width", "effective_modes", "visibility", "signal", "noise",
        "snr_sample", "snr_normalized", "degenerate", "f_lo", "f_hi",
        "visibility_model", "rel_error",
    ]
    _write_csv(out / "image_metrics.csv", "image", seed, asdict(sec), columns, rows)

    fit_rows = []
    if fit is not None:
        for order in sorted(fit.f_factors):
            fit_rows.append({"parameter": f"f_{order}", "value": fit.f_factors[order]})
        fit_rows.append({"parameter": "mode_scale", "value": fit.mode_scale})
        fit_rows.append({"parameter": "max_rel_error", "value": fit.max_rel_error})
    _write_csv(
        out / "image_fit.csv", "image", seed, asdict(sec),
        ["parameter", "value"], fit_rows,
    )

    if sec.save_frames > 0 and sweep.saved_frames:
        write_frames(out / "frames.gifr", sweep.saved_frames)
        print(f"wrote {out / 'frames.gifr'} ({len(sweep.saved_frames)} frames)")
    if sec.export_images:
        for (order, j), image in sorted(sweep.images.items()):
            width = sec.slit_widths[j]
            stem = f"ghost_n{order}_w{width:04d}"
            write_frames(out / f"{stem}.gifr", [image.values])
            write_pgm(out / f"{stem}.pgm", image.values)
        print(f"wrote {len(sweep.images)} ghost images (.gifr, .pgm)")

    if render:
        fit_curve = [
            {
                "order": r["order"],
                "effective_modes": r["effective_modes"],
                "visibility_model": r.get("visibility_model", math.nan),
            }
            for r in rows
            if r.get("visibility_model") is not None
        ]
        figures.save_visibility_vs_modes(rows, fit_curve, out / "visibility_vs_modes.png")
        figures.save_snr_vs_modes(rows, out / "snr_vs_modes.png")
        mid = len(sec.slit_widths) // 2
        profiles = []
        for order in sorted(set(sec.orders)):
            image = sweep.images[(order, mid)]
            mask = masks[mid]
            r0, r1, c0, c1 = mask.background_region
            back = float(image.values[r0:r1, c0:c1].mean())
            profile = image.values[mask.slit_row, :] - back
            peak = float(profile.max())
            if peak > 0.0:
                profile = profile / peak
            profiles.append(
                {"order": order, "slit_width": sec.slit_widths[mid], "profile": profile}
            )
        figures.save_ghost_profiles(profiles, out / "ghost_profiles.png")
        print(f"wrote {out / 'visibility_vs_modes.png'}, {out / 'snr_vs_modes.png'}, "
              f"{out / 'ghost_profiles.png'}")
    return EXIT_OK


def _selftest_config() -> RootConfig:
    """Fixed reduced configuration; small enough for tens of seconds."""
    return RootConfig(
        analytic=AnalyticSection(
            orders=[2, 3, 4],
            modes=[1, 10],
            intensities=[1e-6, 1e-3, 0.1, 1.0, 10.0, 1e3, 1e6],
            spdc_modes=[1, 10],
            spdc_photons=_log_intensities(1e-3, 10.0, 13),
        ),
        mc=McSection(
            orders=[2, 3],
            modes=[1],
            intensities=[1.0, 10.0],
            regimes=["classical_intensity", "photocount_factorial"],
            trials=200_000,
            flag_threshold=4.5,
        ),
        image=ImageSection(
            grid=[256, 128],
            speckle_fwhm=12.0,
            mean_intensity=1.0,
            frames=400,
            orders=[2, 3, 4],
            slit_widths=[15, 43, 86],
            slit_row=None,
            save_frames=3,
            mode_scale=1.19,
            export_images=True,
        ),
    )


def _hash_artifacts(out: Path) -> list[tuple[str, str]]:
    """SHA-256 of every deterministic artifact, sorted by name."""
    entries = []
    for path in sorted(out.iterdir()):
        if path.name in ("timing.csv", "hashes.csv") or path.suffix == ".png":
            continue
        if path.suffix not in (".csv", ".gifr", ".pgm"):
            continue
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        entries.append((path.name, digest))
    return entries


def cmd_selftest(out: Path, seed: int, threads: int) -> int:
    """Reduced deterministic run of every pipeline with pass/fail gates."""
    cfg = _selftest_config()
    checks: list[tuple[str, bool, str]] = []

    def gate(name: str, passed: bool, detail: str) -> None:
        checks.append((name, passed, detail))
        print(f"[{'ok' if passed else 'FAIL'}] {name}: {detail}")

    # Closed-form identities.
    gate(
        "visibility-single-mode",
        visibility(2, 1) == 1 / 3 and visibility(3, 1) == 1 / 2 and visibility(4, 1) == 3 / 5,
        "V(2)=1/3 V(3)=1/2 V(4)=3/5 at M=1",
    )
    worst = max(
        abs(snr_high_intensity(2, m) - snr_spdc_limit(m)) for m in range(1, 101)
    )
    gate(
        "high-intensity-limit-coincidence",
        worst <= 1e-12,
        f"max |thermal n=2 plateau - two-photon limit| = {worst:.2e} over M=1..100",
    )
    asym_ok = True
    details = []
    for order in (2, 3, 4):
        for modes in (1, 10):
            low = snr_low_intensity(GiParameters(order, modes, 1e-6))
            full_low = snr_thermal(GiParameters(order, modes, 1e-6))
            high = snr_high_intensity(order, modes)
            full_high = snr_thermal(GiParameters(order, modes, 1e6))
            rel_low = abs(full_low / low - 1.0)
            rel_high = abs(full_high / high - 1.0)
            asym_ok &= rel_low < 0.01 and rel_high < 0.001
            details.append(f"n={order} M={modes}: {rel_low:.1e}/{rel_high:.1e}")
    gate("snr-asymptotes", asym_ok, "; ".join(details))

    cmd_analytic(cfg, out, seed, render=True)

    # Monte Carlo agreement.
    mc_exit = cmd_montecarlo(cfg, out, seed, threads, render=False)
    gate(
        "mc-agreement",
        mc_exit == EXIT_OK,
        f"all flags <= {cfg.mc.flag_threshold} sigma at {cfg.mc.trials} trials",
    )

    # Thread-count invariance of the Monte Carlo reduction.
    batch = TrialBatch(
        params=GiParameters(2, 1, 1.0),
        trials=50_000,
        regime=Regime.PHOTOCOUNT_FACTORIAL,
        seed=seed,
    )
    lone = estimate_cf(batch, threads=1)
    pooled = estimate_cf(batch, threads=4)
    gate(
        "mc-thread-invariance",
        lone == pooled,
        "estimate_cf bit-identical for threads 1 and 4",
    )

    # Ordering dominance against the closed form.
    params = GiParameters(order=3, modes=1, mean_intensity=0.5)
    dom = ordering_dominance(params, trials=400_000, seed=seed, threads=threads)
    expected = plain_excess_ratio(3, 0.5)
    gap = abs(dom.value - expected)
    gate(
        "ordering-dominance",
        gap <= 4.5 * dom.std_error,
        f"measured {dom.value:.4f} vs {expected:.4f} ({gap / dom.std_error:.2f} sigma)",
    )

    # Image pipeline.
    image_exit = cmd_image(cfg, out, seed, threads, render=True)
    gate("image-pipeline", image_exit == EXIT_OK, "pipeline completed")
    rows = _read_metric_rows(out / "image_metrics.csv")
    by_order: dict[int, list[tuple[int, float, float]]] = {}
    for row in rows:
        by_order.setdefault(int(row["order"]), []).append(
            (int(row["slit_width"]), float(row["visibility"]), float(row["snr_sample"]))
        )
    vis_order_ok = all(
        by_order[4][k][1] > by_order[3][k][1] > by_order[2][k][1]
        for k in range(len(by_order[2]))
    )
    gate("image-visibility-order", vis_order_ok, "V(4) > V(3) > V(2) at every width")
    vis_width_ok = all(
        all(group[k][1] > group[k + 1][1] for k in range(len(group) - 1))
        for group in by_order.values()
    )
    gate("image-visibility-width", vis_width_ok, "visibility falls as the slit widens")
    snr_order_ok = all(
        by_order[2][k][2] > by_order[3][k][2] > by_order[4][k][2]
        for k in range(len(by_order[2]))
    )
    gate("image-snr-order", snr_order_ok, "SNR(2) > SNR(3) > SNR(4) at every width")
    f2 = rows[0]["f_hi"] if rows else math.nan
    gate(
        "image-calibration",
        abs(float(f2) - 1.0) <= 0.05,
        f"two-photon calibration factor {float(f2):.3f} within 1 +/- 0.05",
    )

    entries = _hash_artifacts(out)
    lines = ["artifact,sha256"] + [f"{name},{digest}" for name, digest in entries]
    (out / "hashes.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'hashes.csv'} ({len(entries)} artifacts)")

    report_rows = [
        {"check": name, "status": "ok" if passed else "FAIL", "detail": detail}
        for name, passed, detail in checks
    ]
    _write_csv(
        out / "selftest_report.csv", "selftest", seed,
        {"threads_invariant": True}, ["check", "status", "detail"], report_rows,
    )
    failed = [name for name, passed, _ in checks if not passed]
    if failed:
        print(f"selftest FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_GATE_FAILED
    print(f"selftest passed ({len(checks)} checks)")
    return EXIT_OK


def _read_metric_rows(path: Path) -> list[dict[str, float]]:
    lines = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        values = line.split(",")
        row: dict[str, Any] = {}
        for key, value in zip(header, values):
            try:
                row[key] = float(value)
            except ValueError:
                row[key] = value
        rows.append(row)
    return rows


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ghostlab",
        description="Simulation and analytics for higher-order ghost imaging "
        "with pseudothermal light.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("analytic", "evaluate the closed-form sweep and write CSV + figures"),
        ("mc", "verify the closed forms by Monte Carlo with sigma flags"),
        ("image", "synthesize speckle frames and reconstruct ghost images"),
        ("selftest", "run the reduced deterministic pipeline with gates"),
    ):
        p = sub.add_parser(name, help=help_text)
        if name != "selftest":
            p.add_argument("--config", help="JSON config file")
            p.add_argument(
                "--no-figures", action="store_true", help="skip PNG rendering"
            )
        p.add_argument("--out", default="ghostlab_out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help="worker threads (falls back to GHOSTLAB_THREADS, then config)",
        )
    args = parser.parse_args(argv)

    try:
        cfg = load_config(getattr(args, "config", None))
        threads = _resolve_threads(args.threads, cfg)
        seed = args.seed if args.seed is not None else cfg.seed
        if seed < 0:
            raise ConfigError(f"--seed must be nonnegative, got {seed}")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        render = not getattr(args, "no_figures", False)
        started = time.perf_counter()
        if args.command == "analytic":
            status = cmd_analytic(cfg, out, seed, render)
        elif args.command == "mc":
            status = cmd_montecarlo(cfg, out, seed, threads, render)
        elif args.command == "image":
            status = cmd_image(cfg, out, seed, threads, render)
        else:
            status = cmd_selftest(out, seed, threads)
        _write_timing(out, args.command, time.perf_counter() - started)
        return status
    except ValueError as exc:
        # ConfigError and domain-constructor rejections alike: every
        # ValueError reachable here traces back to user-supplied values.
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
