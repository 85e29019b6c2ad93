"""Figure rendering for the command-line reports.

Each report command drops PNG summaries next to its CSV output.  All
figures draw from the already-computed rows, never recompute, and use
the non-interactive backend so they work headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_ORDER_COLORS = {2: "tab:blue", 3: "tab:orange", 4: "tab:green"}
_DPI = 150


def _color(order: int) -> str:
    return _ORDER_COLORS.get(order, "tab:gray")


def save_snr_vs_intensity(rows: Sequence[Mapping], path: str | Path) -> None:
    """Closed-form SNR against mean intensity, one line per (n, M)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    groups: dict[tuple[int, int], list[Mapping]] = {}
    for row in rows:
        groups.setdefault((row["order"], row["modes"]), []).append(row)
    for (order, modes), group in sorted(groups.items()):
        group = sorted(group, key=lambda r: r["mean_intensity"])
        x = [r["mean_intensity"] for r in group]
        y = [r["snr"] for r in group]
        ax.loglog(
            x,
            y,
            marker="o",
            ms=3,
            color=_color(order),
            alpha=1.0 if modes == 1 else 0.45,
            label=f"n={order}, M={modes}",
        )
    ax.set_xlabel("mean photons per mode")
    ax.set_ylabel("single-trial SNR")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_spdc_comparison(
    thermal_rows: Sequence[Mapping],
    spdc_rows: Sequence[Mapping],
    path: str | Path,
) -> None:
    """Second-order thermal SNR next to the two-photon source curve."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    by_modes: dict[int, list[Mapping]] = {}
    for row in spdc_rows:
        by_modes.setdefault(row["modes"], []).append(row)
    for modes, group in sorted(by_modes.items()):
        group = sorted(group, key=lambda r: r["mean_photons"])
        x = [r["mean_photons"] for r in group]
        ax.semilogx(
            x,
            [r["snr_spdc"] for r in group],
            color="tab:red",
            alpha=1.0 if modes == 1 else 0.45,
            label=f"two-photon, M={modes}",
        )
        ax.axhline(
            group[0]["snr_limit"],
            color="tab:red",
            alpha=0.25,
            lw=0.8,
            ls="--",
        )
    thermal = [r for r in thermal_rows if r["order"] == 2]
    for modes in sorted({r["modes"] for r in thermal}):
        group = sorted(
            (r for r in thermal if r["modes"] == modes),
            key=lambda r: r["mean_intensity"],
        )
        ax.semilogx(
            [r["mean_intensity"] for r in group],
            [r["snr"] for r in group],
            color="tab:blue",
            alpha=1.0 if modes == 1 else 0.45,
            label=f"thermal n=2, M={modes}",
        )
    ax.set_xlabel("mean photons per mode")
    ax.set_ylabel("single-trial SNR")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_mc_agreement(rows: Sequence[Mapping], path: str | Path) -> None:
    """Monte Carlo estimates over closed-form values, with error bars."""
    fig, ax = plt.subplots(figsize=(6.8, 4.2))
    labels = []
    for idx, row in enumerate(rows):
        ratio = row["snr_hat"] / row["snr"] if row["snr"] else np.nan
        err = row["snr_se"] / row["snr"] if row["snr"] else np.nan
        ax.errorbar(
            idx, ratio, yerr=err, fmt="o", ms=4, color=_color(row["order"]), capsize=2
        )
        labels.append(
            f"n={row['order']}\nM={row['modes']}\nI={row['mean_intensity']:g}"
        )
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=6)
    ax.set_ylabel("measured SNR / closed form")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_visibility_vs_modes(
    rows: Sequence[Mapping], fit_rows: Sequence[Mapping], path: str | Path
) -> None:
    """Measured visibility against effective modes with the fitted model."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for order in sorted({r["order"] for r in rows}):
        group = sorted(
            (r for r in rows if r["order"] == order),
            key=lambda r: r["effective_modes"],
        )
        x = [r["effective_modes"] for r in group]
        ax.plot(
            x,
            [r["visibility"] for r in group],
            "o",
            ms=4,
            color=_color(order),
            label=f"n={order} measured",
        )
        model = sorted(
            (r for r in fit_rows if r["order"] == order),
            key=lambda r: r["effective_modes"],
        )
        ax.plot(
            [r["effective_modes"] for r in model],
            [r["visibility_model"] for r in model],
            "-",
            lw=1,
            color=_color(order),
            alpha=0.6,
            label=f"n={order} model",
        )
    ax.set_xlabel("effective modes in slit")
    ax.set_ylabel("visibility")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_snr_vs_modes(rows: Sequence[Mapping], path: str | Path) -> None:
    """Normalized image SNR against effective modes, one line per order."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for order in sorted({r["order"] for r in rows}):
        group = sorted(
            (r for r in rows if r["order"] == order),
            key=lambda r: r["effective_modes"],
        )
        ax.plot(
            [r["effective_modes"] for r in group],
            [r["snr_normalized"] for r in group],
            "o-",
            ms=4,
            lw=1,
            color=_color(order),
            label=f"n={order}",
        )
    ax.set_xlabel("effective modes in slit")
    ax.set_ylabel("SNR per sqrt(frame)")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_ghost_profiles(
    profiles: Sequence[Mapping], path: str | Path
) -> None:
    """Reconstructed slit-row cross sections for a few (order, width) pairs.

    Each record carries ``order``, ``slit_width``, and ``profile`` (the
    values along the slit row, background mean already subtracted and
    peak-normalized).
    """
    fig, ax = plt.subplots(figsize=(6.8, 4.2))
    for record in profiles:
        profile = np.asarray(record["profile"], dtype=np.float64)
        ax.plot(
            np.arange(profile.size),
            profile,
            lw=1,
            color=_color(record["order"]),
            alpha=0.8,
            label=f"n={record['order']}, w={record['slit_width']}",
        )
    ax.set_xlabel("column (px)")
    ax.set_ylabel("normalized correlation")
    ax.legend(fontsize=7)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
