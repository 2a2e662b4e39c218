"""Report artifacts: delimited metric tables, PGM heatmaps, and summary
figures rendered to files."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .radargram import Radargram

REPORT_COLUMNS = ["scan", "method", "mae", "mse", "psnr", "ms_ssim", "scr_raw", "scr_proc", "im_db"]


def write_heatmap_pgm(path, r: Radargram) -> None:
    """8-bit binary portable graymap; pixel = round(255 * value), clipped."""
    values = np.clip(r.data, 0.0, 1.0)
    pixels = np.rint(255.0 * values).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(pixels.tobytes())


def _fmt(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.6g}"


def write_metric_rows(path, rows: list[dict]) -> None:
    """Per-scan, per-method metric table as comma-delimited text."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """Mean of every metric column per method, ordered by method name."""
    methods = sorted({r["method"] for r in rows})
    out = []
    for method in methods:
        sub = [r for r in rows if r["method"] == method]
        agg = {"scan": f"mean({len(sub)})", "method": method}
        for col in REPORT_COLUMNS[2:]:
            vals = [r[col] for r in sub if not math.isnan(r[col])]
            agg[col] = float(np.mean(vals)) if vals else math.nan
        out.append(agg)
    return out


def render_report_figures(
    out_dir,
    rows: list[dict],
    aggregates: list[dict],
    example: dict[str, Radargram] | None = None,
) -> list[Path]:
    """Summary PNGs next to the delimited report: per-method metric bars and
    an example raw/processed/ground-truth panel."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if aggregates:
        methods = [a["method"] for a in aggregates]
        fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
        for ax, col, label in zip(
            axes, ["psnr", "ms_ssim", "im_db"], ["PSNR (dB)", "MS-SSIM", "I_m (dB)"]
        ):
            vals = [a[col] for a in aggregates]
            finite = [0.0 if not math.isfinite(v) else v for v in vals]
            ax.bar(methods, finite, color="#4878a8")
            ax.set_title(label)
            ax.tick_params(axis="x", rotation=30)
            ax.grid(axis="y", alpha=0.3)
        fig.suptitle("Mean metrics per method")
        fig.tight_layout()
        path = out_dir / "metrics_summary.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    if example:
        names = list(example)
        fig, axes = plt.subplots(1, len(names), figsize=(2.2 * len(names), 4.2))
        if len(names) == 1:
            axes = [axes]
        for ax, name in zip(axes, names):
            ax.imshow(example[name].data, aspect="auto", cmap="gray")
            ax.set_title(name, fontsize=9)
            ax.set_xticks([])
            ax.set_yticks([])
        fig.tight_layout()
        path = out_dir / "example_panels.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)
    return written
