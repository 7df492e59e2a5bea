"""Rendering of evaluation scatter plots to image files.

One figure type: measured energy on the x axis, estimated energy on the
y axis, one blue marker per bit stream, and a red diagonal marking
perfect estimation.  Files are rendered headlessly and deterministically
(embedded writer metadata is stripped), so re-running a report produces
byte-identical images.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from decenergy.errors import ValidationError
from decenergy.evaluation import EvaluationReport

MARKER_COLOR = "tab:blue"
IDENTITY_COLOR = "tab:red"


def _strip_writer_metadata(path: Path) -> dict:
    """Metadata overrides that make the output independent of the writer."""
    suffix = path.suffix.lower()
    if suffix == ".png":
        return {"Software": None}
    if suffix == ".pdf":
        return {"CreationDate": None, "Producer": None, "Creator": None}
    if suffix == ".svg":
        return {"Date": None}
    return {}


def render_scatter(report: EvaluationReport, path: str | Path, dpi: int = 150) -> Path:
    """Render a report's (measured, estimated) pairs to an image file.

    The format follows the file extension (png, pdf, or svg).  Axes are
    in joules with equal limits so the identity diagonal runs corner to
    corner.
    """
    if not report.records:
        raise ValidationError("cannot render a scatter plot from an empty report")
    path = Path(path)
    measured = [r.measured_joules for r in report.records]
    estimated = [r.estimated_joules for r in report.records]

    # SVG element ids are salted hashes; pin the salt for reproducibility.
    plt.rcParams["svg.hashsalt"] = "decenergy"
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    try:
        lo = min(min(measured), min(estimated))
        hi = max(max(measured), max(estimated))
        pad = 0.05 * (hi - lo) if hi > lo else max(0.05 * hi, 1.0)
        lo, hi = lo - pad, hi + pad
        ax.plot(
            [lo, hi],
            [lo, hi],
            color=IDENTITY_COLOR,
            linewidth=1.2,
            label="perfect estimation",
            zorder=1,
        )
        ax.scatter(
            measured,
            estimated,
            s=18,
            color=MARKER_COLOR,
            alpha=0.7,
            linewidths=0,
            label="bit streams",
            zorder=2,
        )
        ax.set_xlim(lo, hi)
        ax.set_ylim(lo, hi)
        ax.set_aspect("equal")
        ax.set_xlabel("measured energy (J)")
        ax.set_ylabel("estimated energy (J)")
        label = report.setup_label
        ax.set_title(
            f"{label} / {report.catalog_kind}: "
            f"mean relative error {100.0 * report.epsilon_bar:.2f}%"
        )
        ax.legend(loc="upper left", frameon=False)
        ax.grid(True, linewidth=0.4, alpha=0.4)
        fig.tight_layout()
        fig.savefig(path, dpi=dpi, metadata=_strip_writer_metadata(path))
    finally:
        plt.close(fig)
    return path
