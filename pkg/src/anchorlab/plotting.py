"""Figure rendering. SVG output is kept byte-stable: fixed hash salt, no
embedded creation date, and series drawn in sorted order."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_scatter", "render_heatmap"]

matplotlib.rcParams["svg.hashsalt"] = "anchorlab"

_STABLE_METADATA = {"Date": None}


def render_scatter(
    rows: list[tuple[str, float, float]],
    out_path: str,
    title: str = "anchor shapes",
) -> None:
    """Scatter of (width, height) points grouped by series label."""
    by_series: dict[str, list[tuple[float, float]]] = {}
    for series, w, h in rows:
        by_series.setdefault(series, []).append((w, h))
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    for series in sorted(by_series):
        pts = by_series[series]
        ws = [p[0] for p in pts]
        hs = [p[1] for p in pts]
        if series == "gt":
            ax.scatter(ws, hs, s=6, c="black", alpha=0.4, label=series, zorder=1)
        else:
            ax.plot(ws, hs, marker="o", markersize=5, linewidth=1.0, label=series, zorder=2)
    ax.set_xlabel("width (px)")
    ax.set_ylabel("height (px)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.set_aspect("equal", adjustable="box")
    fig.tight_layout()
    fig.savefig(out_path, metadata=_STABLE_METADATA if out_path.endswith(".svg") else None)
    plt.close(fig)


def render_heatmap(
    heights: np.ndarray,
    ratios: np.ndarray,
    best: np.ndarray,
    out_path: str,
    threshold: float,
    title: str = "best IoU over height x aspect ratio",
) -> None:
    """Coverage map: best IoU per (height, aspect ratio) cell, with the
    threshold contour overlaid when it is crossed."""
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    mesh = ax.pcolormesh(
        ratios,
        heights,
        best,
        shading="nearest",
        vmin=0.0,
        vmax=1.0,
        cmap="viridis",
    )
    ax.set_yscale("log")
    if float(best.min()) < threshold < float(best.max()):
        ax.contour(ratios, heights, best, levels=[threshold], colors="red", linewidths=1.0)
    fig.colorbar(mesh, ax=ax, label="best IoU")
    ax.set_xlabel("object aspect ratio")
    ax.set_ylabel("object height (px)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, metadata=_STABLE_METADATA if out_path.endswith(".svg") else None)
    plt.close(fig)
