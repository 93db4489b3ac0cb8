"""Dataset statistics and pyramid sizing recommendations.

Reads annotation CSVs (one box per row), summarizes the aspect-ratio and size
distributions with exact order statistics, and turns them into concrete
pyramid parameters: the aspect-ratio objective, the anchor ratio set, and an
octave ladder of anchor sizes wide enough for the observed size range.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .anchor_design import (
    DEFAULT_TEMPLATE,
    TemplateLayer,
    aspect_ratio_set,
    max_anchor_ar,
)

__all__ = [
    "PERCENTILES",
    "EmptyDatasetError",
    "RowError",
    "DatasetStats",
    "DesignSummary",
    "ingest",
    "recommend",
]

PERCENTILES = (50, 90, 95, 99, 100)

_REQUIRED = ("image_id", "cx", "cy", "width", "height")


class EmptyDatasetError(ValueError):
    """No usable rows in the annotation stream."""


@dataclass(frozen=True)
class RowError:
    line: int
    message: str


@dataclass(frozen=True)
class DatasetStats:
    count: int
    rejected: int
    ar_percentiles: dict[str, float]
    size_percentiles: dict[str, float]
    mar_obj: float
    size_range: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "rejected": self.rejected,
            "ar_percentiles": self.ar_percentiles,
            "size_percentiles": self.size_percentiles,
            "mar_obj": self.mar_obj,
            "size_range": {"min": self.size_range[0], "max": self.size_range[1]},
        }

    @staticmethod
    def from_dict(data: dict) -> "DatasetStats":
        try:
            return DatasetStats(
                count=int(data["count"]),
                rejected=int(data["rejected"]),
                ar_percentiles={str(k): float(v) for k, v in data["ar_percentiles"].items()},
                size_percentiles={
                    str(k): float(v) for k, v in data["size_percentiles"].items()
                },
                mar_obj=float(data["mar_obj"]),
                size_range=(
                    float(data["size_range"]["min"]),
                    float(data["size_range"]["max"]),
                ),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed stats: {exc}") from exc


def _tenth_ceiling(value: float) -> float:
    """Round up to one decimal, tolerating float representation error."""
    return math.ceil(value * 10.0 - 1e-9) / 10.0


def ingest(stream: TextIO) -> tuple[DatasetStats, list[RowError]]:
    """Summarize an annotation CSV.

    Requires columns image_id, cx, cy, width, height. Bad rows (non-numeric,
    non-positive or non-finite dimensions) are skipped and reported. Raises
    EmptyDatasetError when nothing usable remains and ValueError when the
    header itself is wrong.
    """
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise ValueError("annotation CSV is empty")
    missing = [c for c in _REQUIRED if c not in reader.fieldnames]
    if missing:
        raise ValueError(f"annotation CSV missing columns: {', '.join(missing)}")
    ars: list[float] = []
    sizes: list[float] = []
    errors: list[RowError] = []
    for row in reader:
        line = reader.line_num
        try:
            w = float(row["width"])
            h = float(row["height"])
            float(row["cx"])
            float(row["cy"])
        except (TypeError, ValueError):
            errors.append(RowError(line, "non-numeric field"))
            continue
        if not all(math.isfinite(v) for v in (w, h)):
            errors.append(RowError(line, "non-finite dimensions"))
            continue
        if w <= 0 or h <= 0:
            errors.append(RowError(line, "non-positive dimensions"))
            continue
        ars.append(max(w, h) / min(w, h))
        sizes.append(math.sqrt(w * h))
    if not ars:
        raise EmptyDatasetError("no valid boxes in annotation CSV")
    ar_arr = np.array(ars)
    size_arr = np.array(sizes)
    ar_pct = {
        f"p{p}": float(np.percentile(ar_arr, p, method="inverted_cdf"))
        for p in PERCENTILES
    }
    size_pct = {
        f"p{p}": float(np.percentile(size_arr, p, method="inverted_cdf"))
        for p in PERCENTILES
    }
    stats = DatasetStats(
        count=len(ars),
        rejected=len(errors),
        ar_percentiles=ar_pct,
        size_percentiles=size_pct,
        mar_obj=_tenth_ceiling(ar_pct["p99"]),
        size_range=(float(size_arr.min()), float(size_arr.max())),
    )
    return stats, errors


@dataclass(frozen=True)
class DesignSummary:
    mar_obj: float
    iou_threshold: float
    max_anchor_ar: float
    middle_aspect_ratios: list[float]
    suggested_sizes: list[float]
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mar_obj": self.mar_obj,
            "iou_threshold": self.iou_threshold,
            "max_anchor_ar": self.max_anchor_ar,
            "middle_aspect_ratios": self.middle_aspect_ratios,
            "suggested_sizes": self.suggested_sizes,
            "warnings": self.warnings,
        }


def _pow2_below(value: float) -> float:
    """Largest power of two strictly less than value."""
    e = math.floor(math.log2(value))
    p = 2.0**e
    if p >= value:
        p /= 2.0
    return p


def _pow2_at_least(value: float) -> float:
    e = math.ceil(math.log2(value))
    p = 2.0**e
    if p < value:
        p *= 2.0
    return p


def recommend(
    stats: DatasetStats,
    iou_threshold: float,
    template: Sequence[TemplateLayer] = DEFAULT_TEMPLATE,
    patch_size: float = 300.0,
) -> DesignSummary:
    """Pyramid parameters for an observed dataset.

    The smallest possible object height is the smallest size over sqrt of the
    ratio objective (a maximally elongated smallest object); the largest is
    the largest size itself (a square). Sizes are chosen as the octave ladder
    whose served bands cover that height interval, extended one octave on
    each side: downward so the guarantee's previous-level premise holds at
    the low end, upward so objects near the top are bracketed from above.
    """
    k = stats.mar_obj
    t = max_anchor_ar(k, iou_threshold, clamp=True)
    ratios = aspect_ratio_set(t)
    s_min, s_max = stats.size_range
    root = math.sqrt(t)
    h_lo = s_min / math.sqrt(k)
    h_hi = s_max
    low_full = _pow2_below(2.0 * root * h_lo)
    top_full = _pow2_at_least(root * h_hi)
    sizes = []
    size = low_full / 2.0
    while size <= top_full * 2.0 + 1e-9:
        sizes.append(size)
        size *= 2.0
    warnings: list[str] = []
    smallest_template = min(tpl.anchor_size for tpl in template)
    if sizes[0] < smallest_template:
        warnings.append(
            f"smallest suggested size {sizes[0]:g} is below the default pyramid's "
            f"smallest size {smallest_template:g}; finer strides than the default "
            "backbone provides would be needed"
        )
    if sizes[-1] > patch_size:
        warnings.append(
            f"largest suggested size {sizes[-1]:g} exceeds the patch size "
            f"{patch_size:g}; the biggest objects cannot fit a single patch"
        )
    return DesignSummary(
        mar_obj=stats.mar_obj,
        iou_threshold=float(iou_threshold),
        max_anchor_ar=t,
        middle_aspect_ratios=list(ratios),
        suggested_sizes=sizes,
        warnings=warnings,
    )
