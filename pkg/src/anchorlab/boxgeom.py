"""Axis-aligned box primitives and intersection-over-union measures.

All dimensions are continuous reals measured in pixels. Degenerate boxes are
rejected at construction time so the geometric invariants stay testable
downstream. Every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["BoxShape", "PlacedBox", "anchor_dims", "concentric_iou", "iou"]


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


@dataclass(frozen=True)
class BoxShape:
    """A width/height pair describing an object or anchor profile."""

    width: float
    height: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "width", _positive("width", self.width))
        object.__setattr__(self, "height", _positive("height", self.height))

    @property
    def area(self) -> float:
        return self.width * self.height

    def aspect_ratio(self) -> float:
        return self.width / self.height

    def transpose(self) -> "BoxShape":
        return BoxShape(self.height, self.width)

    def oriented(self) -> "BoxShape":
        """The same shape, transposed if needed so that width >= height."""
        if self.width >= self.height:
            return self
        return self.transpose()


@dataclass(frozen=True)
class PlacedBox:
    """A box shape placed at a center point."""

    cx: float
    cy: float
    shape: BoxShape

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """Corner coordinates as (x0, y0, x1, y1)."""
        hw = self.shape.width / 2.0
        hh = self.shape.height / 2.0
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    @property
    def area(self) -> float:
        return self.shape.area


def anchor_dims(size: float, ar: float) -> BoxShape:
    """Anchor width/height for a nominal size and aspect ratio.

    Width scales with sqrt(ar) and height with 1/sqrt(ar), so the area stays
    equal to ``size ** 2`` for every aspect ratio.

    Args:
        size: nominal anchor size in pixels, must be positive.
        ar: aspect ratio (width over height), must be positive.

    Returns:
        The anchor profile as a BoxShape.
    """
    size = _positive("size", size)
    ar = _positive("ar", ar)
    root = math.sqrt(ar)
    return BoxShape(size * root, size / root)


def concentric_iou(obj: BoxShape, anchor: BoxShape) -> float:
    """IoU of two shapes that share a common center point."""
    inter = min(obj.width, anchor.width) * min(obj.height, anchor.height)
    union = obj.area + anchor.area - inter
    # rounding can push the ratio a few ulps past 1 for identical shapes
    return min(1.0, inter / union)


def iou(a: PlacedBox, b: PlacedBox) -> float:
    """IoU of two placed boxes; 0.0 when they do not overlap."""
    ax0, ay0, ax1, ay1 = a.bounds
    bx0, by0, bx1, by1 = b.bounds
    ow = min(ax1, bx1) - max(ax0, bx0)
    oh = min(ay1, by1) - max(ay0, by0)
    if ow <= 0.0 or oh <= 0.0:
        return 0.0
    inter = ow * oh
    union = a.area + b.area - inter
    return min(1.0, inter / union)
