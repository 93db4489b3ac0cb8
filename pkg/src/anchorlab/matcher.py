"""Matching ground-truth boxes against an anchor pyramid.

Two flavors: concentric matching (shape only, anchors assumed centered on the
object) and placed matching against the anchors actually tiled over a patch.
Ties are broken deterministically so reruns and refactors cannot shuffle
results: earlier layer first, then aspect ratio closest to square, first set
before second, then tiling order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .anchor_design import AnchorConfig, TiledAnchor, tile_anchors
from .boxgeom import BoxShape, PlacedBox, concentric_iou

__all__ = [
    "MATCH_EPS",
    "TIE_EPS",
    "MatchResult",
    "PlacedMatch",
    "assign_layer",
    "match_concentric",
    "match_placed",
    "read_boxes_csv",
    "write_match_csv",
]

# A box exactly on the threshold must count as matched despite float noise.
MATCH_EPS = 1e-9
# IoUs this close are considered tied and resolved by the deterministic key.
TIE_EPS = 1e-12


@dataclass(frozen=True)
class MatchResult:
    gt_index: int
    layer: str
    anchor_index: int
    iou: float
    matched: bool


@dataclass(frozen=True)
class PlacedMatch:
    result: MatchResult
    # Best IoU any anchor shape would reach if centered on the box; the gap
    # to result.iou is what grid placement cost. (The best *placed* anchor is
    # always at the nearest cell center — overlap shrinks monotonically with
    # center distance — so that would be no reference at all.)
    dominant_iou: float


def assign_layer(gt: BoxShape, config: AnchorConfig, t: float | None = None) -> str:
    """Which layer should own an object, by its smaller side.

    The first layer whose served height band reaches the object's smaller
    side wins; objects taller than every band go to the last layer.
    """
    if t is None:
        t = config.max_ar()
    root = math.sqrt(t)
    h = min(gt.width, gt.height)
    for layer in config.layers:
        if h <= layer.anchor_size / root:
            return layer.name
    return config.layers[-1].name


def _shape_key(layer_idx: int, ar: float, second: bool) -> tuple:
    return (layer_idx, abs(ar - 1.0), 1 if second else 0)


def match_concentric(
    gt: BoxShape,
    config: AnchorConfig,
    threshold: float,
    gt_index: int = 0,
) -> MatchResult:
    """Best anchor shape for a box when anchors share its center."""
    best_iou = -1.0
    best_key: tuple = ()
    best_layer = ""
    best_anchor = -1
    for li, layer in enumerate(config.layers):
        for si, (shape, ar, second) in enumerate(config.shapes_for_layer(li)):
            value = concentric_iou(gt, shape)
            key = _shape_key(li, ar, second)
            if value > best_iou + TIE_EPS or (
                value > best_iou - TIE_EPS and best_key and key < best_key
            ):
                best_iou = value
                best_key = key
                best_layer = layer.name
                best_anchor = si
    return MatchResult(
        gt_index=gt_index,
        layer=best_layer,
        anchor_index=best_anchor,
        iou=best_iou,
        matched=best_iou >= threshold - MATCH_EPS,
    )


class _AnchorField:
    """Tiled anchors unpacked into parallel numpy arrays."""

    def __init__(self, config: AnchorConfig, anchors: Sequence[TiledAnchor]):
        n = len(anchors)
        self.x0 = np.empty(n)
        self.y0 = np.empty(n)
        self.x1 = np.empty(n)
        self.y1 = np.empty(n)
        self.area = np.empty(n)
        self.layer_idx = np.empty(n, dtype=np.int64)
        self.ar_dist = np.empty(n)
        self.set_idx = np.empty(n, dtype=np.int64)
        self.inner_idx = np.empty(n, dtype=np.int64)
        self.layers = [a.layer for a in anchors]
        self.anchor_index = np.array([a.index for a in anchors], dtype=np.int64)
        name_to_idx = {ly.name: i for i, ly in enumerate(config.layers)}
        for i, a in enumerate(anchors):
            bx0, by0, bx1, by1 = a.box.bounds
            self.x0[i] = bx0
            self.y0[i] = by0
            self.x1[i] = bx1
            self.y1[i] = by1
            self.area[i] = a.box.area
            self.layer_idx[i] = name_to_idx[a.layer]
            self.ar_dist[i] = abs(a.aspect_ratio - 1.0)
            self.set_idx[i] = 1 if a.second_set else 0
            self.inner_idx[i] = a.index

    def ious(self, gt: PlacedBox) -> np.ndarray:
        gx0, gy0, gx1, gy1 = gt.bounds
        ow = np.minimum(self.x1, gx1) - np.maximum(self.x0, gx0)
        oh = np.minimum(self.y1, gy1) - np.maximum(self.y0, gy0)
        inter = np.where((ow > 0) & (oh > 0), ow * oh, 0.0)
        return np.minimum(1.0, inter / (self.area + gt.area - inter))


def _dominant_iou(gt: PlacedBox, config: AnchorConfig) -> float:
    """Best concentric IoU over all anchor shapes of the pyramid."""
    best = 0.0
    for li in range(len(config.layers)):
        for shape, _ar, _second in config.shapes_for_layer(li):
            value = concentric_iou(gt.shape, shape)
            if value > best:
                best = value
    return best


def match_placed(
    gts: Sequence[PlacedBox],
    config: AnchorConfig,
    threshold: float,
    anchors: Sequence[TiledAnchor] | None = None,
) -> list[PlacedMatch]:
    """Match each ground-truth box against every tiled anchor."""
    if anchors is None:
        anchors = tile_anchors(config)
    field = _AnchorField(config, anchors)
    out: list[PlacedMatch] = []
    for gi, gt in enumerate(gts):
        ious = field.ious(gt)
        top = float(ious.max()) if len(ious) else 0.0
        if top <= 0.0:
            result = MatchResult(gi, "", -1, 0.0, False)
        else:
            cand = np.nonzero(ious >= top - TIE_EPS)[0]
            chosen = min(
                cand,
                key=lambda i: (
                    field.layer_idx[i],
                    field.ar_dist[i],
                    field.set_idx[i],
                    field.inner_idx[i],
                ),
            )
            result = MatchResult(
                gt_index=gi,
                layer=field.layers[chosen],
                anchor_index=int(field.anchor_index[chosen]),
                iou=float(ious[chosen]),
                matched=float(ious[chosen]) >= threshold - MATCH_EPS,
            )
        out.append(PlacedMatch(result, _dominant_iou(gt, config)))
    return out


_BOX_COLUMNS = ("cx", "cy", "width", "height")


def read_boxes_csv(stream: TextIO) -> list[PlacedBox]:
    """Strictly parse a boxes CSV with columns cx, cy, width, height.

    Extra columns (e.g. image_id) are ignored; any malformed row aborts with
    a ValueError naming the line.
    """
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise ValueError("boxes CSV is empty")
    missing = [c for c in _BOX_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise ValueError(f"boxes CSV missing columns: {', '.join(missing)}")
    boxes: list[PlacedBox] = []
    for row in reader:
        line = reader.line_num
        try:
            cx = float(row["cx"])
            cy = float(row["cy"])
            shape = BoxShape(float(row["width"]), float(row["height"]))
            if not (math.isfinite(cx) and math.isfinite(cy)):
                raise ValueError("non-finite center")
        except (TypeError, ValueError) as exc:
            raise ValueError(f"boxes CSV line {line}: {exc}") from exc
        boxes.append(PlacedBox(cx, cy, shape))
    return boxes


def write_match_csv(stream: TextIO, matches: Iterable[MatchResult | PlacedMatch]) -> None:
    matches = list(matches)
    placed = any(isinstance(m, PlacedMatch) for m in matches)
    header = ["gt_index", "layer", "anchor_index", "iou", "matched"]
    if placed:
        header.append("dominant_iou")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for m in matches:
        result = m.result if isinstance(m, PlacedMatch) else m
        row = [
            result.gt_index,
            result.layer,
            result.anchor_index,
            "%.9g" % result.iou,
            "true" if result.matched else "false",
        ]
        if placed:
            row.append("%.9g" % m.dominant_iou if isinstance(m, PlacedMatch) else "")
        writer.writerow(row)
