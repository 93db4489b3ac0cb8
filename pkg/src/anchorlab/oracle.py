"""Brute-force verification of the pyramid's coverage claims.

Everything here re-derives guarantees numerically instead of trusting the
closed forms in anchor_design: dense IoU sweeps over object height and aspect
ratio, endpoint/discriminant checks of the matching quadratic, bisection for
the smallest workable anchor ratio, and the cross-scale check for objects
whose area falls between two levels. The sweeps are deterministic for a given
grid regardless of thread count: work is split into fixed chunks and each
output element depends only on its own inputs.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .anchor_design import AnchorConfig, ConfigError, guaranteed_height_range
from .boxgeom import BoxShape

__all__ = [
    "THREADS_ENV",
    "SweepGrid",
    "CoverageReport",
    "QuadraticCheck",
    "Case2Pair",
    "Case2Report",
    "shape_table",
    "best_anchor_iou",
    "iou_grid",
    "coverage_sweep",
    "verify_quadratic",
    "min_feasible_t",
    "verify_case2",
]

THREADS_ENV = "ANCHORLAB_THREADS"
_CHUNK = 1 << 16


def _thread_count(threads: int | None) -> int:
    if threads is None:
        try:
            threads = int(os.environ.get(THREADS_ENV, "1"))
        except ValueError:
            threads = 1
    return max(1, threads)


@dataclass(frozen=True)
class SweepGrid:
    """Sampling plan for coverage sweeps.

    Heights are geometric (every octave gets equal sampling density), aspect
    ratios linear. ``offset_steps`` controls the optional placement sweep.
    """

    height_min: float
    height_max: float
    height_steps: int = 512
    ar_min: float = 1.0
    ar_max: float = 6.0
    ar_steps: int = 256
    offset_steps: int = 16

    def __post_init__(self) -> None:
        if self.height_min <= 0 or self.height_max < self.height_min:
            raise ValueError("need 0 < height_min <= height_max")
        if self.ar_min < 1.0 or self.ar_max < self.ar_min:
            raise ValueError("need 1 <= ar_min <= ar_max")
        if min(self.height_steps, self.ar_steps, self.offset_steps) < 1:
            raise ValueError("step counts must be >= 1")

    def heights(self) -> np.ndarray:
        return np.geomspace(self.height_min, self.height_max, self.height_steps)

    def ratios(self) -> np.ndarray:
        return np.linspace(self.ar_min, self.ar_max, self.ar_steps)


def shape_table(config: AnchorConfig) -> list[tuple[str, BoxShape, float, bool]]:
    """Every anchor shape of the pyramid as (layer, shape, ar, is_second_set)."""
    table = []
    for li in range(len(config.layers)):
        for shape, ar, second in config.shapes_for_layer(li):
            table.append((config.layers[li].name, shape, ar, second))
    return table


def best_anchor_iou(
    config: AnchorConfig,
    widths: np.ndarray,
    heights: np.ndarray,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Best concentric IoU over all anchor shapes, elementwise.

    Returns (best, winner) where winner indexes into ``shape_table(config)``;
    ties keep the earliest shape. Flattens any input shape and restores it.
    """
    shapes = shape_table(config)
    w = np.asarray(widths, dtype=float).ravel()
    h = np.asarray(heights, dtype=float).ravel()
    if w.shape != h.shape:
        raise ValueError("widths and heights must have the same shape")
    best = np.zeros(w.shape)
    winner = np.full(w.shape, -1, dtype=np.int64)

    def run(lo: int, hi: int) -> None:
        cw = w[lo:hi]
        ch = h[lo:hi]
        area = cw * ch
        cbest = best[lo:hi]
        cwin = winner[lo:hi]
        for si, (_name, shape, _ar, _second) in enumerate(shapes):
            inter = np.minimum(cw, shape.width) * np.minimum(ch, shape.height)
            iou = np.minimum(1.0, inter / (area + shape.area - inter))
            mask = iou > cbest
            cbest[mask] = iou[mask]
            cwin[mask] = si

    n = len(w)
    bounds = [(lo, min(lo + _CHUNK, n)) for lo in range(0, n, _CHUNK)]
    workers = _thread_count(threads)
    if workers == 1 or len(bounds) == 1:
        for lo, hi in bounds:
            run(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: run(*b), bounds))
    target = np.asarray(widths, dtype=float).shape
    return best.reshape(target), winner.reshape(target)


def iou_grid(
    config: AnchorConfig,
    grid: SweepGrid,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Dense (height x aspect-ratio) map of best concentric IoU.

    Objects are laid out wider-than-tall: width = height * ar.
    """
    hs = grid.heights()
    ars = grid.ratios()
    H = hs[:, None] * np.ones_like(ars)[None, :]
    W = hs[:, None] * ars[None, :]
    best, winner = best_anchor_iou(config, W, H, threads=threads)
    return hs, ars, best, winner


def _offset_distance(position: float, stride: float) -> float:
    m = (position - stride / 2.0) % stride
    return min(m, stride - m)


def _placed_best_iou(
    shapes: Sequence[tuple[str, BoxShape, float, bool]],
    strides: dict[str, float],
    w: np.ndarray,
    h: np.ndarray,
    px: float,
    py: float,
) -> np.ndarray:
    """Best IoU when the object center sits at (px, py) on an unbounded grid.

    Each layer's nearest anchor center is min(m, stride - m) away per axis;
    the overlap along an axis of extents (w, W) at center distance d is
    min(w, W, (w + W)/2 - d), floored at zero.
    """
    best = np.zeros(w.shape)
    for _name, shape, _ar, _second in shapes:
        s = strides[_name]
        dx = _offset_distance(px, s)
        dy = _offset_distance(py, s)
        ox = np.minimum(np.minimum(w, shape.width), (w + shape.width) / 2.0 - dx)
        oy = np.minimum(np.minimum(h, shape.height), (h + shape.height) / 2.0 - dy)
        inter = np.where((ox > 0) & (oy > 0), ox * oy, 0.0)
        iou = np.minimum(1.0, inter / (w * h + shape.area - inter))
        np.maximum(best, iou, out=best)
    return best


@dataclass(frozen=True)
class CoverageReport:
    threshold: float
    t: float
    k: float
    band: tuple[float, float]
    grid: SweepGrid
    min_iou: float
    argmin_height: float
    argmin_ar: float
    fraction_covered: float
    passed: bool
    layer_histograms: dict[str, list[int]] = field(default_factory=dict)
    offsets: dict | None = None

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "t": self.t,
            "k": self.k,
            "band": {"height_lo": self.band[0], "height_hi": self.band[1]},
            "grid": {
                "height_steps": self.grid.height_steps,
                "ar_steps": self.grid.ar_steps,
                "height_min": self.grid.height_min,
                "height_max": self.grid.height_max,
                "ar_min": self.grid.ar_min,
                "ar_max": self.grid.ar_max,
            },
            "min_iou": self.min_iou,
            "argmin": {"height": self.argmin_height, "ar": self.argmin_ar},
            "fraction_covered": self.fraction_covered,
            "passed": self.passed,
            "layer_histograms": self.layer_histograms,
            "offsets": self.offsets,
        }


def coverage_sweep(
    config: AnchorConfig,
    threshold: float,
    t: float | None = None,
    k: float | None = None,
    grid: SweepGrid | None = None,
    include_offsets: bool = False,
    threads: int | None = None,
) -> CoverageReport:
    """Sweep object heights and aspect ratios; check best IoU >= threshold.

    Defaults: ``t`` is the widest configured anchor ratio, objects go up to
    aspect ratio ``k = 2t`` (the widest shape the ratio-``t`` anchor can still
    hold at IoU 0.5 via containment), and heights cover the band where the
    pyramid's guarantee applies.
    """
    if t is None:
        t = config.max_ar()
    if k is None:
        k = 2.0 * t
    if grid is None:
        lo, hi = guaranteed_height_range(config, t)
        grid = SweepGrid(lo, hi, ar_min=1.0, ar_max=k)
    hs, ars, best, winner = iou_grid(config, grid, threads=threads)
    flat_idx = int(np.argmin(best))
    hi_idx, ai_idx = np.unravel_index(flat_idx, best.shape)
    min_iou = float(best[hi_idx, ai_idx])
    fraction = float(np.mean(best >= threshold - 1e-9))
    shapes = shape_table(config)
    histograms: dict[str, list[int]] = {}
    layer_of = np.array([next(i for i, ly in enumerate(config.layers) if ly.name == nm)
                         for nm, _s, _a, _b in shapes], dtype=np.int64)
    owner = np.where(winner >= 0, layer_of[winner], -1)
    for li, layer in enumerate(config.layers):
        vals = best[owner == li]
        hist, _edges = np.histogram(vals, bins=20, range=(0.0, 1.0))
        histograms[layer.name] = [int(c) for c in hist]

    offsets = None
    if include_offsets:
        strides = {ly.name: ly.stride for ly in config.layers}
        smax = max(strides.values())
        positions = np.linspace(0.0, smax / 2.0, grid.offset_steps)
        W = hs[:, None] * ars[None, :]
        H = hs[:, None] * np.ones_like(ars)[None, :]
        corner = _placed_best_iou(shapes, strides, W, H, 0.0, 0.0)
        c_idx = int(np.argmin(corner))
        c_hi, c_ai = np.unravel_index(c_idx, corner.shape)
        w_star = float(hs[hi_idx] * ars[ai_idx])
        h_star = float(hs[hi_idx])
        profile = [
            [
                float(
                    _placed_best_iou(
                        shapes,
                        strides,
                        np.array([w_star]),
                        np.array([h_star]),
                        float(px),
                        float(py),
                    )[0]
                )
                for px in positions
            ]
            for py in positions
        ]
        offsets = {
            "positions": [float(p) for p in positions],
            "corner_min_iou": float(corner[c_hi, c_ai]),
            "corner_argmin": {"height": float(hs[c_hi]), "ar": float(ars[c_ai])},
            "profile_point": {"height": h_star, "ar": float(ars[ai_idx])},
            "profile": profile,
        }

    return CoverageReport(
        threshold=threshold,
        t=float(t),
        k=float(k),
        band=(grid.height_min, grid.height_max),
        grid=grid,
        min_iou=min_iou,
        argmin_height=float(hs[hi_idx]),
        argmin_ar=float(ars[ai_idx]),
        fraction_covered=fraction,
        passed=bool(min_iou >= threshold - 1e-9),
        layer_histograms=histograms,
        offsets=offsets,
    )


@dataclass(frozen=True)
class QuadraticCheck:
    k: float
    threshold: float
    t: float
    size: float
    discriminant: float
    f_left: float
    f_right: float
    interior_max: float
    interior_argmax_h: float
    passed: bool
    witness: dict | None

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "threshold": self.threshold,
            "t": self.t,
            "size": self.size,
            "discriminant": self.discriminant,
            "f_left": self.f_left,
            "f_right": self.f_right,
            "interior_max": self.interior_max,
            "interior_argmax_h": self.interior_argmax_h,
            "passed": self.passed,
            "witness": self.witness,
        }


def _case1_f(h: np.ndarray, k: float, T: float, t: float, S: float) -> np.ndarray:
    """Matching margin T*union - intersection for a width-k object of height h
    against the ratio-t anchor of size S; <= 0 means IoU >= T."""
    root = math.sqrt(t)
    return T * (((k * h - S * root) * h) + S * S) - h * S * root


def verify_quadratic(
    k: float,
    threshold: float,
    t: float,
    size: float = 1.0,
    samples: int = 10001,
) -> QuadraticCheck:
    """Check the octave-band matching condition for one anchor size.

    The margin is a convex quadratic in object height, so it stays <= 0 on
    the whole band iff the discriminant is nonnegative and both band ends
    satisfy it; the dense interior sample is an independent confirmation.
    """
    T = threshold
    S = float(size)
    root = math.sqrt(t)
    left = S / (2.0 * root)
    right = S / root
    tol = 1e-9 * S * S
    disc = S * S * ((T + 1.0) ** 2 * t - 4.0 * T * T * k)
    hs = np.linspace(left, right, samples)
    f = _case1_f(hs, k, T, t, S)
    interior_argmax = int(np.argmax(f))
    f_left = float(f[0])
    f_right = float(f[-1])
    interior_max = float(f[interior_argmax])
    passed = disc >= -tol and max(f_left, f_right, interior_max) <= tol
    witness = None
    if not passed:
        h_bad = float(hs[interior_argmax])
        inter = h_bad * S * root
        union = (k * h_bad - S * root) * h_bad + S * S
        witness = {
            "height": h_bad,
            "margin": interior_max,
            "model_iou": inter / union,
        }
    return QuadraticCheck(
        k=float(k),
        threshold=float(T),
        t=float(t),
        size=S,
        discriminant=disc,
        f_left=f_left,
        f_right=f_right,
        interior_max=interior_max,
        interior_argmax_h=float(hs[interior_argmax]),
        passed=passed,
        witness=witness,
    )


def min_feasible_t(
    k: float,
    threshold: float,
    tol: float = 1e-6,
    h_steps: int = 4097,
) -> float:
    """Smallest anchor ratio that satisfies the band condition, by bisection.

    Feasibility of a candidate ratio is decided purely numerically: sample
    the served band densely and require the matching margin <= 0 everywhere
    (unit anchor size; the margin scales with size^2). Ratios below 1 are
    never returned since the parametrization starts at square.
    """
    T = threshold

    def feasible(t: float) -> bool:
        root = math.sqrt(t)
        hs = np.linspace(1.0 / (2.0 * root), 1.0 / root, h_steps)
        f = _case1_f(hs, k, T, t, 1.0)
        return bool(np.max(f) <= 1e-12)

    if feasible(1.0):
        return 1.0
    lo, hi = 1.0, 2.0
    for _ in range(60):
        if feasible(hi):
            break
        lo = hi
        hi *= 2.0
    else:
        raise ValueError(f"no feasible anchor ratio found below {hi}")
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2.0


@dataclass(frozen=True)
class Case2Pair:
    lower_layer: str
    upper_layer: str
    area_range: tuple[float, float]
    points: int
    premise_violations: int
    premise_examples: list[dict]
    min_iou: float
    argmin_area: float
    argmin_ar: float
    failures: list[dict]

    def to_dict(self) -> dict:
        return {
            "lower_layer": self.lower_layer,
            "upper_layer": self.upper_layer,
            "area_range": {"lo": self.area_range[0], "hi": self.area_range[1]},
            "points": self.points,
            "premise_violations": self.premise_violations,
            "premise_examples": self.premise_examples,
            "min_iou": self.min_iou,
            "argmin": {"area": self.argmin_area, "ar": self.argmin_ar},
            "failures": self.failures,
        }


@dataclass(frozen=True)
class Case2Report:
    threshold: float
    t: float
    area_band: tuple[float, float]
    pairs: list[Case2Pair]
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "t": self.t,
            "area_band": {"lo": self.area_band[0], "hi": self.area_band[1]},
            "pairs": [p.to_dict() for p in self.pairs],
            "passed": self.passed,
            "note": self.note,
        }


def verify_case2(
    config: AnchorConfig,
    t: float | None = None,
    threshold: float = 0.5,
    area_steps: int = 64,
    ar_steps: int = 64,
) -> Case2Report:
    """Cross-scale check for objects of intermediate aspect ratio.

    Objects with aspect ratio in [1, t) whose area falls between the square
    anchor areas of two neighboring levels must reach the threshold against
    the union of both levels' anchors (second set included). Each consecutive
    level pair is swept over its area bracket; the level-size ratio must be 2
    for this bracket decomposition to make sense.
    """
    if t is None:
        t = config.max_ar()
    if len(config.layers) < 2:
        return Case2Report(
            threshold=threshold,
            t=float(t),
            area_band=(0.0, 0.0),
            pairs=[],
            passed=True,
            note="single level: no scale gaps to check",
        )
    ratio = config.size_ratio()
    if abs(ratio - 2.0) > 1e-9:
        raise ConfigError(f"cross-scale check assumes size ratio 2, got {ratio}")
    if t <= 1.0 + 1e-12:
        return Case2Report(
            threshold=threshold,
            t=float(t),
            area_band=(config.layers[0].anchor_size ** 2, config.layers[-1].anchor_size ** 2),
            pairs=[],
            passed=True,
            note="no intermediate aspect ratios below the widest anchor",
        )
    ars = np.linspace(1.0, t, ar_steps, endpoint=False)
    pairs: list[Case2Pair] = []
    all_ok = True
    for i in range(1, len(config.layers)):
        low = config.layers[i - 1]
        high = config.layers[i]
        a_lo = low.anchor_size**2
        a_hi = high.anchor_size**2
        areas = np.geomspace(a_lo, a_hi, area_steps + 1)[1:]
        A, R = np.meshgrid(areas, ars, indexing="ij")
        W = np.sqrt(A * R)
        H = np.sqrt(A / R)
        shapes = config.shapes_for_layer(i - 1) + config.shapes_for_layer(i)
        best = np.zeros(W.shape)
        for shape, _ar, _second in shapes:
            inter = np.minimum(W, shape.width) * np.minimum(H, shape.height)
            iou = np.minimum(1.0, inter / (A + shape.area - inter))
            np.maximum(best, iou, out=best)
        # The argument's premise: such an object outgrows the previous level's
        # anchor of nearest ratio in both dimensions. Violations are reported,
        # not failed — the coverage claim itself is what must hold.
        prev_ars = np.array(low.aspect_ratios)
        nearest = np.argmin(np.abs(np.log(prev_ars)[None, None, :] - np.log(R)[:, :, None]), axis=2)
        prev_w = low.anchor_size * np.sqrt(prev_ars)[nearest]
        prev_h = low.anchor_size / np.sqrt(prev_ars)[nearest]
        violated = ~((W > prev_w) & (H > prev_h))
        v_count = int(np.count_nonzero(violated))
        v_idx = np.argwhere(violated)[:5]
        v_examples = [
            {"area": float(A[ai, ri]), "ar": float(R[ai, ri])} for ai, ri in v_idx
        ]
        flat = int(np.argmin(best))
        b_ai, b_ri = np.unravel_index(flat, best.shape)
        fail_mask = best < threshold - 1e-9
        f_idx = np.argwhere(fail_mask)[:10]
        failures = [
            {
                "area": float(A[ai, ri]),
                "ar": float(R[ai, ri]),
                "best_iou": float(best[ai, ri]),
            }
            for ai, ri in f_idx
        ]
        ok = not bool(fail_mask.any())
        all_ok = all_ok and ok
        pairs.append(
            Case2Pair(
                lower_layer=low.name,
                upper_layer=high.name,
                area_range=(float(a_lo), float(a_hi)),
                points=int(best.size),
                premise_violations=v_count,
                premise_examples=v_examples,
                min_iou=float(best[b_ai, b_ri]),
                argmin_area=float(A[b_ai, b_ri]),
                argmin_ar=float(R[b_ai, b_ri]),
                failures=failures,
            )
        )
    return Case2Report(
        threshold=threshold,
        t=float(t),
        area_band=(config.layers[0].anchor_size ** 2, config.layers[-1].anchor_size ** 2),
        pairs=pairs,
        passed=all_ok,
    )
