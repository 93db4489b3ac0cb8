"""Anchor pyramid construction: aspect-ratio sizing rules, layer templates,
tiling, and the scatter summary of what the pyramid can cover.

The central quantity is the widest anchor aspect ratio ``t`` needed so that
every object up to a given aspect ratio keeps at least the wanted IoU with
some anchor while object height sweeps one octave. ``max_anchor_ar`` computes
it in closed form; the rest of the module turns it into concrete per-layer
anchor sets over a stride pyramid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .boxgeom import BoxShape, PlacedBox, anchor_dims

__all__ = [
    "ConfigError",
    "LayerSpec",
    "AnchorConfig",
    "TemplateLayer",
    "DEFAULT_TEMPLATE",
    "max_anchor_ar",
    "aspect_ratio_ladder",
    "aspect_ratio_set",
    "second_set_sizes",
    "design_config",
    "TiledAnchor",
    "tile_anchors",
    "scatter_data",
    "guaranteed_height_range",
    "config_to_dict",
    "config_from_dict",
    "load_config",
    "format_ratio",
]


class ConfigError(ValueError):
    """Raised when a pyramid description is internally inconsistent."""


def _check_threshold(iou_threshold: float) -> float:
    iou_threshold = float(iou_threshold)
    if not (0.0 < iou_threshold < 1.0):
        raise ValueError(
            f"iou_threshold must be strictly between 0 and 1, got {iou_threshold!r}"
        )
    return iou_threshold


def max_anchor_ar(k: float, iou_threshold: float, clamp: bool = True) -> float:
    """Widest anchor aspect ratio required to keep IoU >= threshold.

    For objects of aspect ratio up to ``k`` whose height sweeps the octave
    served by one pyramid level, the worst-case IoU against the level's
    widest anchor (aspect ratio ``t``, same area as the square anchor) stays
    at or above the threshold iff ``t`` is large enough that

    * the matching quadratic has real roots,
    * both ends of the octave satisfy it.

    The binding constraint is the largest of the three closed-form factors
    below. With ``clamp`` the result is floored at 1 (an anchor cannot be
    narrower than square in this parametrization).
    """
    k = float(k)
    if k < 1.0:
        raise ValueError(f"k must be >= 1, got {k!r}")
    T = _check_threshold(iou_threshold)
    discriminant_factor = (2.0 * T / (T + 1.0)) ** 2
    lower_end_factor = T / (2.0 - 2.0 * T)
    upper_end_factor = T
    t = k * max(discriminant_factor, lower_end_factor, upper_end_factor)
    if clamp:
        t = max(1.0, t)
    return t


def aspect_ratio_ladder(t: float, max_rungs: int = 2) -> list[float]:
    """Descending ladder of wide aspect ratios starting at ``t``.

    Each rung halves the previous one; rungs stop once they are no longer
    wider than square, and at most ``max_rungs`` are kept. ``t <= 1`` yields
    an empty ladder (square anchors only).
    """
    t = float(t)
    ladder: list[float] = []
    value = t
    while value > 1.0 + 1e-12 and len(ladder) < max_rungs:
        ladder.append(value)
        value /= 2.0
    return ladder


def aspect_ratio_set(t: float, max_rungs: int = 2) -> list[float]:
    """Full anchor aspect-ratio set for a level whose widest ratio is ``t``.

    Square first, then the ladder ascending, then the reciprocals in the
    same order, e.g. t=3 -> [1, 1.5, 3, 2/3, 1/3].
    """
    ladder = sorted(aspect_ratio_ladder(t, max_rungs))
    return [1.0] + ladder + [1.0 / r for r in ladder]


def format_ratio(ar: float) -> str:
    """Human-oriented rendering of an aspect ratio ('3/2', '1/3', '2')."""
    frac = Fraction(ar).limit_denominator(1000)
    if frac.denominator == 1:
        return str(frac.numerator)
    return f"{frac.numerator}/{frac.denominator}"


@dataclass(frozen=True)
class LayerSpec:
    """One pyramid level: feature stride, anchor size, and its anchor shapes."""

    name: str
    stride: float
    anchor_size: float
    aspect_ratios: tuple[float, ...]
    receptive_field: float | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("layer name must be non-empty")
        if self.stride <= 0 or self.anchor_size <= 0:
            raise ConfigError(f"{self.name}: stride and anchor_size must be positive")
        ars = tuple(float(a) for a in self.aspect_ratios)
        if not ars or any(a <= 0 for a in ars):
            raise ConfigError(f"{self.name}: aspect_ratios must be positive and non-empty")
        object.__setattr__(self, "aspect_ratios", ars)
        if self.receptive_field is not None and self.receptive_field < self.anchor_size:
            raise ConfigError(
                f"{self.name}: receptive field {self.receptive_field} cannot be "
                f"smaller than anchor size {self.anchor_size}"
            )

    @property
    def max_ar(self) -> float:
        return max(self.aspect_ratios)

    def shapes(self) -> list[BoxShape]:
        return [anchor_dims(self.anchor_size, ar) for ar in self.aspect_ratios]


@dataclass(frozen=True)
class AnchorConfig:
    """A full anchor pyramid over a square input patch."""

    layers: tuple[LayerSpec, ...]
    patch_size: float = 300.0
    double_set: bool = True
    second_sizes: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ConfigError("config needs at least one layer")
        object.__setattr__(self, "layers", layers)
        if self.patch_size <= 0:
            raise ConfigError("patch_size must be positive")
        sizes = [ly.anchor_size for ly in layers]
        strides = [ly.stride for ly in layers]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("anchor sizes must be strictly increasing")
        if any(b <= a for a, b in zip(strides, strides[1:])):
            raise ConfigError("strides must be strictly increasing")
        if self.double_set:
            second = tuple(float(s) for s in self.second_sizes)
            if not second:
                second = second_set_sizes(sizes, self.patch_size)
            if len(second) != len(layers):
                raise ConfigError("second_sizes must have one entry per layer")
            if any(s2 <= ly.anchor_size for s2, ly in zip(second, layers)):
                raise ConfigError("each second-set size must exceed its layer's size")
            object.__setattr__(self, "second_sizes", second)
        else:
            object.__setattr__(self, "second_sizes", ())

    def layer_names(self) -> list[str]:
        return [ly.name for ly in self.layers]

    def max_ar(self) -> float:
        return max(ly.max_ar for ly in self.layers)

    def size_ratio(self) -> float:
        """Common ratio between consecutive anchor sizes, if there is one."""
        sizes = [ly.anchor_size for ly in self.layers]
        if len(sizes) < 2:
            raise ConfigError("size_ratio needs at least two layers")
        ratios = [b / a for a, b in zip(sizes, sizes[1:])]
        first = ratios[0]
        if any(abs(r - first) > 1e-9 * first for r in ratios):
            raise ConfigError(f"anchor sizes are not geometric: ratios {ratios}")
        return first

    def shapes_for_layer(self, index: int) -> list[tuple[BoxShape, float, bool]]:
        """All anchor shapes of one layer as (shape, aspect_ratio, is_second_set)."""
        layer = self.layers[index]
        out = [(shape, ar, False) for shape, ar in zip(layer.shapes(), layer.aspect_ratios)]
        if self.double_set:
            size2 = self.second_sizes[index]
            out.append((anchor_dims(size2, 1.0), 1.0, True))
        return out


def second_set_sizes(sizes: Sequence[float], patch_size: float) -> tuple[float, ...]:
    """Intermediate anchor sizes: geometric mean of neighbors, patch size last."""
    sizes = [float(s) for s in sizes]
    out = [math.sqrt(a * b) for a, b in zip(sizes, sizes[1:])]
    out.append(float(patch_size))
    return tuple(out)


@dataclass(frozen=True)
class TemplateLayer:
    """Backbone-derived facts about a pyramid level (no anchor choices yet)."""

    name: str
    stride: float
    anchor_size: float
    receptive_field: float | None = None


DEFAULT_TEMPLATE: tuple[TemplateLayer, ...] = (
    TemplateLayer("conv3_3", 4.0, 16.0, 48.0),
    TemplateLayer("conv4_3", 8.0, 32.0, 108.0),
    TemplateLayer("conv5_3", 16.0, 64.0, 228.0),
    TemplateLayer("conv_fc_7", 32.0, 128.0, 340.0),
    TemplateLayer("conv6_2", 64.0, 256.0, 468.0),
)


def design_config(
    mar_obj: float,
    iou_threshold: float,
    template: Sequence[TemplateLayer] = DEFAULT_TEMPLATE,
    *,
    double_set: bool = True,
    first_ar_cap: float | None = 2.0,
    last_ar_cap: float | None = 1.5,
    patch_size: float = 300.0,
) -> AnchorConfig:
    """Build an anchor pyramid for a dataset whose aspect ratios reach ``mar_obj``.

    The widest useful anchor ratio ``t`` comes from ``max_anchor_ar``; each
    level then gets the ratio set for ``min(t, cap)`` where the first level is
    capped (its receptive field is small relative to wide anchors) and so is
    the last (few cells, mostly coarse context).
    """
    t = max_anchor_ar(mar_obj, iou_threshold, clamp=True)
    layers = []
    last = len(template) - 1
    for i, tpl in enumerate(template):
        eff = t
        if i == 0 and first_ar_cap is not None:
            eff = min(eff, first_ar_cap)
        if i == last and last_ar_cap is not None:
            eff = min(eff, last_ar_cap)
        layers.append(
            LayerSpec(
                name=tpl.name,
                stride=tpl.stride,
                anchor_size=tpl.anchor_size,
                aspect_ratios=tuple(aspect_ratio_set(eff)),
                receptive_field=tpl.receptive_field,
            )
        )
    return AnchorConfig(tuple(layers), patch_size=patch_size, double_set=double_set)


@dataclass(frozen=True)
class TiledAnchor:
    """One placed anchor: its box, owning layer, and provenance."""

    box: PlacedBox
    layer: str
    aspect_ratio: float
    second_set: bool
    index: int  # position within the layer, row-major center order


def tile_anchors(config: AnchorConfig) -> list[TiledAnchor]:
    """All anchors of the pyramid placed over the patch.

    Each layer contributes floor(patch / stride) cell centers per axis at
    (i + 0.5) * stride, each center carrying the layer's first-set shapes in
    configured order plus the second-set square when enabled.
    """
    out: list[TiledAnchor] = []
    for li, layer in enumerate(config.layers):
        shapes = config.shapes_for_layer(li)
        n = int(math.floor(config.patch_size / layer.stride))
        idx = 0
        for row in range(n):
            cy = (row + 0.5) * layer.stride
            for col in range(n):
                cx = (col + 0.5) * layer.stride
                for shape, ar, second in shapes:
                    out.append(
                        TiledAnchor(PlacedBox(cx, cy, shape), layer.name, ar, second, idx)
                    )
                    idx += 1
    return out


def scatter_data(
    config: AnchorConfig,
    gt_boxes: Iterable[BoxShape] = (),
) -> list[tuple[str, float, float]]:
    """(series, width, height) rows summarizing anchor shapes and data.

    First-set anchors are grouped into one series per aspect-ratio value so
    levels of the same ratio line up; second-set squares and ground-truth
    boxes get their own series.
    """
    rows: list[tuple[str, float, float]] = []
    for layer in config.layers:
        for ar in layer.aspect_ratios:
            shape = anchor_dims(layer.anchor_size, ar)
            rows.append((f"ar {format_ratio(ar)}", shape.width, shape.height))
    if config.double_set:
        for size2 in config.second_sizes:
            shape = anchor_dims(size2, 1.0)
            rows.append(("second set", shape.width, shape.height))
    for box in gt_boxes:
        rows.append(("gt", box.width, box.height))
    return rows


def guaranteed_height_range(
    config: AnchorConfig,
    t: float | None = None,
    require_lower_full: bool = True,
) -> tuple[float, float]:
    """Object-height interval (lo, hi] where the pyramid's coverage bound holds.

    A level of size S serves heights in (S/(2*sqrt(t)), S/sqrt(t)]. The bound
    needs the level itself to carry the ratio-``t`` anchor and — because
    objects near the low end of an octave lean on the previous level's wide
    anchor — the previous level as well. ``require_lower_full=False`` relaxes
    the neighbor condition to just "the level carries ratio t" (useful when
    reasoning about which level should own an object rather than about the
    worst-case bound).
    """
    if t is None:
        t = config.max_ar()
    root = math.sqrt(t)
    eligible: list[int] = []
    for i, layer in enumerate(config.layers):
        if layer.max_ar < t - 1e-9:
            continue
        if require_lower_full:
            if i == 0 or config.layers[i - 1].max_ar < t - 1e-9:
                continue
        eligible.append(i)
    if not eligible:
        raise ConfigError("no layer satisfies the coverage preconditions")
    if eligible != list(range(eligible[0], eligible[-1] + 1)):
        raise ConfigError("eligible layers are not contiguous")
    lo = config.layers[eligible[0]].anchor_size / (2.0 * root)
    hi = config.layers[eligible[-1]].anchor_size / root
    return (lo, hi)


def config_to_dict(config: AnchorConfig) -> dict:
    return {
        "patch_size": config.patch_size,
        "double_set": config.double_set,
        "second_sizes": list(config.second_sizes),
        "layers": [
            {
                "name": ly.name,
                "stride": ly.stride,
                "anchor_size": ly.anchor_size,
                "aspect_ratios": list(ly.aspect_ratios),
                "receptive_field": ly.receptive_field,
            }
            for ly in config.layers
        ],
    }


def config_from_dict(data: dict) -> AnchorConfig:
    if "anchor_config" in data:
        data = data["anchor_config"]
    try:
        layers = tuple(
            LayerSpec(
                name=str(ly["name"]),
                stride=float(ly["stride"]),
                anchor_size=float(ly["anchor_size"]),
                aspect_ratios=tuple(float(a) for a in ly["aspect_ratios"]),
                receptive_field=(
                    float(ly["receptive_field"])
                    if ly.get("receptive_field") is not None
                    else None
                ),
            )
            for ly in data["layers"]
        )
        return AnchorConfig(
            layers=layers,
            patch_size=float(data.get("patch_size", 300.0)),
            double_set=bool(data.get("double_set", True)),
            second_sizes=tuple(float(s) for s in data.get("second_sizes", ())),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


def load_config(path: str) -> AnchorConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return config_from_dict(data)
