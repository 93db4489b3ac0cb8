"""anchorlab: anchor pyramid design, matching, and brute-force verification."""

__version__ = "0.1.0"

from .anchor_design import (  # noqa: E402
    AnchorConfig,
    ConfigError,
    DEFAULT_TEMPLATE,
    LayerSpec,
    TemplateLayer,
    aspect_ratio_ladder,
    aspect_ratio_set,
    design_config,
    guaranteed_height_range,
    load_config,
    max_anchor_ar,
    scatter_data,
    second_set_sizes,
    tile_anchors,
)
from .boxgeom import BoxShape, PlacedBox, anchor_dims, concentric_iou, iou  # noqa: E402
from .matcher import (  # noqa: E402
    MatchResult,
    PlacedMatch,
    assign_layer,
    match_concentric,
    match_placed,
)
from .oracle import (  # noqa: E402
    CoverageReport,
    SweepGrid,
    best_anchor_iou,
    coverage_sweep,
    min_feasible_t,
    verify_case2,
    verify_quadratic,
)
from .stats_ingest import DatasetStats, DesignSummary, EmptyDatasetError, ingest, recommend  # noqa: E402

__all__ = [
    "__version__",
    "AnchorConfig",
    "BoxShape",
    "ConfigError",
    "CoverageReport",
    "DEFAULT_TEMPLATE",
    "DatasetStats",
    "DesignSummary",
    "EmptyDatasetError",
    "LayerSpec",
    "MatchResult",
    "PlacedBox",
    "PlacedMatch",
    "SweepGrid",
    "TemplateLayer",
    "anchor_dims",
    "aspect_ratio_ladder",
    "aspect_ratio_set",
    "assign_layer",
    "best_anchor_iou",
    "concentric_iou",
    "coverage_sweep",
    "design_config",
    "guaranteed_height_range",
    "ingest",
    "iou",
    "load_config",
    "match_concentric",
    "match_placed",
    "max_anchor_ar",
    "min_feasible_t",
    "recommend",
    "scatter_data",
    "second_set_sizes",
    "tile_anchors",
    "verify_case2",
    "verify_quadratic",
]
