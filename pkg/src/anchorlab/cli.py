"""Command-line interface.

Subcommands: ingest, design, verify, match, scatter. Every file the tool
writes gets a sibling ``<name>.manifest.json`` recording the command, its
parameters, and input hashes. Exit codes: 0 success, 1 I/O failure, 2 bad
usage or bad data, 3 a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Sequence

from . import __version__
from .anchor_design import (
    AnchorConfig,
    ConfigError,
    config_to_dict,
    design_config,
    guaranteed_height_range,
    load_config,
    max_anchor_ar,
    scatter_data,
    tile_anchors,
)
from .boxgeom import PlacedBox
from .canonjson import dump_path, write_manifest
from .matcher import match_concentric, match_placed, read_boxes_csv, write_match_csv
from .oracle import (
    SweepGrid,
    coverage_sweep,
    iou_grid,
    min_feasible_t,
    shape_table,
    verify_case2,
    verify_quadratic,
)
from .plotting import render_heatmap, render_scatter
from .stats_ingest import DatasetStats, ingest, recommend

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_VERIFY = 3


def _iou_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not (0.0 < value < 1.0):
        raise argparse.ArgumentTypeError("IoU threshold must be strictly between 0 and 1")
    return value


def _grid_arg(text: str) -> tuple[int, ...]:
    parts = text.lower().split("x")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError("grid must look like HxA or HxAxO, e.g. 512x256")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid dimensions must be integers: {text!r}") from exc
    if any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError("grid dimensions must be >= 1")
    return dims


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anchorlab",
        description="Design, match, and brute-force-verify anchor pyramids.",
    )
    parser.add_argument("--version", action="version", version=f"anchorlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="summarize an annotation CSV")
    p_ingest.add_argument("--boxes", required=True, help="CSV with image_id,cx,cy,width,height")
    p_ingest.add_argument("-o", "--out", required=True, help="stats JSON to write")

    p_design = sub.add_parser("design", help="derive an anchor pyramid")
    src = p_design.add_mutually_exclusive_group(required=True)
    src.add_argument("--stats", help="stats JSON from: anchorlab ingest")
    src.add_argument("--mar-obj", type=float, help="aspect-ratio objective (e.g. 6)")
    p_design.add_argument("--iou", type=_iou_arg, default=0.5, help="IoU threshold (default 0.5)")
    p_design.add_argument("--patch", type=float, default=300.0, help="patch size (default 300)")
    p_design.add_argument(
        "--no-double-set",
        action="store_true",
        help="omit the intermediate-size square anchors",
    )
    p_design.add_argument("-o", "--out", required=True, help="config JSON to write")

    p_verify = sub.add_parser("verify", help="brute-force the coverage guarantees")
    p_verify.add_argument("--config", required=True, help="config JSON from: anchorlab design")
    p_verify.add_argument("--iou", type=_iou_arg, default=0.5, help="IoU threshold (default 0.5)")
    p_verify.add_argument(
        "--t", type=float, default=None, help="anchor ratio to audit (default: widest configured)"
    )
    p_verify.add_argument(
        "--k",
        type=float,
        default=None,
        help="object aspect-ratio bound (default: 2*t, the containment limit at IoU 0.5)",
    )
    p_verify.add_argument(
        "--grid",
        type=_grid_arg,
        default=(512, 256),
        help="sweep resolution HxA or HxAxO (default 512x256)",
    )
    p_verify.add_argument(
        "--offsets",
        action="store_true",
        help="also sweep anchor-grid placement offsets (diagnostic)",
    )
    p_verify.add_argument(
        "--dump-grid",
        default=None,
        metavar="CSV",
        help="write the sweep as CSV plus a heatmap SVG next to it",
    )
    p_verify.add_argument("--threads", type=int, default=None, help="worker threads")
    p_verify.add_argument("-o", "--out", default=None, help="report JSON (default: stdout)")

    p_match = sub.add_parser("match", help="match ground-truth boxes to anchors")
    p_match.add_argument("--config", required=True)
    p_match.add_argument("--boxes", required=True, help="CSV with cx,cy,width,height")
    p_match.add_argument("--iou", type=_iou_arg, default=0.5)
    p_match.add_argument(
        "--placed",
        action="store_true",
        help="match against anchors tiled over the patch (default: concentric shapes)",
    )
    p_match.add_argument("-o", "--out", required=True, help="match CSV to write")

    p_scatter = sub.add_parser("scatter", help="plot anchor shapes (and data) in width/height")
    p_scatter.add_argument("--config", required=True)
    p_scatter.add_argument("--boxes", default=None, help="optional CSV of boxes to overlay")
    p_scatter.add_argument(
        "-o", "--out", required=True, help=".svg for the figure, or .csv for data plus figure"
    )
    return parser


def _cmd_ingest(args: argparse.Namespace) -> int:
    with open(args.boxes, "r", encoding="utf-8", newline="") as fh:
        stats, errors = ingest(fh)
    for err in errors:
        print(f"warning: {args.boxes} line {err.line}: {err.message}", file=sys.stderr)
    dump_path(args.out, {"dataset_stats": stats.to_dict()})
    write_manifest(
        args.out,
        command="ingest",
        parameters={},
        inputs={"boxes": args.boxes},
        tool_version=__version__,
    )
    print(
        f"{stats.count} boxes ({stats.rejected} rejected); "
        f"ar p99 {stats.ar_percentiles['p99']:.4g} -> objective {stats.mar_obj:g}; "
        f"size range {stats.size_range[0]:.4g}..{stats.size_range[1]:.4g}"
    )
    return EXIT_OK


def _cmd_design(args: argparse.Namespace) -> int:
    stats = None
    inputs = {}
    if args.stats is not None:
        with open(args.stats, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        stats = DatasetStats.from_dict(data.get("dataset_stats", data))
        mar_obj = stats.mar_obj
        inputs["stats"] = args.stats
    else:
        mar_obj = args.mar_obj
    config = design_config(
        mar_obj,
        args.iou,
        double_set=not args.no_double_set,
        patch_size=args.patch,
    )
    t = max_anchor_ar(mar_obj, args.iou)
    derivation: dict = {
        "mar_obj": float(mar_obj),
        "iou_threshold": args.iou,
        "max_anchor_ar": t,
    }
    if stats is not None:
        summary = recommend(stats, args.iou, patch_size=args.patch)
        derivation["recommendation"] = summary.to_dict()
        for warning in summary.warnings:
            print(f"warning: {warning}", file=sys.stderr)
    dump_path(args.out, {"anchor_config": config_to_dict(config), "derivation": derivation})
    write_manifest(
        args.out,
        command="design",
        parameters={
            "mar_obj": float(mar_obj),
            "iou": args.iou,
            "patch": args.patch,
            "double_set": not args.no_double_set,
        },
        inputs=inputs,
        tool_version=__version__,
    )
    names = ", ".join(ly.name for ly in config.layers)
    print(f"anchor ratio {t:g}; layers: {names}; {len(tile_anchors(config))} anchors per patch")
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    t = args.t if args.t is not None else config.max_ar()
    k = args.k if args.k is not None else 2.0 * t
    if k < 1.0:
        raise ValueError(f"object aspect-ratio bound must be >= 1, got {k}")
    dims = args.grid
    offset_steps = dims[2] if len(dims) == 3 else 16
    try:
        band = guaranteed_height_range(config, t)
    except ConfigError:
        band = guaranteed_height_range(config, t, require_lower_full=False)
    grid = SweepGrid(
        band[0],
        band[1],
        height_steps=dims[0],
        ar_min=1.0,
        ar_max=k,
        ar_steps=dims[1],
        offset_steps=offset_steps,
    )

    quad_checks = [
        verify_quadratic(k, args.iou, t, layer.anchor_size) for layer in config.layers
    ]
    required_formula = max_anchor_ar(k, args.iou)
    required_brute = min_feasible_t(k, args.iou)
    coverage = coverage_sweep(
        config,
        args.iou,
        t=t,
        k=k,
        grid=grid,
        include_offsets=args.offsets,
        threads=args.threads,
    )
    try:
        case2 = verify_case2(config, t=t, threshold=args.iou)
        case2_dict = case2.to_dict()
        case2_ok = case2.passed
    except ConfigError as exc:
        case2_dict = {"skipped": str(exc), "passed": True}
        case2_ok = True

    ratio_ok = t >= required_brute - 1e-6
    passed = (
        all(q.passed for q in quad_checks) and coverage.passed and case2_ok and ratio_ok
    )
    report = {
        "passed": passed,
        "threshold": args.iou,
        "t": float(t),
        "k": float(k),
        "required_t": {"closed_form": required_formula, "bisection": required_brute},
        "quadratic": [q.to_dict() for q in quad_checks],
        "coverage": coverage.to_dict(),
        "case2": case2_dict,
    }

    inputs = {"config": args.config}
    if args.dump_grid is not None:
        hs, ars, best, winner = iou_grid(config, grid, threads=args.threads)
        layer_names = [nm for nm, _s, _a, _b in shape_table(config)]
        with open(args.dump_grid, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["height", "ar", "best_iou", "winner_layer"])
            for i, h in enumerate(hs):
                for j, a in enumerate(ars):
                    win = int(winner[i, j])
                    writer.writerow(
                        [
                            "%.9g" % h,
                            "%.9g" % a,
                            "%.9g" % best[i, j],
                            layer_names[win] if win >= 0 else "",
                        ]
                    )
        write_manifest(
            args.dump_grid,
            command="verify",
            parameters={"iou": args.iou, "t": float(t), "k": float(k), "grid": list(dims)},
            inputs=inputs,
            tool_version=__version__,
        )
        svg_path = args.dump_grid.rsplit(".", 1)[0] + ".svg"
        render_heatmap(hs, ars, best, svg_path, args.iou)
        write_manifest(
            svg_path,
            command="verify",
            parameters={"iou": args.iou, "t": float(t), "k": float(k), "grid": list(dims)},
            inputs=inputs,
            tool_version=__version__,
        )

    for q in quad_checks:
        state = "pass" if q.passed else "FAIL"
        print(f"quadratic size {q.size:g}: {state} (margin max {max(q.f_left, q.f_right, q.interior_max):.3e})")
    print(
        f"coverage: min IoU {coverage.min_iou:.6f} at h={coverage.argmin_height:.4g} "
        f"ar={coverage.argmin_ar:.4g}; fraction >= {args.iou:g}: {coverage.fraction_covered:.6f}"
    )
    print(f"required anchor ratio: {required_formula:.6f} (bisection {required_brute:.6f})")

    if args.out is not None:
        dump_path(args.out, report)
        write_manifest(
            args.out,
            command="verify",
            parameters={
                "iou": args.iou,
                "t": float(t),
                "k": float(k),
                "grid": list(dims),
                "offsets": bool(args.offsets),
            },
            inputs=inputs,
            tool_version=__version__,
        )
    else:
        from .canonjson import dumps

        sys.stdout.write(dumps(report))

    if not passed:
        if not coverage.passed:
            print(
                f"verify failed: IoU {coverage.min_iou:.6f} < {args.iou:g} for object "
                f"h={coverage.argmin_height:.6g} ar={coverage.argmin_ar:.6g}",
                file=sys.stderr,
            )
        for q in quad_checks:
            if not q.passed and q.witness is not None:
                print(
                    f"verify failed: quadratic margin {q.witness['margin']:.6g} > 0 at "
                    f"h={q.witness['height']:.6g} (size {q.size:g}, model IoU "
                    f"{q.witness['model_iou']:.6f})",
                    file=sys.stderr,
                )
        if not case2_ok:
            for pair in case2_dict.get("pairs", []):
                for failure in pair.get("failures", []):
                    print(
                        f"verify failed: cross-scale {pair['lower_layer']}/{pair['upper_layer']} "
                        f"IoU {failure['best_iou']:.6f} at area={failure['area']:.6g} "
                        f"ar={failure['ar']:.6g}",
                        file=sys.stderr,
                    )
        if not ratio_ok:
            print(
                f"verify failed: configured ratio {t:g} below required {required_brute:.6f}",
                file=sys.stderr,
            )
        return EXIT_VERIFY
    return EXIT_OK


def _cmd_match(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    with open(args.boxes, "r", encoding="utf-8", newline="") as fh:
        boxes = read_boxes_csv(fh)
    if args.placed:
        matches: list = match_placed(boxes, config, args.iou)
        n_matched = sum(1 for m in matches if m.result.matched)
    else:
        matches = [
            match_concentric(box.shape, config, args.iou, gt_index=i)
            for i, box in enumerate(boxes)
        ]
        n_matched = sum(1 for m in matches if m.matched)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_match_csv(fh, matches)
    write_manifest(
        args.out,
        command="match",
        parameters={"iou": args.iou, "placed": bool(args.placed)},
        inputs={"config": args.config, "boxes": args.boxes},
        tool_version=__version__,
    )
    total = len(boxes)
    frac = n_matched / total if total else 0.0
    print(f"{n_matched}/{total} boxes matched at IoU >= {args.iou:g} ({frac:.4f})")
    return EXIT_OK


def _cmd_scatter(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    inputs = {"config": args.config}
    gt_shapes = []
    if args.boxes is not None:
        with open(args.boxes, "r", encoding="utf-8", newline="") as fh:
            gt_shapes = [b.shape for b in read_boxes_csv(fh)]
        inputs["boxes"] = args.boxes
    rows = scatter_data(config, gt_shapes)
    out = args.out
    if out.endswith(".svg"):
        svg_path = out
        csv_path = None
    elif out.endswith(".csv"):
        csv_path = out
        svg_path = out[: -len(".csv")] + ".svg"
    else:
        raise ValueError(f"scatter output must end in .svg or .csv, got {out!r}")
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["series", "width", "height"])
            for series, w, h in rows:
                writer.writerow([series, "%.9g" % w, "%.9g" % h])
        write_manifest(
            csv_path,
            command="scatter",
            parameters={},
            inputs=inputs,
            tool_version=__version__,
        )
    render_scatter(rows, svg_path)
    write_manifest(
        svg_path,
        command="scatter",
        parameters={},
        inputs=inputs,
        tool_version=__version__,
    )
    n_anchor = sum(1 for s, _w, _h in rows if s != "gt")
    print(f"{n_anchor} anchor shapes, {len(rows) - n_anchor} data boxes -> {svg_path}")
    return EXIT_OK


_HANDLERS = {
    "ingest": _cmd_ingest,
    "design": _cmd_design,
    "verify": _cmd_verify,
    "match": _cmd_match,
    "scatter": _cmd_scatter,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # ConfigError, EmptyDatasetError, and JSON decode errors all derive
        # from ValueError: they are all "your input is wrong" conditions.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())
