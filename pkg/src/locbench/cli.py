"""Command-line surface.

Subcommands:

* ``synth``     — generate a synthetic benchmark dataset
* ``gt-rank``   — build a ground-truth retrieval ranking
* ``localize``  — localize queries from one ranking at one k
* ``metrics``   — retrieval metrics (and localized%) as CSV
* ``correlate`` — correlate two metric series from CSV files
* ``challenge`` — blur / dynamic-content flags per query image
* ``run``       — the full benchmark grid plus report emission

Every subcommand exits 0 only on full success; ``run`` in particular
exits nonzero if any requested cell failed, even though the report
bundle is still written for the cells that succeeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .benchmark import (
    DEFAULT_K_GRID,
    GT_METHODS,
    MODES,
    SCHEMES,
    BenchmarkConfig,
    _challenge_flags,
    _interpolate_cell,
    _localized_pct_table,
    _map_cell,
    emit_reports,
    normalized_feature_lookup,
    rank_by_descriptor,
    run_benchmark,
)
from .data_io import (
    DataIoError,
    load_dataset,
    load_metrics_csv,
    load_rankings,
    write_localization_results,
    write_metrics_csv,
    write_rankings,
)
from .correlation import UNDEFINED, correlate_per_dataset
from .gt_ranking import RcpConfig, build_gt_ranking, gt_statistics
from .map_localize import RansacConfig, SceneMap, TriangulationConfig
from .metrics import (
    AccuracyThresholds,
    mean_average_precision,
    precision_at_k,
    recall_at_k,
)
from .pose_approx import CsiConfig
from .synth import DescriptorModel, SceneConfig, emit_images, generate_scene, write_dataset

__all__ = ["main"]


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _names(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _threshold_pair(text: str) -> tuple:
    try:
        m, d = text.split(":")
        return (float(m), float(d))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"threshold must look like METERS:DEGREES, got {text!r}"
        ) from None


def _descriptor_model(text: str):
    """``NAME=MODE[,sigma=S][,dim=D]`` -> (name, DescriptorModel)."""
    head, _, tail = text.partition(",")
    name, _, mode = head.partition("=")
    if not mode:
        name, mode = head, head
    kwargs = {}
    for piece in filter(None, tail.split(",")):
        key, _, val = piece.partition("=")
        if key == "sigma":
            kwargs["sigma"] = float(val)
        elif key == "dim":
            kwargs["dimension"] = int(val)
        else:
            raise argparse.ArgumentTypeError(f"unknown descriptor option {key!r}")
    return name, DescriptorModel(mode=mode, **kwargs)


def _build_ranking(dataset, args):
    """Resolve the ranking source flags shared by localize/metrics."""
    chosen = [x for x in (args.feature, args.gt, args.ranking) if x]
    if len(chosen) != 1:
        raise SystemExit("exactly one of --feature / --gt / --ranking is required")
    if args.feature:
        return rank_by_descriptor(dataset, args.feature)
    if args.ranking:
        return load_rankings(args.ranking)
    method = args.gt
    kwargs = (
        {"poses": dataset.poses}
        if method == "rcp"
        else {"poses": dataset.poses, "intrinsics": dataset.intrinsics_map()}
        if method == "frustum"
        else {"scene_map": dataset.scene_map()}
    )
    gt = build_gt_ranking(method, dataset.query_ids, dataset.db_ids, **kwargs)
    return {q: list(gt.entries[q]) for q in dataset.query_ids}


def _cmd_synth(args) -> int:
    cfg = SceneConfig(
        layout=args.layout,
        n_db=args.n_db,
        n_query=args.n_query,
        n_points=args.n_points,
        noise_px=args.noise_px,
        seed=args.seed,
        spacing=args.spacing,
        n_missing=args.n_missing,
    )
    scene = generate_scene(cfg)
    models = dict(args.descriptor) if args.descriptor else None
    write_dataset(
        scene,
        args.out,
        descriptor_models=models,
        inlier_noise_px=args.match_noise_px,
        outlier_ratio=args.outlier_ratio,
        pair_mode=args.pair_mode,
        pair_r_min=args.pair_r_min,
        pair_top_n=args.pair_top_n,
    )
    if args.images:
        emit_images(scene, args.out)
    n_img = len(scene.images)
    print(f"wrote {args.out}: {n_img} images ({len(scene.query_ids)} queries), "
          f"{len(scene.points)} points")
    return 0


def _cmd_gt_rank(args) -> int:
    dataset = load_dataset(args.dataset)
    kwargs = {}
    if args.method == "rcp":
        kwargs = {"poses": dataset.poses, "cfg": RcpConfig(tau_c=args.tau_c, tau_R=args.tau_r)}
    elif args.method == "frustum":
        kwargs = {"poses": dataset.poses, "intrinsics": dataset.intrinsics_map(), "far": args.far}
    else:
        kwargs = {"scene_map": dataset.scene_map()}
    gt = build_gt_ranking(args.method, dataset.query_ids, dataset.db_ids, **kwargs)
    write_rankings(args.out, gt.entries)
    avg_k, missing = gt_statistics(gt)
    print(f"{args.method}: avg_k={avg_k!r} missing_pct={missing!r} -> {args.out}")
    return 0


def _cmd_localize(args) -> int:
    dataset = load_dataset(args.dataset)
    ranking = _build_ranking(dataset, args)
    ransac = RansacConfig(
        threshold_px=args.threshold_px,
        min_inliers=args.min_inliers,
        max_iters=args.max_iters,
        seed=args.seed,
    )
    if args.mode == "interpolation":
        lookup = None
        if args.scheme != "ewb":
            if not args.feature:
                raise SystemExit(f"scheme {args.scheme!r} weights descriptors; use --feature")
            lookup = normalized_feature_lookup(dataset, args.feature)
        rows = _interpolate_cell(
            dataset, ranking, args.scheme, args.k, CsiConfig(alpha=args.alpha), lookup
        )
    else:
        images = {i: (dataset.poses[i], dataset.intrinsics_of(i)) for i in dataset.image_ids}
        db_map = None
        if args.mode == "global_map":
            db = set(dataset.db_ids)
            db_map = SceneMap(
                {i: images[i] for i in dataset.db_ids},
                dict(dataset.points),
                [ob for ob in dataset.observations if ob.image_id in db],
            )
        rows = _map_cell(
            dataset, ranking, args.mode, args.k, ransac, TriangulationConfig(), db_map, images
        )
    write_localization_results(args.out, rows)
    n_ok = sum(1 for r in rows.values() if r["status"] == "ok")
    print(f"{args.mode} k={args.k}: {n_ok}/{len(rows)} localized -> {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    dataset = load_dataset(args.dataset)
    ranking = _build_ranking(dataset, args)
    method = args.gt_method
    kwargs = (
        {"poses": dataset.poses}
        if method == "rcp"
        else {"poses": dataset.poses, "intrinsics": dataset.intrinsics_map()}
        if method == "frustum"
        else {"scene_map": dataset.scene_map()}
    )
    gt = build_gt_ranking(method, dataset.query_ids, dataset.db_ids, **kwargs)
    relevant = gt.relevant
    ranked_ids = {q: [d for d, _ in ranking.get(q, [])] for q in dataset.query_ids}

    rows = []
    for k in args.k_grid:
        p = float(np.mean([precision_at_k(ranked_ids[q], relevant[q], k) for q in ranked_ids]))
        rows.append((f"p_at_k:{method}", args.label, k, p))
        try:
            r = recall_at_k(ranked_ids, relevant, k)
        except ValueError:
            r = UNDEFINED
        rows.append((f"r_at_k:{method}", args.label, k, r))
    try:
        rows.append((f"map:{method}", args.label, "", mean_average_precision(ranked_ids, relevant)))
    except ValueError:
        rows.append((f"map:{method}", args.label, "", UNDEFINED))

    if args.results:
        from .data_io import load_localization_results

        loc = load_localization_results(args.results)
        ks = sorted({k for k, _ in loc})
        table = _localized_pct_table(loc, ks, AccuracyThresholds(), dataset.query_ids)
        for ti, by_k in table.items():
            m, deg = AccuracyThresholds().pairs[ti]
            for k in sorted(by_k):
                rows.append((f"localized_pct[{m}m;{deg}deg]", args.label, k, by_k[k]))
    write_metrics_csv(args.out, rows)
    print(f"{len(rows)} metric rows -> {args.out}")
    return 0


def _cmd_correlate(args) -> int:
    def series(path, metric):
        out = {}
        for m, feature, k, value in load_metrics_csv(path):
            if m == metric and k is not None and value != UNDEFINED:
                out.setdefault(feature, {})[k] = value
        if not out:
            raise SystemExit(f"{path}: no rows for metric {metric!r}")
        return out

    a = series(args.metrics_a, args.metric_a)
    b = series(args.metrics_b, args.metric_b)
    if args.k_grid:
        k_grid = args.k_grid
    else:
        ks = set()
        for by_k in list(a.values()) + list(b.values()):
            ks.update(by_k)
        k_grid = tuple(sorted(ks))
    report = correlate_per_dataset(a, b, k_grid)
    payload = {
        "metric_a": args.metric_a,
        "metric_b": args.metric_b,
        "k_grid": list(k_grid),
        "pearson_per_feature": report.pearson_per_feature,
        "spearman_per_k": {str(k): v for k, v in report.spearman_per_k.items()},
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"correlation of {args.metric_a} vs {args.metric_b} -> {args.out}")
    return 0


def _cmd_challenge(args) -> int:
    dataset = load_dataset(args.dataset)
    flags = _challenge_flags(dataset)
    if not flags:
        raise SystemExit(f"{args.dataset}: no query images/ or masks/ rasters to analyze")
    lines = ["query_id,mad,blurry,dynamic_fraction,dynamic"]
    for q in sorted(flags):
        f = flags[q]
        lines.append(
            ",".join(
                [
                    q,
                    repr(f["mad"]) if "mad" in f else "",
                    str(f.get("blurry", "")),
                    repr(f["dynamic_fraction"]) if "dynamic_fraction" in f else "",
                    str(f.get("dynamic", "")),
                ]
            )
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    print(f"{len(flags)} query flags -> {args.out}")
    return 0


def _cmd_run(args) -> int:
    cfg = BenchmarkConfig(
        modes=args.modes,
        schemes=args.schemes,
        gt_methods=args.gt,
        features=args.features,
        k_grid=args.k_grid,
        thresholds=AccuracyThresholds(tuple(args.threshold))
        if args.threshold
        else AccuracyThresholds(),
        ransac=RansacConfig(
            threshold_px=args.threshold_px,
            min_inliers=args.min_inliers,
            max_iters=args.max_iters,
        ),
        csi_alpha=args.alpha,
        master_seed=args.seed,
        n_jobs=args.n_jobs,
    )
    dataset = load_dataset(args.dataset)
    bundle = run_benchmark(dataset, cfg)
    manifest_path, digest = emit_reports(bundle, args.out)
    print(f"manifest {manifest_path}")
    print(f"manifest_hash {digest}")
    if bundle.failed_cells:
        for cell in sorted(bundle.failed_cells):
            print(f"failed cell: {cell}", file=sys.stderr)
        return 1
    return 0


def _add_source_flags(p) -> None:
    p.add_argument("--feature", help="rank by this descriptor feature")
    p.add_argument("--gt", choices=GT_METHODS, help="rank by a ground-truth method")
    p.add_argument("--ranking", help="load a ranking file instead")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="locbench", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--layout", default="grid", choices=("grid", "corridor", "loop"))
    p.add_argument("--n-db", type=int, default=24)
    p.add_argument("--n-query", type=int, default=6)
    p.add_argument("--n-points", type=int, default=400)
    p.add_argument("--noise-px", type=float, default=0.0)
    p.add_argument("--spacing", type=float, default=4.0)
    p.add_argument("--n-missing", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--descriptor",
        type=_descriptor_model,
        action="append",
        metavar="NAME=MODE[,sigma=S][,dim=D]",
        help="descriptor feature to emit; repeatable (default: pose_oracle)",
    )
    p.add_argument("--match-noise-px", type=float, default=0.0)
    p.add_argument("--outlier-ratio", type=float, default=0.0)
    p.add_argument("--pair-mode", default="top_n", choices=("top_n", "threshold"))
    p.add_argument("--pair-top-n", type=int, default=8)
    p.add_argument("--pair-r-min", type=float, default=10.0)
    p.add_argument("--images", action="store_true", help="also render PGM images and masks")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("gt-rank", help="build a ground-truth ranking")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", required=True, choices=GT_METHODS)
    p.add_argument("--out", required=True)
    p.add_argument("--tau-c", type=float, default=25.0)
    p.add_argument("--tau-r", type=float, default=45.0)
    p.add_argument("--far", type=float, default=25.0)
    p.set_defaults(func=_cmd_gt_rank)

    p = sub.add_parser("localize", help="localize queries from one ranking at one k")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_source_flags(p)
    p.add_argument("--scheme", default="ewb", choices=SCHEMES)
    p.add_argument("--alpha", type=float, default=8.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold-px", type=float, default=8.0)
    p.add_argument("--min-inliers", type=int, default=12)
    p.add_argument("--max-iters", type=int, default=10000)
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("metrics", help="retrieval metrics for one ranking")
    p.add_argument("--dataset", required=True)
    p.add_argument("--gt-method", required=True, choices=GT_METHODS)
    p.add_argument("--out", required=True)
    _add_source_flags(p)
    p.add_argument("--label", default="ranking", help="feature column value in the CSV")
    p.add_argument("--k-grid", type=_ints, default=DEFAULT_K_GRID)
    p.add_argument("--results", help="localization results file to score as localized%%")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("correlate", help="correlate two metric series")
    p.add_argument("--metrics-a", required=True)
    p.add_argument("--metric-a", required=True)
    p.add_argument("--metrics-b", required=True)
    p.add_argument("--metric-b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k-grid", type=_ints, default=None)
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("challenge", help="blur / dynamic flags per query")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_challenge)

    p = sub.add_parser("run", help="full benchmark grid")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k-grid", type=_ints, default=DEFAULT_K_GRID)
    p.add_argument("--modes", type=_names, default=MODES)
    p.add_argument("--schemes", type=_names, default=SCHEMES)
    p.add_argument("--gt", type=_names, default=GT_METHODS)
    p.add_argument("--features", type=_names, default=None)
    p.add_argument("--threshold", type=_threshold_pair, action="append", metavar="M:DEG")
    p.add_argument("--alpha", type=float, default=8.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--threshold-px", type=float, default=8.0)
    p.add_argument("--min-inliers", type=int, default=12)
    p.add_argument("--max-iters", type=int, default=10000)
    p.set_defaults(func=_cmd_run)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataIoError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
