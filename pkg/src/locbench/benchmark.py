"""Benchmark orchestration: rankings x localization modes x k grid.

``run_benchmark`` evaluates every requested combination of

* ranking source — a descriptor feature (cosine retrieval) or a
  ground-truth relevance method (``gt:rcp``, ``gt:frustum``,
  ``gt:coobs``), the latter acting as retrieval upper bounds;
* localization mode — ``interpolation`` (weighted pose blending, one
  sub-cell per weighting scheme), ``local_sfm`` (on-the-fly map), or
  ``global_map`` (prebuilt map + PnP);
* k — how many retrieved images the mode consumes.

Each (source, mode, scheme, k) cell runs with its own RANSAC seed
derived by hashing the master seed with the cell key, so cells are
independent and the whole run is a pure function of (dataset bytes,
config). A cell that raises is recorded as failed and skipped; the
rest of the run continues.

``emit_reports`` serializes the bundle: metric CSV, correlation JSON,
scatter/violin series, upper-bound gap table, per-image challenge
flags, and a manifest with config, seeds, and content hashes of every
input and output file. Emission is byte-deterministic: re-running an
identical configuration on identical data yields an identical
manifest, hash for hash.
"""

from __future__ import annotations

import hashlib
import json
import traceback
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .challenge import blur_score, dynamic_fraction
from .correlation import (
    UNDEFINED,
    CorrelationReport,
    correlate_per_dataset,
    correlate_per_query,
)
from .data_io import (
    IMAGES_DIR,
    LABELS_FILE,
    MASKS_DIR,
    Dataset,
    load_labels,
    read_pgm,
    write_localization_results,
    write_metrics_csv,
    write_rankings,
)
from .geometry import pose_error
from .gt_ranking import MAX_RANK, RcpConfig, build_gt_ranking, gt_statistics
from .map_localize import (
    RansacConfig,
    SceneMap,
    TriangulationConfig,
    localize_global,
    localize_local_sfm,
)
from .metrics import (
    AccuracyThresholds,
    mean_average_precision,
    precision_at_k,
    recall_at_k,
)
from .pose_approx import CsiConfig, interpolate_pose, weights_bdi, weights_csi, weights_ewb

__all__ = [
    "BenchmarkConfig",
    "BenchmarkBundle",
    "DEFAULT_K_GRID",
    "MODES",
    "SCHEMES",
    "rank_by_descriptor",
    "build_rankings",
    "run_benchmark",
    "emit_reports",
    "manifest_hash",
]

DEFAULT_K_GRID = (1, 2, 3, 4, 5, 10, 20, 50)
MODES = ("interpolation", "local_sfm", "global_map")
SCHEMES = ("ewb", "bdi", "csi")
GT_METHODS = ("rcp", "frustum", "coobs")


@dataclass(frozen=True)
class BenchmarkConfig:
    modes: tuple = MODES
    schemes: tuple = SCHEMES
    gt_methods: tuple = GT_METHODS
    features: tuple | None = None  # None = every feature in the dataset
    k_grid: tuple = DEFAULT_K_GRID
    thresholds: AccuracyThresholds = AccuracyThresholds()
    ransac: RansacConfig = RansacConfig()
    triangulation: TriangulationConfig = TriangulationConfig()
    rcp: RcpConfig = RcpConfig()
    csi_alpha: float = 8.0
    frustum_far: float = 25.0
    master_seed: int = 0
    # which threshold pair the dataset-level correlation uses
    correlation_threshold_index: int = 1
    # cells are independent (own seeds), so they may run on threads
    n_jobs: int = 1

    def __post_init__(self):
        ks = tuple(int(k) for k in self.k_grid)
        if not ks or list(ks) != sorted(set(ks)):
            raise ValueError("k grid must be strictly ascending and non-empty")
        if ks[0] < 1 or ks[-1] > MAX_RANK:
            raise ValueError(f"k grid must lie within [1, {MAX_RANK}]")
        object.__setattr__(self, "k_grid", ks)
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}")
        if not self.schemes:
            raise ValueError("need at least one weighting scheme")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        for g in self.gt_methods:
            if g not in GT_METHODS:
                raise ValueError(f"unknown gt method {g!r}")
        if not (0 <= self.correlation_threshold_index < len(self.thresholds)):
            raise ValueError("correlation threshold index out of range")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")


@dataclass
class BenchmarkBundle:
    config: BenchmarkConfig
    sources: list
    gt_rankings: dict  # gt method -> GroundTruthRanking
    rankings: dict  # source -> {query: [(db_id, score), ...]}
    retrieval_rows: list  # (metric, source, k, value) CSV rows
    localization: dict  # (source, mode, scheme) -> {(k, query): row dict}
    localized_pct: dict  # (source, mode, scheme) -> {threshold_idx: {k: pct}}
    correlation: dict  # (gt, source, mode, scheme) -> CorrelationReport
    gaps: list  # (gt, feature, mode, scheme, threshold_idx, k, gap)
    challenge: dict  # query -> flags dict
    challenge_rows: list  # subset metric rows
    cell_seeds: dict  # cell key string -> seed
    failed_cells: dict  # cell key string -> error text
    input_hashes: dict  # relative path -> sha256


def _cell_seed(master: int, key: str) -> int:
    digest = hashlib.sha256(f"{master}|{key}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_inputs(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[p.relative_to(root).as_posix()] = _sha256_file(p)
    return out


def normalized_feature_lookup(dataset: Dataset, feature: str) -> dict:
    """image_id -> unit-norm float64 descriptor for one feature."""
    mat, ids = dataset.descriptors[feature]
    mat = np.asarray(mat, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"feature {feature!r} contains an all-zero descriptor")
    mat = mat / norms[:, None]
    return {image_id: mat[i] for i, image_id in enumerate(ids)}


def rank_by_descriptor(dataset: Dataset, feature: str, top_k: int = MAX_RANK) -> dict:
    """Cosine-similarity retrieval: query -> [(db_id, similarity), ...].

    Descriptors are re-normalized defensively; ties break by ascending
    database id so retrieval is deterministic.
    """
    lookup = normalized_feature_lookup(dataset, feature)
    db = dataset.db_ids
    out = {}
    for q in dataset.query_ids:
        dq = lookup[q]
        scored = [(d, float(lookup[d] @ dq)) for d in db]
        scored.sort(key=lambda t: (-t[1], t[0]))
        out[q] = scored[:top_k]
    return out


def build_rankings(dataset: Dataset, cfg: BenchmarkConfig):
    """All ranking sources for a run.

    Returns (rankings, gt_rankings, sources): descriptor features rank
    by cosine similarity; each requested GT method contributes a
    ``gt:<method>`` source ranked by its relevance score.
    """
    rankings = {}
    gt_rankings = {}
    features = list(cfg.features) if cfg.features is not None else sorted(dataset.descriptors)
    for feature in features:
        if feature not in dataset.descriptors:
            raise KeyError(f"dataset has no descriptor feature {feature!r}")
        rankings[feature] = rank_by_descriptor(dataset, feature)

    poses = dataset.poses
    intr = dataset.intrinsics_map()
    for method in cfg.gt_methods:
        kwargs = {}
        if method == "rcp":
            kwargs = {"poses": poses, "cfg": cfg.rcp}
        elif method == "frustum":
            kwargs = {"poses": poses, "intrinsics": intr, "far": cfg.frustum_far}
        else:
            kwargs = {"scene_map": dataset.scene_map()}
        gt = build_gt_ranking(method, dataset.query_ids, dataset.db_ids, **kwargs)
        gt_rankings[method] = gt
        rankings[f"gt:{method}"] = {q: list(gt.entries[q]) for q in dataset.query_ids}
    sources = sorted(rankings)
    return rankings, gt_rankings, sources


def _retrieval_rows(rankings, gt_rankings, sources, k_grid):
    """P@k / R@k / mAP of every source against every GT relevance set."""
    rows = []
    for gt_name, gt in sorted(gt_rankings.items()):
        relevant = gt.relevant
        for source in sources:
            ranked_ids = {q: [d for d, _ in rankings[source].get(q, [])] for q in relevant}
            for k in k_grid:
                p = float(np.mean([precision_at_k(ranked_ids[q], relevant[q], k) for q in ranked_ids]))
                rows.append((f"p_at_k:{gt_name}", source, k, p))
                try:
                    r = recall_at_k(ranked_ids, relevant, k)
                except ValueError:
                    r = UNDEFINED
                rows.append((f"r_at_k:{gt_name}", source, k, r))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    m = mean_average_precision(ranked_ids, relevant)
                except ValueError:
                    m = UNDEFINED
            rows.append((f"map:{gt_name}", source, None, m))
    return rows


def _interpolate_cell(dataset, ranking, scheme, k, csi_cfg, feature_lookup):
    """One (source, interpolation, scheme, k) cell: per-query status rows."""
    out = {}
    for q in dataset.query_ids:
        top = ranking.get(q, [])[:k]
        if not top:
            out[(k, q)] = {"status": "no-retrieved", "c_error": None, "R_error": None, "inliers": 0}
            continue
        ids = [d for d, _ in top]
        poses = [dataset.poses[d] for d in ids]
        kk = len(ids)
        if scheme == "ewb" or feature_lookup is None:
            w = weights_ewb(kk)
        elif scheme == "bdi":
            w = weights_bdi(feature_lookup[q], np.stack([feature_lookup[d] for d in ids]))
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                w = weights_csi(
                    feature_lookup[q], np.stack([feature_lookup[d] for d in ids]), csi_cfg
                )
        est = interpolate_pose(poses, w)
        err = pose_error(est, dataset.poses[q])
        degenerate = bool(getattr(est, "degenerate", False))
        out[(k, q)] = {
            "status": "degenerate" if degenerate else "ok",
            "c_error": err.c_error if not degenerate else None,
            "R_error": err.R_error if not degenerate else None,
            "inliers": 0,
        }
    return out


def _map_cell(dataset, ranking, mode, k, ransac, tri_cfg, db_map, images):
    out = {}
    for q in dataset.query_ids:
        ids = [d for d, _ in ranking.get(q, [])[:k]]
        intr = dataset.intrinsics_of(q)
        if mode == "local_sfm":
            if len(ids) < 2:
                out[(k, q)] = {
                    "status": "too-few-retrieved",
                    "c_error": None,
                    "R_error": None,
                    "inliers": 0,
                }
                continue
            res = localize_local_sfm(q, ids, images, dataset.matches, intr, ransac, tri_cfg)
        else:
            res = localize_global(q, ids, db_map, dataset.matches, intr, ransac)
        if res.success:
            err = pose_error(res.pose, dataset.poses[q])
            out[(k, q)] = {
                "status": "ok",
                "c_error": err.c_error,
                "R_error": err.R_error,
                "inliers": res.n_inliers,
            }
        else:
            out[(k, q)] = {
                "status": res.failure or "failed",
                "c_error": None,
                "R_error": None,
                "inliers": res.n_inliers,
            }
    return out


def _localized_pct_table(cell_rows, k_grid, thresholds, query_ids):
    table = {ti: {} for ti in range(len(thresholds))}
    for k in k_grid:
        errors = []
        for q in query_ids:
            row = cell_rows.get((k, q))
            if row is None:
                continue
            if row["status"] == "ok":
                errors.append((row["c_error"], row["R_error"]))
            else:
                errors.append(None)
        if not errors:
            continue
        for ti, thr in enumerate(thresholds):
            hits = sum(1 for e in errors if e is not None and e[0] < thr[0] and e[1] < thr[1])
            table[ti][k] = 100.0 * hits / len(errors)
    return table


def _challenge_flags(dataset: Dataset):
    """Blur and dynamic flags for queries that have rasters on disk."""
    root = dataset.root
    labels_path = root / LABELS_FILE
    label_table = load_labels(labels_path) if labels_path.exists() else None
    dynamic_classes = ["person", "car"] if label_table else []
    flags = {}
    for q in dataset.query_ids:
        entry = {}
        img_path = root / IMAGES_DIR / f"{q}.pgm"
        if img_path.exists():
            img = read_pgm(img_path).astype(np.float64)
            cutoff = min(60, (min(img.shape) - 1) // 2)
            bs = blur_score(img, cutoff=cutoff, image_id=q)
            entry["mad"] = bs.mad
            entry["blurry"] = bs.blurry
        mask_path = root / MASKS_DIR / f"{q}.pgm"
        if mask_path.exists() and label_table is not None:
            df = dynamic_fraction(read_pgm(mask_path), dynamic_classes, label_table, image_id=q)
            entry["dynamic_fraction"] = df.fraction
            entry["dynamic"] = df.dynamic
        if entry:
            flags[q] = entry
    return flags


def _subset_rows(localization, localized_keys, flags, k_grid, thresholds, query_ids):
    """localized% restricted to challenge subsets, as metric CSV rows."""
    subsets = {}
    if any("blurry" in f for f in flags.values()):
        subsets["blurry"] = [q for q in query_ids if flags.get(q, {}).get("blurry") is True]
        subsets["sharp"] = [q for q in query_ids if flags.get(q, {}).get("blurry") is False]
    if any("dynamic" in f for f in flags.values()):
        subsets["dynamic"] = [q for q in query_ids if flags.get(q, {}).get("dynamic") is True]
        subsets["static"] = [q for q in query_ids if flags.get(q, {}).get("dynamic") is False]
    rows = []
    for name, qs in sorted(subsets.items()):
        if not qs:
            continue
        for cell_key in localized_keys:
            source, mode, scheme = cell_key
            cell = localization[cell_key]
            table = _localized_pct_table(cell, k_grid, thresholds, qs)
            for ti, by_k in table.items():
                m, deg = thresholds.pairs[ti]
                for k, pct in by_k.items():
                    rows.append(
                        (f"localized_pct[{m}m;{deg}deg][{mode}:{scheme}][{name}]", source, k, pct)
                    )
    return rows


def run_benchmark(dataset: Dataset, cfg: BenchmarkConfig = BenchmarkConfig(), rankings=None):
    """Evaluate all requested cells; partial failures never abort the run."""
    if rankings is None:
        rankings, gt_rankings, sources = build_rankings(dataset, cfg)
    else:
        gt_rankings = {}
        for method in cfg.gt_methods:
            kwargs = (
                {"poses": dataset.poses, "cfg": cfg.rcp}
                if method == "rcp"
                else {"poses": dataset.poses, "intrinsics": dataset.intrinsics_map(), "far": cfg.frustum_far}
                if method == "frustum"
                else {"scene_map": dataset.scene_map()}
            )
            gt_rankings[method] = build_gt_ranking(
                method, dataset.query_ids, dataset.db_ids, **kwargs
            )
        sources = sorted(rankings)

    feature_names = [s for s in sources if not s.startswith("gt:")]
    retrieval_rows = _retrieval_rows(rankings, gt_rankings, sources, cfg.k_grid)

    db_map = None
    images = {i: (dataset.poses[i], dataset.intrinsics_of(i)) for i in dataset.image_ids}
    if "global_map" in cfg.modes:
        db = set(dataset.db_ids)
        db_map = SceneMap(
            {i: images[i] for i in dataset.db_ids},
            dict(dataset.points),
            [ob for ob in dataset.observations if ob.image_id in db],
        )

    lookups = {f: normalized_feature_lookup(dataset, f) for f in feature_names if f in dataset.descriptors}

    cells = []
    cell_seeds = {}
    for source in sources:
        for mode in cfg.modes:
            schemes = cfg.schemes if mode == "interpolation" else ("-",)
            if mode == "interpolation" and source not in lookups:
                # GT sources carry no descriptors: only equal weights apply
                schemes = ("ewb",)
            for scheme in schemes:
                for k in cfg.k_grid:
                    cell_key = f"{source}|{mode}|{scheme}|k={k}"
                    cell_seeds[cell_key] = _cell_seed(cfg.master_seed, cell_key)
                    cells.append((source, mode, scheme, k, cell_key))

    def run_cell(cell):
        source, mode, scheme, k, cell_key = cell
        if mode == "interpolation":
            return _interpolate_cell(
                dataset,
                rankings[source],
                scheme,
                k,
                CsiConfig(alpha=cfg.csi_alpha),
                lookups.get(source) if scheme != "ewb" else None,
            )
        return _map_cell(
            dataset,
            rankings[source],
            mode,
            k,
            replace(cfg.ransac, seed=cell_seeds[cell_key]),
            cfg.triangulation,
            db_map,
            images,
        )

    failed = {}
    results = {}
    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            futures = {pool.submit(run_cell, cell): cell for cell in cells}
            for fut, cell in futures.items():
                try:
                    results[cell] = fut.result()
                except Exception:
                    failed[cell[4]] = traceback.format_exc(limit=3)
    else:
        for cell in cells:
            try:
                results[cell] = run_cell(cell)
            except Exception:
                failed[cell[4]] = traceback.format_exc(limit=3)

    localization = {}
    localized_pct = {}
    for cell in cells:
        source, mode, scheme, k, _ = cell
        localization.setdefault((source, mode, scheme), {}).update(results.get(cell, {}))
    for key, cell_rows in localization.items():
        localized_pct[key] = _localized_pct_table(
            cell_rows, cfg.k_grid, cfg.thresholds, dataset.query_ids
        )

    # Upper-bound gaps: GT-ranked localized% minus descriptor-ranked, for
    # every cell shape both sides actually ran. GT interpolation has ewb
    # weights only, so bdi/csi feature cells are measured against gt ewb.
    gaps = []
    for gt_name in sorted(gt_rankings):
        for (source, mode, scheme) in sorted(localized_pct):
            if source.startswith("gt:"):
                continue
            gt_scheme = "ewb" if mode == "interpolation" else scheme
            gt_key = (f"gt:{gt_name}", mode, gt_scheme)
            if gt_key not in localized_pct:
                continue
            gt_tab = localized_pct[gt_key]
            ft_tab = localized_pct[(source, mode, scheme)]
            for ti in gt_tab:
                for k in gt_tab[ti]:
                    if k in ft_tab.get(ti, {}):
                        gaps.append(
                            (gt_name, source, mode, scheme, ti, k, gt_tab[ti][k] - ft_tab[ti][k])
                        )

    # correlation: descriptor features against each GT relevance, per cell
    correlation = {}
    ti = cfg.correlation_threshold_index
    for gt_name, gt in sorted(gt_rankings.items()):
        relevant = gt.relevant
        for (source, mode, scheme), cell_rows in sorted(localization.items()):
            if source.startswith("gt:"):
                continue
            ranked_ids = {q: [d for d, _ in rankings[source].get(q, [])] for q in dataset.query_ids}
            metric_a = {
                source: {
                    q: {k: precision_at_k(ranked_ids[q], relevant.get(q, frozenset()), k) for k in cfg.k_grid}
                    for q in dataset.query_ids
                }
            }
            metric_b = {
                source: {
                    q: {
                        k: (cell_rows.get((k, q)) or {}).get("c_error")
                        for k in cfg.k_grid
                    }
                    for q in dataset.query_ids
                }
            }
            per_query = correlate_per_query(metric_a, metric_b, cfg.k_grid)
            ds_a = {
                source: {
                    k: float(
                        np.mean([metric_a[source][q][k] for q in dataset.query_ids])
                    )
                    for k in cfg.k_grid
                }
            }
            ds_b = {source: dict(localized_pct[(source, mode, scheme)].get(ti, {}))}
            per_dataset = correlate_per_dataset(ds_a, ds_b, cfg.k_grid)
            correlation[(gt_name, source, mode, scheme)] = CorrelationReport.assemble(
                per_query, per_dataset
            )

    # cross-feature Spearman per k needs >= 2 features; computed per (gt, mode, scheme)
    if len(feature_names) >= 2:
        for gt_name, gt in sorted(gt_rankings.items()):
            relevant = gt.relevant
            mode_keys = sorted({(m, s) for (f, m, s) in localization if not f.startswith("gt:")})
            for mode, scheme in mode_keys:
                ds_a = {}
                ds_b = {}
                for feature in feature_names:
                    if (feature, mode, scheme) not in localized_pct:
                        continue
                    ranked_ids = {
                        q: [d for d, _ in rankings[feature].get(q, [])] for q in dataset.query_ids
                    }
                    ds_a[feature] = {
                        k: float(
                            np.mean(
                                [
                                    precision_at_k(ranked_ids[q], relevant.get(q, frozenset()), k)
                                    for q in dataset.query_ids
                                ]
                            )
                        )
                        for k in cfg.k_grid
                    }
                    ds_b[feature] = dict(localized_pct[(feature, mode, scheme)].get(ti, {}))
                if len(ds_a) >= 2:
                    per_dataset = correlate_per_dataset(ds_a, ds_b, cfg.k_grid)
                    correlation[(gt_name, "features", mode, scheme)] = CorrelationReport(
                        pearson_per_query={},
                        pearson_per_dataset=per_dataset.pearson_per_feature,
                        spearman_per_k=per_dataset.spearman_per_k,
                        scatter_series={},
                        violins={},
                        undefined_queries={},
                    )

    flags = _challenge_flags(dataset)
    challenge_rows = _subset_rows(
        localization, sorted(localization), flags, cfg.k_grid, cfg.thresholds, dataset.query_ids
    )

    return BenchmarkBundle(
        config=cfg,
        sources=sources,
        gt_rankings=gt_rankings,
        rankings=rankings,
        retrieval_rows=retrieval_rows,
        localization=localization,
        localized_pct=localized_pct,
        correlation=correlation,
        gaps=gaps,
        challenge=flags,
        challenge_rows=challenge_rows,
        cell_seeds=cell_seeds,
        failed_cells=failed,
        input_hashes=_hash_inputs(dataset.root),
    )


def _config_dict(cfg: BenchmarkConfig) -> dict:
    d = asdict(cfg)
    d["thresholds"] = [list(p) for p in cfg.thresholds.pairs]
    return d


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"unserializable {type(o)!r}")


def emit_reports(bundle: BenchmarkBundle, out_dir) -> tuple:
    """Write the report bundle; returns (manifest_path, manifest_hash)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for source in bundle.sources:
        safe = source.replace(":", "_")
        write_rankings(out / "rankings" / f"{safe}.txt", bundle.rankings[source])

    for (source, mode, scheme), rows in sorted(bundle.localization.items()):
        safe = f"{source.replace(':', '_')}__{mode}__{scheme.strip('-') or 'none'}"
        write_localization_results(out / "localization" / f"{safe}.txt", rows)

    metric_rows = []
    for metric, source, k, value in bundle.retrieval_rows:
        metric_rows.append((metric, source, "" if k is None else k, value))
    for (source, mode, scheme), table in sorted(bundle.localized_pct.items()):
        for ti, by_k in table.items():
            m, deg = bundle.config.thresholds.pairs[ti]
            for k in sorted(by_k):
                metric_rows.append(
                    (f"localized_pct[{m}m;{deg}deg][{mode}:{scheme}]", source, k, by_k[k])
                )
    metric_rows.extend(bundle.challenge_rows)
    write_metrics_csv(out / "metrics.csv", metric_rows)

    # plot-ready view: k on the x axis, one series per (metric, source)
    series_rows = sorted(
        (r for r in metric_rows if r[2] != ""), key=lambda r: (r[0], r[1], r[2])
    )
    write_metrics_csv(out / "series.csv", series_rows)

    corr_obj = {}
    for (gt_name, source, mode, scheme), report in sorted(bundle.correlation.items()):
        corr_obj[f"{gt_name}|{source}|{mode}|{scheme}"] = {
            "pearson_per_query": report.pearson_per_query,
            "pearson_per_dataset": report.pearson_per_dataset,
            "spearman_per_k": {str(k): v for k, v in report.spearman_per_k.items()},
            "undefined_queries": report.undefined_queries,
        }
    (out / "correlation.json").write_text(
        json.dumps(corr_obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    )

    scatter_lines = ["gt,source,mode,scheme,k,retrieval_metric,pose_error_m"]
    violin_lines = ["gt,source,mode,scheme,stat,value"]
    for (gt_name, source, mode, scheme), report in sorted(bundle.correlation.items()):
        for feature, by_k in sorted(report.scatter_series.items()):
            for k in sorted(by_k):
                for a, b in by_k[k]:
                    scatter_lines.append(
                        f"{gt_name},{source},{mode},{scheme},{k},{a!r},{b!r}"
                    )
        for feature, summary in sorted(report.violins.items()):
            base = f"{gt_name},{source},{mode},{scheme}"
            for name, q in zip(("q05", "q25", "q50", "q75", "q95"), summary.quantiles):
                violin_lines.append(f"{base},{name},{q!r}")
            for i, c in enumerate(summary.counts):
                violin_lines.append(f"{base},bin{i:02d},{c}")
            violin_lines.append(f"{base},n,{summary.n}")
            violin_lines.append(f"{base},n_undefined,{summary.n_undefined}")
    (out / "scatter.csv").write_text("\n".join(scatter_lines) + "\n")
    (out / "violin.csv").write_text("\n".join(violin_lines) + "\n")

    gap_lines = ["gt,feature,mode,scheme,threshold_m,threshold_deg,k,gap_pct"]
    for gt_name, feature, mode, scheme, ti, k, gap in bundle.gaps:
        m, deg = bundle.config.thresholds.pairs[ti]
        gap_lines.append(f"{gt_name},{feature},{mode},{scheme},{m!r},{deg!r},{k},{gap!r}")
    (out / "gaps.csv").write_text("\n".join(gap_lines) + "\n")

    stats_lines = ["gt,avg_k,missing_pct"]
    for gt_name, gt in sorted(bundle.gt_rankings.items()):
        avg_k, missing = gt_statistics(gt)
        stats_lines.append(f"{gt_name},{avg_k!r},{missing!r}")
    (out / "stats.csv").write_text("\n".join(stats_lines) + "\n")

    if bundle.challenge:
        ch_lines = ["query_id,mad,blurry,dynamic_fraction,dynamic"]
        for q in sorted(bundle.challenge):
            f = bundle.challenge[q]
            ch_lines.append(
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
        (out / "challenge.csv").write_text("\n".join(ch_lines) + "\n")

    output_hashes = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            output_hashes[p.relative_to(out).as_posix()] = _sha256_file(p)

    manifest = {
        "version": __version__,
        "config": _config_dict(bundle.config),
        "master_seed": bundle.config.master_seed,
        "cell_seeds": bundle.cell_seeds,
        "sources": bundle.sources,
        "failed_cells": bundle.failed_cells,
        "input_hashes": bundle.input_hashes,
        "output_hashes": output_hashes,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return manifest_path, _sha256_file(manifest_path)


def manifest_hash(out_dir) -> str:
    return _sha256_file(Path(out_dir) / "manifest.json")
