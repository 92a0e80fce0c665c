"""Retrieval ground-truth rankings from three relevance definitions.

For benchmarking image retrieval inside a localization pipeline, the
"right" database images for a query can be defined three ways:

* ``rcp`` — a pose-distance cost, ``c_diff/tau_c + R_diff/tau_R``
  (lower is better). An image is *relevant* when both components are
  within their thresholds.
* ``frustum`` — the radius of the largest sphere inscribed in the
  intersection of the two viewing frusta (higher is better). Relevant
  means any overlap at all.
* ``coobs`` — the number of 3D points co-observed by the two images in
  a joint reconstruction (higher is better). Relevant means at least
  one shared point.

``build_gt_ranking`` produces, per query, a ranked list of database
images truncated to the top 50, with deterministic ascending-id tie
breaks, plus the subset of ranked entries that count as relevant.
``gt_statistics`` summarizes a ranking into (average number of
relevant images per query, percentage of queries with none).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .chebyshev import frustum_overlap_score
from .geometry import CameraIntrinsics, Pose, build_frustum, position_error, rotation_error
from .map_localize import SceneMap

__all__ = [
    "RcpConfig",
    "GroundTruthRanking",
    "RANKING_METHODS",
    "rcp_score",
    "frustum_overlap_score",
    "coobservation_score",
    "build_gt_ranking",
    "gt_statistics",
]

RANKING_METHODS = ("rcp", "frustum", "coobs")

MAX_RANK = 50


@dataclass(frozen=True)
class RcpConfig:
    """Thresholds normalizing the pose-distance cost.

    ``tau_c`` in meters, ``tau_R`` in degrees. The same pair doubles as
    the binary relevance test: relevant iff c_diff <= tau_c and
    R_diff <= tau_R.
    """

    tau_c: float = 25.0
    tau_R: float = 45.0

    def __post_init__(self):
        if self.tau_c <= 0 or self.tau_R <= 0:
            raise ValueError("rcp thresholds must be positive")


@dataclass(frozen=True)
class GroundTruthRanking:
    """Per-query ranked database ids with scores, and the relevant subset.

    ``entries[q]`` is the ranked prefix (db_id, score), length <= 50,
    best first. ``relevant[q]`` is the set of db ids within that prefix
    that pass the method's relevance rule; for the gain-based methods
    every ranked entry is relevant by construction, for the cost-based
    method it is the thresholded subset.
    """

    method: str
    entries: dict[str, tuple[tuple[str, float], ...]]
    relevant: dict[str, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in RANKING_METHODS:
            raise ValueError(f"unknown ranking method {self.method!r}")
        for q, ranked in self.entries.items():
            if len(ranked) > MAX_RANK:
                raise ValueError(f"query {q!r} ranking exceeds top-{MAX_RANK}")

    def ranked_ids(self, query_id: str) -> list[str]:
        return [db_id for db_id, _ in self.entries[query_id]]


def rcp_score(q: Pose, t: Pose, cfg: RcpConfig = RcpConfig()) -> float:
    """Pose-distance cost: position error over tau_c plus rotation error
    over tau_R. Symmetric; 0 for identical poses; lower = more relevant."""
    return position_error(q, t) / cfg.tau_c + rotation_error(q, t) / cfg.tau_R


def coobservation_score(q_id: str, t_id: str, smap: SceneMap) -> int:
    """Number of 3D points observed by both images in the joint map."""
    for image_id in (q_id, t_id):
        if image_id not in smap.images:
            raise KeyError(f"image {image_id!r} not in map")
    return smap.co_observation_count(q_id, t_id)


def _rank(pairs, descending: bool, drop_zero: bool) -> tuple[tuple[str, float], ...]:
    # pairs: iterable of (db_id, score). Tie-break is ascending db id in
    # both directions, giving bit-identical output across runs.
    if drop_zero:
        pairs = [(i, s) for i, s in pairs if s > 0]
    if descending:
        ranked = sorted(pairs, key=lambda p: (-p[1], p[0]))
    else:
        ranked = sorted(pairs, key=lambda p: (p[1], p[0]))
    return tuple(ranked[:MAX_RANK])


def build_gt_ranking(
    method: str,
    query_ids,
    db_ids,
    *,
    poses: dict[str, Pose] | None = None,
    intrinsics: dict[str, CameraIntrinsics] | None = None,
    scene_map: SceneMap | None = None,
    cfg: RcpConfig = RcpConfig(),
    far: float = 25.0,
    near: float = 0.0,
) -> GroundTruthRanking:
    """Rank every database image for every query under one method.

    ``rcp`` needs ``poses`` (covering queries and database) and ranks
    all database images by ascending cost. ``frustum`` needs ``poses``
    and per-image ``intrinsics`` plus the far-plane distance and ranks
    by descending overlap radius, dropping zero-overlap images.
    ``coobs`` needs ``scene_map`` (a joint map containing query and
    database observations) and ranks by descending shared-point count,
    dropping images that share nothing. All rankings are truncated to
    the top 50 and tie-broken by ascending database id.
    """
    query_ids = list(query_ids)
    db_ids = sorted(db_ids)
    if method == "rcp":
        if poses is None:
            raise ValueError("rcp ranking needs poses")
        entries = {}
        relevant = {}
        for q in query_ids:
            qpose = poses[q]
            scored = []
            good = set()
            for d in db_ids:
                dpose = poses[d]
                c_diff = position_error(qpose, dpose)
                r_diff = rotation_error(qpose, dpose)
                scored.append((d, c_diff / cfg.tau_c + r_diff / cfg.tau_R))
                if c_diff <= cfg.tau_c and r_diff <= cfg.tau_R:
                    good.add(d)
            ranked = _rank(scored, descending=False, drop_zero=False)
            entries[q] = ranked
            relevant[q] = frozenset(d for d, _ in ranked if d in good)
        return GroundTruthRanking("rcp", entries, relevant)

    if method == "frustum":
        if poses is None or intrinsics is None:
            raise ValueError("frustum ranking needs poses and intrinsics")
        frusta = {
            i: build_frustum(poses[i], intrinsics[i], far=far, near=near)
            for i in set(query_ids) | set(db_ids)
        }
        entries = {}
        relevant = {}
        for q in query_ids:
            scored = [(d, frustum_overlap_score(frusta[q], frusta[d])) for d in db_ids]
            ranked = _rank(scored, descending=True, drop_zero=True)
            entries[q] = ranked
            relevant[q] = frozenset(d for d, _ in ranked)
        return GroundTruthRanking("frustum", entries, relevant)

    if method == "coobs":
        if scene_map is None:
            raise ValueError("coobs ranking needs a scene map")
        entries = {}
        relevant = {}
        for q in query_ids:
            q_points = scene_map.points_seen_by(q)
            scored = []
            for d in db_ids:
                n = len(q_points & scene_map.points_seen_by(d))
                scored.append((d, float(n)))
            ranked = _rank(scored, descending=True, drop_zero=True)
            entries[q] = ranked
            relevant[q] = frozenset(d for d, _ in ranked)
        return GroundTruthRanking("coobs", entries, relevant)

    raise ValueError(f"unknown ranking method {method!r}")


def gt_statistics(
    ranking: GroundTruthRanking,
    relevance_threshold: float | None = None,
) -> tuple[float, float]:
    """Summarize a ranking: (avg relevant per query, % queries with none).

    With the default ``relevance_threshold=None`` the relevance sets
    baked into the ranking are used. A float threshold recomputes
    relevance from the stored scores instead: score <= threshold for
    the cost-based method, score >= threshold for the gain-based ones.
    """
    if not ranking.entries:
        raise ValueError("ranking holds no queries")
    counts = []
    for q, ranked in ranking.entries.items():
        if relevance_threshold is None:
            counts.append(len(ranking.relevant.get(q, frozenset())))
        elif ranking.method == "rcp":
            counts.append(sum(1 for _, s in ranked if s <= relevance_threshold))
        else:
            counts.append(sum(1 for _, s in ranked if s >= relevance_threshold))
    avg_k = sum(counts) / len(counts)
    missing_pct = 100.0 * sum(1 for c in counts if c == 0) / len(counts)
    return avg_k, missing_pct
