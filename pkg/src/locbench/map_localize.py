"""3D maps, triangulation, and PnP localization.

Two localization paradigms live here. Against a prebuilt global map,
query keypoint matches are lifted to 2D-3D correspondences through the
map's observations and the pose is solved with RANSAC P3P plus a
Gauss-Newton polish. Without a map, an ephemeral one is triangulated
on the fly from matches among the retrieved database images and the
query is registered against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .chebyshev import frustum_overlap_score
from .geometry import CameraIntrinsics, Pose, build_frustum, quat_from_rotation_matrix
from .kernels import get_backend

__all__ = [
    "Observation",
    "SceneMap",
    "RansacConfig",
    "TriangulationConfig",
    "LocalizationResult",
    "MapValidationError",
    "validate_scene_map",
    "check_scene_map",
    "select_map_pairs",
    "triangulate_point",
    "build_tracks",
    "build_local_map",
    "estimate_pose_pnp",
    "localize_global",
    "localize_local_sfm",
    "refine_pose_gn",
]

# failure codes carried by LocalizationResult.failure
FAIL_INSUFFICIENT_MATCHES = "insufficient-matches"
FAIL_NO_CONSENSUS = "no-consensus"
FAIL_TOO_FEW_TRACKS = "too-few-tracks"
FAIL_REGISTRATION = "registration-failed"


@dataclass(frozen=True)
class Observation:
    """One 2D detection of a 3D point in an image."""

    image_id: str
    point_id: int
    pixel: tuple[float, float]


class SceneMap:
    """Posed images, 3D points, and the observations linking them."""

    def __init__(
        self,
        images: dict[str, tuple[Pose, CameraIntrinsics]],
        points: dict[int, np.ndarray],
        observations: list[Observation],
    ):
        self.images = dict(images)
        self.points = {int(k): np.asarray(v, dtype=np.float64).reshape(3) for k, v in points.items()}
        self.observations = list(observations)
        self._obs_by_image: dict[str, list[Observation]] = {img: [] for img in self.images}
        for ob in self.observations:
            self._obs_by_image.setdefault(ob.image_id, []).append(ob)

    def observations_of(self, image_id: str) -> list[Observation]:
        return self._obs_by_image.get(image_id, [])

    def points_seen_by(self, image_id: str) -> set[int]:
        return {ob.point_id for ob in self.observations_of(image_id)}

    def co_observation_count(self, image_a: str, image_b: str) -> int:
        """Number of 3D points observed by both images."""
        return len(self.points_seen_by(image_a) & self.points_seen_by(image_b))


class MapValidationError(ValueError):
    def __init__(self, issues: list[str]):
        super().__init__(f"{len(issues)} map consistency issue(s): " + "; ".join(issues[:5]))
        self.issues = issues


def validate_scene_map(smap: SceneMap, max_reproj_px: float = 4.0) -> list[str]:
    """Collect consistency issues: dangling refs, under-observed points,
    observations whose reprojection residual exceeds the tolerance."""
    issues = []
    seen_per_point: dict[int, int] = {pid: 0 for pid in smap.points}
    for i, ob in enumerate(smap.observations):
        if ob.image_id not in smap.images:
            issues.append(f"observation {i} references unknown image {ob.image_id!r}")
            continue
        if ob.point_id not in smap.points:
            issues.append(f"observation {i} references unknown point {ob.point_id}")
            continue
        seen_per_point[ob.point_id] += 1
        pose, intr = smap.images[ob.image_id]
        local = pose.R @ (smap.points[ob.point_id] - pose.c)
        if local[2] <= 0:
            issues.append(f"observation {i} sees point {ob.point_id} behind image {ob.image_id!r}")
            continue
        u = intr.fx * local[0] / local[2] + intr.cx
        v = intr.fy * local[1] / local[2] + intr.cy
        res = math.hypot(u - ob.pixel[0], v - ob.pixel[1])
        if res > max_reproj_px:
            issues.append(
                f"observation {i} of point {ob.point_id} in {ob.image_id!r} "
                f"reprojects {res:.2f}px away (tolerance {max_reproj_px}px)"
            )
    for pid, cnt in seen_per_point.items():
        if cnt < 2:
            issues.append(f"point {pid} has {cnt} observation(s), needs at least 2")
    return issues


def check_scene_map(smap: SceneMap, max_reproj_px: float = 4.0) -> None:
    issues = validate_scene_map(smap, max_reproj_px)
    if issues:
        raise MapValidationError(issues)


@dataclass(frozen=True)
class RansacConfig:
    """Knobs for RANSAC PnP; defaults follow the benchmark protocol."""

    threshold_px: float = 8.0
    min_inliers: int = 12
    max_iters: int = 10000
    confidence: float = 0.999
    seed: int = 0
    refine_iters: int = 10
    backend: str | None = None

    def __post_init__(self):
        if self.threshold_px <= 0:
            raise ValueError("threshold_px must be positive")
        if self.min_inliers < 3:
            raise ValueError("min_inliers below the minimal sample size")
        if not 0 < self.confidence <= 1:
            raise ValueError("confidence must be in (0, 1]")


@dataclass(frozen=True)
class TriangulationConfig:
    min_angle_deg: float = 1.0
    max_reproj_px: float = 4.0
    min_track_len: int = 2


@dataclass(frozen=True)
class LocalizationResult:
    query_id: str
    success: bool
    pose: Pose | None
    n_inliers: int
    n_correspondences: int
    failure: str | None = None  # one of the FAIL_* codes when success is False
    detail: str | None = None  # inner failure code for registration-failed
    iterations: int = 0


def select_map_pairs(
    images: dict[str, tuple[Pose, CameraIntrinsics]],
    mode: str = "threshold",
    r_min: float = 10.0,
    top_n: int = 50,
    far: float = 25.0,
    near: float = 0.0,
) -> list[tuple[str, str]]:
    """Choose image pairs worth matching, by viewing-frustum overlap.

    ``mode='threshold'`` keeps every unordered pair whose overlap radius
    is at least ``r_min`` meters; ``mode='top_n'`` keeps, for each image,
    its ``top_n`` best-overlapping partners (overlap > 0), deduplicated.
    Pairs are returned sorted, each as (smaller_id, larger_id).
    """
    if mode not in ("threshold", "top_n"):
        raise ValueError(f"unknown pair-selection mode {mode!r}")
    ids = sorted(images)
    frusta = {i: build_frustum(images[i][0], images[i][1], far=far, near=near) for i in ids}
    scores: dict[tuple[str, str], float] = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            scores[(a, b)] = frustum_overlap_score(frusta[a], frusta[b])
    if mode == "threshold":
        return sorted(p for p, s in scores.items() if s >= r_min)
    chosen: set[tuple[str, str]] = set()
    for a in ids:
        partners = []
        for b in ids:
            if b == a:
                continue
            s = scores[(a, b) if a < b else (b, a)]
            if s > 0:
                partners.append((-s, b))
        partners.sort()
        for _, b in partners[:top_n]:
            chosen.add((a, b) if a < b else (b, a))
    return sorted(chosen)


def _skew(v):
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]], dtype=np.float64)


def _rodrigues(w: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(w))
    K = _skew(w)
    if theta < 1e-12:
        return np.eye(3) + K
    K = K / theta
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


def refine_pose_gn(
    R: np.ndarray,
    t: np.ndarray,
    points: np.ndarray,
    pixels: np.ndarray,
    intr: CameraIntrinsics,
    iters: int = 10,
):
    """Gauss-Newton refinement of X_cam = R X + t on pixel residuals.

    Left-multiplicative rotation update; runs a fixed iteration budget
    with an early exit once the step is at numerical noise level. Both
    kernel backends share this code, keeping refined poses identical.
    """
    R = np.array(R, dtype=np.float64)
    t = np.array(t, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pix = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    for _ in range(iters):
        pc = pts @ R.T + t
        z = pc[:, 2]
        ok = z > 1e-9
        if int(ok.sum()) < 3:
            break
        p = pc[ok]
        iz = 1.0 / p[:, 2]
        ru = intr.fx * p[:, 0] * iz + intr.cx - pix[ok, 0]
        rv = intr.fy * p[:, 1] * iz + intr.cy - pix[ok, 1]
        n = len(p)
        # du/dP and dv/dP rows of the pinhole jacobian
        du = np.stack([intr.fx * iz, np.zeros(n), -intr.fx * p[:, 0] * iz * iz], axis=1)
        dv = np.stack([np.zeros(n), intr.fy * iz, -intr.fy * p[:, 1] * iz * iz], axis=1)
        # dP/d(rot) = -[P]_x under R <- exp([w]_x) R, dP/d(t) = I
        a = p  # camera-frame point (R X + t); rotation acts on R X = P - t
        rx = a - t
        dPdw = np.zeros((n, 3, 3))
        dPdw[:, 0, 1] = rx[:, 2]
        dPdw[:, 0, 2] = -rx[:, 1]
        dPdw[:, 1, 0] = -rx[:, 2]
        dPdw[:, 1, 2] = rx[:, 0]
        dPdw[:, 2, 0] = rx[:, 1]
        dPdw[:, 2, 1] = -rx[:, 0]
        J = np.zeros((2 * n, 6))
        J[:n, :3] = np.einsum("nk,nkj->nj", du, dPdw)
        J[:n, 3:] = du
        J[n:, :3] = np.einsum("nk,nkj->nj", dv, dPdw)
        J[n:, 3:] = dv
        r = np.concatenate([ru, rv])
        H = J.T @ J
        g = J.T @ r
        try:
            delta = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        R = _rodrigues(delta[:3]) @ R
        t = t + delta[3:]
        if float(delta @ delta) < 1e-24:
            break
    return R, t


def _pose_from_rt(R: np.ndarray, t: np.ndarray) -> Pose:
    c = -R.T @ t
    return Pose(c=c, q=quat_from_rotation_matrix(R))


def estimate_pose_pnp(
    points: np.ndarray,
    pixels: np.ndarray,
    intr: CameraIntrinsics,
    cfg: RansacConfig = RansacConfig(),
    query_id: str = "",
) -> LocalizationResult:
    """Robust camera pose from 2D-3D correspondences.

    RANSAC over P3P minimal samples (selected kernel backend), then
    Gauss-Newton on the consensus set; inliers are recounted with the
    refined pose and ``min_inliers`` is enforced on that final count.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    pix = np.ascontiguousarray(np.asarray(pixels, dtype=np.float64).reshape(-1, 2))
    n = len(pts)
    if len(pix) != n:
        raise ValueError("points/pixels length mismatch")
    if n < 4:
        return LocalizationResult(query_id, False, None, 0, n, FAIL_INSUFFICIENT_MATCHES)

    xn = (pix[:, 0] - intr.cx) / intr.fx
    yn = (pix[:, 1] - intr.cy) / intr.fy
    nrm = np.sqrt(xn * xn + yn * yn + 1.0)
    backend = get_backend(cfg.backend)
    ok, R, t, n_in, mask, iters = backend.ransac_p3p(
        np.ascontiguousarray(pts[:, 0]),
        np.ascontiguousarray(pts[:, 1]),
        np.ascontiguousarray(pts[:, 2]),
        np.ascontiguousarray(pix[:, 0]),
        np.ascontiguousarray(pix[:, 1]),
        np.ascontiguousarray(xn / nrm),
        np.ascontiguousarray(yn / nrm),
        np.ascontiguousarray(1.0 / nrm),
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        cfg.threshold_px,
        cfg.max_iters,
        cfg.confidence,
        cfg.seed & ((1 << 64) - 1),
    )
    if not ok:
        return LocalizationResult(query_id, False, None, 0, n, FAIL_NO_CONSENSUS, iterations=iters)

    sel = mask.astype(bool)
    R, t = refine_pose_gn(R, t, pts[sel], pix[sel], intr, cfg.refine_iters)

    # recount with the refined pose
    pc = pts @ R.T + t
    with np.errstate(divide="ignore", invalid="ignore"):
        du = intr.fx * pc[:, 0] / pc[:, 2] + intr.cx - pix[:, 0]
        dv = intr.fy * pc[:, 1] / pc[:, 2] + intr.cy - pix[:, 1]
        err = du * du + dv * dv
        final = (pc[:, 2] > 0.0) & (err <= cfg.threshold_px * cfg.threshold_px)
    n_final = int(np.count_nonzero(final))
    if n_final < cfg.min_inliers:
        return LocalizationResult(
            query_id, False, None, n_final, n, FAIL_NO_CONSENSUS, iterations=iters
        )
    return LocalizationResult(query_id, True, _pose_from_rt(R, t), n_final, n, iterations=iters)


def triangulate_point(
    views: list[tuple[Pose, CameraIntrinsics, tuple[float, float]]],
    cfg: TriangulationConfig = TriangulationConfig(),
):
    """Multi-view linear triangulation with quality gates.

    Returns ``(point, None)`` on success or ``(None, reason)`` where the
    reason names the degeneracy: 'degenerate' (solution at infinity or
    zero ray), 'behind-camera' (cheirality), 'insufficient-angle'
    (rays closer than ``cfg.min_angle_deg``), or 'high-residual'.
    """
    if len(views) < 2:
        raise ValueError("triangulation needs at least two views")
    rows = []
    for pose, intr, pixel in views:
        R = pose.R
        t = -R @ pose.c
        xh = (pixel[0] - intr.cx) / intr.fx
        yh = (pixel[1] - intr.cy) / intr.fy
        p2 = np.concatenate([R[2], [t[2]]])
        rows.append(xh * p2 - np.concatenate([R[0], [t[0]]]))
        rows.append(yh * p2 - np.concatenate([R[1], [t[1]]]))
    A = np.array(rows)
    _, _, vt = np.linalg.svd(A)
    Xh = vt[-1]
    if abs(Xh[3]) < 1e-12 * np.linalg.norm(Xh[:3]):
        return None, "degenerate"
    X = Xh[:3] / Xh[3]

    rays = []
    for pose, intr, pixel in views:
        local = pose.R @ (X - pose.c)
        if local[2] <= 0:
            return None, "behind-camera"
        ray = X - pose.c
        nr = np.linalg.norm(ray)
        if nr == 0:
            return None, "degenerate"
        rays.append(ray / nr)
    max_angle = 0.0
    for i in range(len(rays)):
        for j in range(i + 1, len(rays)):
            cosang = float(np.clip(rays[i] @ rays[j], -1.0, 1.0))
            max_angle = max(max_angle, math.degrees(math.acos(cosang)))
    if max_angle < cfg.min_angle_deg:
        return None, "insufficient-angle"

    for pose, intr, pixel in views:
        local = pose.R @ (X - pose.c)
        u = intr.fx * local[0] / local[2] + intr.cx
        v = intr.fy * local[1] / local[2] + intr.cy
        if math.hypot(u - pixel[0], v - pixel[1]) > cfg.max_reproj_px:
            return None, "high-residual"
    return X, None


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        p = self.parent.setdefault(x, x)
        while p != self.parent[p]:
            self.parent[p] = self.parent[self.parent[p]]
            p = self.parent[p]
        if x != p:
            self.parent[x] = p
        return p

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # deterministic: smaller key becomes the root
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def build_tracks(pair_matches: dict[tuple[str, str], np.ndarray]) -> list[dict[str, tuple[float, float]]]:
    """Group matched keypoints into multi-image tracks.

    ``pair_matches[(a, b)]`` holds rows ``(ax, ay, bx, by)``. Keypoints
    are identified by exact pixel coordinates within an image. Tracks
    that collect two distinct pixels in the same image are inconsistent
    and dropped. Output order is deterministic (sorted by the smallest
    member node).
    """
    uf = _UnionFind()
    for (ida, idb) in sorted(pair_matches):
        rows = np.asarray(pair_matches[(ida, idb)], dtype=np.float64).reshape(-1, 4)
        for ax, ay, bx, by in rows:
            uf.union((ida, float(ax), float(ay)), (idb, float(bx), float(by)))
    groups: dict[tuple, list[tuple]] = {}
    for node in uf.parent:
        groups.setdefault(uf.find(node), []).append(node)
    tracks = []
    for root in sorted(groups, key=lambda r: min(groups[r])):
        members = groups[root]
        track: dict[str, tuple[float, float]] = {}
        consistent = True
        for img, x, y in members:
            if img in track and track[img] != (x, y):
                consistent = False
                break
            track[img] = (x, y)
        if consistent and len(track) >= 2:
            tracks.append(track)
    return tracks


def build_local_map(
    db_ids: list[str],
    images: dict[str, tuple[Pose, CameraIntrinsics]],
    pair_matches: dict[tuple[str, str], np.ndarray],
    cfg: TriangulationConfig = TriangulationConfig(),
) -> SceneMap:
    """Triangulate an ephemeral map from matches among ``db_ids``.

    Only pairs with both endpoints in ``db_ids`` contribute; tracks
    shorter than ``cfg.min_track_len`` or failing a triangulation gate
    are silently skipped (the caller judges whether enough survived).
    """
    wanted = set(db_ids)
    sub = {
        (a, b): m
        for (a, b), m in pair_matches.items()
        if a in wanted and b in wanted and a != b
    }
    tracks = build_tracks(sub)
    points: dict[int, np.ndarray] = {}
    observations: list[Observation] = []
    pid = 0
    for track in tracks:
        if len(track) < cfg.min_track_len:
            continue
        views = [(images[img][0], images[img][1], px) for img, px in sorted(track.items())]
        X, reason = triangulate_point(views, cfg)
        if X is None:
            continue
        points[pid] = X
        for img, px in sorted(track.items()):
            observations.append(Observation(img, pid, px))
        pid += 1
    return SceneMap({i: images[i] for i in db_ids if i in images}, points, observations)


def _lift_matches(
    query_id: str,
    retrieved: list[str],
    smap: SceneMap,
    pair_matches: dict[tuple[str, str], np.ndarray],
    lookup_tol_px: float = 1.0,
):
    """2D-3D correspondences for a query via map observations.

    For each retrieved image (in rank order) the query's matches into it
    are looked up against that image's observations: exact pixel hit
    first, then nearest within ``lookup_tol_px``. Duplicate
    (query pixel, point) pairs collapse to the first occurrence.
    """
    from scipy.spatial import cKDTree

    pts = []
    pix = []
    seen = set()
    for db in retrieved:
        rows = pair_matches.get((query_id, db))
        if rows is None:
            swapped = pair_matches.get((db, query_id))
            if swapped is None:
                continue
            rows = np.asarray(swapped, dtype=np.float64).reshape(-1, 4)[:, [2, 3, 0, 1]]
        rows = np.asarray(rows, dtype=np.float64).reshape(-1, 4)
        obs = smap.observations_of(db)
        if not obs:
            continue
        exact = {}
        for ob in obs:
            exact.setdefault((ob.pixel[0], ob.pixel[1]), ob.point_id)
        tree = cKDTree([ob.pixel for ob in obs]) if lookup_tol_px > 0 else None
        for qx, qy, dx, dy in rows:
            pid = exact.get((dx, dy))
            if pid is None and tree is not None:
                dist, idx = tree.query([dx, dy], k=1)
                if dist <= lookup_tol_px:
                    pid = obs[int(idx)].point_id
            if pid is None:
                continue
            key = (qx, qy, pid)
            if key in seen:
                continue
            seen.add(key)
            pts.append(smap.points[pid])
            pix.append((qx, qy))
    if pts:
        return np.array(pts), np.array(pix)
    return np.zeros((0, 3)), np.zeros((0, 2))


def localize_global(
    query_id: str,
    retrieved: list[str],
    smap: SceneMap,
    pair_matches: dict[tuple[str, str], np.ndarray],
    query_intr: CameraIntrinsics,
    cfg: RansacConfig = RansacConfig(),
) -> LocalizationResult:
    """Register a query against a prebuilt map using top-k retrieved images."""
    pts, pix = _lift_matches(query_id, retrieved, smap, pair_matches)
    if len(pts) < 4:
        return LocalizationResult(query_id, False, None, 0, len(pts), FAIL_INSUFFICIENT_MATCHES)
    return estimate_pose_pnp(pts, pix, query_intr, cfg, query_id)


def localize_local_sfm(
    query_id: str,
    retrieved: list[str],
    images: dict[str, tuple[Pose, CameraIntrinsics]],
    pair_matches: dict[tuple[str, str], np.ndarray],
    query_intr: CameraIntrinsics,
    cfg: RansacConfig = RansacConfig(),
    tri_cfg: TriangulationConfig = TriangulationConfig(),
    min_points: int = 4,
) -> LocalizationResult:
    """Localize by triangulating an on-the-fly map from the retrieved set.

    Fails with 'too-few-tracks' when the retrieved images cannot support
    a usable ephemeral map (fewer than two views of the same place, or
    no baseline so every triangulation is degenerate), and with
    'registration-failed' when the map exists but PnP cannot register
    the query against it (inner code kept in ``detail``).
    """
    if len(retrieved) < 2:
        raise ValueError("on-the-fly mapping needs at least two retrieved images")
    local = build_local_map(retrieved, images, pair_matches, tri_cfg)
    if len(local.points) < min_points:
        return LocalizationResult(query_id, False, None, 0, 0, FAIL_TOO_FEW_TRACKS)
    res = localize_global(query_id, retrieved, local, pair_matches, query_intr, cfg)
    if not res.success:
        return replace(res, failure=FAIL_REGISTRATION, detail=res.failure)
    return res
