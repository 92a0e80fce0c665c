"""Synthetic scene factory: fully-known datasets at desk scale.

A generated scene is a ground-truth reconstruction (posed cameras, 3D
points, pixel observations) plus a query set, reproducible bit-for-bit
from its seed. Three layouts cover the qualitative regimes real
datasets exhibit:

* ``grid`` — cameras on a planar grid in front of a point "wall"
  (handheld-capture flavor; co-visibility decays with distance).
* ``corridor`` — co-linear camera centers along a wall (driving
  flavor; ``spacing=0`` collapses the baseline entirely, the
  degenerate regime where on-the-fly triangulation must fail).
* ``loop`` — cameras on a circle looking inward (revisit flavor;
  everything shares the central structure).

On top of a scene the harness emits retrieval descriptors under three
models (an embedding of the true pose, the same plus noise, or pose-
independent adversarial vectors) and 2D-2D match files (true
correspondences from shared points, plus injected uniform outliers).
``write_dataset`` persists everything in the on-disk layout data_io
reads back bit-exactly.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_io import (
    IMAGES_DIR,
    LABELS_FILE,
    MASKS_DIR,
    write_descriptors,
    write_image_camera,
    write_intrinsics,
    write_labels,
    write_matches_dir,
    write_observations,
    write_pgm,
    write_points,
    write_poses,
    write_queries,
)
from .geometry import CameraIntrinsics, Pose, quat_from_rotation_matrix
from .map_localize import Observation, SceneMap, check_scene_map, select_map_pairs

__all__ = [
    "SceneConfig",
    "SynthScene",
    "DescriptorModel",
    "DESCRIPTOR_MODES",
    "LAYOUTS",
    "generate_scene",
    "emit_descriptors",
    "emit_matches",
    "emit_images",
    "write_dataset",
]

LAYOUTS = ("grid", "corridor", "loop")
DESCRIPTOR_MODES = ("pose_oracle", "pose_plus_noise", "adversarial")

# pose embedding dimension: 3 position + 9 rotation entries
_POSE_EMBED_DIM = 12

DYNAMIC_LABEL_TABLE = {0: "background", 1: "person", 2: "car"}


@dataclass(frozen=True)
class SceneConfig:
    layout: str = "grid"
    n_db: int = 24
    n_query: int = 6
    n_points: int = 400
    noise_px: float = 0.0
    seed: int = 0
    spacing: float = 4.0
    n_missing: int = 0
    image_width: int = 640
    image_height: int = 480
    focal: float = 320.0
    camera_height: float = 1.6
    wall_distance: float = 8.0

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.n_db < 2:
            raise ValueError("need at least 2 database images")
        if self.n_points < 8:
            raise ValueError("need at least 8 points")
        if self.n_query < 0 or self.n_missing < 0 or self.n_missing > self.n_query:
            raise ValueError("need 0 <= n_missing <= n_query")
        if self.spacing < 0:
            raise ValueError("spacing must be non-negative")
        if self.noise_px < 0:
            raise ValueError("noise must be non-negative")


@dataclass(frozen=True)
class DescriptorModel:
    """How retrieval descriptors relate to the true poses.

    ``pose_oracle`` embeds (c/tau_c, flattened R) and normalizes, so
    descriptor similarity mirrors pose similarity. ``pose_plus_noise``
    perturbs that embedding with Gaussian noise of scale ``sigma``
    before normalization. ``adversarial`` draws descriptors independent
    of pose entirely. All emitted descriptors are L2-normalized.
    """

    mode: str = "pose_oracle"
    dimension: int = _POSE_EMBED_DIM
    sigma: float = 0.0
    tau_c: float = 25.0

    def __post_init__(self):
        if self.mode not in DESCRIPTOR_MODES:
            raise ValueError(f"unknown descriptor mode {self.mode!r}")
        if self.mode != "adversarial" and self.dimension < _POSE_EMBED_DIM:
            raise ValueError(f"pose embedding needs dimension >= {_POSE_EMBED_DIM}")
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass
class SynthScene:
    cfg: SceneConfig
    images: dict  # image_id -> (Pose, CameraIntrinsics)
    db_ids: list
    query_ids: list
    points: dict  # point_id -> (3,) array
    observations: list  # Observation

    def scene_map(self) -> SceneMap:
        """Joint ground-truth map over database and query images."""
        return SceneMap(dict(self.images), dict(self.points), list(self.observations))

    def db_scene_map(self) -> SceneMap:
        """Map restricted to database images (what a deployed system has)."""
        db = set(self.db_ids)
        return SceneMap(
            {i: self.images[i] for i in self.db_ids},
            dict(self.points),
            [ob for ob in self.observations if ob.image_id in db],
        )


def _look_rotation(forward: np.ndarray) -> np.ndarray:
    """World-to-camera rotation for a camera looking along ``forward``
    with world +z up; camera x points right, y points down."""
    f = np.asarray(forward, dtype=np.float64)
    f = f / np.linalg.norm(f)
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(f, up)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise ValueError("camera cannot look straight up or down")
    x = x / nx
    y = np.cross(f, x)
    return np.stack([x, y, f])


def _yaw_forward(base_angle: float) -> np.ndarray:
    return np.array([math.cos(base_angle), math.sin(base_angle), 0.0])


def _db_placement(cfg: SceneConfig, rng: np.random.Generator):
    """Centered camera centers + view directions for each layout."""
    centers = []
    forwards = []
    jitter = rng.uniform(-0.15, 0.15, size=cfg.n_db)  # radians of yaw
    if cfg.layout == "grid":
        cols = max(1, int(math.ceil(math.sqrt(cfg.n_db))))
        rows = int(math.ceil(cfg.n_db / cols))
        for i in range(cfg.n_db):
            r, c = divmod(i, cols)
            x = (c - (cols - 1) / 2.0) * cfg.spacing
            y = (r - (rows - 1) / 2.0) * cfg.spacing
            centers.append(np.array([x, y, cfg.camera_height]))
            forwards.append(_yaw_forward(math.pi / 2 + jitter[i]))
    elif cfg.layout == "corridor":
        for i in range(cfg.n_db):
            x = (i - (cfg.n_db - 1) / 2.0) * cfg.spacing
            centers.append(np.array([x, 0.0, cfg.camera_height]))
            forwards.append(_yaw_forward(math.pi / 2 + jitter[i]))
    else:  # loop
        radius = max(cfg.spacing * cfg.n_db / (2.0 * math.pi), 2.0)
        for i in range(cfg.n_db):
            phi = 2.0 * math.pi * i / cfg.n_db
            c = np.array([radius * math.cos(phi), radius * math.sin(phi), cfg.camera_height])
            centers.append(c)
            forwards.append(_yaw_forward(phi + math.pi + jitter[i]))
    return centers, forwards


def _point_box(cfg: SceneConfig, centers) -> tuple:
    xs = [c[0] for c in centers]
    ys = [c[1] for c in centers]
    margin = max(cfg.wall_distance, 4.0)
    if cfg.layout == "loop":
        # structure at the loop center
        r = max(max(abs(v) for v in xs + ys) * 0.5, 2.0)
        return (-r, r, -r, r, 0.0, 4.0)
    lo_x, hi_x = min(xs) - margin, max(xs) + margin
    wall_y = max(ys) + cfg.wall_distance
    return (lo_x, hi_x, wall_y, wall_y + 5.0, 0.0, 4.0)


def generate_scene(cfg: SceneConfig = SceneConfig()) -> SynthScene:
    """Build a deterministic scene; same config = bit-identical output.

    Points are sampled in a volume every camera faces, projected into
    all images, and kept where visible; points seen by fewer than two
    images are dropped so the map always validates. Every query is
    anchored near a database image (guaranteeing a relevant neighbor
    within 25 m / 45 deg) except the ``n_missing`` queries planted far
    outside the scene.
    """
    rng = np.random.default_rng(cfg.seed)
    intr = CameraIntrinsics(
        fx=cfg.focal,
        fy=cfg.focal,
        cx=cfg.image_width / 2.0,
        cy=cfg.image_height / 2.0,
        width=cfg.image_width,
        height=cfg.image_height,
    )

    centers, forwards = _db_placement(cfg, rng)
    images = {}
    db_ids = []
    for i, (c, f) in enumerate(zip(centers, forwards)):
        image_id = f"db_{i:04d}"
        pose = Pose(c=c, q=quat_from_rotation_matrix(_look_rotation(f)))
        images[image_id] = (pose, intr)
        db_ids.append(image_id)

    lo_x, hi_x, lo_y, hi_y, lo_z, hi_z = _point_box(cfg, centers)
    pts = np.column_stack(
        [
            rng.uniform(lo_x, hi_x, size=cfg.n_points),
            rng.uniform(lo_y, hi_y, size=cfg.n_points),
            rng.uniform(lo_z, hi_z, size=cfg.n_points),
        ]
    )

    query_ids = []
    n_regular = cfg.n_query - cfg.n_missing
    anchors = rng.integers(0, cfg.n_db, size=cfg.n_query)
    offsets = rng.uniform(-1.0, 1.0, size=(cfg.n_query, 3))
    yaws = rng.uniform(-0.15, 0.15, size=cfg.n_query)
    for j in range(cfg.n_query):
        image_id = f"q_{j:04d}"
        if j < n_regular:
            base_pose = images[db_ids[int(anchors[j])]][0]
            off = offsets[j] * np.array([2.0, 1.0, 0.2])
            c = base_pose.c + off
            Rb = base_pose.R
            fwd = Rb[2].copy()
            ang = yaws[j]
            rot_z = np.array(
                [
                    [math.cos(ang), -math.sin(ang), 0.0],
                    [math.sin(ang), math.cos(ang), 0.0],
                    [0.0, 0.0, 1.0],
                ]
            )
            fwd = rot_z @ fwd
            pose = Pose(c=c, q=quat_from_rotation_matrix(_look_rotation(fwd)))
        else:
            # planted far outside every relevance radius
            c = np.array([5000.0 + 200.0 * j, 5000.0, cfg.camera_height])
            pose = Pose(c=c, q=quat_from_rotation_matrix(_look_rotation([0.0, 1.0, 0.0])))
        images[image_id] = (pose, intr)
        query_ids.append(image_id)

    # project; observation noise drawn per image in id order
    observations = []
    seen_count = {pid: 0 for pid in range(cfg.n_points)}
    raw_obs = {}
    for image_id in sorted(images):
        pose, cam = images[image_id]
        local = (pts - pose.c) @ pose.R.T
        with np.errstate(divide="ignore", invalid="ignore"):
            u = cam.fx * local[:, 0] / local[:, 2] + cam.cx
            v = cam.fy * local[:, 1] / local[:, 2] + cam.cy
        visible = (
            (local[:, 2] > 0.25)
            & (u >= 0.0)
            & (u <= cam.width - 1.0)
            & (v >= 0.0)
            & (v <= cam.height - 1.0)
        )
        idx = np.nonzero(visible)[0]
        uv = np.column_stack([u[idx], v[idx]])
        if cfg.noise_px > 0:
            uv = uv + rng.normal(scale=cfg.noise_px, size=uv.shape)
        raw_obs[image_id] = (idx, uv)
        for pid in idx:
            seen_count[int(pid)] += 1

    keep = {pid for pid, n in seen_count.items() if n >= 2}
    remap = {pid: new for new, pid in enumerate(sorted(keep))}
    points = {remap[pid]: pts[pid].copy() for pid in sorted(keep)}
    for image_id in sorted(raw_obs):
        idx, uv = raw_obs[image_id]
        for (pid, (px, py)) in zip(idx, uv):
            pid = int(pid)
            if pid in remap:
                observations.append(Observation(image_id, remap[pid], (float(px), float(py))))

    scene = SynthScene(
        cfg=cfg,
        images=images,
        db_ids=db_ids,
        query_ids=query_ids,
        points=points,
        observations=observations,
    )
    # the generated map must hold together; tolerance tracks the noise
    check_scene_map(scene.scene_map(), max_reproj_px=max(4.0, 8.0 * cfg.noise_px))
    return scene


def _pose_embedding(pose: Pose, dimension: int, tau_c: float) -> np.ndarray:
    v = np.zeros(dimension)
    v[:3] = pose.c / tau_c
    v[3:12] = pose.R.reshape(9)
    return v


def emit_descriptors(scene: SynthScene, model: DescriptorModel = DescriptorModel()) -> dict:
    """L2-normalized descriptor per image id, deterministic per scene
    seed and model parameters."""
    key = f"desc|{scene.cfg.seed}|{model.mode}|{model.dimension}|{model.sigma}"
    rng = np.random.default_rng(int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little"))
    out = {}
    for image_id in sorted(scene.images):
        pose = scene.images[image_id][0]
        if model.mode == "adversarial":
            v = rng.normal(size=model.dimension)
        else:
            v = _pose_embedding(pose, model.dimension, model.tau_c)
            if model.mode == "pose_plus_noise" and model.sigma > 0:
                v = v + rng.normal(scale=model.sigma, size=model.dimension)
        n = np.linalg.norm(v)
        if n == 0:
            v = np.ones(model.dimension)
            n = np.linalg.norm(v)
        out[image_id] = v / n
    return out


def _pair_rng(seed: int, a: str, b: str) -> np.random.Generator:
    digest = hashlib.sha256(f"match|{seed}|{a}|{b}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def emit_matches(
    scene: SynthScene,
    pair_list,
    inlier_noise_px: float = 0.0,
    outlier_ratio: float = 0.0,
    seed: int = 0,
    empty_pair_outliers: int = 16,
) -> dict:
    """2D-2D correspondences per pair: (a, b) -> (N, 4) of ax ay bx by.

    Inliers are the stored observation pixels of points both images
    see (optionally re-jittered by ``inlier_noise_px``); outliers are
    uniform pixel pairs, count chosen so outliers/(inliers+outliers)
    is ``outlier_ratio``. A pair sharing no points still produces
    ``empty_pair_outliers`` garbage rows when outliers are enabled, so
    retrieving unrelated images yields matches that look plausible and
    localize nowhere. Rows are shuffled; everything is deterministic
    per (seed, pair).
    """
    if not (0.0 <= outlier_ratio < 1.0):
        raise ValueError("outlier_ratio must lie in [0, 1)")
    smap = scene.scene_map()
    obs_by_image = {}
    for image_id in scene.images:
        obs_by_image[image_id] = {ob.point_id: ob.pixel for ob in smap.observations_of(image_id)}
    out = {}
    for (a, b) in pair_list:
        if a not in scene.images or b not in scene.images:
            raise KeyError(f"pair ({a!r}, {b!r}) references unknown images")
        rng = _pair_rng(seed, a, b)
        oa, ob_ = obs_by_image[a], obs_by_image[b]
        shared = sorted(set(oa) & set(ob_))
        rows = []
        for pid in shared:
            ax, ay = oa[pid]
            bx, by = ob_[pid]
            rows.append([ax, ay, bx, by])
        inliers = np.array(rows, dtype=np.float64).reshape(-1, 4)
        if inlier_noise_px > 0 and len(inliers):
            inliers = inliers + rng.normal(scale=inlier_noise_px, size=inliers.shape)
        n_in = len(inliers)
        if outlier_ratio > 0:
            n_out = int(round(n_in * outlier_ratio / (1.0 - outlier_ratio)))
            if n_in == 0:
                n_out = empty_pair_outliers
        else:
            n_out = 0
        cam_a = scene.images[a][1]
        cam_b = scene.images[b][1]
        outliers = np.column_stack(
            [
                rng.uniform(0, cam_a.width, size=n_out),
                rng.uniform(0, cam_a.height, size=n_out),
                rng.uniform(0, cam_b.width, size=n_out),
                rng.uniform(0, cam_b.height, size=n_out),
            ]
        )
        all_rows = np.vstack([inliers, outliers]) if n_out else inliers
        order = rng.permutation(len(all_rows))
        out[(a, b)] = all_rows[order]
    return out


def _render_image(index: int, sharp: bool, size: int = 160) -> np.ndarray:
    """Tiny deterministic test card: a gradient, plus a 1-px checker
    overlay on "sharp" images (all of whose energy sits far outside the
    blur detector's pass band)."""
    yy, xx = np.mgrid[0:size, 0:size]
    gradient = (xx + yy + 7 * index) % 256 * 0.5
    if not sharp:
        return gradient
    checker = ((xx + yy) % 2) * 60.0
    return np.clip(gradient + checker, 0, 255)


def _render_mask(index: int, size: int = 160) -> np.ndarray:
    """Label raster with a deterministic dynamic-pixel fraction cycling
    through {0%, ~10%, ~25%, ~60%} by image index."""
    fractions = (0.0, 0.1, 0.25, 0.6)
    frac = fractions[index % len(fractions)]
    mask = np.zeros((size, size), dtype=np.uint8)
    rows = int(round(size * frac))
    label = 1 if index % 2 else 2
    if rows:
        mask[:rows, :] = label
    return mask


def emit_images(scene: SynthScene, root, size: int = 160) -> None:
    """Optional raster artifacts for the challenge stage: every third
    query is rendered blurry (gradient only); masks carry planted
    dynamic fractions; database images are all sharp."""
    root = Path(root)
    write_labels(root / LABELS_FILE, DYNAMIC_LABEL_TABLE)
    for i, image_id in enumerate(sorted(scene.images)):
        is_query = image_id in set(scene.query_ids)
        sharp = True
        if is_query:
            qi = scene.query_ids.index(image_id)
            sharp = qi % 3 != 2
        write_pgm(root / IMAGES_DIR / f"{image_id}.pgm", _render_image(i, sharp, size))
        write_pgm(root / MASKS_DIR / f"{image_id}.pgm", _render_mask(i, size))


def write_dataset(
    scene: SynthScene,
    root,
    descriptor_models: dict | None = None,
    inlier_noise_px: float = 0.0,
    outlier_ratio: float = 0.0,
    match_seed: int | None = None,
    pair_mode: str = "top_n",
    pair_r_min: float = 10.0,
    pair_top_n: int = 8,
    images: bool = False,
) -> None:
    """Persist a scene in the on-disk dataset layout.

    Descriptors are written per feature from ``descriptor_models``
    (name -> DescriptorModel; default a single pose_oracle feature).
    Match files cover every query-database pair plus the database pairs
    chosen by frustum overlap, so any retrieval shortlist can be
    localized later without regenerating anything. Database pairing
    defaults to top_n: the synthetic camera's frustum is narrow enough
    that a fixed 10 m radius floor would reject even identical views.
    """
    root = Path(root)
    if descriptor_models is None:
        descriptor_models = {"pose_oracle": DescriptorModel()}
    if match_seed is None:
        match_seed = scene.cfg.seed

    poses = {i: scene.images[i][0] for i in scene.images}
    write_poses(root / "poses.txt", poses)
    write_intrinsics(root / "intrinsics.txt", {"cam0": next(iter(scene.images.values()))[1]})
    write_image_camera(root / "image_camera.txt", {i: "cam0" for i in scene.images})
    write_queries(root / "queries.txt", scene.query_ids)
    write_points(root / "points3d.txt", scene.points)
    write_observations(root / "observations.txt", scene.observations)

    features = {}
    ids = sorted(scene.images)
    for name in sorted(descriptor_models):
        desc = emit_descriptors(scene, descriptor_models[name])
        features[name] = (np.stack([desc[i] for i in ids]), ids)
    write_descriptors(root, features)

    pairs = [(q, d) for q in scene.query_ids for d in scene.db_ids]
    db_images = {i: scene.images[i] for i in scene.db_ids}
    pairs += select_map_pairs(db_images, mode=pair_mode, r_min=pair_r_min, top_n=pair_top_n)
    matches = emit_matches(
        scene,
        pairs,
        inlier_noise_px=inlier_noise_px,
        outlier_ratio=outlier_ratio,
        seed=match_seed,
    )
    write_matches_dir(root, matches)

    if images:
        emit_images(scene, root)
