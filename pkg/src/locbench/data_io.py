"""Dataset persistence: a text-first directory layout plus loaders.

A dataset root holds:

* ``poses.txt`` — ``image_id qw qx qy qz cx cy cz`` per line
* ``intrinsics.txt`` — ``camera_id model fx fy cx cy w h``
* ``image_camera.txt`` — ``image_id camera_id``
* ``queries.txt`` — one query image id per line (everything else is
  database)
* ``points3d.txt`` — ``point_id x y z``
* ``observations.txt`` — ``image_id point_id px py``
* ``descriptors/<feature>.desc`` + ``<feature>.ids`` — binary matrix
  with a text sidecar listing one image id per row; a single flat
  ``descriptors.desc``/``descriptors.ids`` pair at the root loads as
  feature ``default``
* ``matches/<a>__<b>.txt`` — ``ax ay bx by`` per correspondence
* ``images/<image_id>.pgm``, ``masks/<image_id>.pgm``, ``labels.txt``
  (``label_id name``) — optional rasters for the challenge stage

All floats are written with ``repr`` (shortest round-trip decimal), so
emit -> load is bit-exact. Blank lines and ``#`` comments are skipped
everywhere. The binary descriptor format is an 8-byte magic, u32 row
count, u32 column count, then row-major little-endian float32.

Errors are distinct by kind: ``MissingFileError``, ``ParseError``
(carries file and line number), ``IntegrityError`` (cross-file
referential violations).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, Pose
from .map_localize import Observation, SceneMap

__all__ = [
    "DataIoError",
    "MissingFileError",
    "ParseError",
    "IntegrityError",
    "Dataset",
    "DESCRIPTOR_MAGIC",
    "load_dataset",
    "load_poses",
    "write_poses",
    "load_intrinsics",
    "write_intrinsics",
    "load_image_camera",
    "write_image_camera",
    "load_points",
    "write_points",
    "load_observations",
    "write_observations",
    "load_descriptors",
    "write_descriptors",
    "load_queries",
    "write_queries",
    "load_matches_dir",
    "write_matches_dir",
    "load_rankings",
    "write_rankings",
    "load_localization_results",
    "write_localization_results",
    "write_metrics_csv",
    "load_metrics_csv",
    "load_labels",
    "write_labels",
    "read_pgm",
    "write_pgm",
    "fmt",
]

DESCRIPTOR_MAGIC = b"LBDESC01"

POSES_FILE = "poses.txt"
INTRINSICS_FILE = "intrinsics.txt"
IMAGE_CAMERA_FILE = "image_camera.txt"
QUERIES_FILE = "queries.txt"
POINTS_FILE = "points3d.txt"
OBSERVATIONS_FILE = "observations.txt"
DESCRIPTOR_DIR = "descriptors"
MATCHES_DIR = "matches"
IMAGES_DIR = "images"
MASKS_DIR = "masks"
LABELS_FILE = "labels.txt"


class DataIoError(Exception):
    pass


class MissingFileError(DataIoError):
    def __init__(self, path):
        super().__init__(f"required file missing: {path}")
        self.path = Path(path)


class ParseError(DataIoError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = Path(path)
        self.line_no = line_no


class IntegrityError(DataIoError):
    pass


def fmt(x: float) -> str:
    """Shortest decimal that round-trips to the same binary64."""
    return repr(float(x))


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingFileError(path)
    return path


def _data_lines(path: Path):
    """Yield (line_no, fields) skipping blanks and # comments."""
    for i, raw in enumerate(path.read_text().splitlines(), start=1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        yield i, s.split()


def _floats(path, line_no, tokens):
    out = []
    for t in tokens:
        try:
            v = float(t)
        except ValueError:
            raise ParseError(path, line_no, f"not a number: {t!r}") from None
        if not np.isfinite(v):
            raise ParseError(path, line_no, f"non-finite value: {t!r}")
        out.append(v)
    return out


# ---------------------------------------------------------------- poses


def load_poses(path) -> dict:
    path = _require(Path(path))
    poses = {}
    for line_no, f in _data_lines(path):
        if len(f) != 8:
            raise ParseError(path, line_no, f"expected 8 fields, got {len(f)}")
        vals = _floats(path, line_no, f[1:])
        if f[0] in poses:
            raise ParseError(path, line_no, f"duplicate image id {f[0]!r}")
        try:
            poses[f[0]] = Pose(c=vals[4:7], q=vals[0:4])
        except ValueError as e:
            raise ParseError(path, line_no, str(e)) from None
    return poses


def write_poses(path, poses: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# image_id qw qx qy qz cx cy cz"]
    for image_id in sorted(poses):
        p = poses[image_id]
        lines.append(" ".join([image_id] + [fmt(v) for v in p.q] + [fmt(v) for v in p.c]))
    path.write_text("\n".join(lines) + "\n")


# ----------------------------------------------------------- intrinsics


def load_intrinsics(path) -> dict:
    path = _require(Path(path))
    cams = {}
    for line_no, f in _data_lines(path):
        if len(f) != 8:
            raise ParseError(path, line_no, f"expected 8 fields, got {len(f)}")
        cam_id, model = f[0], f[1]
        if model != "pinhole":
            raise ParseError(path, line_no, f"unsupported camera model {model!r}")
        if cam_id in cams:
            raise ParseError(path, line_no, f"duplicate camera id {cam_id!r}")
        vals = _floats(path, line_no, f[2:6])
        try:
            w, h = int(f[6]), int(f[7])
        except ValueError:
            raise ParseError(path, line_no, "width/height must be integers") from None
        try:
            cams[cam_id] = CameraIntrinsics(vals[0], vals[1], vals[2], vals[3], w, h)
        except ValueError as e:
            raise ParseError(path, line_no, str(e)) from None
    return cams


def write_intrinsics(path, cams: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# camera_id model fx fy cx cy w h"]
    for cam_id in sorted(cams):
        c = cams[cam_id]
        lines.append(
            " ".join(
                [cam_id, "pinhole", fmt(c.fx), fmt(c.fy), fmt(c.cx), fmt(c.cy), str(c.width), str(c.height)]
            )
        )
    path.write_text("\n".join(lines) + "\n")


def load_image_camera(path) -> dict:
    path = _require(Path(path))
    mapping = {}
    for line_no, f in _data_lines(path):
        if len(f) != 2:
            raise ParseError(path, line_no, f"expected 2 fields, got {len(f)}")
        if f[0] in mapping:
            raise ParseError(path, line_no, f"duplicate image id {f[0]!r}")
        mapping[f[0]] = f[1]
    return mapping


def write_image_camera(path, mapping: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# image_id camera_id"]
    for image_id in sorted(mapping):
        lines.append(f"{image_id} {mapping[image_id]}")
    path.write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------- points


def load_points(path) -> dict:
    path = _require(Path(path))
    points = {}
    for line_no, f in _data_lines(path):
        if len(f) != 4:
            raise ParseError(path, line_no, f"expected 4 fields, got {len(f)}")
        try:
            pid = int(f[0])
        except ValueError:
            raise ParseError(path, line_no, f"point id must be an integer: {f[0]!r}") from None
        if pid in points:
            raise ParseError(path, line_no, f"duplicate point id {pid}")
        points[pid] = np.array(_floats(path, line_no, f[1:]), dtype=np.float64)
    return points


def write_points(path, points: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# point_id x y z"]
    for pid in sorted(points):
        x = points[pid]
        lines.append(" ".join([str(int(pid))] + [fmt(v) for v in x]))
    path.write_text("\n".join(lines) + "\n")


# --------------------------------------------------------- observations


def load_observations(path) -> list:
    path = _require(Path(path))
    obs = []
    for line_no, f in _data_lines(path):
        if len(f) != 4:
            raise ParseError(path, line_no, f"expected 4 fields, got {len(f)}")
        try:
            pid = int(f[1])
        except ValueError:
            raise ParseError(path, line_no, f"point id must be an integer: {f[1]!r}") from None
        px, py = _floats(path, line_no, f[2:])
        obs.append(Observation(f[0], pid, (px, py)))
    return obs


def write_observations(path, observations) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# image_id point_id px py"]
    for ob in sorted(observations, key=lambda o: (o.image_id, o.point_id, o.pixel)):
        lines.append(f"{ob.image_id} {int(ob.point_id)} {fmt(ob.pixel[0])} {fmt(ob.pixel[1])}")
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------- descriptors


def _read_descriptor_pair(desc_path: Path, ids_path: Path):
    data = _require(desc_path).read_bytes()
    if len(data) < 16:
        raise ParseError(desc_path, 0, "file shorter than its fixed header")
    if data[:8] != DESCRIPTOR_MAGIC:
        raise ParseError(desc_path, 0, f"bad magic {data[:8]!r}")
    rows, cols = struct.unpack("<II", data[8:16])
    expected = 16 + 4 * rows * cols
    if len(data) != expected:
        raise ParseError(desc_path, 0, f"expected {expected} bytes for {rows}x{cols}, got {len(data)}")
    mat = np.frombuffer(data, dtype="<f4", offset=16).reshape(rows, cols).astype(np.float64)
    ids = []
    seen = set()
    for line_no, f in _data_lines(_require(ids_path)):
        if len(f) != 1:
            raise ParseError(ids_path, line_no, "expected one image id per line")
        if f[0] in seen:
            raise ParseError(ids_path, line_no, f"duplicate image id {f[0]!r}")
        seen.add(f[0])
        ids.append(f[0])
    if len(ids) != rows:
        raise IntegrityError(
            f"{desc_path}: {rows} descriptor rows but {len(ids)} ids in {ids_path.name}"
        )
    return mat, ids


def load_descriptors(root) -> dict:
    """All descriptor features under a dataset root: feature -> (matrix, ids).

    ``descriptors/<f>.desc`` wins; a flat ``descriptors.desc`` at the
    root is exposed as feature ``default``. Empty dict when neither
    exists.
    """
    root = Path(root)
    out = {}
    ddir = root / DESCRIPTOR_DIR
    if ddir.is_dir():
        for desc_path in sorted(ddir.glob("*.desc")):
            feature = desc_path.stem
            out[feature] = _read_descriptor_pair(desc_path, desc_path.with_suffix(".ids"))
    flat = root / "descriptors.desc"
    if flat.exists():
        out.setdefault("default", _read_descriptor_pair(flat, root / "descriptors.ids"))
    return out


def write_descriptors(root, features: dict) -> None:
    """Write feature -> (matrix, ids) under ``descriptors/``."""
    ddir = Path(root) / DESCRIPTOR_DIR
    ddir.mkdir(parents=True, exist_ok=True)
    for feature in sorted(features):
        mat, ids = features[feature]
        mat = np.asarray(mat, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != len(ids):
            raise ValueError(f"feature {feature!r}: matrix rows must match id count")
        payload = DESCRIPTOR_MAGIC + struct.pack("<II", mat.shape[0], mat.shape[1])
        payload += mat.astype("<f4").tobytes(order="C")
        (ddir / f"{feature}.desc").write_bytes(payload)
        (ddir / f"{feature}.ids").write_text("\n".join(ids) + "\n")


# -------------------------------------------------------------- queries


def load_queries(path) -> list:
    path = _require(Path(path))
    ids = []
    seen = set()
    for line_no, f in _data_lines(path):
        if len(f) != 1:
            raise ParseError(path, line_no, "expected one image id per line")
        if f[0] in seen:
            raise ParseError(path, line_no, f"duplicate query id {f[0]!r}")
        seen.add(f[0])
        ids.append(f[0])
    return ids


def write_queries(path, ids) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(list(ids)) + "\n")


# -------------------------------------------------------------- matches


def _pair_filename(a: str, b: str) -> str:
    for image_id in (a, b):
        if "__" in image_id or "/" in image_id:
            raise ValueError(f"image id {image_id!r} cannot name a match file")
    return f"{a}__{b}.txt"


def load_matches_dir(root) -> dict:
    """All pair match files: (image_a, image_b) -> (N, 4) float array
    with columns ax ay bx by. Empty dict when the directory is absent.

    Each line reads ``image_a ax ay image_b bx by``; the ids must agree
    with the pair named by the file.
    """
    mdir = Path(root) / MATCHES_DIR
    out = {}
    if not mdir.is_dir():
        return out
    for path in sorted(mdir.glob("*.txt")):
        stem = path.name[: -len(".txt")]
        parts = stem.split("__")
        if len(parts) != 2:
            raise ParseError(path, 0, "match file name must be <image_a>__<image_b>.txt")
        a, b = parts
        rows = []
        for line_no, f in _data_lines(path):
            if len(f) != 6:
                raise ParseError(path, line_no, f"expected 6 fields, got {len(f)}")
            if f[0] != a or f[3] != b:
                raise ParseError(
                    path, line_no, f"ids ({f[0]!r}, {f[3]!r}) disagree with file name pair"
                )
            rows.append(_floats(path, line_no, [f[1], f[2], f[4], f[5]]))
        out[(a, b)] = (
            np.array(rows, dtype=np.float64) if rows else np.zeros((0, 4), dtype=np.float64)
        )
    return out


def write_matches_dir(root, matches: dict) -> None:
    mdir = Path(root) / MATCHES_DIR
    mdir.mkdir(parents=True, exist_ok=True)
    for (a, b) in sorted(matches):
        arr = np.asarray(matches[(a, b)], dtype=np.float64).reshape(-1, 4)
        lines = ["# image_a ax ay image_b bx by"]
        for ax, ay, bx, by in arr:
            lines.append(f"{a} {fmt(ax)} {fmt(ay)} {b} {fmt(bx)} {fmt(by)}")
        (mdir / _pair_filename(a, b)).write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------- rankings


def load_rankings(path) -> dict:
    """query_id -> ordered list of (db_id, score), rank-ascending."""
    path = _require(Path(path))
    raw = {}
    for line_no, f in _data_lines(path):
        if len(f) != 4:
            raise ParseError(path, line_no, f"expected 4 fields, got {len(f)}")
        score = _floats(path, line_no, [f[2]])[0]
        try:
            rank = int(f[3])
        except ValueError:
            raise ParseError(path, line_no, f"rank must be an integer: {f[3]!r}") from None
        if rank < 1:
            raise ParseError(path, line_no, "ranks start at 1")
        raw.setdefault(f[0], []).append((rank, f[1], score))
    out = {}
    for q, rows in raw.items():
        rows.sort()
        ranks = [r for r, _, _ in rows]
        if ranks != list(range(1, len(rows) + 1)):
            raise IntegrityError(f"{path}: query {q!r} ranks are not contiguous from 1")
        out[q] = [(db, score) for _, db, score in rows]
    return out


def write_rankings(path, entries: dict) -> None:
    """entries: query_id -> iterable of (db_id, score), best first."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# query_id db_id score rank"]
    for q in sorted(entries):
        for rank, (db_id, score) in enumerate(entries[q], start=1):
            lines.append(f"{q} {db_id} {fmt(score)} {rank}")
    path.write_text("\n".join(lines) + "\n")


# ------------------------------------------- localization result tables


def load_localization_results(path) -> dict:
    """(k, query_id) -> dict(status, c_error, R_error, inliers).

    Failed rows carry None errors.
    """
    path = _require(Path(path))
    out = {}
    for line_no, f in _data_lines(path):
        if len(f) != 6:
            raise ParseError(path, line_no, f"expected 6 fields, got {len(f)}")
        try:
            k = int(f[0])
            inliers = int(f[5])
        except ValueError:
            raise ParseError(path, line_no, "k and inliers must be integers") from None
        status = f[2]
        if status == "ok":
            c_err, r_err = _floats(path, line_no, f[3:5])
        elif f[3] == "-" and f[4] == "-":
            c_err = r_err = None
        else:
            raise ParseError(path, line_no, "failed rows must carry '-' placeholders")
        key = (k, f[1])
        if key in out:
            raise ParseError(path, line_no, f"duplicate row for k={k} query {f[1]!r}")
        out[key] = {"status": status, "c_error": c_err, "R_error": r_err, "inliers": inliers}
    return out


def write_localization_results(path, rows: dict) -> None:
    """rows: (k, query_id) -> dict(status, c_error, R_error, inliers)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# k query_id status c_error_m R_error_deg inliers"]
    for (k, q) in sorted(rows, key=lambda kq: (kq[0], kq[1])):
        r = rows[(k, q)]
        if r["status"] == "ok":
            ce, re_ = fmt(r["c_error"]), fmt(r["R_error"])
        else:
            ce = re_ = "-"
        lines.append(f"{k} {q} {r['status']} {ce} {re_} {int(r.get('inliers', 0))}")
    path.write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------- metrics


def write_metrics_csv(path, rows) -> None:
    """rows: iterable of (metric, feature, k, value); k may be '' and
    value may be the string 'undefined'."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["metric,feature,k,value"]
    for metric, feature, k, value in rows:
        v = value if isinstance(value, str) else fmt(value)
        lines.append(f"{metric},{feature},{k},{v}")
    path.write_text("\n".join(lines) + "\n")


def load_metrics_csv(path) -> list:
    path = _require(Path(path))
    rows = []
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        if line_no == 1:
            if raw.strip() != "metric,feature,k,value":
                raise ParseError(path, line_no, "missing metric,feature,k,value header")
            continue
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 4:
            raise ParseError(path, line_no, f"expected 4 columns, got {len(parts)}")
        metric, feature, k, v = parts
        value = v if v == "undefined" else _floats(path, line_no, [v])[0]
        rows.append((metric, feature, int(k) if k else None, value))
    return rows


# ------------------------------------------------------- label rasters


def load_labels(path) -> dict:
    path = _require(Path(path))
    table = {}
    for line_no, f in _data_lines(path):
        if len(f) != 2:
            raise ParseError(path, line_no, f"expected 2 fields, got {len(f)}")
        try:
            label_id = int(f[0])
        except ValueError:
            raise ParseError(path, line_no, f"label id must be an integer: {f[0]!r}") from None
        if label_id in table:
            raise ParseError(path, line_no, f"duplicate label id {label_id}")
        table[label_id] = f[1]
    return table


def write_labels(path, table: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# label_id name"]
    for label_id in sorted(table):
        lines.append(f"{int(label_id)} {table[label_id]}")
    path.write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    """Binary (P5) or ASCII (P2) PGM, maxval <= 255, as a uint8 array."""
    path = _require(Path(path))
    data = path.read_bytes()
    try:
        tokens = []
        pos = 0
        while len(tokens) < 4:
            while pos < len(data) and data[pos : pos + 1].isspace():
                pos += 1
            if data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
                continue
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
        magic = tokens[0]
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except (ValueError, IndexError):
        raise ParseError(path, 0, "malformed PGM header") from None
    if maxval <= 0 or maxval > 255:
        raise ParseError(path, 0, f"unsupported PGM maxval {maxval}")
    if magic == b"P5":
        raster = data[pos + 1 : pos + 1 + width * height]
        if len(raster) != width * height:
            raise ParseError(path, 0, "PGM raster truncated")
        return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    if magic == b"P2":
        values = data[pos:].split()
        if len(values) != width * height:
            raise ParseError(path, 0, "PGM raster truncated")
        return np.array([int(v) for v in values], dtype=np.uint8).reshape(height, width)
    raise ParseError(path, 0, f"unsupported PGM magic {magic!r}")


def write_pgm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM output must be 2D")
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8) if img.dtype != np.uint8 else img
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    path.write_bytes(header + img.tobytes(order="C"))


# ------------------------------------------------------------- dataset


@dataclass
class Dataset:
    """A loaded dataset with its referential invariants already checked."""

    root: Path
    poses: dict
    cameras: dict
    image_camera: dict
    query_ids: list
    points: dict = field(default_factory=dict)
    observations: list = field(default_factory=list)
    descriptors: dict = field(default_factory=dict)
    matches: dict = field(default_factory=dict)

    @property
    def image_ids(self) -> list:
        return sorted(self.poses)

    @property
    def db_ids(self) -> list:
        q = set(self.query_ids)
        return [i for i in self.image_ids if i not in q]

    def intrinsics_of(self, image_id: str) -> CameraIntrinsics:
        return self.cameras[self.image_camera[image_id]]

    def intrinsics_map(self) -> dict:
        return {i: self.intrinsics_of(i) for i in self.image_ids}

    def scene_map(self) -> SceneMap:
        """Joint map over all images (queries included): the ground-truth
        reconstruction that co-observation ranking and paradigm 2b use."""
        images = {i: (self.poses[i], self.intrinsics_of(i)) for i in self.image_ids}
        return SceneMap(images=images, points=dict(self.points), observations=list(self.observations))

    def descriptor_lookup(self, feature: str) -> dict:
        mat, ids = self.descriptors[feature]
        return {image_id: mat[i] for i, image_id in enumerate(ids)}


def load_dataset(root) -> Dataset:
    """Load and cross-validate a dataset directory.

    Raises MissingFileError/ParseError for single-file problems and
    IntegrityError when files disagree with each other.
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingFileError(root)
    poses = load_poses(root / POSES_FILE)
    cameras = load_intrinsics(root / INTRINSICS_FILE)
    image_camera = load_image_camera(root / IMAGE_CAMERA_FILE)
    queries_path = root / QUERIES_FILE
    query_ids = load_queries(queries_path) if queries_path.exists() else []

    for image_id, cam_id in image_camera.items():
        if image_id not in poses:
            raise IntegrityError(f"image {image_id!r} has a camera but no pose")
        if cam_id not in cameras:
            raise IntegrityError(f"image {image_id!r} references unknown camera {cam_id!r}")
    for image_id in poses:
        if image_id not in image_camera:
            raise IntegrityError(f"image {image_id!r} has a pose but no camera assignment")
    for q in query_ids:
        if q not in poses:
            raise IntegrityError(f"query {q!r} is not an image of the dataset")

    points_path = root / POINTS_FILE
    points = load_points(points_path) if points_path.exists() else {}
    obs_path = root / OBSERVATIONS_FILE
    observations = load_observations(obs_path) if obs_path.exists() else []
    for ob in observations:
        if ob.image_id not in poses:
            raise IntegrityError(f"observation references unknown image {ob.image_id!r}")
        if ob.point_id not in points:
            raise IntegrityError(f"observation references unknown point {ob.point_id}")

    descriptors = load_descriptors(root)
    n_images = len(poses)
    for feature, (mat, ids) in descriptors.items():
        unknown = [i for i in ids if i not in poses]
        if unknown:
            raise IntegrityError(f"feature {feature!r} describes unknown image {unknown[0]!r}")
        if len(ids) != n_images:
            raise IntegrityError(
                f"feature {feature!r} has {len(ids)} descriptor rows for {n_images} images"
            )

    matches = load_matches_dir(root)
    for (a, b) in matches:
        for image_id in (a, b):
            if image_id not in poses:
                raise IntegrityError(f"match file references unknown image {image_id!r}")

    return Dataset(
        root=root,
        poses=poses,
        cameras=cameras,
        image_camera=image_camera,
        query_ids=query_ids,
        points=points,
        observations=observations,
        descriptors=descriptors,
        matches=matches,
    )
