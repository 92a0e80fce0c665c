"""Camera pose algebra, pose-error metrics, and viewing frusta.

Conventions used throughout the package:

* A pose is a pair (c, q): camera position ``c`` in world coordinates
  (meters) and a unit quaternion ``q = (w, x, y, z)`` encoding the
  world-to-camera rotation R. A world point X maps into the camera
  frame as ``X_local = R @ (X - c)``; the camera looks down +z.
* Rotation errors are reported in degrees, position errors in meters.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Pose",
    "CameraIntrinsics",
    "PoseError",
    "Frustum",
    "rotation_matrix_from_quat",
    "quat_from_rotation_matrix",
    "quat_multiply",
    "quat_from_axis_angle",
    "position_error",
    "rotation_error",
    "pose_error",
    "project_point",
    "project_points",
    "build_frustum",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera pose: world position ``c`` and world-to-camera quaternion ``q``.

    ``q`` is stored in (w, x, y, z) order and must be unit length. Mildly
    denormalized quaternions (within 1e-6 of unit) are renormalized on
    ingestion; a warning is emitted past that, and near-zero norms are
    rejected outright.
    """

    c: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=np.float64).reshape(3)
        q = np.array(self.q, dtype=np.float64).reshape(4)
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(q))):
            raise ValueError("pose contains non-finite entries")
        n = float(np.linalg.norm(q))
        if n < 1e-9:
            raise ValueError(f"quaternion norm {n:.3e} is effectively zero")
        if abs(n - 1.0) > 1e-6:
            warnings.warn(f"quaternion norm {n:.8f} far from unit, renormalizing", stacklevel=2)
            q = q / n
        elif abs(n - 1.0) > 1e-9:
            q = q / n
        # else: keep the caller's bits so emit/load round-trips exactly
        object.__setattr__(self, "c", _freeze(c))
        object.__setattr__(self, "q", _freeze(q))

    @property
    def R(self) -> np.ndarray:
        """World-to-camera rotation matrix."""
        return rotation_matrix_from_quat(self.q)

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (pts - self.c) @ self.R.T

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.c, other.c) and np.array_equal(self.q, other.q))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with the principal point in pixel coordinates."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not (0.0 <= self.cx <= self.width and 0.0 <= self.cy <= self.height):
            raise ValueError("principal point outside the image")


@dataclass(frozen=True)
class PoseError:
    """Position error in meters and rotation error in degrees."""

    c_error: float
    R_error: float


def rotation_matrix_from_quat(q: np.ndarray) -> np.ndarray:
    """Convert a (w, x, y, z) unit quaternion to a 3x3 rotation matrix."""
    w, x, y, z = (float(v) for v in np.asarray(q, dtype=np.float64).reshape(4))
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def quat_from_rotation_matrix(R: np.ndarray) -> np.ndarray:
    """Convert a rotation matrix to a (w, x, y, z) quaternion with w >= 0.

    Uses the Shepperd branch selection (largest diagonal combination) for
    numerical stability near 180-degree rotations.
    """
    R = np.asarray(R, dtype=np.float64).reshape(3, 3)
    t = np.trace(R)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 * q2, both in (w, x, y, z) order."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_from_axis_angle(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64).reshape(3)
    n = np.linalg.norm(axis)
    if n == 0:
        raise ValueError("zero rotation axis")
    half = 0.5 * angle_rad
    return np.concatenate([[math.cos(half)], math.sin(half) / n * axis])


def position_error(est: Pose, ref: Pose) -> float:
    """Euclidean distance between camera centers, meters."""
    return float(np.linalg.norm(est.c - ref.c))


def rotation_error(est: Pose, ref: Pose) -> float:
    """Geodesic angle between the two rotations, degrees.

    Computed as arccos((trace(R_est^T R_ref) - 1) / 2) with the argument
    clamped to [-1, 1]; symmetric in its arguments, and invariant to the
    q/-q quaternion sign ambiguity because both signs yield the same R.
    Bitwise-equal quaternions (either sign) short-circuit to exactly 0:
    the matrix route would report ~1e-6 degrees of arccos noise for the
    identical rotation.
    """
    if np.array_equal(est.q, ref.q) or np.array_equal(est.q, -ref.q):
        return 0.0
    m = float(np.trace(est.R.T @ ref.R))
    cos_ang = max(-1.0, min(1.0, (m - 1.0) / 2.0))
    return math.degrees(math.acos(cos_ang))


def pose_error(est: Pose, ref: Pose) -> PoseError:
    return PoseError(position_error(est, ref), rotation_error(est, ref))


def project_point(point: np.ndarray, pose: Pose, intr: CameraIntrinsics):
    """Project one world point to pixel coordinates.

    Returns ``(u, v)`` or None when the point lies at or behind the
    camera plane (depth <= 0). No bounds check: callers that care about
    visibility test against the image rectangle themselves.
    """
    p = pose.R @ (np.asarray(point, dtype=np.float64).reshape(3) - pose.c)
    if p[2] <= 0:
        return None
    return (
        float(intr.fx * p[0] / p[2] + intr.cx),
        float(intr.fy * p[1] / p[2] + intr.cy),
    )


def project_points(points: np.ndarray, pose: Pose, intr: CameraIntrinsics):
    """Vectorized projection of an (N, 3) array.

    Returns ``(uv, depth)`` where rows with ``depth <= 0`` hold NaN pixels.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    local = (pts - pose.c) @ pose.R.T
    depth = local[:, 2].copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.empty((len(pts), 2), dtype=np.float64)
        uv[:, 0] = intr.fx * local[:, 0] / depth + intr.cx
        uv[:, 1] = intr.fy * local[:, 1] / depth + intr.cy
    uv[depth <= 0] = np.nan
    return uv, depth


@dataclass(frozen=True)
class Frustum:
    """Convex viewing volume as an intersection of half-spaces n.x <= d.

    Normals are unit length; that makes ``d - n @ x`` a signed distance,
    which downstream overlap code relies on.
    """

    normals: np.ndarray  # (m, 3)
    offsets: np.ndarray  # (m,)

    def __post_init__(self):
        n = np.array(self.normals, dtype=np.float64).reshape(-1, 3)
        d = np.array(self.offsets, dtype=np.float64).reshape(-1)
        if len(n) != len(d):
            raise ValueError("normals/offsets length mismatch")
        norms = np.linalg.norm(n, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("frustum normals must be unit length")
        object.__setattr__(self, "normals", _freeze(n))
        object.__setattr__(self, "offsets", _freeze(d))

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.all(pts @ self.normals.T <= self.offsets + tol, axis=1)


def _unit_halfspace(n: np.ndarray, d: float):
    s = float(np.linalg.norm(n))
    return n / s, d / s


def build_frustum(
    pose: Pose,
    intr: CameraIntrinsics,
    far: float,
    near: float = 0.0,
) -> Frustum:
    """Build the viewing frustum of a camera as unit half-spaces.

    The volume is bounded by the four image-border side planes, the far
    plane at ``far`` meters, and, when ``near > 0``, the near plane. With
    ``near == 0`` the apex (camera center) is part of the volume and only
    five half-spaces are produced.
    """
    if far <= 0:
        raise ValueError("far plane distance must be positive")
    if near < 0 or near >= far:
        raise ValueError("need 0 <= near < far")
    R = pose.R
    c = pose.c
    r1, r2, r3 = R[0], R[1], R[2]

    normals = []
    offsets = []

    # Far plane: depth r3.(x - c) <= far.
    normals.append(r3)
    offsets.append(float(r3 @ c) + far)
    if near > 0:
        # Near plane: depth >= near.
        normals.append(-r3)
        offsets.append(-(float(r3 @ c) + near))

    # Side planes come from the pixel bounds 0 <= u <= w, 0 <= v <= h:
    #   u >= 0  ->  -(fx*r1 + cx*r3) . (x - c) <= 0
    #   u <= w  ->   (fx*r1 + (cx - w)*r3) . (x - c) <= 0
    # and likewise for v; all pass through the camera center.
    for n in (
        -(intr.fx * r1 + intr.cx * r3),
        intr.fx * r1 + (intr.cx - intr.width) * r3,
        -(intr.fy * r2 + intr.cy * r3),
        intr.fy * r2 + (intr.cy - intr.height) * r3,
    ):
        normals.append(n)
        offsets.append(float(n @ c))

    unit = [_unit_halfspace(n, d) for n, d in zip(normals, offsets)]
    return Frustum(
        normals=np.array([u[0] for u in unit]),
        offsets=np.array([u[1] for u in unit]),
    )
