"""Query-pose approximation by blending retrieved database poses.

Given the top-k retrieved database images for a query, a weighting
scheme assigns one weight per neighbor and the query pose is estimated
as the weighted blend: positions combine linearly, quaternions by a
sign-aligned linear combination that is re-normalized to unit length.

Three schemes are provided:

* ``weights_ewb`` — equal weights 1/k.
* ``weights_bdi`` — the affine combination of database descriptors
  closest to the query descriptor (equality-constrained least squares;
  weights may be negative).
* ``weights_csi`` — weights proportional to cosine similarity raised
  to a sharpness exponent alpha (alpha=0 degenerates to equal weights,
  large alpha concentrates all weight on the best neighbor).

Descriptors are plain float64 vectors; rows of a (k, dim) array are the
k neighbors in retrieval order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import Pose

__all__ = [
    "InterpolationWeights",
    "CsiConfig",
    "BlendedPose",
    "weights_ewb",
    "weights_bdi",
    "weights_csi",
    "interpolate_pose",
]

# Similarities at or below zero are clamped to this before exponentiation.
SIM_EPS = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class InterpolationWeights:
    """Per-neighbor blend weights, aligned with retrieval rank.

    Weights must sum to 1 (within 1e-10); individual weights may be
    negative for the affine scheme.
    """

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if len(w) == 0:
            raise ValueError("empty weight vector")
        if not np.all(np.isfinite(w)):
            raise ValueError("non-finite weights")
        s = float(w.sum())
        if abs(s - 1.0) > 1e-10:
            raise ValueError(f"weights sum to {s!r}, expected 1")
        object.__setattr__(self, "w", _freeze(w))

    @property
    def k(self) -> int:
        return len(self.w)

    def __len__(self) -> int:
        return len(self.w)

    def __iter__(self):
        return iter(self.w)

    def __getitem__(self, i):
        return self.w[i]


@dataclass(frozen=True)
class CsiConfig:
    """Sharpness exponent for cosine-similarity weighting."""

    alpha: float = 8.0

    def __post_init__(self):
        if not (self.alpha >= 0):
            raise ValueError("alpha must be non-negative")


@dataclass(frozen=True, eq=False)
class BlendedPose(Pose):
    """A blended pose. ``degenerate`` marks a cancelled quaternion sum.

    When the weighted quaternion sum has norm below 1e-9 there is no
    meaningful blended orientation; the position is still valid and the
    orientation falls back to the top-1 quaternion.
    """

    degenerate: bool = False


def weights_ewb(k: int) -> InterpolationWeights:
    """Equal weights over the top-k neighbors."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return InterpolationWeights(np.full(k, 1.0 / k))


def weights_bdi(d_q: np.ndarray, descriptors: np.ndarray) -> InterpolationWeights:
    """Best affine approximation of the query descriptor.

    Minimizes ``|| d_q - sum_i w_i d_i ||`` subject to ``sum_i w_i = 1``
    via the KKT system of the equality-constrained least-squares
    problem. Weights are affine, not convex: negative entries are
    legitimate. A rank-deficient system (duplicate descriptors) falls
    back to the minimum-norm solution, which splits weight evenly
    across the duplicates.
    """
    D = np.asarray(descriptors, dtype=np.float64)
    if D.ndim != 2:
        raise ValueError("descriptors must be a (k, dim) array")
    d_q = np.asarray(d_q, dtype=np.float64).reshape(-1)
    k, dim = D.shape
    if k < 1:
        raise ValueError("need at least one descriptor")
    if dim != len(d_q):
        raise ValueError(f"descriptor dimension mismatch: {dim} vs {len(d_q)}")
    if k == 1:
        return InterpolationWeights(np.array([1.0]))

    # KKT system of  min ||d_q - D^T w||^2  s.t.  1^T w = 1:
    #   [2 D D^T   1] [w]   [2 D d_q]
    #   [1^T       0] [l] = [1      ]
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = 2.0 * (D @ D.T)
    A[:k, k] = 1.0
    A[k, :k] = 1.0
    b = np.empty(k + 1)
    b[:k] = 2.0 * (D @ d_q)
    b[k] = 1.0
    def candidates():
        try:
            sol = np.linalg.solve(A, b)
            if not np.all(np.isfinite(sol)):
                raise np.linalg.LinAlgError("non-finite KKT solution")
            yield sol
        except np.linalg.LinAlgError:
            yield np.linalg.lstsq(A, b, rcond=None)[0]
        # A near-singular Gram matrix yields huge weights whose float
        # sum cannot represent the constraint to 1e-10 at any scaling;
        # damp progressively toward the min-norm solution until it can.
        for rcond in (1e-13, 1e-10, 1e-7, 1e-4):
            yield np.linalg.pinv(A, rcond=rcond) @ b

    for sol in candidates():
        w = sol[:k]
        s = float(w.sum())
        if not np.isfinite(s) or abs(s - 1.0) > 0.5:
            continue
        w = w / s
        if np.all(np.isfinite(w)) and abs(float(w.sum()) - 1.0) <= 1e-10:
            return InterpolationWeights(w)
    return weights_ewb(k)


def weights_csi(
    d_q: np.ndarray,
    descriptors: np.ndarray,
    cfg: CsiConfig = CsiConfig(),
) -> InterpolationWeights:
    """Cosine-similarity weights with sharpness exponent ``cfg.alpha``.

    ``w_i = s_i^alpha / sum_j s_j^alpha`` where ``s_i = d_q . d_i``
    (descriptors are expected L2-normalized, so this is the cosine).
    Evaluated in log space so large exponents neither overflow nor
    underflow the whole vector. Non-positive similarities are clamped
    to 1e-12 with a warning: the exponent may be even or fractional,
    and a "similarity" weight should not flip sign.
    """
    D = np.asarray(descriptors, dtype=np.float64)
    if D.ndim != 2:
        raise ValueError("descriptors must be a (k, dim) array")
    d_q = np.asarray(d_q, dtype=np.float64).reshape(-1)
    k = D.shape[0]
    if k < 1:
        raise ValueError("need at least one descriptor")
    if D.shape[1] != len(d_q):
        raise ValueError("descriptor dimension mismatch")
    if cfg.alpha == 0.0:
        return weights_ewb(k)

    sims = D @ d_q
    if np.any(sims <= 0):
        warnings.warn(
            f"{int(np.sum(sims <= 0))} non-positive similarity value(s) clamped to {SIM_EPS}",
            stacklevel=2,
        )
        sims = np.maximum(sims, SIM_EPS)
    logw = cfg.alpha * np.log(sims)
    logw -= logw.max()
    w = np.exp(logw)
    return InterpolationWeights(w / w.sum())


def interpolate_pose(poses, weights) -> Pose:
    """Blend k poses with the given weights.

    Position is the weighted sum of camera centers. The quaternion is
    the weighted sum of the input quaternions, each first sign-aligned
    to the hemisphere of the top-1 quaternion (antipodal quaternion
    pairs encode the same rotation, and without alignment nearby
    rotations can cancel), then re-normalized to unit length.

    k=1 returns the top-1 pose itself, bitwise. A quaternion sum with
    norm below 1e-9 yields a ``BlendedPose`` flagged ``degenerate``
    whose position is still the weighted blend.
    """
    poses = list(poses)
    w = np.asarray(getattr(weights, "w", weights), dtype=np.float64).reshape(-1)
    if len(poses) == 0:
        raise ValueError("no poses to blend")
    if len(w) != len(poses):
        raise ValueError(f"{len(w)} weights for {len(poses)} poses")
    if len(poses) == 1:
        return poses[0]

    C = np.stack([p.c for p in poses])
    position = (w[:, None] * C).sum(axis=0)

    Q = np.stack([p.q for p in poses])
    ref = Q[0]
    signed_w = np.where(Q @ ref < 0.0, -w, w)
    qsum = (signed_w[:, None] * Q).sum(axis=0)
    norm = float(np.linalg.norm(qsum))
    if norm < 1e-9:
        return BlendedPose(c=position, q=ref, degenerate=True)
    return BlendedPose(c=position, q=qsum / norm, degenerate=False)
