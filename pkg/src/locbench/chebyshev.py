"""Chebyshev center of a half-space intersection, by exact simplex.

The overlap score between two viewing frusta is the radius of the largest
ball inscribed in their intersection. With unit normals this is the linear
program

    maximize r   subject to   n_i . x + r <= d_i

solved here by a small dense two-phase simplex over exact rationals
(``fractions.Fraction``). Exact pivoting means no tolerance tuning, no
cycling (Bland's rule), and bit-reproducible scores; problem sizes are
tiny (a frustum pair contributes at most 12 constraints), so the cost of
rational arithmetic is irrelevant.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .geometry import Frustum

__all__ = [
    "LpError",
    "LpUnbounded",
    "LpInfeasible",
    "LpNoConvergence",
    "chebyshev_center",
    "frustum_overlap_score",
]

_MAX_PIVOTS = 100_000


class LpError(Exception):
    """Base class for linear-program solver failures."""


class LpUnbounded(LpError):
    """The objective is unbounded (the region admits arbitrarily large balls)."""


class LpInfeasible(LpError):
    """No feasible point exists (cannot happen for the Chebyshev LP)."""


class LpNoConvergence(LpError):
    """Pivot budget exhausted; distinct from an empty intersection."""


def _pivot(T, basis, row, col):
    piv = T[row][col]
    T[row] = [v / piv for v in T[row]]
    for i in range(len(T)):
        if i != row and T[i][col] != 0:
            f = T[i][col]
            T[i] = [a - f * b for a, b in zip(T[i], T[row])]
    basis[row] = col


def _run_simplex(T, basis, cost, ncols):
    """Bland's-rule simplex on tableau T (last column = rhs). In place."""
    m = len(T)
    for _ in range(_MAX_PIVOTS):
        in_basis = set(basis)
        enter = -1
        for j in range(ncols):
            if j in in_basis:
                continue
            rj = cost[j] - sum(cost[basis[i]] * T[i][j] for i in range(m))
            if rj < 0:
                enter = j  # smallest improving index (Bland)
                break
        if enter < 0:
            return
        leave = -1
        best = None
        for i in range(m):
            if T[i][enter] > 0:
                ratio = T[i][-1] / T[i][enter]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best = ratio
                    leave = i
        if leave < 0:
            raise LpUnbounded("no blocking constraint for the entering variable")
        _pivot(T, basis, leave, enter)
    raise LpNoConvergence(f"simplex did not terminate within {_MAX_PIVOTS} pivots")


def _solve_min(A, b, cost):
    """min cost.y s.t. A y = b, y >= 0 over Fractions. Returns (value, y).

    Two-phase: artificials seed a feasible basis, phase one drives their
    sum to zero, then the real objective runs on the original columns.
    """
    m = len(A)
    n = len(A[0])
    zero, one = Fraction(0), Fraction(1)

    # Flip rows so the RHS is nonnegative, then add one artificial per row.
    T = []
    for i in range(m):
        row = list(A[i]) + [zero] * m + [b[i]]
        if b[i] < 0:
            row = [-v for v in row]
        T.append(row)
        T[i][n + i] = one
    basis = list(range(n, n + m))
    phase1 = [zero] * n + [one] * m
    _run_simplex(T, basis, phase1, n + m)
    if sum(T[i][-1] for i in range(m) if basis[i] >= n) != 0:
        raise LpInfeasible("phase-one optimum is positive")

    # Pivot leftover zero-level artificials out; drop rows that are redundant.
    for i in range(m - 1, -1, -1):
        if basis[i] >= n:
            col = next((j for j in range(n) if T[i][j] != 0), None)
            if col is None:
                del T[i]
                del basis[i]
            else:
                _pivot(T, basis, i, col)
    for row in T:
        del row[n:-1]  # strip artificial columns

    _run_simplex(T, basis, cost, n)
    y = [zero] * n
    for i, bi in enumerate(basis):
        y[bi] = T[i][-1]
    value = sum(c * v for c, v in zip(cost, y))
    return value, y


def chebyshev_center(normals: np.ndarray, offsets: np.ndarray):
    """Largest inscribed ball of {x : normals @ x <= offsets}.

    Normals must be unit length (the caller guarantees it; Frustum
    enforces it). Returns ``(radius, center)`` with exact-rational
    optimality; a negative radius means the intersection is empty and
    reports how deeply infeasible it is. Raises LpUnbounded when the
    region admits arbitrarily large balls.
    """
    n = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(offsets, dtype=np.float64).reshape(-1)
    if len(n) != len(d) or len(n) == 0:
        raise ValueError("need matching, non-empty normals and offsets")

    # Free variables x (3) and r as differences of nonnegative pairs,
    # one slack per constraint: n.x + r + s = d.
    zero, one = Fraction(0), Fraction(1)
    m = len(n)
    A = []
    b = []
    for i in range(m):
        ni = [Fraction(v) for v in n[i]]
        row = ni + [one] + [-v for v in ni] + [-one] + [zero] * m
        row[8 + i] = one
        A.append(row)
        b.append(Fraction(float(d[i])))
    cost = [zero] * 8 + [zero] * m
    cost[3] = -one  # maximize r  ==  minimize -r+ ...
    cost[7] = one  # ... + r-
    value, y = _solve_min(A, b, cost)
    radius = -value
    center = np.array([float(y[j] - y[4 + j]) for j in range(3)])
    return float(radius), center


def frustum_overlap_score(a: Frustum, b: Frustum) -> float:
    """Chebyshev radius of the intersection of two frusta, in meters.

    0.0 when the frusta are disjoint or touch only on a boundary. The
    score is symmetric: the optimal radius of the stacked system does not
    depend on constraint order.
    """
    radius, _ = chebyshev_center(
        np.vstack([a.normals, b.normals]),
        np.concatenate([a.offsets, b.offsets]),
    )
    return max(0.0, radius)
