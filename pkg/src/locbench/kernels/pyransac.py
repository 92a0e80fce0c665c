"""Pure-Python twin of the compiled RANSAC + P3P kernel.

This backend and the compiled one must produce bit-identical results.
The contract that makes that possible:

* both consume the same splitmix64 stream and the same multiply-shift
  index mapping, so they visit identical minimal samples;
* every scalar expression (P3P cosines, quartic coefficients, root
  bisection, rigid alignment) is written with the same operation order
  in both sources, and the extension is compiled with FP contraction
  off, so each step rounds identically;
* the inlier test is purely elementwise, so numpy ufuncs here equal the
  C loop there bit for bit (no reductions, no BLAS).

Keep any edit to the numerics mirrored in ``_ransac.pyx``.
"""

from __future__ import annotations

import math

import numpy as np

NAME = "python"

_MASK = (1 << 64) - 1


def _rng_next(state: int):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rng_below(z: int, n: int) -> int:
    return ((z >> 32) * n) >> 32


def _quadratic_roots(a, b, c, out):
    """Real roots of a*x^2 + b*x + c, ascending. Returns count."""
    if a == 0.0:
        if b == 0.0:
            return 0
        out[0] = -c / b
        return 1
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return 0
    if disc == 0.0:
        out[0] = -b / (2.0 * a)
        return 1
    sq = math.sqrt(disc)
    qq = -0.5 * (b + math.copysign(sq, b))
    if qq != 0.0:
        x1 = qq / a
        x2 = c / qq
    else:
        x1 = -sq / (2.0 * a)
        x2 = sq / (2.0 * a)
    if x1 > x2:
        x1, x2 = x2, x1
    out[0] = x1
    out[1] = x2
    return 2


def _poly3(b2, b1, b0, x):
    return ((x + b2) * x + b1) * x + b0


def _poly4(b3, b2, b1, b0, x):
    return (((x + b3) * x + b2) * x + b1) * x + b0


def _bisect3(b2, b1, b0, lo, hi, flo_neg):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            return mid
        fm = _poly3(b2, b1, b0, mid)
        if fm == 0.0:
            return mid
        if (fm < 0.0) == flo_neg:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _bisect4(b3, b2, b1, b0, lo, hi, flo_neg):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            return mid
        fm = _poly4(b3, b2, b1, b0, mid)
        if fm == 0.0:
            return mid
        if (fm < 0.0) == flo_neg:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _cubic_roots(c3, c2, c1, c0, out):
    """Real roots of c3*x^3 + ... + c0, ascending, by bracketed bisection.

    Brackets come from the critical points (roots of the derivative), so
    every monotone piece is scanned; critical points where the value is
    numerically zero count as (tangent) roots too.
    """
    if c3 == 0.0:
        return _quadratic_roots(c2, c1, c0, out)
    b2 = c2 / c3
    b1 = c1 / c3
    b0 = c0 / c3
    bound = 1.0 + max(abs(b2), abs(b1), abs(b0))
    crit = [0.0, 0.0]
    ncrit = _quadratic_roots(3.0, 2.0 * b2, b1, crit)
    knots = [-bound]
    for i in range(ncrit):
        if -bound < crit[i] < bound:
            knots.append(crit[i])
    knots.append(bound)
    ftol = 1e-12 * (1.0 + abs(b2) + abs(b1) + abs(b0))
    raw = []
    fprev = _poly3(b2, b1, b0, knots[0])
    for i in range(1, len(knots)):
        x = knots[i]
        fx = _poly3(b2, b1, b0, x)
        if i < len(knots) - 1 and abs(fx) <= ftol:
            raw.append(x)
        if (fprev < 0.0) != (fx < 0.0):
            raw.append(_bisect3(b2, b1, b0, knots[i - 1], x, fprev < 0.0))
        fprev = fx
    raw.sort()
    cnt = 0
    for x in raw:
        if cnt < 3 and (cnt == 0 or x - out[cnt - 1] > 1e-10 * (1.0 + abs(x))):
            out[cnt] = x
            cnt += 1
    return cnt


def _quartic_roots(a4, a3, a2, a1, a0, out):
    """Real roots of the quartic, ascending. Degenerate leading term -> 0."""
    scale = max(abs(a4), abs(a3), abs(a2), abs(a1), abs(a0))
    if scale == 0.0 or abs(a4) < 1e-12 * scale:
        return 0
    b3 = a3 / a4
    b2 = a2 / a4
    b1 = a1 / a4
    b0 = a0 / a4
    bound = 1.0 + max(abs(b3), abs(b2), abs(b1), abs(b0))
    crit = [0.0, 0.0, 0.0]
    ncrit = _cubic_roots(4.0, 3.0 * b3, 2.0 * b2, b1, crit)
    knots = [-bound]
    for i in range(ncrit):
        if -bound < crit[i] < bound:
            knots.append(crit[i])
    knots.append(bound)
    ftol = 1e-12 * (1.0 + abs(b3) + abs(b2) + abs(b1) + abs(b0))
    raw = []
    fprev = _poly4(b3, b2, b1, b0, knots[0])
    for i in range(1, len(knots)):
        x = knots[i]
        fx = _poly4(b3, b2, b1, b0, x)
        if i < len(knots) - 1 and abs(fx) <= ftol:
            raw.append(x)
        if (fprev < 0.0) != (fx < 0.0):
            raw.append(_bisect4(b3, b2, b1, b0, knots[i - 1], x, fprev < 0.0))
        fprev = fx
    raw.sort()
    cnt = 0
    for x in raw:
        if cnt < 4 and (cnt == 0 or x - out[cnt - 1] > 1e-10 * (1.0 + abs(x))):
            out[cnt] = x
            cnt += 1
    return cnt


def _p3p_candidates(
    x1, y1, z1, x2, y2, z2, x3, y3, z3,
    j1x, j1y, j1z, j2x, j2y, j2z, j3x, j3y, j3z,
):
    """Grunert P3P: camera poses fitting three world points and bearings.

    Returns a list of (r00..r22, t0, t1, t2) tuples, in deterministic
    (ascending quartic root) order. The pose maps world to camera:
    X_cam = R @ X_world + t.
    """
    # squared triangle sides; a is opposite point 1, etc.
    ax = x2 - x3
    ay = y2 - y3
    az = z2 - z3
    A = ax * ax + ay * ay + az * az
    bx = x1 - x3
    by = y1 - y3
    bz = z1 - z3
    B = bx * bx + by * by + bz * bz
    cx = x1 - x2
    cy = y1 - y2
    cz = z1 - z2
    C = cx * cx + cy * cy + cz * cz
    if A <= 0.0 or B <= 0.0 or C <= 0.0:
        return []
    # collinear world points make the problem ill-posed
    nx = cy * bz - cz * by
    ny = cz * bx - cx * bz
    nz = cx * by - cy * bx
    if nx * nx + ny * ny + nz * nz <= 1e-16 * (B * C):
        return []
    p = 2.0 * (j2x * j3x + j2y * j3y + j2z * j3z)
    q = 2.0 * (j1x * j3x + j1y * j3y + j1z * j3z)
    r = 2.0 * (j1x * j2x + j1y * j2y + j1z * j2z)
    # nearly parallel bearing pairs are degenerate
    if p > 2.0 - 2e-9 or q > 2.0 - 2e-9 or r > 2.0 - 2e-9:
        return []

    # quartic in v = s3/s1 (derived by eliminating u = s2/s1 from the
    # two side-ratio constraints; coefficients verified symbolically
    # and on random synthetic configurations)
    a4 = A * A - 2.0 * A * B - 2.0 * A * C + B * B - B * C * p * p + 2.0 * B * C + C * C
    a3 = (
        -2.0 * A * A * q + A * B * p * r + 2.0 * A * B * q + 4.0 * A * C * q
        - B * B * p * r + B * C * p * p * q + B * C * p * r - 2.0 * B * C * q
        - 2.0 * C * C * q
    )
    a2 = (
        A * A * q * q + 2.0 * A * A - A * B * p * q * r - A * B * r * r
        - 2.0 * A * C * q * q - 4.0 * A * C + B * B * p * p + B * B * r * r
        - 2.0 * B * B - B * C * p * p - B * C * p * q * r + C * C * q * q
        + 2.0 * C * C
    )
    a1 = (
        -2.0 * A * A * q + A * B * p * r + A * B * q * r * r - 2.0 * A * B * q
        + 4.0 * A * C * q - B * B * p * r + B * C * p * r + 2.0 * B * C * q
        - 2.0 * C * C * q
    )
    a0 = A * A - A * B * r * r + 2.0 * A * B - 2.0 * A * C + B * B - 2.0 * B * C + C * C

    roots = [0.0, 0.0, 0.0, 0.0]
    nroots = _quartic_roots(a4, a3, a2, a1, a0, roots)
    cands = []
    for i in range(nroots):
        v = roots[i]
        if v <= 0.0:
            continue
        den_s = 1.0 + v * v - v * q
        if den_s <= 1e-12:
            continue
        den_u = B * (r - p * v)
        if abs(den_u) <= 1e-12 * B:
            continue
        u = (B * (1.0 - v * v) + (A - C) * (1.0 + v * v - v * q)) / den_u
        if u <= 0.0:
            continue
        s1 = math.sqrt(B / den_s)
        s2 = u * s1
        s3 = v * s1
        cand = _rigid_from_triangle(
            x1, y1, z1, x2, y2, z2, x3, y3, z3,
            s1 * j1x, s1 * j1y, s1 * j1z,
            s2 * j2x, s2 * j2y, s2 * j2z,
            s3 * j3x, s3 * j3y, s3 * j3z,
        )
        if cand is not None:
            cands.append(cand)
    return cands


def _rigid_from_triangle(
    x1, y1, z1, x2, y2, z2, x3, y3, z3,
    p1x, p1y, p1z, p2x, p2y, p2z, p3x, p3y, p3z,
):
    """Rotation+translation mapping world triangle onto camera triangle.

    Exact for congruent triangles (P3P guarantees congruence); built from
    matched orthonormal triads. Returns None on collinear input.
    """
    e1x = x2 - x1
    e1y = y2 - y1
    e1z = z2 - z1
    n1 = math.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
    if n1 <= 0.0:
        return None
    e1x /= n1
    e1y /= n1
    e1z /= n1
    hx = x3 - x1
    hy = y3 - y1
    hz = z3 - z1
    e3x = e1y * hz - e1z * hy
    e3y = e1z * hx - e1x * hz
    e3z = e1x * hy - e1y * hx
    n3 = e3x * e3x + e3y * e3y + e3z * e3z
    if n3 <= 1e-16 * (hx * hx + hy * hy + hz * hz):
        return None
    n3 = math.sqrt(n3)
    e3x /= n3
    e3y /= n3
    e3z /= n3
    e2x = e3y * e1z - e3z * e1y
    e2y = e3z * e1x - e3x * e1z
    e2z = e3x * e1y - e3y * e1x

    f1x = p2x - p1x
    f1y = p2y - p1y
    f1z = p2z - p1z
    m1 = math.sqrt(f1x * f1x + f1y * f1y + f1z * f1z)
    if m1 <= 0.0:
        return None
    f1x /= m1
    f1y /= m1
    f1z /= m1
    gx = p3x - p1x
    gy = p3y - p1y
    gz = p3z - p1z
    f3x = f1y * gz - f1z * gy
    f3y = f1z * gx - f1x * gz
    f3z = f1x * gy - f1y * gx
    m3 = f3x * f3x + f3y * f3y + f3z * f3z
    if m3 <= 1e-16 * (gx * gx + gy * gy + gz * gz):
        return None
    m3 = math.sqrt(m3)
    f3x /= m3
    f3y /= m3
    f3z /= m3
    f2x = f3y * f1z - f3z * f1y
    f2y = f3z * f1x - f3x * f1z
    f2z = f3x * f1y - f3y * f1x

    # R = sum_k f_k e_k^T maps world triad onto camera triad
    r00 = f1x * e1x + f2x * e2x + f3x * e3x
    r01 = f1x * e1y + f2x * e2y + f3x * e3y
    r02 = f1x * e1z + f2x * e2z + f3x * e3z
    r10 = f1y * e1x + f2y * e2x + f3y * e3x
    r11 = f1y * e1y + f2y * e2y + f3y * e3y
    r12 = f1y * e1z + f2y * e2z + f3y * e3z
    r20 = f1z * e1x + f2z * e2x + f3z * e3x
    r21 = f1z * e1y + f2z * e2y + f3z * e3y
    r22 = f1z * e1z + f2z * e2z + f3z * e3z
    t0 = p1x - (r00 * x1 + r01 * y1 + r02 * z1)
    t1 = p1y - (r10 * x1 + r11 * y1 + r12 * z1)
    t2 = p1z - (r20 * x1 + r21 * y1 + r22 * z1)
    return (r00, r01, r02, r10, r11, r12, r20, r21, r22, t0, t1, t2)


def ransac_p3p(
    px, py, pz, u, v, jx, jy, jz,
    fx, fy, cx, cy,
    threshold, max_iters, confidence, seed,
):
    """RANSAC loop over P3P minimal samples.

    Arrays are contiguous float64 views: world point columns (px, py,
    pz), observed pixels (u, v) and unit bearing columns (jx, jy, jz).
    Returns (ok, R, t, n_inliers, mask, iters) where ok means a model
    with >= 3 inliers was found and mask is uint8 over all points.
    """
    n = len(px)
    best_R = np.eye(3)
    best_t = np.zeros(3)
    best_count = 0
    have = [0.0] * 12
    iters = 0
    if n >= 3:
        thr2 = threshold * threshold
        log_fail = math.log1p(-confidence) if confidence < 1.0 else -math.inf
        state = seed & _MASK
        while iters < max_iters:
            iters += 1
            state, z = _rng_next(state)
            i0 = _rng_below(z, n)
            i1 = i0
            while i1 == i0:
                state, z = _rng_next(state)
                i1 = _rng_below(z, n)
            i2 = i0
            while i2 == i0 or i2 == i1:
                state, z = _rng_next(state)
                i2 = _rng_below(z, n)
            cands = _p3p_candidates(
                px[i0], py[i0], pz[i0],
                px[i1], py[i1], pz[i1],
                px[i2], py[i2], pz[i2],
                jx[i0], jy[i0], jz[i0],
                jx[i1], jy[i1], jz[i1],
                jx[i2], jy[i2], jz[i2],
            )
            for cand in cands:
                count = int(np.count_nonzero(
                    _inlier_mask(cand, px, py, pz, u, v, fx, fy, cx, cy, thr2)
                ))
                if count > best_count:
                    best_count = count
                    have = cand
            if best_count >= 3:
                w = best_count / n
                eps = w * w * w
                if eps >= 1.0:
                    break
                need = log_fail / math.log1p(-eps)
                if iters >= need:
                    break
    mask = np.zeros(n, dtype=np.uint8)
    ok = best_count >= 3
    if ok:
        thr2 = threshold * threshold
        mask = _inlier_mask(have, px, py, pz, u, v, fx, fy, cx, cy, thr2).astype(np.uint8)
        best_R = np.array(have[:9]).reshape(3, 3)
        best_t = np.array(have[9:])
    return ok, best_R, best_t, best_count, mask, iters


def _inlier_mask(cand, px, py, pz, u, v, fx, fy, cx, cy, thr2):
    r00, r01, r02, r10, r11, r12, r20, r21, r22, t0, t1, t2 = cand
    xc = r00 * px + r01 * py + r02 * pz + t0
    yc = r10 * px + r11 * py + r12 * pz + t1
    zc = r20 * px + r21 * py + r22 * pz + t2
    with np.errstate(divide="ignore", invalid="ignore"):
        du = fx * xc / zc + cx - u
        dv = fy * yc / zc + cy - v
        err = du * du + dv * dv
        return (zc > 0.0) & (err <= thr2)
