# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RANSAC + P3P kernel.

Twin of ``pyransac.py``: every scalar expression here must keep the
operation order of the Python backend (and the extension is built with
FP contraction disabled) so both backends return bit-identical results.
Edit the two files together.
"""

import numpy as np

from libc.math cimport INFINITY, fabs, sqrt, copysign, log1p
from libc.stdint cimport uint32_t, uint64_t


cdef inline uint64_t _rng_next(uint64_t *state) noexcept:
    cdef uint64_t z
    state[0] = state[0] + 0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint32_t _rng_below(uint64_t z, uint32_t n) noexcept:
    return <uint32_t>(((z >> 32) * <uint64_t>n) >> 32)


cdef int _quadratic_roots(double a, double b, double c, double *out) noexcept:
    cdef double disc, sq, qq, x1, x2, tmp
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
    sq = sqrt(disc)
    qq = -0.5 * (b + copysign(sq, b))
    if qq != 0.0:
        x1 = qq / a
        x2 = c / qq
    else:
        x1 = -sq / (2.0 * a)
        x2 = sq / (2.0 * a)
    if x1 > x2:
        tmp = x1
        x1 = x2
        x2 = tmp
    out[0] = x1
    out[1] = x2
    return 2


cdef inline double _poly3(double b2, double b1, double b0, double x) noexcept:
    return ((x + b2) * x + b1) * x + b0


cdef inline double _poly4(double b3, double b2, double b1, double b0, double x) noexcept:
    return (((x + b3) * x + b2) * x + b1) * x + b0


cdef double _bisect3(double b2, double b1, double b0,
                     double lo, double hi, bint flo_neg) noexcept:
    cdef double mid, fm
    cdef int k
    for k in range(200):
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


cdef double _bisect4(double b3, double b2, double b1, double b0,
                     double lo, double hi, bint flo_neg) noexcept:
    cdef double mid, fm
    cdef int k
    for k in range(200):
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


cdef void _sort_doubles(double *a, int n) noexcept:
    cdef int i, j
    cdef double key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] > key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


cdef int _cubic_roots(double c3, double c2, double c1, double c0, double *out) noexcept:
    cdef double b2, b1, b0, bound, ftol, fprev, x, fx
    cdef double crit[2]
    cdef double knots[4]
    cdef double raw[8]
    cdef int ncrit, nknots, nraw, cnt, i
    if c3 == 0.0:
        return _quadratic_roots(c2, c1, c0, out)
    b2 = c2 / c3
    b1 = c1 / c3
    b0 = c0 / c3
    bound = fabs(b2)
    if fabs(b1) > bound:
        bound = fabs(b1)
    if fabs(b0) > bound:
        bound = fabs(b0)
    bound = 1.0 + bound
    ncrit = _quadratic_roots(3.0, 2.0 * b2, b1, crit)
    nknots = 0
    knots[nknots] = -bound
    nknots += 1
    for i in range(ncrit):
        if -bound < crit[i] < bound:
            knots[nknots] = crit[i]
            nknots += 1
    knots[nknots] = bound
    nknots += 1
    ftol = 1e-12 * (1.0 + fabs(b2) + fabs(b1) + fabs(b0))
    nraw = 0
    fprev = _poly3(b2, b1, b0, knots[0])
    for i in range(1, nknots):
        x = knots[i]
        fx = _poly3(b2, b1, b0, x)
        if i < nknots - 1 and fabs(fx) <= ftol:
            raw[nraw] = x
            nraw += 1
        if (fprev < 0.0) != (fx < 0.0):
            raw[nraw] = _bisect3(b2, b1, b0, knots[i - 1], x, fprev < 0.0)
            nraw += 1
        fprev = fx
    _sort_doubles(raw, nraw)
    cnt = 0
    for i in range(nraw):
        x = raw[i]
        if cnt < 3 and (cnt == 0 or x - out[cnt - 1] > 1e-10 * (1.0 + fabs(x))):
            out[cnt] = x
            cnt += 1
    return cnt


cdef int _quartic_roots(double a4, double a3, double a2, double a1, double a0,
                        double *out) noexcept:
    cdef double scale, b3, b2, b1, b0, bound, ftol, fprev, x, fx
    cdef double crit[3]
    cdef double knots[5]
    cdef double raw[10]
    cdef int ncrit, nknots, nraw, cnt, i
    scale = fabs(a4)
    if fabs(a3) > scale:
        scale = fabs(a3)
    if fabs(a2) > scale:
        scale = fabs(a2)
    if fabs(a1) > scale:
        scale = fabs(a1)
    if fabs(a0) > scale:
        scale = fabs(a0)
    if scale == 0.0 or fabs(a4) < 1e-12 * scale:
        return 0
    b3 = a3 / a4
    b2 = a2 / a4
    b1 = a1 / a4
    b0 = a0 / a4
    bound = fabs(b3)
    if fabs(b2) > bound:
        bound = fabs(b2)
    if fabs(b1) > bound:
        bound = fabs(b1)
    if fabs(b0) > bound:
        bound = fabs(b0)
    bound = 1.0 + bound
    ncrit = _cubic_roots(4.0, 3.0 * b3, 2.0 * b2, b1, crit)
    nknots = 0
    knots[nknots] = -bound
    nknots += 1
    for i in range(ncrit):
        if -bound < crit[i] < bound:
            knots[nknots] = crit[i]
            nknots += 1
    knots[nknots] = bound
    nknots += 1
    ftol = 1e-12 * (1.0 + fabs(b3) + fabs(b2) + fabs(b1) + fabs(b0))
    nraw = 0
    fprev = _poly4(b3, b2, b1, b0, knots[0])
    for i in range(1, nknots):
        x = knots[i]
        fx = _poly4(b3, b2, b1, b0, x)
        if i < nknots - 1 and fabs(fx) <= ftol:
            raw[nraw] = x
            nraw += 1
        if (fprev < 0.0) != (fx < 0.0):
            raw[nraw] = _bisect4(b3, b2, b1, b0, knots[i - 1], x, fprev < 0.0)
            nraw += 1
        fprev = fx
    _sort_doubles(raw, nraw)
    cnt = 0
    for i in range(nraw):
        x = raw[i]
        if cnt < 4 and (cnt == 0 or x - out[cnt - 1] > 1e-10 * (1.0 + fabs(x))):
            out[cnt] = x
            cnt += 1
    return cnt


cdef int _rigid_from_triangle(double x1, double y1, double z1,
                              double x2, double y2, double z2,
                              double x3, double y3, double z3,
                              double p1x, double p1y, double p1z,
                              double p2x, double p2y, double p2z,
                              double p3x, double p3y, double p3z,
                              double *out) noexcept:
    cdef double e1x, e1y, e1z, n1, hx, hy, hz, e3x, e3y, e3z, n3
    cdef double e2x, e2y, e2z
    cdef double f1x, f1y, f1z, m1, gx, gy, gz, f3x, f3y, f3z, m3
    cdef double f2x, f2y, f2z
    cdef double r00, r01, r02, r10, r11, r12, r20, r21, r22
    e1x = x2 - x1
    e1y = y2 - y1
    e1z = z2 - z1
    n1 = sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
    if n1 <= 0.0:
        return 0
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
        return 0
    n3 = sqrt(n3)
    e3x /= n3
    e3y /= n3
    e3z /= n3
    e2x = e3y * e1z - e3z * e1y
    e2y = e3z * e1x - e3x * e1z
    e2z = e3x * e1y - e3y * e1x

    f1x = p2x - p1x
    f1y = p2y - p1y
    f1z = p2z - p1z
    m1 = sqrt(f1x * f1x + f1y * f1y + f1z * f1z)
    if m1 <= 0.0:
        return 0
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
        return 0
    m3 = sqrt(m3)
    f3x /= m3
    f3y /= m3
    f3z /= m3
    f2x = f3y * f1z - f3z * f1y
    f2y = f3z * f1x - f3x * f1z
    f2z = f3x * f1y - f3y * f1x

    r00 = f1x * e1x + f2x * e2x + f3x * e3x
    r01 = f1x * e1y + f2x * e2y + f3x * e3y
    r02 = f1x * e1z + f2x * e2z + f3x * e3z
    r10 = f1y * e1x + f2y * e2x + f3y * e3x
    r11 = f1y * e1y + f2y * e2y + f3y * e3y
    r12 = f1y * e1z + f2y * e2z + f3y * e3z
    r20 = f1z * e1x + f2z * e2x + f3z * e3x
    r21 = f1z * e1y + f2z * e2y + f3z * e3y
    r22 = f1z * e1z + f2z * e2z + f3z * e3z
    out[0] = r00
    out[1] = r01
    out[2] = r02
    out[3] = r10
    out[4] = r11
    out[5] = r12
    out[6] = r20
    out[7] = r21
    out[8] = r22
    out[9] = p1x - (r00 * x1 + r01 * y1 + r02 * z1)
    out[10] = p1y - (r10 * x1 + r11 * y1 + r12 * z1)
    out[11] = p1z - (r20 * x1 + r21 * y1 + r22 * z1)
    return 1


cdef int _p3p_candidates(double x1, double y1, double z1,
                         double x2, double y2, double z2,
                         double x3, double y3, double z3,
                         double j1x, double j1y, double j1z,
                         double j2x, double j2y, double j2z,
                         double j3x, double j3y, double j3z,
                         double *cands) noexcept:
    cdef double ax, ay, az, A, bx, by, bz, B, cx, cy, cz, C
    cdef double nx, ny, nz, p, q, r
    cdef double a4, a3, a2, a1, a0
    cdef double roots[4]
    cdef int nroots, i, ncand
    cdef double v, den_s, den_u, u, s1, s2, s3
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
        return 0
    nx = cy * bz - cz * by
    ny = cz * bx - cx * bz
    nz = cx * by - cy * bx
    if nx * nx + ny * ny + nz * nz <= 1e-16 * (B * C):
        return 0
    p = 2.0 * (j2x * j3x + j2y * j3y + j2z * j3z)
    q = 2.0 * (j1x * j3x + j1y * j3y + j1z * j3z)
    r = 2.0 * (j1x * j2x + j1y * j2y + j1z * j2z)
    if p > 2.0 - 2e-9 or q > 2.0 - 2e-9 or r > 2.0 - 2e-9:
        return 0

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

    nroots = _quartic_roots(a4, a3, a2, a1, a0, roots)
    ncand = 0
    for i in range(nroots):
        v = roots[i]
        if v <= 0.0:
            continue
        den_s = 1.0 + v * v - v * q
        if den_s <= 1e-12:
            continue
        den_u = B * (r - p * v)
        if fabs(den_u) <= 1e-12 * B:
            continue
        u = (B * (1.0 - v * v) + (A - C) * (1.0 + v * v - v * q)) / den_u
        if u <= 0.0:
            continue
        s1 = sqrt(B / den_s)
        s2 = u * s1
        s3 = v * s1
        if _rigid_from_triangle(
            x1, y1, z1, x2, y2, z2, x3, y3, z3,
            s1 * j1x, s1 * j1y, s1 * j1z,
            s2 * j2x, s2 * j2y, s2 * j2z,
            s3 * j3x, s3 * j3y, s3 * j3z,
            cands + 12 * ncand,
        ):
            ncand += 1
    return ncand


cdef int _count_inliers(double *cand,
                        double[::1] px, double[::1] py, double[::1] pz,
                        double[::1] u, double[::1] v,
                        double fx, double fy, double cx, double cy,
                        double thr2) noexcept:
    cdef int n = px.shape[0]
    cdef int i, count = 0
    cdef double xc, yc, zc, du, dv, err
    cdef double r00 = cand[0], r01 = cand[1], r02 = cand[2]
    cdef double r10 = cand[3], r11 = cand[4], r12 = cand[5]
    cdef double r20 = cand[6], r21 = cand[7], r22 = cand[8]
    cdef double t0 = cand[9], t1 = cand[10], t2 = cand[11]
    for i in range(n):
        xc = r00 * px[i] + r01 * py[i] + r02 * pz[i] + t0
        yc = r10 * px[i] + r11 * py[i] + r12 * pz[i] + t1
        zc = r20 * px[i] + r21 * py[i] + r22 * pz[i] + t2
        du = fx * xc / zc + cx - u[i]
        dv = fy * yc / zc + cy - v[i]
        err = du * du + dv * dv
        if zc > 0.0 and err <= thr2:
            count += 1
    return count


NAME = "compiled"


def ransac_p3p(double[::1] px, double[::1] py, double[::1] pz,
               double[::1] u, double[::1] v,
               double[::1] jx, double[::1] jy, double[::1] jz,
               double fx, double fy, double cx, double cy,
               double threshold, long max_iters, double confidence,
               unsigned long long seed):
    """RANSAC loop over P3P minimal samples. See the Python twin for docs."""
    cdef int n = px.shape[0]
    cdef double thr2, log_fail, w, eps, need
    cdef uint64_t state, z
    cdef uint32_t i0, i1, i2
    cdef double cands[48]
    cdef double have[12]
    cdef int ncand, c, count, best_count = 0
    cdef long iters = 0
    cdef int k
    cdef double xc, yc, zc, du, dv, err
    for k in range(12):
        have[k] = 0.0

    if n >= 3:
        thr2 = threshold * threshold
        if confidence < 1.0:
            log_fail = log1p(-confidence)
        else:
            log_fail = -INFINITY
        state = seed
        while iters < max_iters:
            iters += 1
            z = _rng_next(&state)
            i0 = _rng_below(z, <uint32_t>n)
            i1 = i0
            while i1 == i0:
                z = _rng_next(&state)
                i1 = _rng_below(z, <uint32_t>n)
            i2 = i0
            while i2 == i0 or i2 == i1:
                z = _rng_next(&state)
                i2 = _rng_below(z, <uint32_t>n)
            ncand = _p3p_candidates(
                px[i0], py[i0], pz[i0],
                px[i1], py[i1], pz[i1],
                px[i2], py[i2], pz[i2],
                jx[i0], jy[i0], jz[i0],
                jx[i1], jy[i1], jz[i1],
                jx[i2], jy[i2], jz[i2],
                cands,
            )
            for c in range(ncand):
                count = _count_inliers(cands + 12 * c, px, py, pz, u, v,
                                       fx, fy, cx, cy, thr2)
                if count > best_count:
                    best_count = count
                    for k in range(12):
                        have[k] = cands[12 * c + k]
            if best_count >= 3:
                w = best_count / <double>n
                eps = w * w * w
                if eps >= 1.0:
                    break
                need = log_fail / log1p(-eps)
                if iters >= need:
                    break

    mask = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] mview = mask
    best_R = np.eye(3)
    best_t = np.zeros(3)
    cdef bint ok = best_count >= 3
    if ok:
        thr2 = threshold * threshold
        for k in range(n):
            xc = have[0] * px[k] + have[1] * py[k] + have[2] * pz[k] + have[9]
            yc = have[3] * px[k] + have[4] * py[k] + have[5] * pz[k] + have[10]
            zc = have[6] * px[k] + have[7] * py[k] + have[8] * pz[k] + have[11]
            du = fx * xc / zc + cx - u[k]
            dv = fy * yc / zc + cy - v[k]
            err = du * du + dv * dv
            if zc > 0.0 and err <= thr2:
                mview[k] = 1
        best_R = np.array([[have[0], have[1], have[2]],
                           [have[3], have[4], have[5]],
                           [have[6], have[7], have[8]]])
        best_t = np.array([have[9], have[10], have[11]])
    return bool(ok), best_R, best_t, best_count, mask, int(iters)
