"""Numba kernels: exact ray casting, warm-started projections, closed loop.

Everything here operates on the flat arrays produced by ``pack.pack_world``.
Per-obstacle implicit functions are polynomial along any ray (balls are cast
with the squared-norm form, which has the same sign structure and zero set),
so ray ranges come from an exact first-root computation on a clipped
interval.  A fixed-step marching caster with bisection refinement is kept as
an alternative method; both share the clipping and differ only in the root
search.

Sign convention matches the geometry module: implicit values are positive on
the free side.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

INF = 1.0e300

KIND_BALL = 0
KIND_ELLIPSOID = 1
KIND_QUARTIC = 2
KIND_BOUNDARY = 3

METHOD_EXACT = 0
METHOD_MARCH = 1

STATUS_CONVERGED = 0
STATUS_TIMEOUT = 1
STATUS_BREACH = 2
STATUS_SENSOR = 3
STATUS_NONFINITE = 4
STATUS_ORACLE = 5

MODE_NOMINAL = 0
MODE_BLENDED = 1


# ---------------------------------------------------------------------------
# Polynomials along a ray
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=False)
def _peval(c0, c1, c2, c3, c4, t):
    return c0 + t * (c1 + t * (c2 + t * (c3 + t * c4)))


@njit(cache=True, fastmath=False)
def _pderiv(c1, c2, c3, c4, t):
    return c1 + t * (2.0 * c2 + t * (3.0 * c3 + t * 4.0 * c4))


@njit(cache=True, fastmath=False)
def _quad_roots(a, b, c, roots):
    """Real roots of a*t^2 + b*t + c, ascending. Returns the count."""
    if abs(a) < 1e-300:
        if abs(b) < 1e-300:
            return 0
        roots[0] = -c / b
        return 1
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return 0
    sq = math.sqrt(disc)
    if b >= 0.0:
        q = -0.5 * (b + sq)
    else:
        q = -0.5 * (b - sq)
    if abs(q) > 1e-300:
        r1 = q / a
        r2 = c / q
    else:
        r1 = 0.0
        r2 = 0.0
    if r1 > r2:
        r1, r2 = r2, r1
    roots[0] = r1
    roots[1] = r2
    return 2


@njit(cache=True, fastmath=False)
def _cubic_roots(a3, a2, a1, a0, roots):
    """Real roots of a3*t^3 + ... + a0, any order. Returns the count."""
    scale = abs(a2) + abs(a1) + abs(a0)
    if abs(a3) <= 1e-14 * (scale + 1e-300):
        return _quad_roots(a2, a1, a0, roots)
    b = a2 / a3
    c = a1 / a3
    d = a0 / a3
    # depressed cubic u^3 + p*u + q with t = u - b/3
    p = c - b * b / 3.0
    q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d
    shift = -b / 3.0
    disc = 0.25 * q * q + p * p * p / 27.0
    if disc > 0.0:
        sq = math.sqrt(disc)
        u1 = -0.5 * q + sq
        u2 = -0.5 * q - sq
        cb1 = math.copysign(abs(u1) ** (1.0 / 3.0), u1)
        cb2 = math.copysign(abs(u2) ** (1.0 / 3.0), u2)
        roots[0] = cb1 + cb2 + shift
        return 1
    if p >= 0.0:
        # p ~ 0 and disc <= 0: triple-ish root
        roots[0] = shift
        return 1
    m = 2.0 * math.sqrt(-p / 3.0)
    arg = 3.0 * q / (p * m)
    if arg > 1.0:
        arg = 1.0
    elif arg < -1.0:
        arg = -1.0
    ang = math.acos(arg) / 3.0
    for i in range(3):
        roots[i] = m * math.cos(ang - 2.0 * math.pi * i / 3.0) + shift
    return 3


@njit(cache=True, fastmath=False)
def _refine_root(c0, c1, c2, c3, c4, lo, hi):
    """Root of the polynomial in [lo, hi] with p(lo) > 0 >= p(hi)."""
    a = lo
    b = hi
    for _ in range(4):
        m = 0.5 * (a + b)
        if _peval(c0, c1, c2, c3, c4, m) > 0.0:
            a = m
        else:
            b = m
    t = 0.5 * (a + b)
    for _ in range(40):
        f = _peval(c0, c1, c2, c3, c4, t)
        df = _pderiv(c1, c2, c3, c4, t)
        if f > 0.0:
            a = t
        else:
            b = t
        if df == 0.0:
            t_new = 0.5 * (a + b)
        else:
            t_new = t - f / df
            if t_new <= a or t_new >= b:
                t_new = 0.5 * (a + b)
        if abs(t_new - t) <= 1e-15 * (1.0 + abs(t)):
            t = t_new
            break
        t = t_new
    return t


@njit(cache=True, fastmath=False)
def _first_root(c0, c1, c2, c3, c4, lo, hi):
    """First t in [lo, hi] where the polynomial reaches <= 0.

    Assumes p(lo) > 0 (the caller guarantees the interval entry is on the
    free side); returns INF when the polynomial stays positive.  Critical
    points of p partition the interval into monotone segments, so a sign
    check per segment cannot miss a crossing (tangential touches land on a
    critical point).
    """
    if hi <= lo:
        return INF
    if _peval(c0, c1, c2, c3, c4, lo) <= 0.0:
        return lo
    crit = np.empty(3)
    n_crit = _cubic_roots(4.0 * c4, 3.0 * c3, 2.0 * c2, c1, crit)
    # collect segment ends: interior critical points (sorted), then hi
    ends = np.empty(4)
    n_ends = 0
    for i in range(n_crit):
        t = crit[i]
        if lo < t < hi:
            ends[n_ends] = t
            n_ends += 1
    # insertion sort (at most 3 entries)
    for i in range(1, n_ends):
        key = ends[i]
        j = i - 1
        while j >= 0 and ends[j] > key:
            ends[j + 1] = ends[j]
            j -= 1
        ends[j + 1] = key
    ends[n_ends] = hi
    n_ends += 1
    seg_lo = lo
    for i in range(n_ends):
        seg_hi = ends[i]
        if _peval(c0, c1, c2, c3, c4, seg_hi) <= 0.0:
            return _refine_root(c0, c1, c2, c3, c4, seg_lo, seg_hi)
        seg_lo = seg_hi
    return INF


# ---------------------------------------------------------------------------
# Obstacle implicit functions (true values, for projections)
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=False)
def _impl_value(kind, cx, cy, cz, p0, p1, p2, p3, p4, x, y, z):
    u = x - cx
    v = y - cy
    w = z - cz
    if kind == KIND_BALL:
        return math.sqrt(u * u + v * v + w * w) - p0
    if kind == KIND_ELLIPSOID:
        return p0 * u * u + p1 * v * v + p2 * w * w - p3
    if kind == KIND_QUARTIC:
        u2 = u * u
        v2 = v * v
        return p0 * u2 + p1 * v2 + p2 * u2 * u2 + p3 * v2 * v2 - p4
    # boundary: p2 = d^(2n), p3 = 2n
    if p3 == 2.0:
        return p2 - p0 * u * u - p1 * v * v
    u2 = u * u
    v2 = v * v
    return p2 - p0 * u2 * u2 - p1 * v2 * v2


@njit(cache=True, fastmath=False)
def _impl_grad_hdiag(kind, cx, cy, cz, p0, p1, p2, p3, p4, x, y, z, g, h):
    """Gradient and (diagonal) Hessian of the implicit at a point.

    Only called for the Newton-projected kinds (never for balls, which are
    projected analytically); all those Hessians are diagonal.
    """
    u = x - cx
    v = y - cy
    w = z - cz
    if kind == KIND_ELLIPSOID:
        g[0] = 2.0 * p0 * u
        g[1] = 2.0 * p1 * v
        g[2] = 2.0 * p2 * w
        h[0] = 2.0 * p0
        h[1] = 2.0 * p1
        h[2] = 2.0 * p2
        return
    if kind == KIND_QUARTIC:
        g[0] = 2.0 * p0 * u + 4.0 * p2 * u * u * u
        g[1] = 2.0 * p1 * v + 4.0 * p3 * v * v * v
        g[2] = 0.0
        h[0] = 2.0 * p0 + 12.0 * p2 * u * u
        h[1] = 2.0 * p1 + 12.0 * p3 * v * v
        h[2] = 0.0
        return
    # boundary
    if p3 == 2.0:
        g[0] = -2.0 * p0 * u
        g[1] = -2.0 * p1 * v
        h[0] = -2.0 * p0
        h[1] = -2.0 * p1
    else:
        g[0] = -4.0 * p0 * u * u * u
        g[1] = -4.0 * p1 * v * v * v
        h[0] = -12.0 * p0 * u * u
        h[1] = -12.0 * p1 * v * v
    g[2] = 0.0
    h[2] = 0.0


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=False)
def _ray_coeffs(kind, cx, cy, cz, p0, p1, p2, p3, p4, x, y, z, dx, dy, dz):
    """Coefficients of the implicit along x + t*d (balls: squared form)."""
    u = x - cx
    v = y - cy
    w = z - cz
    if kind == KIND_BALL:
        c0 = u * u + v * v + w * w - p0 * p0
        c1 = 2.0 * (u * dx + v * dy + w * dz)
        c2 = dx * dx + dy * dy + dz * dz
        return c0, c1, c2, 0.0, 0.0
    if kind == KIND_ELLIPSOID:
        c0 = p0 * u * u + p1 * v * v + p2 * w * w - p3
        c1 = 2.0 * (p0 * u * dx + p1 * v * dy + p2 * w * dz)
        c2 = p0 * dx * dx + p1 * dy * dy + p2 * dz * dz
        return c0, c1, c2, 0.0, 0.0
    if kind == KIND_QUARTIC:
        u2 = u * u
        v2 = v * v
        dx2 = dx * dx
        dy2 = dy * dy
        c0 = p0 * u2 + p1 * v2 + p2 * u2 * u2 + p3 * v2 * v2 - p4
        c1 = 2.0 * p0 * u * dx + 2.0 * p1 * v * dy + 4.0 * p2 * u2 * u * dx + 4.0 * p3 * v2 * v * dy
        c2 = p0 * dx2 + p1 * dy2 + 6.0 * p2 * u2 * dx2 + 6.0 * p3 * v2 * dy2
        c3 = 4.0 * p2 * u * dx2 * dx + 4.0 * p3 * v * dy2 * dy
        c4 = p2 * dx2 * dx2 + p3 * dy2 * dy2
        return c0, c1, c2, c3, c4
    # boundary (p2 = d^(2n), p3 = 2n); negative leading coefficients
    if p3 == 2.0:
        c0 = p2 - p0 * u * u - p1 * v * v
        c1 = -2.0 * (p0 * u * dx + p1 * v * dy)
        c2 = -(p0 * dx * dx + p1 * dy * dy)
        return c0, c1, c2, 0.0, 0.0
    u2 = u * u
    v2 = v * v
    dx2 = dx * dx
    dy2 = dy * dy
    c0 = p2 - p0 * u2 * u2 - p1 * v2 * v2
    c1 = -4.0 * (p0 * u2 * u * dx + p1 * v2 * v * dy)
    c2 = -6.0 * (p0 * u2 * dx2 + p1 * v2 * dy2)
    c3 = -4.0 * (p0 * u * dx2 * dx + p1 * v * dy2 * dy)
    c4 = -(p0 * dx2 * dx2 + p1 * dy2 * dy2)
    return c0, c1, c2, c3, c4


@njit(cache=True, fastmath=False)
def _ray_clip(kind, cx, cy, cz, r_out, r_in, x, y, z, dx, dy, dz, tmax):
    """Interval of the ray that can contain this obstacle's first crossing.

    Interior obstacles: the chord through the circumscribed ball.  The
    boundary obstacle can only be crossed after the ray leaves the inscribed
    ball of the workspace.  Returns (lo, hi), empty as (1.0, 0.0).
    """
    u = x - cx
    v = y - cy
    w = z - cz
    b = u * dx + v * dy + w * dz
    uu = u * u + v * v + w * w
    if kind == KIND_BOUNDARY:
        cc = uu - r_in * r_in
        lo = 0.0
        if cc < 0.0:
            # inside the inscribed ball: exit distance is a lower bound
            lo = -b + math.sqrt(b * b - cc)
        return lo, tmax
    cc = uu - r_out * r_out
    disc = b * b - cc
    if disc <= 0.0:
        return 1.0, 0.0
    sq = math.sqrt(disc)
    t_in = -b - sq
    t_out = -b + sq
    if t_out <= 0.0:
        return 1.0, 0.0
    lo = t_in if t_in > 0.0 else 0.0
    hi = t_out if t_out < tmax else tmax
    return lo, hi


@njit(cache=True, fastmath=False)
def _march_first(c0, c1, c2, c3, c4, lo, hi, step, tol):
    """Fixed-step marching + bisection on the ray polynomial [lo, hi].

    The grid starts at the interval entry; a sign change in a cell is
    refined by bisection until the bracket is narrower than ``tol``; the
    inside end of the final bracket is returned.
    """
    if hi <= lo:
        return INF
    if _peval(c0, c1, c2, c3, c4, lo) <= 0.0:
        return lo
    k = 1
    t_prev = lo
    while t_prev < hi:
        t = lo + step * k
        if t > hi:
            t = hi
        if _peval(c0, c1, c2, c3, c4, t) <= 0.0:
            a = t_prev
            b = t
            while b - a > tol:
                m = 0.5 * (a + b)
                if _peval(c0, c1, c2, c3, c4, m) <= 0.0:
                    b = m
                else:
                    a = m
            return b
        if t >= hi:
            break
        t_prev = t
        k += 1
    return INF


@njit(cache=True, fastmath=False)
def _ray_obstacle(kinds, centers, prms, r_out, r_in, i,
                  x, y, z, dx, dy, dz, tmax, method, mstep, mtol):
    """First crossing of obstacle ``i`` along one ray; INF if none."""
    lo, hi = _ray_clip(kinds[i], centers[i, 0], centers[i, 1], centers[i, 2],
                       r_out[i], r_in[i], x, y, z, dx, dy, dz, tmax)
    if hi <= lo:
        return INF
    c0, c1, c2, c3, c4 = _ray_coeffs(
        kinds[i], centers[i, 0], centers[i, 1], centers[i, 2],
        prms[i, 0], prms[i, 1], prms[i, 2], prms[i, 3], prms[i, 4],
        x, y, z, dx, dy, dz)
    if method == METHOD_MARCH:
        return _march_first(c0, c1, c2, c3, c4, lo, hi, mstep, mtol)
    return _first_root(c0, c1, c2, c3, c4, lo, hi)


@njit(cache=True, fastmath=False)
def _ray_all(kinds, centers, prms, r_out, r_in,
             x, y, z, dx, dy, dz, tmax, method, mstep, mtol):
    """First crossing over all obstacles along one ray; INF if none."""
    best = INF
    for i in range(kinds.shape[0]):
        limit = tmax if tmax < best else best
        t = _ray_obstacle(kinds, centers, prms, r_out, r_in, i,
                          x, y, z, dx, dy, dz, limit, method, mstep, mtol)
        if t < best:
            best = t
    return best


@njit(cache=True, fastmath=False)
def scan_all(kinds, centers, prms, r_out, r_in, dirs,
             x, y, z, tmax, method, mstep, mtol, rho, sat):
    """Full fan scan: fill ``rho`` (clamped at tmax) and saturation flags."""
    n = dirs.shape[0]
    for j in range(n):
        t = _ray_all(kinds, centers, prms, r_out, r_in,
                     x, y, z, dirs[j, 0], dirs[j, 1], dirs[j, 2],
                     tmax, method, mstep, mtol)
        if t <= tmax:
            rho[j] = t
            sat[j] = False
        else:
            rho[j] = tmax
            sat[j] = True

# ---------------------------------------------------------------------------
# Minimum-range search over the fan
# ---------------------------------------------------------------------------
#
# Interior obstacles are convex, so their per-ray first-crossing distance is
# quasiconvex over the fan (the directions reaching within any range form a
# single spherically convex cone).  The fan minimum is found by a galloping
# descent from the obstacle-centre bearing plus a brute-force polish window
# (which also restores exact lowest-index tie-breaking under float rounding).
# The workspace boundary is not convex seen from inside, so its contribution
# is brute-forced; its rays are cheap to prune via the inscribed ball.

_POLISH = 8


@njit(cache=True, fastmath=False)
def _ray_idx_2d(n_theta, bx, by):
    theta = math.atan2(by, bx)
    if theta < 0.0:
        theta += 2.0 * math.pi
    j = int(theta * n_theta / (2.0 * math.pi) + 0.5)
    if j >= n_theta:
        j -= n_theta
    return j


@njit(cache=True, fastmath=False)
def _eval_ray_2d(kinds, centers, prms, r_out, r_in, dirs, n_theta, i,
                 x, y, j, tmax, method, mstep, mtol):
    jm = j % n_theta
    return _ray_obstacle(kinds, centers, prms, r_out, r_in, i, x, y, 0.0,
                         dirs[jm, 0], dirs[jm, 1], 0.0, tmax, method, mstep, mtol)


@njit(cache=True, fastmath=False)
def _obstacle_min_2d(kinds, centers, prms, r_out, r_in, dirs, n_theta, i,
                     x, y, tmax, method, mstep, mtol):
    """(rho, ray index) of obstacle i's fan minimum; (INF, -1) if unreachable."""
    bx = centers[i, 0] - x
    by = centers[i, 1] - y
    dc = math.sqrt(bx * bx + by * by)
    if dc - r_out[i] >= tmax:
        return INF, -1
    if dc > r_out[i]:
        half_angle = math.asin(min(1.0, r_out[i] / dc))
        half = int(half_angle * n_theta / (2.0 * math.pi)) + 2
        if half > n_theta // 2:
            half = n_theta // 2
    else:
        half = n_theta // 2
    anchor = _ray_idx_2d(n_theta, bx, by)
    lo_lim = anchor - half
    hi_lim = anchor + half

    # find a finite start around the anchor (the centre-bearing ray hits a
    # convex obstacle whenever it is reachable, so this terminates fast)
    start = anchor
    start_val = INF
    for off in range(half + 1):
        v = _eval_ray_2d(kinds, centers, prms, r_out, r_in, dirs, n_theta, i,
                         x, y, anchor + off, tmax, method, mstep, mtol)
        if v < INF:
            start = anchor + off
            start_val = v
            break
        if off > 0:
            v = _eval_ray_2d(kinds, centers, prms, r_out, r_in, dirs, n_theta, i,
                             x, y, anchor - off, tmax, method, mstep, mtol)
            if v < INF:
                start = anchor - off
                start_val = v
                break
    if start_val == INF:
        return INF, -1

    # gallop downhill from the start, keeping a bracket that contains the
    # fan minimum (per-obstacle range is quasiconvex over the fan)
    cur = start
    cur_val = start_val
    blo = lo_lim
    bhi = hi_lim
    vp = _eval_ray_2d(kinds, centers, prms, r_out, r_in, dirs, n_theta, i,
                      x, y, cur + 1, tmax, method, mstep, mtol) if cur + 1 <= hi_lim else INF
    vq = _eval_ray_2d(kinds, centers, prms, r_out, r_in, dirs, n_theta, i,
                      x, y, cur - 1, tmax, method, mstep, mtol) if cur - 1 >= lo_lim else INF
    if vp < cur_val or vq < cur_val:
        if vp <= vq:
            stride = 1
            prev = cur
            cur = cur + 1
            cur_val = vp
        else:
            stride = -1
            prev = cur
            cur = cur - 1
            cur_val = vq
        step = 1
        while True:
            step *= 2
            j = cur + stride * step
            if stride > 0 and j > hi_lim:
                j = hi_lim
            elif stride < 0 and j < lo_lim:
                j = lo_lim
            if j == cur:
                break
            v = _eval_ray_2d(kinds, centers, prms, r_out, r_in, dirs, n_theta, i,
                             x, y, j, tmax, method, mstep, mtol)
            if v < cur_val:
                prev = cur
                cur = j
                cur_val = v
            else:
                break
        # minimum lies between the last accepted point's neighbours
        if stride > 0:
            blo = prev
            bhi = cur + stride * step if cur + stride * step <= hi_lim else hi_lim
        else:
            bhi = prev
            blo = cur + stride * step if cur + stride * step >= lo_lim else lo_lim
    else:
        blo = cur - 1 if cur - 1 >= lo_lim else lo_lim
        bhi = cur + 1 if cur + 1 <= hi_lim else hi_lim

    # ternary narrowing to the polish width
    while bhi - blo > _POLISH:
        m1 = blo + (bhi - blo) // 3
        m2 = bhi - (bhi - blo) // 3
        v1 = _eval_ray_2d(kinds, centers, prms, r_out, r_in, dirs, n_theta, i,
                          x, y, m1, tmax, method, mstep, mtol)
        v2 = _eval_ray_2d(kinds, centers, prms, r_out, r_in, dirs, n_theta, i,
                          x, y, m2, tmax, method, mstep, mtol)
        if v1 == v2:
            # keep both probes; the bracket still shrinks by a third
            blo = m1
            bhi = m2
        elif v1 < v2:
            bhi = m2 - 1
        else:
            blo = m1 + 1

    # brute polish, lexicographic (rho, wrapped index); include the gallop's
    # best point in case float plateaus confused the narrowing
    best_rho = cur_val
    best_idx = cur % n_theta
    for j in range(blo, bhi + 1):
        jm = j % n_theta
        v = _eval_ray_2d(kinds, centers, prms, r_out, r_in, dirs, n_theta, i,
                         x, y, j, tmax, method, mstep, mtol)
        if v < best_rho or (v == best_rho and v < INF and jm < best_idx):
            best_rho = v
            best_idx = jm
    if best_rho == INF:
        return INF, -1
    return best_rho, best_idx


@njit(cache=True, fastmath=False)
def _obstacle_min_3d(kinds, centers, prms, r_out, r_in, dirs, n_theta, n_phi, i,
                     x, y, z, tmax, method, mstep, mtol):
    """3-D grid variant: greedy descent from the bearing plus window polish."""
    bx = centers[i, 0] - x
    by = centers[i, 1] - y
    bz = centers[i, 2] - z
    dc = math.sqrt(bx * bx + by * by + bz * bz)
    if dc - r_out[i] >= tmax:
        return INF, -1
    d_theta = 2.0 * math.pi / n_theta
    d_phi = math.pi / (n_phi - 1)
    theta = math.atan2(by, bx)
    if theta < 0.0:
        theta += 2.0 * math.pi
    phi = math.asin(max(-1.0, min(1.0, bz / dc)))
    ia = int(theta / d_theta + 0.5) % n_theta
    ja = int((phi + 0.5 * math.pi) / d_phi + 0.5)
    if ja < 0:
        ja = 0
    if ja > n_phi - 1:
        ja = n_phi - 1
    if dc > r_out[i]:
        half_angle = math.asin(min(1.0, r_out[i] / dc))
        rings = int(half_angle / min(d_theta, d_phi)) + 2
    else:
        rings = n_theta

    # spiral out in Chebyshev rings until a hitting ray is found
    ci = ia
    cj = ja
    cur = INF
    for r in range(rings + 1):
        found = False
        for di in range(-r, r + 1):
            for dj in range(-r, r + 1):
                if abs(di) != r and abs(dj) != r:
                    continue
                jj = ja + dj
                if jj < 0 or jj > n_phi - 1:
                    continue
                ii = (ia + di) % n_theta
                idx = ii * n_phi + jj
                v = _ray_obstacle(kinds, centers, prms, r_out, r_in, i, x, y, z,
                                  dirs[idx, 0], dirs[idx, 1], dirs[idx, 2],
                                  tmax, method, mstep, mtol)
                if v < cur:
                    ci = ii
                    cj = jj
                    cur = v
                    found = True
        if found:
            break
    if cur == INF:
        return INF, -1

    # greedy 4-neighbour descent
    for _ in range(2 * (n_theta + n_phi)):
        bi = ci
        bj = cj
        bv = cur
        for step in range(4):
            if step == 0:
                ii = (ci + 1) % n_theta
                jj = cj
            elif step == 1:
                ii = (ci - 1) % n_theta
                jj = cj
            elif step == 2:
                ii = ci
                jj = cj + 1
            else:
                ii = ci
                jj = cj - 1
            if jj < 0 or jj > n_phi - 1:
                continue
            idx = ii * n_phi + jj
            v = _ray_obstacle(kinds, centers, prms, r_out, r_in, i, x, y, z,
                              dirs[idx, 0], dirs[idx, 1], dirs[idx, 2],
                              tmax, method, mstep, mtol)
            if v < bv:
                bi = ii
                bj = jj
                bv = v
        if bv < cur:
            ci = bi
            cj = bj
            cur = bv
        else:
            break

    best_rho = INF
    best_idx = -1
    for di in range(-_POLISH, _POLISH + 1):
        ii = (ci + di) % n_theta
        for dj in range(-_POLISH, _POLISH + 1):
            jj = cj + dj
            if jj < 0 or jj > n_phi - 1:
                continue
            idx = ii * n_phi + jj
            v = _ray_obstacle(kinds, centers, prms, r_out, r_in, i, x, y, z,
                              dirs[idx, 0], dirs[idx, 1], dirs[idx, 2],
                              tmax, method, mstep, mtol)
            if v < best_rho or (v == best_rho and idx < best_idx):
                best_rho = v
                best_idx = idx
    if best_rho == INF:
        return INF, -1
    return best_rho, best_idx


@njit(cache=True, fastmath=False)
def min_scan(kinds, centers, prms, r_out, r_in, dirs, n_theta, n_phi, dim,
             x, y, z, tmax, method, mstep, mtol):
    """Exact fan minimum (rho, ray index); (tmax, -1) when all rays saturate.

    Identical to scanning every ray and taking the lowest-index argmin, but
    only evaluates rays that can win.
    """
    best_rho = INF
    best_idx = -1
    K = kinds.shape[0]
    for i in range(K):
        if kinds[i] == KIND_BOUNDARY:
            continue
        limit = tmax if best_idx < 0 else best_rho
        if dim == 2:
            v, j = _obstacle_min_2d(kinds, centers, prms, r_out, r_in, dirs,
                                    n_theta, i, x, y, tmax, method, mstep, mtol)
        else:
            v, j = _obstacle_min_3d(kinds, centers, prms, r_out, r_in, dirs,
                                    n_theta, n_phi, i, x, y, z, tmax, method,
                                    mstep, mtol)
        if j >= 0 and (v < best_rho or (v == best_rho and j < best_idx)):
            best_rho = v
            best_idx = j
    for i in range(K):
        if kinds[i] != KIND_BOUNDARY:
            continue
        u = x - centers[i, 0]
        v0 = y - centers[i, 1]
        dcw = math.sqrt(u * u + v0 * v0)
        near = r_in[i] - dcw
        if best_idx >= 0 and near >= best_rho:
            continue
        if near >= tmax:
            continue
        for j in range(dirs.shape[0]):
            t = _ray_obstacle(kinds, centers, prms, r_out, r_in, i, x, y, z,
                              dirs[j, 0], dirs[j, 1], dirs[j, 2], tmax,
                              method, mstep, mtol)
            if t < best_rho or (t == best_rho and t < INF and j < best_idx):
                best_rho = t
                best_idx = j
    if best_idx < 0 or best_rho > tmax:
        return tmax, -1
    return best_rho, best_idx

# ---------------------------------------------------------------------------
# Signed distance with warm-started projections
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=False)
def _radial_surface_point(kinds, centers, prms, r_out, r_in, i, x, y, z, out):
    """Surface point of obstacle i along the centre-to-x direction.

    The families are star-shaped about their centres, so this always exists;
    it upper-bounds the projection distance and seeds the Newton solve.
    """
    ex = x - centers[i, 0]
    ey = y - centers[i, 1]
    ez = z - centers[i, 2]
    dc = math.sqrt(ex * ex + ey * ey + ez * ez)
    if dc < 1e-12:
        ex, ey, ez = 1.0, 0.0, 0.0
    else:
        ex /= dc
        ey /= dc
        ez /= dc
    c0, c1, c2, c3, c4 = _ray_coeffs(
        kinds[i], centers[i, 0], centers[i, 1], centers[i, 2],
        prms[i, 0], prms[i, 1], prms[i, 2], prms[i, 3], prms[i, 4],
        centers[i, 0], centers[i, 1], centers[i, 2], ex, ey, ez)
    if c0 <= 0.0:
        c0, c1, c2, c3, c4 = -c0, -c1, -c2, -c3, -c4
    t = _first_root(c0, c1, c2, c3, c4, 0.0, r_out[i] * (1.0 + 1e-9))
    if t >= INF:
        return False
    out[0] = centers[i, 0] + t * ex
    out[1] = centers[i, 1] + t * ey
    out[2] = centers[i, 2] + t * ez
    return True


@njit(cache=True, fastmath=False)
def _project_newton(kind, cx, cy, cz, p0, p1, p2, p3, p4,
                    dim, x, y, z, yv, scale):
    """Newton on the stationarity system of the surface projection.

    ``yv`` holds the seed and is updated in place.  The families here have
    diagonal implicit Hessians, so each iteration is a closed-form solve.
    Returns True on convergence.
    """
    g = np.empty(3)
    h = np.empty(3)
    _impl_grad_hdiag(kind, cx, cy, cz, p0, p1, p2, p3, p4,
                     yv[0], yv[1], yv[2], g, h)
    gg = 0.0
    rg = 0.0
    for a in range(dim):
        gg += g[a] * g[a]
        ra = yv[a] - (x if a == 0 else (y if a == 1 else z))
        rg += ra * g[a]
    if gg < 1e-300:
        return False
    mu = rg / gg
    for _ in range(40):
        f = _impl_value(kind, cx, cy, cz, p0, p1, p2, p3, p4, yv[0], yv[1], yv[2])
        _impl_grad_hdiag(kind, cx, cy, cz, p0, p1, p2, p3, p4,
                         yv[0], yv[1], yv[2], g, h)
        gn = 0.0
        for a in range(dim):
            gn += g[a] * g[a]
        gn = math.sqrt(gn)
        if gn < 1e-300:
            return False
        dist = 0.0
        res = abs(f) / gn
        s1 = 0.0
        s2 = 0.0
        ok = True
        for a in range(dim):
            xa = x if a == 0 else (y if a == 1 else z)
            ra = yv[a] - xa
            dist += ra * ra
            fa = ra - mu * g[a]
            if abs(fa) > res:
                res = abs(fa)
            aa = 1.0 - mu * h[a]
            if abs(aa) < 1e-12:
                aa = 1e-12 if aa >= 0.0 else -1e-12
            s1 += g[a] * fa / aa
            s2 += g[a] * g[a] / aa
        dist = math.sqrt(dist)
        if res <= 1e-12 * (1.0 + dist):
            return True
        if abs(s2) < 1e-300:
            return False
        dmu = (s1 - f) / s2
        # trust region: never move more than half the obstacle scale
        dn = 0.0
        dy0 = dy1 = dy2 = 0.0
        for a in range(dim):
            xa = x if a == 0 else (y if a == 1 else z)
            ra = yv[a] - xa
            fa = ra - mu * g[a]
            aa = 1.0 - mu * h[a]
            if abs(aa) < 1e-12:
                aa = 1e-12 if aa >= 0.0 else -1e-12
            da = (g[a] * dmu - fa) / aa
            dn += da * da
            if a == 0:
                dy0 = da
            elif a == 1:
                dy1 = da
            else:
                dy2 = da
        dn = math.sqrt(dn)
        lim = 0.5 * scale
        fac = 1.0 if dn <= lim else lim / dn
        yv[0] += fac * dy0
        yv[1] += fac * dy1
        yv[2] += fac * dy2
        mu += fac * dmu
    return False


@njit(cache=True, fastmath=False)
def _boundary_sdist(kinds, centers, prms, r_out, r_in, i, x, y):
    """Signed distance to the workspace boundary curve.

    The curve is star-shaped about its centre, so a 64-angle parametric
    sweep brackets the global projection basin (distinct stationary sheets
    of the superellipse are separated by far more than the sweep
    quantisation wherever the boundary can own the world minimum); Newton
    polishes the best sample.
    """
    cx = centers[i, 0]
    cy = centers[i, 1]
    q = prms[i, 0]
    p = prms[i, 1]
    d2n = prms[i, 2]
    ex = prms[i, 3]
    best_d2 = INF
    bx = 0.0
    by = 0.0
    for m in range(64):
        psi = 2.0 * math.pi * m / 64.0
        e1 = math.cos(psi)
        e2 = math.sin(psi)
        if ex == 2.0:
            denom = q * e1 * e1 + p * e2 * e2
            r = math.sqrt(d2n / denom)
        else:
            e12 = e1 * e1
            e22 = e2 * e2
            denom = q * e12 * e12 + p * e22 * e22
            r = (d2n / denom) ** 0.25
        sx = cx + r * e1
        sy = cy + r * e2
        dd = (sx - x) * (sx - x) + (sy - y) * (sy - y)
        if dd < best_d2:
            best_d2 = dd
            bx = sx
            by = sy
    yv = np.empty(3)
    yv[0] = bx
    yv[1] = by
    yv[2] = 0.0
    conv = _project_newton(KIND_BOUNDARY, cx, cy, 0.0,
                           prms[i, 0], prms[i, 1], prms[i, 2], prms[i, 3], prms[i, 4],
                           2, x, y, 0.0, yv, r_out[i])
    du = yv[0] - x
    dv = yv[1] - y
    d = math.sqrt(du * du + dv * dv)
    if not conv or d > math.sqrt(best_d2) + 1e-9:
        return 0.0, False
    sgn = 1.0 if _impl_value(KIND_BOUNDARY, cx, cy, 0.0, prms[i, 0], prms[i, 1],
                             prms[i, 2], prms[i, 3], prms[i, 4], x, y, 0.0) >= 0.0 else -1.0
    return sgn * d, True


@njit(cache=True, fastmath=False)
def _obstacle_sdist(kinds, centers, prms, r_out, r_in, i, x, y, z,
                    warm, warm_ok):
    """Signed distance from x to obstacle i's surface (warm-start Newton).

    Interior obstacles are strictly convex: the projection is unique and a
    converged Newton result is accepted only on the near stationary sheet
    and below the radial upper bound.  Returns (distance, ok).
    """
    if kinds[i] == KIND_BALL:
        u = x - centers[i, 0]
        v = y - centers[i, 1]
        w = z - centers[i, 2]
        return math.sqrt(u * u + v * v + w * w) - prms[i, 0], True
    if kinds[i] == KIND_BOUNDARY:
        return _boundary_sdist(kinds, centers, prms, r_out, r_in, i, x, y)
    dim = 2 if kinds[i] != KIND_ELLIPSOID else 3
    yr = np.empty(3)
    if not _radial_surface_point(kinds, centers, prms, r_out, r_in, i, x, y, z, yr):
        return 0.0, False
    du = yr[0] - x
    dv = yr[1] - y
    dw = yr[2] - z
    ub = math.sqrt(du * du + dv * dv + dw * dw)
    inside = _impl_value(kinds[i], centers[i, 0], centers[i, 1], centers[i, 2],
                         prms[i, 0], prms[i, 1], prms[i, 2], prms[i, 3],
                         prms[i, 4], x, y, z) < 0.0
    yv = np.empty(3)
    if warm_ok[i]:
        yv[0] = warm[i, 0]
        yv[1] = warm[i, 1]
        yv[2] = warm[i, 2]
    else:
        yv[0] = yr[0]
        yv[1] = yr[1]
        yv[2] = yr[2]
    g = np.empty(3)
    h = np.empty(3)
    for attempt in range(2):
        conv = _project_newton(kinds[i], centers[i, 0], centers[i, 1], centers[i, 2],
                               prms[i, 0], prms[i, 1], prms[i, 2], prms[i, 3], prms[i, 4],
                               dim, x, y, z, yv, r_out[i])
        du = yv[0] - x
        dv = yv[1] - y
        dw = yv[2] - z
        d = math.sqrt(du * du + dv * dv + dw * dw)
        if conv and d <= ub + 1e-9:
            # the near sheet satisfies (y - x) . grad f(y) < 0 from outside
            _impl_grad_hdiag(kinds[i], centers[i, 0], centers[i, 1], centers[i, 2],
                             prms[i, 0], prms[i, 1], prms[i, 2], prms[i, 3], prms[i, 4],
                             yv[0], yv[1], yv[2], g, h)
            side = du * g[0] + dv * g[1] + dw * g[2]
            if (side < 0.0) != inside:
                warm[i, 0] = yv[0]
                warm[i, 1] = yv[1]
                warm[i, 2] = yv[2]
                warm_ok[i] = True
                return (-d if inside else d), True
        # re-seed from the radial surface point and retry once
        yv[0] = yr[0]
        yv[1] = yr[1]
        yv[2] = yr[2]
        warm_ok[i] = False
    return 0.0, False


@njit(cache=True, fastmath=False)
def world_b(kinds, centers, prms, r_out, r_in, x, y, z, warm, warm_ok):
    """Minimum signed distance over all contributors. Returns (b, ok)."""
    K = kinds.shape[0]
    lbs = np.empty(K)
    done = np.zeros(K, dtype=np.bool_)
    for i in range(K):
        u = x - centers[i, 0]
        v = y - centers[i, 1]
        w = z - centers[i, 2]
        dc = math.sqrt(u * u + v * v + w * w)
        if kinds[i] == KIND_BOUNDARY:
            lbs[i] = r_in[i] - dc
        else:
            lbs[i] = dc - r_out[i]
    best = INF
    all_ok = True
    for _ in range(K):
        pick = -1
        pick_lb = INF
        for i in range(K):
            if not done[i] and lbs[i] < pick_lb:
                pick = i
                pick_lb = lbs[i]
        if pick < 0 or pick_lb >= best:
            break
        done[pick] = True
        d, ok = _obstacle_sdist(kinds, centers, prms, r_out, r_in, pick,
                                x, y, z, warm, warm_ok)
        if not ok:
            all_ok = False
            continue
        if d < best:
            best = d
    return best, all_ok


# ---------------------------------------------------------------------------
# Closed-loop field and integration
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=False)
def _field(kinds, centers, prms, r_out, r_in, dirs, n_theta, n_phi, dim,
           x, y, z, xd0, xd1, xd2, k, eps, eps_p, Rs,
           method, mstep, mtol, inner):
    """One evaluation of the sensor-in-the-loop control law.

    Returns (ux, uy, uz, mode, phi, b_log, status).  ``inner`` marks the
    extra stages of a multi-stage integrator, where a certified-nominal
    shortcut is allowed (identical control output; nothing is logged there).
    """
    k0x = -k * (x - xd0)
    k0y = -k * (y - xd1)
    k0z = -k * (z - xd2)
    lb = INF
    for i in range(kinds.shape[0]):
        u = x - centers[i, 0]
        v = y - centers[i, 1]
        w = z - centers[i, 2]
        dc = math.sqrt(u * u + v * v + w * w)
        li = (r_in[i] - dc) if kinds[i] == KIND_BOUNDARY else (dc - r_out[i])
        if li < lb:
            lb = li
    if lb > Rs + 1e-12:
        # no obstacle can be within sensor range: every ray saturates
        return k0x, k0y, k0z, MODE_NOMINAL, 0.0, Rs, 0
    if inner and lb > eps_p:
        # certified rho* > eps': the nominal branch is taken regardless
        return k0x, k0y, k0z, MODE_NOMINAL, 0.0, Rs, 0
    for i in range(kinds.shape[0]):
        if _impl_value(kinds[i], centers[i, 0], centers[i, 1], centers[i, 2],
                       prms[i, 0], prms[i, 1], prms[i, 2], prms[i, 3], prms[i, 4],
                       x, y, z) <= 0.0:
            return 0.0, 0.0, 0.0, MODE_NOMINAL, 0.0, 0.0, STATUS_SENSOR
    rho, idx = min_scan(kinds, centers, prms, r_out, r_in, dirs, n_theta, n_phi,
                        dim, x, y, z, Rs, method, mstep, mtol)
    if idx < 0:
        return k0x, k0y, k0z, MODE_NOMINAL, 0.0, Rs, 0
    phi = (eps_p - rho) / (eps_p - eps)
    if phi > 1.0:
        phi = 1.0
    elif phi < 0.0:
        phi = 0.0
    gx = -dirs[idx, 0]
    gy = -dirs[idx, 1]
    gz = -dirs[idx, 2]
    dot = k0x * gx + k0y * gy + k0z * gz
    if rho > eps_p or dot >= 0.0:
        return k0x, k0y, k0z, MODE_NOMINAL, phi, rho, 0
    return (k0x - phi * dot * gx, k0y - phi * dot * gy, k0z - phi * dot * gz,
            MODE_BLENDED, phi, rho, 0)


@njit(cache=True, fastmath=False)
def integrate_run(kinds, centers, prms, r_out, r_in, dirs, n_theta, n_phi, dim,
                  x0, xd, k, eps, eps_p, Rs, method, mstep, mtol,
                  dt, n_max, use_rk4, goal_tol, safety_tol,
                  out_x, out_u, out_b, out_mode, out_phi):
    """Closed-loop integration of one run.

    Fills the output buffers (row i is the sample at t = i*dt) and returns
    (n_samples, status, min_b).  RK4 re-evaluates the full sensed field at
    each stage; Euler uses the logged stage only.
    """
    K = kinds.shape[0]
    warm = np.zeros((K, 3))
    warm_ok = np.zeros(K, dtype=np.bool_)
    x = x0[0]
    y = x0[1]
    z = x0[2]
    min_b = INF
    status = STATUS_TIMEOUT
    n = 0
    for i in range(n_max + 1):
        b_or, ok = world_b(kinds, centers, prms, r_out, r_in, x, y, z, warm, warm_ok)
        if not ok:
            status = STATUS_ORACLE
            break
        if b_or < min_b:
            min_b = b_or
        ux, uy, uz, mode, phi, b_log, fstat = _field(
            kinds, centers, prms, r_out, r_in, dirs, n_theta, n_phi, dim,
            x, y, z, xd[0], xd[1], xd[2], k, eps, eps_p, Rs,
            method, mstep, mtol, False)
        out_x[i, 0] = x
        out_x[i, 1] = y
        out_x[i, 2] = z
        out_u[i, 0] = ux
        out_u[i, 1] = uy
        out_u[i, 2] = uz
        out_b[i] = b_log
        out_mode[i] = mode
        out_phi[i] = phi
        n = i + 1
        if fstat != 0:
            status = STATUS_SENSOR
            break
        if b_or < eps - safety_tol:
            status = STATUS_BREACH
            break
        gx = x - xd[0]
        gy = y - xd[1]
        gz = z - xd[2]
        if math.sqrt(gx * gx + gy * gy + gz * gz) <= goal_tol:
            status = STATUS_CONVERGED
            break
        if i == n_max:
            status = STATUS_TIMEOUT
            break
        if use_rk4:
            s = 0
            k1x, k1y, k1z = ux, uy, uz
            x2 = x + 0.5 * dt * k1x
            y2 = y + 0.5 * dt * k1y
            z2 = z + 0.5 * dt * k1z
            k2x, k2y, k2z, _, _, _, s2 = _field(
                kinds, centers, prms, r_out, r_in, dirs, n_theta, n_phi, dim,
                x2, y2, z2, xd[0], xd[1], xd[2], k, eps, eps_p, Rs,
                method, mstep, mtol, True)
            x3 = x + 0.5 * dt * k2x
            y3 = y + 0.5 * dt * k2y
            z3 = z + 0.5 * dt * k2z
            k3x, k3y, k3z, _, _, _, s3 = _field(
                kinds, centers, prms, r_out, r_in, dirs, n_theta, n_phi, dim,
                x3, y3, z3, xd[0], xd[1], xd[2], k, eps, eps_p, Rs,
                method, mstep, mtol, True)
            x4 = x + dt * k3x
            y4 = y + dt * k3y
            z4 = z + dt * k3z
            k4x, k4y, k4z, _, _, _, s4 = _field(
                kinds, centers, prms, r_out, r_in, dirs, n_theta, n_phi, dim,
                x4, y4, z4, xd[0], xd[1], xd[2], k, eps, eps_p, Rs,
                method, mstep, mtol, True)
            if s2 != 0 or s3 != 0 or s4 != 0:
                status = STATUS_SENSOR
                break
            x += dt * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
            y += dt * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
            z += dt * (k1z + 2.0 * k2z + 2.0 * k3z + k4z) / 6.0
        else:
            x += dt * ux
            y += dt * uy
            z += dt * uz
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            status = STATUS_NONFINITE
            break
    return n, status, min_b
