"""Hot numeric kernels.

Everything here is compiled with numba's ``@njit`` when numba is importable.
Set ``COTDRIVE_NO_NUMBA=1`` to force the pure-Python fallback; both paths
compute bit-identical results (same formulas, same order of operations).
``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

import math
import os

import numpy as np

# physics constants shared with the simulator
PHYSICS_DT = 1.0 / 15.0
STEER_MAX = 0.5
ACCEL_LIMIT = 3.0
SPEED_GAIN = 1.0
BRAKE_LIMIT = 8.0

# meta-action codes, in MPC tie-break order
A_IDLE = 0
A_FASTER = 1
A_SLOWER = 2
A_LANE_LEFT = 3
A_LANE_RIGHT = 4

TARGET_SPEED_STEP = 2.5


def _numba_enabled() -> bool:
    if os.environ.get("COTDRIVE_NO_NUMBA", "").lower() in ("1", "true", "yes"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _numba_enabled()


def _jit(fn):
    if NUMBA_ENABLED:
        from numba import njit

        return njit(cache=True)(fn)
    return fn


@_jit
def wrap_angle(a):
    """Normalize an angle to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@_jit
def kinematic_step(x, y, h, v, accel, steer, dt, length, cap):
    """Semi-implicit bicycle-model step: speed first, then pose with the new speed."""
    if steer > STEER_MAX:
        steer = STEER_MAX
    elif steer < -STEER_MAX:
        steer = -STEER_MAX
    v = v + accel * dt
    if v < 0.0:
        v = 0.0
    elif v > cap:
        v = cap
    h = wrap_angle(h + (v / length) * math.tan(steer) * dt)
    x = x + v * math.cos(h) * dt
    y = y + v * math.sin(h) * dt
    return x, y, h, v


@_jit
def idm_accel(v, v0, gap, closing, a_max, b, s0, T):
    """IDM acceleration; pass gap < 0 as the no-leader sentinel."""
    free = a_max * (1.0 - (v / v0) ** 4)
    if gap < 0.0:
        return free
    if gap < 1e-6:
        gap = 1e-6
    sstar = s0 + v * T + v * closing / (2.0 * math.sqrt(a_max * b))
    return a_max * (1.0 - (v / v0) ** 4 - (sstar / gap) ** 2)


@_jit
def _separated_on_axis(ax, ay, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
    proj = abs(dx * ax + dy * ay)
    e1 = hl1 * abs(c1 * ax + s1 * ay) + hw1 * abs(-s1 * ax + c1 * ay)
    e2 = hl2 * abs(c2 * ax + s2 * ay) + hw2 * abs(-s2 * ax + c2 * ay)
    return proj > e1 + e2


@_jit
def obb_overlap_xyhlw(x1, y1, h1, l1, w1, x2, y2, h2, l2, w2):
    """Separating-axis test for two oriented rectangles (touching counts as overlap)."""
    dx = x2 - x1
    dy = y2 - y1
    r1 = 0.5 * math.hypot(l1, w1)
    r2 = 0.5 * math.hypot(l2, w2)
    if dx * dx + dy * dy > (r1 + r2) * (r1 + r2):
        return False
    c1 = math.cos(h1)
    s1 = math.sin(h1)
    c2 = math.cos(h2)
    s2 = math.sin(h2)
    hl1 = 0.5 * l1
    hw1 = 0.5 * w1
    hl2 = 0.5 * l2
    hw2 = 0.5 * w2
    if _separated_on_axis(c1, s1, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    if _separated_on_axis(-s1, c1, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    if _separated_on_axis(c2, s2, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    if _separated_on_axis(-s2, c2, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    return True


@_jit
def polyline_point_at(pts, n, cum, total, closed, s):
    """Point on a padded polyline at arc length s (wrapped if closed, clamped otherwise)."""
    if closed:
        s = s % total
    else:
        if s < 0.0:
            s = 0.0
        elif s > total:
            s = total
    i = 0
    while i < n - 2 and cum[i + 1] < s:
        i += 1
    seg = cum[i + 1] - cum[i]
    t = 0.0 if seg <= 0.0 else (s - cum[i]) / seg
    px = pts[i, 0] + t * (pts[i + 1, 0] - pts[i, 0])
    py = pts[i, 1] + t * (pts[i + 1, 1] - pts[i, 1])
    return px, py


@_jit
def polyline_project(pts, n, px, py):
    """Project a point onto a padded polyline: (arc length, signed lateral offset).

    Lateral offset is positive to the left of the travel direction.
    """
    best = 1e30
    bs = 0.0
    blat = 0.0
    cs = 0.0
    for i in range(n - 1):
        ax = pts[i, 0]
        ay = pts[i, 1]
        ex = pts[i + 1, 0] - ax
        ey = pts[i + 1, 1] - ay
        L2 = ex * ex + ey * ey
        if L2 <= 0.0:
            continue
        t = ((px - ax) * ex + (py - ay) * ey) / L2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        qx = ax + t * ex
        qy = ay + t * ey
        d2 = (px - qx) * (px - qx) + (py - qy) * (py - qy)
        if d2 < best:
            best = d2
            seg = math.sqrt(L2)
            bs = cs + t * seg
            blat = (ex * (py - ay) - ey * (px - ax)) / seg
        cs += math.sqrt(L2)
    return bs, blat


@_jit
def pure_pursuit_steer(x, y, h, v, length, pts, n, cum, total, closed, s):
    """Pure-pursuit steering toward the lookahead point on a centerline."""
    ld = 4.0 + 0.5 * v
    tx, ty = polyline_point_at(pts, n, cum, total, closed, s + ld)
    alpha = wrap_angle(math.atan2(ty - y, tx - x) - h)
    steer = math.atan2(2.0 * length * math.sin(alpha), ld)
    if steer > STEER_MAX:
        steer = STEER_MAX
    elif steer < -STEER_MAX:
        steer = -STEER_MAX
    return steer


@_jit
def mpc_rollout_cost(
    x, y, h, v, length, width, cap,
    tgt_speed, tgt_lane,
    actions,
    lane_pts, lane_n, lane_cum, lane_total, lane_closed,
    left_idx, right_idx,
    bx, by, bh, bv, blen, bwid,
    n_sub, dt, v_ref, w_col, w_speed, w_lane, w_off,
):
    """Cost of one meta-action sequence: ego follows its controllers, background
    vehicles are propagated at constant velocity."""
    cost = 0.0
    s, _lat = polyline_project(lane_pts[tgt_lane], lane_n[tgt_lane], x, y)
    nb = bx.shape[0]
    bxc = np.empty(nb)
    byc = np.empty(nb)
    bvx = np.empty(nb)
    bvy = np.empty(nb)
    for j in range(nb):
        bxc[j] = bx[j]
        byc[j] = by[j]
        bvx[j] = bv[j] * math.cos(bh[j])
        bvy[j] = bv[j] * math.sin(bh[j])
    for k in range(actions.shape[0]):
        a = actions[k]
        if a == A_FASTER:
            tgt_speed = min(tgt_speed + TARGET_SPEED_STEP, cap)
        elif a == A_SLOWER:
            tgt_speed = max(tgt_speed - TARGET_SPEED_STEP, 0.0)
        elif a == A_LANE_LEFT or a == A_LANE_RIGHT:
            cost += w_lane
            nbr = left_idx[tgt_lane] if a == A_LANE_LEFT else right_idx[tgt_lane]
            if nbr < 0:
                cost += w_off
            else:
                tgt_lane = nbr
                s, _lat = polyline_project(lane_pts[tgt_lane], lane_n[tgt_lane], x, y)
        for _ in range(n_sub):
            accel = SPEED_GAIN * (tgt_speed - v)
            if accel > ACCEL_LIMIT:
                accel = ACCEL_LIMIT
            elif accel < -ACCEL_LIMIT:
                accel = -ACCEL_LIMIT
            steer = pure_pursuit_steer(
                x, y, h, v, length,
                lane_pts[tgt_lane], lane_n[tgt_lane], lane_cum[tgt_lane],
                lane_total[tgt_lane], lane_closed[tgt_lane] != 0, s,
            )
            x, y, h, v = kinematic_step(x, y, h, v, accel, steer, dt, length, cap)
            s += v * dt
            if lane_closed[tgt_lane] != 0:
                if s > lane_total[tgt_lane]:
                    s -= lane_total[tgt_lane]
            elif s > lane_total[tgt_lane] - 3.0:
                cost += w_off  # running off the end of a dead-ending lane
            cost += w_speed * (v - v_ref) * (v - v_ref)
            for j in range(nb):
                bxc[j] += bvx[j] * dt
                byc[j] += bvy[j] * dt
                if obb_overlap_xyhlw(x, y, h, length, width,
                                     bxc[j], byc[j], bh[j], blen[j], bwid[j]):
                    cost += w_col
    return cost
