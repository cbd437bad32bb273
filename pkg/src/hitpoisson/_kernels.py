"""Compiled inner loops.

States are rows of three float64 values whose meaning depends on the
system code:

    DOUBLING_FLOAT, LSV   (x, 0, 0)
    SOLENOID              (x, Re z, Im z)
    STADIUM               (r, phi, 0)

``params`` is the float64 vector ``[gamma, theta, ell, 2**gamma, perimeter]``.

μ-typical doubling orbits cannot live in a double (the map shifts one bit
out per step), so they are carried as rows of uint64 words holding the
binary expansion of the point; ``f^n(y)`` is the 64-bit window starting
at bit ``n``.
"""

import math

import numpy as np
from numba import njit

DOUBLING_FLOAT = 0
LSV = 1
SOLENOID = 2
STADIUM = 3

SEG_BOTTOM = 0
SEG_TOP = 1
SEG_RIGHT_ARC = 2
SEG_LEFT_ARC = 3

# roots of the travel-length equation below this are the departure point
MIN_TRAVEL = 1e-10
JUNCTION_TOL = 1e-12

_HALF_PI = 0.5 * math.pi
_PHI_MAX = np.nextafter(_HALF_PI, 0.0)
_TWO53 = 2.0**-53


@njit(cache=True, nogil=True)
def lsv_step(x, gamma, two_pow_gamma):
    if x < 0.5:
        y = x * (1.0 + two_pow_gamma * x**gamma)
        if y >= 1.0:
            y -= 1.0
        return y
    return 2.0 * x - 1.0


@njit(cache=True, nogil=True)
def boundary(r, ell):
    """Position, inward normal and segment code of arclength ``r``."""
    half = 0.5 * ell
    if r <= math.pi:
        a = r - _HALF_PI
        c = math.cos(a)
        s = math.sin(a)
        return half + c, s, -c, -s, SEG_RIGHT_ARC
    if r < math.pi + ell:
        return half - (r - math.pi), 1.0, 0.0, -1.0, SEG_TOP
    if r <= 2.0 * math.pi + ell:
        a = _HALF_PI + (r - math.pi - ell)
        c = math.cos(a)
        s = math.sin(a)
        return -half + c, s, -c, -s, SEG_LEFT_ARC
    return -half + (r - 2.0 * math.pi - ell), -1.0, 0.0, 1.0, SEG_BOTTOM


@njit(cache=True, nogil=True)
def stadium_step(r, phi, ell):
    """One bounce.  Returns (nan, nan) if no boundary hit is found."""
    half = 0.5 * ell
    perimeter = 2.0 * (math.pi + ell)
    px, py, nx, ny, _ = boundary(r, ell)
    tx = ny
    ty = -nx
    c = math.cos(phi)
    s = math.sin(phi)
    vx = c * nx + s * tx
    vy = c * ny + s * ty

    best = math.inf
    seg = -1
    if vy > 0.0:
        t = (1.0 - py) / vy
        if t > MIN_TRAVEL and t < best:
            hx = px + t * vx
            if abs(hx) < half - JUNCTION_TOL:
                best = t
                seg = SEG_TOP
    elif vy < 0.0:
        t = (-1.0 - py) / vy
        if t > MIN_TRAVEL and t < best:
            hx = px + t * vx
            if abs(hx) < half - JUNCTION_TOL:
                best = t
                seg = SEG_BOTTOM
    for side in (1.0, -1.0):
        qx = px - side * half
        b = vx * qx + vy * py
        cc = qx * qx + py * py - 1.0
        disc = b * b - cc
        if disc >= 0.0:
            t = -b + math.sqrt(disc)
            if t > MIN_TRAVEL and t < best:
                hx = px + t * vx
                if side * hx >= half - JUNCTION_TOL:
                    best = t
                    seg = SEG_RIGHT_ARC if side > 0.0 else SEG_LEFT_ARC
    if seg < 0:
        return math.nan, math.nan

    hx = px + best * vx
    hy = py + best * vy
    if seg == SEG_TOP:
        r2 = math.pi + (half - hx)
        mx = 0.0
        my = -1.0
    elif seg == SEG_BOTTOM:
        r2 = 2.0 * math.pi + ell + (hx + half)
        mx = 0.0
        my = 1.0
    elif seg == SEG_RIGHT_ARC:
        ux = hx - half
        norm = math.hypot(ux, hy)
        ux /= norm
        uy = hy / norm
        r2 = math.atan2(uy, ux) + _HALF_PI
        mx = -ux
        my = -uy
    else:
        ux = hx + half
        norm = math.hypot(ux, hy)
        ux /= norm
        uy = hy / norm
        a = math.atan2(uy, ux)
        if a < 0.0:
            a += 2.0 * math.pi
        r2 = math.pi + ell + (a - _HALF_PI)
        mx = -ux
        my = -uy

    dot = vx * mx + vy * my
    wx = vx - 2.0 * dot * mx
    wy = vy - 2.0 * dot * my
    phi2 = math.atan2(wx * my - wy * mx, wx * mx + wy * my)
    if phi2 > _PHI_MAX:
        phi2 = _PHI_MAX
    elif phi2 < -_PHI_MAX:
        phi2 = -_PHI_MAX
    r2 = r2 % perimeter
    return r2, phi2


@njit(cache=True, nogil=True)
def step(kind, s0, s1, s2, params):
    if kind == DOUBLING_FLOAT:
        x = 2.0 * s0
        if x >= 1.0:
            x -= 1.0
        return x, s1, s2
    if kind == LSV:
        return lsv_step(s0, params[0], params[3]), s1, s2
    if kind == SOLENOID:
        theta = params[1]
        ang = 2.0 * math.pi * s0
        return (
            lsv_step(s0, params[0], params[3]),
            theta * s1 + 0.5 * math.cos(ang),
            theta * s2 + 0.5 * math.sin(ang),
        )
    r2, phi2 = stadium_step(s0, s1, params[2])
    return r2, phi2, s2


@njit(cache=True, nogil=True)
def circle_gap(a, b):
    d = abs(a - b)
    return min(d, 1.0 - d)


@njit(cache=True, nogil=True)
def dist(kind, a0, a1, a2, b0, b1, b2, params):
    if kind == DOUBLING_FLOAT or kind == LSV:
        return circle_gap(a0, b0)
    if kind == SOLENOID:
        return max(circle_gap(a0, b0), math.hypot(a1 - b1, a2 - b2))
    perimeter = params[4]
    dr = abs(a0 - b0)
    dr = min(dr, perimeter - dr)
    return max(dr, abs(a1 - b1))


@njit(cache=True, nogil=True)
def push(kind, params, states, n):
    """Advance every row of ``states`` by ``n`` steps in place."""
    for i in range(states.shape[0]):
        s0 = states[i, 0]
        s1 = states[i, 1]
        s2 = states[i, 2]
        for _ in range(n):
            s0, s1, s2 = step(kind, s0, s1, s2, params)
        states[i, 0] = s0
        states[i, 1] = s1
        states[i, 2] = s2


@njit(cache=True, nogil=True)
def cumulative_hits(kind, params, states, center, radius, checkpoints):
    """``out[i, j]`` = #{1 <= l <= checkpoints[j] : d(f^l y_i, x) < radius}.

    Also returns ``hit0[i]``, whether y_i itself lies in the ball.
    ``checkpoints`` must be nondecreasing.
    """
    m = states.shape[0]
    nc = checkpoints.shape[0]
    out = np.zeros((m, nc), dtype=np.int64)
    hit0 = np.zeros(m, dtype=np.bool_)
    horizon = checkpoints[nc - 1] if nc > 0 else 0
    c0 = center[0]
    c1 = center[1]
    c2 = center[2]
    for i in range(m):
        s0 = states[i, 0]
        s1 = states[i, 1]
        s2 = states[i, 2]
        hit0[i] = dist(kind, s0, s1, s2, c0, c1, c2, params) < radius
        count = 0
        j = 0
        while j < nc and checkpoints[j] <= 0:
            out[i, j] = 0
            j += 1
        for ell in range(1, horizon + 1):
            s0, s1, s2 = step(kind, s0, s1, s2, params)
            if dist(kind, s0, s1, s2, c0, c1, c2, params) < radius:
                count += 1
            while j < nc and checkpoints[j] == ell:
                out[i, j] = count
                j += 1
    return hit0, out


@njit(cache=True, nogil=True)
def return_times(kind, params, state, center, radii, cap):
    """First n in [1, cap] with d(f^n y, x) < radii[k], for decreasing radii.

    Entries stay -1 when the cap is exceeded.
    """
    nr = radii.shape[0]
    out = np.full(nr, -1, dtype=np.int64)
    s0 = state[0]
    s1 = state[1]
    s2 = state[2]
    k = 0
    for n in range(1, cap + 1):
        s0, s1, s2 = step(kind, s0, s1, s2, params)
        d = dist(kind, s0, s1, s2, center[0], center[1], center[2], params)
        while k < nr and d < radii[k]:
            out[k] = n
            k += 1
        if k == nr:
            break
    return out


@njit(cache=True, nogil=True)
def first_entrances(kind, params, states, center, radius, cap):
    """Per-row first n in [1, cap] with f^n y in the ball, or -1."""
    m = states.shape[0]
    out = np.full(m, -1, dtype=np.int64)
    for i in range(m):
        s0 = states[i, 0]
        s1 = states[i, 1]
        s2 = states[i, 2]
        for n in range(1, cap + 1):
            s0, s1, s2 = step(kind, s0, s1, s2, params)
            if dist(kind, s0, s1, s2, center[0], center[1], center[2], params) < radius:
                out[i] = n
                break
    return out


@njit(cache=True, nogil=True)
def chain_ball_counts(kind, params, states, center, radii, length):
    """Per-row counts of steps 0..length-1 falling in each ball.

    Rows of ``states`` are advanced in place by ``length`` steps.
    """
    m = states.shape[0]
    nr = radii.shape[0]
    out = np.zeros((m, nr), dtype=np.int64)
    for i in range(m):
        s0 = states[i, 0]
        s1 = states[i, 1]
        s2 = states[i, 2]
        for _ in range(length):
            d = dist(kind, s0, s1, s2, center[0], center[1], center[2], params)
            for k in range(nr):
                if d < radii[k]:
                    out[i, k] += 1
            s0, s1, s2 = step(kind, s0, s1, s2, params)
        states[i, 0] = s0
        states[i, 1] = s1
        states[i, 2] = s2
    return out


@njit(cache=True, nogil=True)
def chain_collect(kind, params, states, center, radius, length, limit):
    """Visit chain points in the ball, row by row, until ``limit`` are found."""
    found = np.empty((limit, 3))
    n = 0
    for i in range(states.shape[0]):
        s0 = states[i, 0]
        s1 = states[i, 1]
        s2 = states[i, 2]
        for _ in range(length):
            if dist(kind, s0, s1, s2, center[0], center[1], center[2], params) < radius:
                found[n, 0] = s0
                found[n, 1] = s1
                found[n, 2] = s2
                n += 1
                if n == limit:
                    return found
            s0, s1, s2 = step(kind, s0, s1, s2, params)
    return found[:n]


@njit(cache=True, nogil=True)
def chain_distances(kind, params, states, center, length):
    """Distances to ``center`` of every chain point, shape (rows, length)."""
    m = states.shape[0]
    out = np.empty((m, length))
    for i in range(m):
        s0 = states[i, 0]
        s1 = states[i, 1]
        s2 = states[i, 2]
        for t in range(length):
            out[i, t] = dist(kind, s0, s1, s2, center[0], center[1], center[2], params)
            s0, s1, s2 = step(kind, s0, s1, s2, params)
    return out


# -- doubling on binary expansions ------------------------------------------


@njit(cache=True, nogil=True)
def word_window(row, n):
    """Bits n .. n+63 of the expansion held in ``row``."""
    nw = row.shape[0]
    i = n // 64
    if i >= nw:
        return np.uint64(0)
    sh = np.uint64(n % 64)
    hi = row[i] << sh
    if sh == np.uint64(0) or i + 1 >= nw:
        return hi
    return hi | (row[i + 1] >> (np.uint64(64) - sh))


@njit(cache=True, nogil=True)
def window_value(w):
    return float(w >> np.uint64(11)) * _TWO53


@njit(cache=True, nogil=True)
def words_cumulative_hits(words, center_x, radius, checkpoints):
    m = words.shape[0]
    nc = checkpoints.shape[0]
    out = np.zeros((m, nc), dtype=np.int64)
    hit0 = np.zeros(m, dtype=np.bool_)
    horizon = checkpoints[nc - 1] if nc > 0 else 0
    for i in range(m):
        row = words[i]
        hit0[i] = circle_gap(window_value(word_window(row, 0)), center_x) < radius
        count = 0
        j = 0
        while j < nc and checkpoints[j] <= 0:
            j += 1
        for ell in range(1, horizon + 1):
            if circle_gap(window_value(word_window(row, ell)), center_x) < radius:
                count += 1
            while j < nc and checkpoints[j] == ell:
                out[i, j] = count
                j += 1
    return hit0, out


@njit(cache=True, nogil=True)
def words_return_times(row, center_x, radii, cap):
    nr = radii.shape[0]
    out = np.full(nr, -1, dtype=np.int64)
    k = 0
    for n in range(1, cap + 1):
        d = circle_gap(window_value(word_window(row, n)), center_x)
        while k < nr and d < radii[k]:
            out[k] = n
            k += 1
        if k == nr:
            break
    return out


@njit(cache=True, nogil=True)
def words_first_entrances(words, center_x, radius, cap):
    m = words.shape[0]
    out = np.full(m, -1, dtype=np.int64)
    for i in range(m):
        row = words[i]
        for n in range(1, cap + 1):
            if circle_gap(window_value(word_window(row, n)), center_x) < radius:
                out[i] = n
                break
    return out


@njit(cache=True, nogil=True)
def words_shift(row, n):
    """Expansion of f^n: drop the first ``n`` bits."""
    nw = row.shape[0]
    skip = n // 64
    keep = max(nw - skip, 0)
    out = np.zeros(keep, dtype=np.uint64)
    for k in range(keep):
        out[k] = word_window(row, n + 64 * k)
    return out


@njit(cache=True, nogil=True)
def distances_to(kind, params, states, center):
    m = states.shape[0]
    out = np.empty(m)
    for i in range(m):
        out[i] = dist(kind, states[i, 0], states[i, 1], states[i, 2],
                      center[0], center[1], center[2], params)
    return out
