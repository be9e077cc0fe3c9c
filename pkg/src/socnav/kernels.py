"""Hot numeric kernels with two interchangeable backends.

Each kernel exists twice: a loop-style version compiled with numba.njit and a
vectorized pure-numpy fallback. The active backend is chosen at import time by
the SOCNAV_NUMBA environment variable ("0"/"false" forces numpy, "1"/"true"
requires numba, unset means numba when importable). Both backends are written
to produce identical outputs for identical inputs: integer geometry is exact,
argmin ties break toward the lowest index, and float accumulations follow the
same element order. benchmarks/bench_kernels.py times one against the other.
"""

from __future__ import annotations

import os

import numpy as np

# ---------- numpy fallback implementations ----------


def advance_persons_np(px, py, wx, wy, move_ok, blocked, rx, ry):
    """Step persons one cell toward their waypoints, in place.

    A mover reduces the x gap first; if the x step is blocked it tries the
    y step, otherwise it stays. The robot's cell counts as blocked, so any
    collision is the robot's doing. Returns the arrived mask (uint8).
    """
    dx = wx - px
    dy = wy - py
    sx = np.sign(dx)
    sy = np.sign(dy)
    mov = move_ok.astype(bool)
    want_x = mov & (dx != 0)
    tx = np.clip(px + sx, 0, blocked.shape[1] - 1)
    x_free = want_x & (blocked[py, tx] == 0) & ~((tx == rx) & (py == ry))
    try_y = mov & (dy != 0) & ((dx == 0) | (want_x & ~x_free))
    ty = np.clip(py + sy, 0, blocked.shape[0] - 1)
    y_free = try_y & (blocked[ty, px] == 0) & ~((px == rx) & (ty == ry))
    px += sx * x_free
    py += sy * y_free
    at = (px == wx) & (py == wy)
    stalled = mov & ~x_free & ~y_free & ~at
    return (at.astype(np.uint8) + 2 * stalled.astype(np.uint8)).astype(np.uint8)


def proximity_scan_np(rx, ry, px, py, cr2, viol2_near, viol2_far, fpa2_near, fpa2_far, npa2_near, npa2_far):
    """Nearest-person geometry and comfort flags for one robot position.

    Radii come in near/far variants per person; the far variant applies when
    the squared distance exceeds cr2 (the sigmoid crossover point squared).
    Returns (nearest_idx, nearest_d2, occupancy, violated_idx) where occupancy
    is 0 outside the far personal area, 1 inside it but legal, 2 violating,
    and violated_idx is the closest violated person or -1.
    """
    d2 = (px - rx) ** 2 + (py - ry) ** 2
    far = d2 > cr2
    viol2 = np.where(far, viol2_far, viol2_near)
    fpa2 = np.where(far, fpa2_far, fpa2_near)
    nearest = int(np.argmin(d2))
    nd2 = int(d2[nearest])
    violated = d2 < viol2
    if violated.any():
        vd2 = np.where(violated, d2, np.iinfo(np.int64).max)
        vidx = int(np.argmin(vd2))
    else:
        vidx = -1
    if nd2 < viol2[nearest]:
        occ = 2
    elif nd2 < fpa2[nearest]:
        occ = 1
    else:
        occ = 0
    return nearest, nd2, occ, vidx


def kmeans_assign_np(X, C):
    """Assign rows of X to the nearest centroid. Returns (labels, sq dists)."""
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(X.shape[0]), labels]


def kmeans_update_np(X, labels, k):
    """Per-cluster feature sums and member counts."""
    n, f = X.shape
    sums = np.zeros((k, f))
    for j in range(f):
        sums[:, j] = np.bincount(labels, weights=X[:, j], minlength=k)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return sums, counts


def nearest_flagged_np(x, C, r2):
    """Index of the closest centroid whose squared radius covers x, else -1."""
    if C.shape[0] == 0:
        return -1
    d2 = ((C - x) ** 2).sum(axis=1)
    inside = d2 <= r2
    if not inside.any():
        return -1
    masked = np.where(inside, d2, np.inf)
    return int(np.argmin(masked))


# ---------- numba loop implementations ----------


def _advance_persons_loop(px, py, wx, wy, move_ok, blocked, rx, ry):
    n = px.shape[0]
    arrived = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        stepped = False
        if move_ok[i]:
            dx = wx[i] - px[i]
            dy = wy[i] - py[i]
            if dx != 0:
                sx = 1 if dx > 0 else -1
                if blocked[py[i], px[i] + sx] == 0 and not (px[i] + sx == rx and py[i] == ry):
                    px[i] += sx
                    stepped = True
            if not stepped and dy != 0:
                sy = 1 if dy > 0 else -1
                if blocked[py[i] + sy, px[i]] == 0 and not (px[i] == rx and py[i] + sy == ry):
                    py[i] += sy
                    stepped = True
        if px[i] == wx[i] and py[i] == wy[i]:
            arrived[i] = 1
        elif move_ok[i] and not stepped:
            arrived[i] = 2
    return arrived


def _proximity_scan_loop(rx, ry, px, py, cr2, viol2_near, viol2_far, fpa2_near, fpa2_far, npa2_near, npa2_far):
    n = px.shape[0]
    nearest = 0
    nd2 = np.int64(2**62)
    vidx = -1
    vd2 = np.int64(2**62)
    nviol2 = 0.0
    nfpa2 = 0.0
    for i in range(n):
        ddx = px[i] - rx
        ddy = py[i] - ry
        d2 = ddx * ddx + ddy * ddy
        if d2 > cr2:
            v2 = viol2_far[i]
            f2 = fpa2_far[i]
        else:
            v2 = viol2_near[i]
            f2 = fpa2_near[i]
        if d2 < nd2:
            nd2 = d2
            nearest = i
            nviol2 = v2
            nfpa2 = f2
        if d2 < v2 and d2 < vd2:
            vd2 = d2
            vidx = i
    if nd2 < nviol2:
        occ = 2
    elif nd2 < nfpa2:
        occ = 1
    else:
        occ = 0
    return nearest, int(nd2), occ, vidx


def _kmeans_assign_loop(X, C):
    n, f = X.shape
    k = C.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    dmin = np.zeros(n)
    for i in range(n):
        best = 0
        bd = np.inf
        for c in range(k):
            d = 0.0
            for j in range(f):
                t = X[i, j] - C[c, j]
                d += t * t
            if d < bd:
                bd = d
                best = c
        labels[i] = best
        dmin[i] = bd
    return labels, dmin


def _kmeans_update_loop(X, labels, k):
    n, f = X.shape
    sums = np.zeros((k, f))
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        c = labels[i]
        counts[c] += 1
        for j in range(f):
            sums[c, j] += X[i, j]
    return sums, counts


def _nearest_flagged_loop(x, C, r2):
    m, f = C.shape
    best = -1
    bd = np.inf
    for c in range(m):
        d = 0.0
        for j in range(f):
            t = C[c, j] - x[j]
            d += t * t
        if d <= r2[c] and d < bd:
            bd = d
            best = c
    return best


def _select_backend():
    flag = os.environ.get("SOCNAV_NUMBA", "").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        if flag in ("1", "true", "on", "yes"):
            raise
        return False
    return True


USING_NUMBA = _select_backend()

if USING_NUMBA:
    from numba import njit

    advance_persons_nb = njit(cache=True)(_advance_persons_loop)
    proximity_scan_nb = njit(cache=True)(_proximity_scan_loop)
    kmeans_assign_nb = njit(cache=True)(_kmeans_assign_loop)
    kmeans_update_nb = njit(cache=True)(_kmeans_update_loop)
    nearest_flagged_nb = njit(cache=True)(_nearest_flagged_loop)

    advance_persons = advance_persons_nb
    proximity_scan = proximity_scan_nb
    kmeans_assign = kmeans_assign_nb
    kmeans_update = kmeans_update_nb
    nearest_flagged = nearest_flagged_nb
else:
    advance_persons = advance_persons_np
    proximity_scan = proximity_scan_np
    kmeans_assign = kmeans_assign_np
    kmeans_update = kmeans_update_np
    nearest_flagged = nearest_flagged_np


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"
