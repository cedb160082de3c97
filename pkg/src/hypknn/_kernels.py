"""Numba kernels for layered-grid neighbor search.

Points are bucketed into geometric height layers (ratio e^rho) with a
per-layer uniform horizontal grid whose cell side scales with the layer
base height; cells are packed into int64 keys and queried by binary
search on the lexsorted key array.  Distance tests compare squared
Euclidean separation against 2*y1*y2*(cosh r - 1), which is the exact
hyperbolic-ball condition without any acosh in the hot loop.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# horizontal cell offsets so packed indices are nonnegative: 10 bits of
# layer, then 50 (one horizontal axis) or 2 x 26 (two axes) bits of cell
OFFSET_1 = 1 << 49
OFFSET_2 = 1 << 25
MAX_LAYERS = 1 << 10


@njit(cache=True)
def pack_keys(layers, cells, offset):
    """Pack (layer, cell vector) into one int64 key per point."""
    n, dh = cells.shape
    span = 2 * offset
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        key = layers[i]
        for ax in range(dh):
            key = key * span + (cells[i, ax] + offset)
        out[i] = key
    return out


@njit(cache=True, inline="always")
def _cell_key(layer, c0, c1, dh, offset):
    span = 2 * offset
    if dh == 1:
        return layer * span + (c0 + offset)
    return (layer * span + (c0 + offset)) * span + (c1 + offset)


@njit(cache=True)
def count_within(
    xs,
    ys,
    labels,
    sorted_keys,
    order,
    y_min,
    rho,
    srho,
    n_layers,
    offset,
    qx,
    qy,
    qlab,
    qself,
    chr_,
    er,
    kstop,
):
    """Count indexed points within hyperbolic distance r of each query.

    chr_ = cosh(r) - 1 and er = e^r.  Counting stops early at kstop.
    qself[qi] is the index of the query among the indexed points (-1 if
    absent) and is never counted; qlab[qi] >= 0 restricts neighbors to
    that label.
    """
    nq = qx.shape[0]
    dh = xs.shape[1]
    out = np.empty(nq, dtype=np.int64)
    for qi in range(nq):
        y1 = qy[qi]
        lab = qlab[qi]
        self_i = qself[qi]
        cnt = 0
        done = False
        l_lo = int(math.floor(math.log(max(y1 / er, y_min) / y_min) / rho))
        l_hi = int(math.floor(math.log(y1 * er / y_min) / rho))
        if l_lo < 0:
            l_lo = 0
        if l_hi > n_layers - 1:
            l_hi = n_layers - 1
        for layer in range(l_lo, l_hi + 1):
            side = y_min * math.exp(layer * rho) * srho
            # neighbors in this layer have height at most t, so their
            # horizontal offset is at most sqrt(2*y1*t*(cosh r - 1))
            t = min(y_min * math.exp((layer + 1) * rho), y1 * er)
            reach = math.sqrt(2.0 * y1 * t * chr_)
            c0_lo = int(math.floor((qx[qi, 0] - reach) / side))
            c0_hi = int(math.floor((qx[qi, 0] + reach) / side))
            if c0_lo < -offset:
                c0_lo = -offset
            if c0_hi > offset - 1:
                c0_hi = offset - 1
            if dh == 1:
                c1_lo, c1_hi = 0, 0
            else:
                c1_lo = int(math.floor((qx[qi, 1] - reach) / side))
                c1_hi = int(math.floor((qx[qi, 1] + reach) / side))
                if c1_lo < -offset:
                    c1_lo = -offset
                if c1_hi > offset - 1:
                    c1_hi = offset - 1
            for c0 in range(c0_lo, c0_hi + 1):
                for c1 in range(c1_lo, c1_hi + 1):
                    key = _cell_key(layer, c0, c1, dh, offset)
                    jlo = np.searchsorted(sorted_keys, key, side="left")
                    jhi = np.searchsorted(sorted_keys, key, side="right")
                    for j in range(jlo, jhi):
                        i = order[j]
                        if i == self_i:
                            continue
                        if lab >= 0 and labels[i] != lab:
                            continue
                        y2 = ys[i]
                        d2 = (y1 - y2) * (y1 - y2)
                        for ax in range(dh):
                            dx = qx[qi, ax] - xs[i, ax]
                            d2 += dx * dx
                        if d2 <= 2.0 * y1 * y2 * chr_:
                            cnt += 1
                            if cnt >= kstop:
                                done = True
                                break
                    if done:
                        break
                if done:
                    break
            if done:
                break
        out[qi] = cnt
    return out


@njit(cache=True)
def knn_query(
    xs,
    ys,
    labels,
    sorted_keys,
    order,
    y_min,
    rho,
    srho,
    n_layers,
    offset,
    qx,
    qy,
    qlab,
    qself,
    k,
    chr_cap,
    er_cap,
):
    """k-th smallest normalized separation q = d2/(2*y1*y2) within r_cap.

    The hyperbolic distance is acosh(1 + q), increasing in q, so ranking
    by q ranks by distance.  Returns inf where fewer than k neighbors lie
    within the cap radius (a censored query).
    """
    nq = qx.shape[0]
    dh = xs.shape[1]
    out = np.empty(nq, dtype=np.float64)
    best = np.empty(k, dtype=np.float64)
    for qi in range(nq):
        y1 = qy[qi]
        lab = qlab[qi]
        self_i = qself[qi]
        for b in range(k):
            best[b] = np.inf
        l_lo = int(math.floor(math.log(max(y1 / er_cap, y_min) / y_min) / rho))
        l_hi = int(math.floor(math.log(y1 * er_cap / y_min) / rho))
        if l_lo < 0:
            l_lo = 0
        if l_hi > n_layers - 1:
            l_hi = n_layers - 1
        for layer in range(l_lo, l_hi + 1):
            side = y_min * math.exp(layer * rho) * srho
            t = min(y_min * math.exp((layer + 1) * rho), y1 * er_cap)
            reach = math.sqrt(2.0 * y1 * t * chr_cap)
            c0_lo = int(math.floor((qx[qi, 0] - reach) / side))
            c0_hi = int(math.floor((qx[qi, 0] + reach) / side))
            if c0_lo < -offset:
                c0_lo = -offset
            if c0_hi > offset - 1:
                c0_hi = offset - 1
            if dh == 1:
                c1_lo, c1_hi = 0, 0
            else:
                c1_lo = int(math.floor((qx[qi, 1] - reach) / side))
                c1_hi = int(math.floor((qx[qi, 1] + reach) / side))
                if c1_lo < -offset:
                    c1_lo = -offset
                if c1_hi > offset - 1:
                    c1_hi = offset - 1
            for c0 in range(c0_lo, c0_hi + 1):
                for c1 in range(c1_lo, c1_hi + 1):
                    key = _cell_key(layer, c0, c1, dh, offset)
                    jlo = np.searchsorted(sorted_keys, key, side="left")
                    jhi = np.searchsorted(sorted_keys, key, side="right")
                    for j in range(jlo, jhi):
                        i = order[j]
                        if i == self_i:
                            continue
                        if lab >= 0 and labels[i] != lab:
                            continue
                        y2 = ys[i]
                        d2 = (y1 - y2) * (y1 - y2)
                        for ax in range(dh):
                            dx = qx[qi, ax] - xs[i, ax]
                            d2 += dx * dx
                        if d2 > 2.0 * y1 * y2 * chr_cap:
                            continue
                        q = d2 / (2.0 * y1 * y2)
                        if q < best[k - 1]:
                            # insertion into the sorted k-best buffer
                            b = k - 1
                            while b > 0 and best[b - 1] > q:
                                best[b] = best[b - 1]
                                b -= 1
                            best[b] = q
        out[qi] = best[k - 1]
    return out
