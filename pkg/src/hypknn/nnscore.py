"""kNN radii and recentered ball-volume scores.

The score of a configuration point is the hyperbolic volume of its
k-nearest-neighbor ball minus the regime threshold v_lam; a point is an
exceedance when the score passes s0, equivalently when fewer than k
other points lie within r_threshold(s0).  Neighbor search runs on a
layered grid index with an exact distance filter, so indexed and
brute-force results agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import BallSpec, HPoint, acosh1p, ball_volume
from .limitlaw import Regime
from .sampler import PointConfig

__all__ = [
    "ScoredPoint",
    "LayeredIndex",
    "brute_knn",
    "knn_radius",
    "score",
    "stopping_set",
]


@dataclass(frozen=True)
class ScoredPoint:
    """A point with its kNN radius and recentered ball-volume score.

    A censored point had more than r_cap to its k-th neighbor; its radius
    and score are recorded as inf, never as a silently truncated value.
    exceeds is still well-defined because ball_volume(r_cap) - v_lam > s0
    by the choice of r_cap.
    """

    point: HPoint
    radius_k: float
    score: float
    censored: bool
    exceeds: bool

    def __post_init__(self):
        if not self.censored and not math.isfinite(self.radius_k):
            raise ValueError("uncensored point needs a finite radius")


def brute_knn(x, y, qx, qy, k, r_cap=math.inf, self_index=None):
    """Brute-force k-th smallest hyperbolic distance from queries to points.

    Exact reference path (also the fallback for horizontal dimension > 2);
    distances beyond r_cap give inf.  self_index[qi] marks the query's own
    row among the points, excluded from its neighbor set.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    qx = np.atleast_2d(np.asarray(qx, dtype=float))
    qy = np.asarray(qy, dtype=float)
    nq = qy.shape[0]
    out = np.empty(nq)
    chr_cap = math.cosh(r_cap) - 1.0 if math.isfinite(r_cap) else math.inf
    for qi in range(nq):
        d2 = np.sum((x - qx[qi]) ** 2, axis=1) + (y - qy[qi]) ** 2
        q = d2 / (2.0 * y * qy[qi])
        if self_index is not None and self_index[qi] >= 0:
            q = np.delete(q, self_index[qi])
        q = q[q <= chr_cap] if math.isfinite(r_cap) else q
        if q.shape[0] < k:
            out[qi] = math.inf
        else:
            out[qi] = float(acosh1p(np.partition(q, k - 1)[k - 1]))
    return out


class LayeredIndex:
    """Grid index over a fixed point set, supporting capped-radius queries.

    Heights are split into layers of ratio e^r_cap (a ball of radius at
    most r_cap meets at most three consecutive layers); each layer gets a
    horizontal grid of cell side (layer base height) * sinh(r_cap).
    labels allow restricting a query's neighbor set (e.g. to one block).
    """

    def __init__(self, x, y, r_cap, labels=None):
        x = np.atleast_2d(np.ascontiguousarray(x, dtype=float))
        y = np.ascontiguousarray(y, dtype=float)
        if x.shape[0] != y.shape[0]:
            raise ValueError("x/y length mismatch")
        if r_cap <= 0:
            raise ValueError(f"cap radius must be positive, got {r_cap}")
        self.x, self.y = x, y
        self.n = y.shape[0]
        self.dh = x.shape[1]
        self.r_cap = float(r_cap)
        self.labels = (
            np.full(self.n, -1, dtype=np.int64)
            if labels is None
            else np.ascontiguousarray(labels, dtype=np.int64)
        )
        self.brute = self.dh > 2 or self.n < 64
        if self.n == 0 or self.brute:
            return
        self.rho = self.r_cap
        self.srho = math.sinh(self.rho)
        self.y_min = float(np.min(y))
        layer = np.floor(np.log(y / self.y_min) / self.rho).astype(np.int64)
        np.clip(layer, 0, None, out=layer)
        self.n_layers = int(layer.max()) + 1
        self.offset = _kernels.OFFSET_1 if self.dh == 1 else _kernels.OFFSET_2
        with np.errstate(over="ignore", invalid="ignore"):
            side = self.y_min * np.exp(layer * self.rho) * self.srho
            cells = np.floor(x / side[:, None])
        if (
            self.n_layers > _kernels.MAX_LAYERS
            or not np.all(np.isfinite(cells))
            or np.any(np.abs(cells) >= self.offset)
        ):
            self.brute = True
            return
        cells = cells.astype(np.int64)
        keys = _kernels.pack_keys(layer, cells, self.offset)
        self.order = np.argsort(keys, kind="stable")
        self.sorted_keys = keys[self.order]

    def _query_args(self, qx, qy, qlab, qself):
        qx = np.atleast_2d(np.ascontiguousarray(qx, dtype=float))
        qy = np.ascontiguousarray(qy, dtype=float)
        nq = qy.shape[0]
        if qlab is None:
            qlab = np.full(nq, -1, dtype=np.int64)
        else:
            qlab = np.ascontiguousarray(qlab, dtype=np.int64)
        if qself is None:
            qself = np.full(nq, -1, dtype=np.int64)
        else:
            qself = np.ascontiguousarray(qself, dtype=np.int64)
        return qx, qy, qlab, qself

    def count_within(self, qx, qy, r, kstop, qlab=None, qself=None):
        """Number of indexed points within distance r of each query,
        counting stops at kstop; requires r <= r_cap."""
        if r > self.r_cap * (1 + 1e-12):
            raise ValueError(f"query radius {r} exceeds index cap {self.r_cap}")
        qx, qy, qlab, qself = self._query_args(qx, qy, qlab, qself)
        if self.n == 0:
            return np.zeros(qy.shape[0], dtype=np.int64)
        chr_ = math.cosh(r) - 1.0
        if self.brute:
            return self._brute_count(qx, qy, chr_, kstop, qlab, qself)
        return _kernels.count_within(
            self.x, self.y, self.labels, self.sorted_keys, self.order,
            self.y_min, self.rho, self.srho, self.n_layers, self.offset,
            qx, qy, qlab, qself, chr_, math.exp(r), kstop,
        )

    def knn(self, qx, qy, k, qlab=None, qself=None):
        """k-th smallest distance to the indexed points, inf beyond r_cap."""
        qx, qy, qlab, qself = self._query_args(qx, qy, qlab, qself)
        if self.n == 0:
            return np.full(qy.shape[0], math.inf)
        if self.brute:
            return self._brute_knn(qx, qy, k, qlab, qself)
        qk = _kernels.knn_query(
            self.x, self.y, self.labels, self.sorted_keys, self.order,
            self.y_min, self.rho, self.srho, self.n_layers, self.offset,
            qx, qy, qlab, qself, k,
            math.cosh(self.r_cap) - 1.0, math.exp(self.r_cap),
        )
        out = np.full(qk.shape[0], math.inf)
        fin = np.isfinite(qk)
        out[fin] = acosh1p(qk[fin])
        return out

    def _brute_count(self, qx, qy, chr_, kstop, qlab, qself):
        out = np.empty(qy.shape[0], dtype=np.int64)
        for qi in range(qy.shape[0]):
            d2 = np.sum((self.x - qx[qi]) ** 2, axis=1) + (self.y - qy[qi]) ** 2
            ok = d2 <= 2.0 * self.y * qy[qi] * chr_
            if qlab[qi] >= 0:
                ok &= self.labels == qlab[qi]
            if qself[qi] >= 0:
                ok[qself[qi]] = False
            out[qi] = min(int(np.sum(ok)), kstop)
        return out

    def _brute_knn(self, qx, qy, k, qlab, qself):
        out = np.empty(qy.shape[0])
        chr_cap = math.cosh(self.r_cap) - 1.0
        for qi in range(qy.shape[0]):
            d2 = np.sum((self.x - qx[qi]) ** 2, axis=1) + (self.y - qy[qi]) ** 2
            q = d2 / (2.0 * self.y * qy[qi])
            keep = q <= chr_cap
            if qlab[qi] >= 0:
                keep &= self.labels == qlab[qi]
            if qself[qi] >= 0:
                keep[qself[qi]] = False
            q = q[keep]
            out[qi] = math.inf if q.shape[0] < k else float(acosh1p(np.partition(q, k - 1)[k - 1]))
        return out


def knn_radius(x: HPoint, config: PointConfig, k: int, r_cap: float = math.inf):
    """Distance from x to its k-th nearest other configuration point.

    Returns inf (censored) when the k-th neighbor is beyond r_cap.
    """
    if k < 1:
        raise ValueError(f"requires k >= 1, got {k}")
    same = np.all(config.x == x.x, axis=1) & (config.y == x.y)
    idx = np.flatnonzero(same)
    self_index = np.array([idx[0] if idx.size else -1])
    return float(
        brute_knn(config.x, config.y, x.x[None, :], np.array([x.y]), k, r_cap, self_index)[0]
    )


def score(x: HPoint, config: PointConfig, regime: Regime) -> ScoredPoint:
    """Recentered kNN ball volume of x, with exceedance flag."""
    r = knn_radius(x, config, regime.k, r_cap=regime.r_cap)
    if math.isinf(r):
        return ScoredPoint(point=x, radius_k=math.inf, score=math.inf, censored=True, exceeds=True)
    s = ball_volume(r, regime.d) - regime.v_lam
    return ScoredPoint(point=x, radius_k=r, score=s, censored=False, exceeds=s > regime.s0)


def stopping_set(x: HPoint, config: PointConfig, k: int) -> BallSpec:
    """The kNN ball of x: the score of x is unchanged by any edit of the
    configuration outside a superset of this ball."""
    r = knn_radius(x, config, k)
    if math.isinf(r):
        raise ValueError("stopping set unavailable: fewer than k other points")
    return BallSpec(center=x, radius=r)
