"""Poisson sampling with hyperbolic-volume intensity on axis-aligned regions.

The intensity is y^(-d) dx dy, so counts are Poisson(region volume), the
horizontal coordinate is uniform on the box, and the height follows a
truncated Pareto law sampled by inverse CDF.  Because a height-unbounded
window has no finite-volume Euclidean dilation, neighborhoods reaching
outside the window are handled adaptively: sample the window first, then
sample the exterior only on a banded box cover of the union of ball
bounding boxes around the realized interior points.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import BallSpec, HPoint, Region, ball_bbox, box_subtract, region_volume
from .rng import RngStream

__all__ = [
    "PointConfig",
    "sample_region",
    "dilation_regions",
    "sample_extended",
    "write_points_csv",
    "points_to_bytes",
    "points_from_bytes",
]


@dataclass(frozen=True)
class PointConfig:
    """A finite point configuration in coordinate-array form.

    x has shape (n, d-1) and y shape (n,).  source is the sampled region,
    or None for a union of regions (region_id then tells the piece each
    point came from).  seed_path records the RNG substream for provenance.
    """

    x: np.ndarray
    y: np.ndarray
    source: Region | None = None
    region_id: np.ndarray | None = None
    seed_path: tuple = ()

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.shape[0] != y.shape[0]:
            raise ValueError("x/y length mismatch")
        if np.any(y <= 0):
            raise ValueError("heights must be positive")
        rid = self.region_id
        if rid is None:
            rid = np.zeros(y.shape[0], dtype=np.int64)
        else:
            rid = np.asarray(rid, dtype=np.int64)
        object.__setattr__(self, "region_id", rid)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1] + 1

    def point(self, i: int) -> HPoint:
        return HPoint(x=self.x[i], y=float(self.y[i]))

    def subset(self, mask) -> "PointConfig":
        mask = np.asarray(mask)
        return PointConfig(
            x=self.x[mask],
            y=self.y[mask],
            source=self.source,
            region_id=self.region_id[mask],
            seed_path=self.seed_path,
        )


def concat_configs(configs, seed_path=()) -> PointConfig:
    """Merge configurations, tagging points with the index of their piece."""
    configs = list(configs)
    if not configs:
        raise ValueError("nothing to concatenate")
    x = np.concatenate([c.x for c in configs], axis=0)
    y = np.concatenate([c.y for c in configs])
    rid = np.concatenate(
        [np.full(c.n, j, dtype=np.int64) for j, c in enumerate(configs)]
    )
    return PointConfig(x=x, y=y, source=None, region_id=rid, seed_path=seed_path)


def _sample_heights(n: int, R: Region, d: int, gen: np.random.Generator) -> np.ndarray:
    """Inverse-CDF heights: y = y_lo (1 - U (1 - (y_lo/y_hi)^(d-1)))^(-1/(d-1))."""
    U = gen.random(n)
    if math.isinf(R.y_hi):
        frac = U
    else:
        frac = U * (1.0 - (R.y_lo / R.y_hi) ** (d - 1))
    return R.y_lo * (1.0 - frac) ** (-1.0 / (d - 1))


def sample_region(R: Region, d: int, rng: RngStream) -> PointConfig:
    """Draw a Poisson configuration with intensity y^(-d) on the region."""
    vol = region_volume(R, d)
    if not math.isfinite(vol):
        raise ValueError("region has infinite hyperbolic volume")
    gen = rng.generator()
    n = int(gen.poisson(vol))
    dh = d - 1
    x = R.lo + (R.hi - R.lo) * gen.random((n, dh))
    y = _sample_heights(n, R, d, gen)
    # exact float collisions are measure-zero but the simple-configuration
    # invariant is hard; resample any duplicate rows.  Distinct heights
    # already imply distinct rows, so the common case is one 1-d check.
    while n > 1 and np.unique(y).shape[0] < n:
        rows = np.concatenate([x, y[:, None]], axis=1)
        _, first = np.unique(rows, axis=0, return_index=True)
        dup = np.setdiff1d(np.arange(n), first)
        if dup.size == 0:
            break
        x[dup] = R.lo + (R.hi - R.lo) * gen.random((dup.size, dh))
        y[dup] = _sample_heights(dup.size, R, d, gen)
    return PointConfig(x=x, y=y, source=R, seed_path=rng.path)


def _cluster_hulls(lo_all, hi_all):
    """Merge boxes whose first-axis intervals overlap into cluster hulls.

    Returns a list of (lo, hi) hull boxes; a hull is a superset of its
    cluster's union, which is harmless for Poisson sampling (a larger
    exterior cover stays exact) but keeps well-separated anchor groups
    from being bridged by one window-wide box.
    """
    order = np.argsort(lo_all[:, 0], kind="stable")
    lo_s = lo_all[order]
    hi_s = hi_all[order]
    run_max = np.maximum.accumulate(hi_s[:, 0])
    new_cluster = np.empty(lo_s.shape[0], dtype=bool)
    new_cluster[0] = True
    new_cluster[1:] = lo_s[1:, 0] > run_max[:-1]
    starts = np.flatnonzero(new_cluster)
    lo_h = np.minimum.reduceat(lo_s, starts, axis=0)
    hi_h = np.maximum.reduceat(hi_s, starts, axis=0)
    return [(lo_h[i], hi_h[i]) for i in range(starts.shape[0])]


def dilation_regions(
    W: Region,
    r_max: float,
    d: int,
    anchors: PointConfig,
    step: float | None = None,
    minus=(),
):
    """Disjoint boxes outside W covering every r_max-ball around the anchors.

    The cover is organized in geometric height bands (log-step, default
    r_max/2, anchored at W.y_lo so band edges from different calls with
    the same step align exactly).  Within each band the horizontal extent
    is the union of cluster hulls of the anchor ball bounding boxes
    meeting that band; bands inside W's height range have the window box
    carved out, so the output is exactly disjoint from W.  Hulls are
    supersets of the union of bounding boxes, which only adds exterior
    sampling volume — the restriction of a Poisson process to a larger
    set is still exact.

    minus: regions from an earlier band-aligned call (same step) that are
    already covered; they are carved out as well, so a staged deepening
    never samples the same volume twice.
    """
    if anchors.n == 0 or r_max == 0.0:
        return []
    if np.any(~W.contains(anchors.x, anchors.y)):
        raise ValueError("anchors must lie in the window")
    if step is None:
        step = max(r_max / 2.0, 1e-3)
    pad = anchors.y * math.sinh(r_max)
    lo_all = anchors.x - pad[:, None]
    hi_all = anchors.x + pad[:, None]
    y_bot = anchors.y * math.exp(-r_max)
    y_top = anchors.y * math.exp(r_max)

    # geometric band edges around [min y_bot, max y_top]; j = 0 lands on
    # W.y_lo exactly, so the window floor is always a band boundary
    j_lo = math.floor(math.log(float(np.min(y_bot)) / W.y_lo) / step)
    j_hi = math.ceil(math.log(float(np.max(y_top)) / W.y_lo) / step)
    edges = [W.y_lo * math.exp(j * step) for j in range(j_lo, j_hi + 1)]
    if math.isfinite(W.y_hi) and edges[0] < W.y_hi < edges[-1]:
        if not any(abs(e - W.y_hi) < 1e-15 * W.y_hi for e in edges):
            edges.append(W.y_hi)
            edges = sorted(edges)

    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        hit = (y_top > a) & (y_bot < b)
        if not np.any(hit):
            continue
        in_w_heights = a >= W.y_lo * (1 - 1e-12) and (
            not math.isfinite(W.y_hi) or b <= W.y_hi * (1 + 1e-12)
        )
        carve = [(W.lo, W.hi)] if in_w_heights else []
        for R in minus:
            if R.y_lo < b and R.y_hi > a:
                carve.append((R.lo, R.hi))
        for hull_lo, hull_hi in _cluster_hulls(lo_all[hit], hi_all[hit]):
            pieces = [(hull_lo, hull_hi)] if np.all(hull_lo < hull_hi) else []
            for c_lo, c_hi in carve:
                pieces = [
                    q for p_lo, p_hi in pieces for q in box_subtract(p_lo, p_hi, c_lo, c_hi)
                ]
            for p_lo, p_hi in pieces:
                out.append(Region(lo=p_lo, hi=p_hi, y_lo=a, y_hi=b))
    return out


def sample_extended(W: Region, r_max: float, d: int, rng: RngStream):
    """Sample the window, then the exterior needed for r_max-neighborhoods.

    Returns (interior, exterior).  The joint law agrees with a global
    Poisson process restricted to W union the sampled exterior cover, so
    any statistic that only looks within distance r_max of interior
    points is computed under the exact global law.
    """
    interior = sample_region(W, d, rng.child(0))
    ext_regions = dilation_regions(W, r_max, d, interior)
    ext_parts = [sample_region(R, d, rng.child(1, j)) for j, R in enumerate(ext_regions)]
    if ext_parts:
        exterior = concat_configs(ext_parts, seed_path=rng.child(1).path)
    else:
        dh = d - 1
        exterior = PointConfig(
            x=np.empty((0, dh)), y=np.empty(0), seed_path=rng.child(1).path
        )
    return interior, exterior


# --- serialization ------------------------------------------------------

_MAGIC = b"HPTS"
_VERSION = 1


def write_points_csv(fh, config: PointConfig, replicate: int = 0):
    """Append rows 'replicate, region_id, x_1..x_{d-1}, y' to a text stream."""
    dh = config.dim - 1
    for i in range(config.n):
        xs = ",".join(repr(float(v)) for v in config.x[i])
        fh.write(f"{replicate},{int(config.region_id[i])},{xs},{repr(float(config.y[i]))}\n")


def points_to_bytes(config: PointConfig) -> bytes:
    """Versioned binary dump: magic, version, d, count, then row-major
    float64 coordinates (x then y per point)."""
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<HIq", _VERSION, config.dim, config.n))
    rows = np.concatenate([config.x, config.y[:, None]], axis=1)
    buf.write(np.ascontiguousarray(rows, dtype="<f8").tobytes())
    return buf.getvalue()


def points_from_bytes(data: bytes) -> PointConfig:
    if data[:4] != _MAGIC:
        raise ValueError("not a point dump")
    version, d, n = struct.unpack_from("<HIq", data, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported dump version {version}")
    off = 4 + struct.calcsize("<HIq")
    rows = np.frombuffer(data, dtype="<f8", count=n * d, offset=off).reshape(n, d)
    return PointConfig(x=rows[:, :-1].copy(), y=rows[:, -1].copy())
