"""Exact geometry of the half-space model of d-dimensional hyperbolic space.

Points are pairs (x, y) with x in R^(d-1) and height y > 0; the volume
density is y^(-d) with respect to Lebesgue measure.  A hyperbolic ball of
radius r centered at (x, y) is the Euclidean ball with center
(x, y*cosh(r)) and radius y*sinh(r), which makes bounding boxes and
containment tests exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

__all__ = [
    "HPoint",
    "Region",
    "BallSpec",
    "acosh1p",
    "dist_hyp",
    "dist_hyp_arrays",
    "phi_dist",
    "sphere_area",
    "ball_volume",
    "ball_volume_arr",
    "inverse_ball_volume",
    "region_volume",
    "ball_bbox",
    "ball_in_region",
    "box_subtract",
]


def acosh1p(t):
    """arcosh(1 + t) for t >= 0, stable near t = 0."""
    t = np.asarray(t, dtype=float)
    out = np.log1p(t + np.sqrt(t * (t + 2.0)))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class HPoint:
    """A point of hyperbolic space in half-space coordinates."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        if not self.y > 0:
            raise ValueError(f"height must be positive, got {self.y}")

    @property
    def dim(self) -> int:
        """Ambient dimension d."""
        return self.x.shape[0] + 1


@dataclass(frozen=True)
class Region:
    """Axis-aligned product region: horizontal box times height interval.

    y_hi may be math.inf for height-unbounded regions (e.g. sampling
    windows); it is a genuine sentinel, never a large float.
    """

    lo: np.ndarray
    hi: np.ndarray
    y_lo: float
    y_hi: float = math.inf

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape:
            raise ValueError("lo/hi dimension mismatch")
        if np.any(lo > hi):
            raise ValueError("requires lo <= hi componentwise")
        if not (0 < self.y_lo <= self.y_hi):
            raise ValueError(f"requires 0 < y_lo <= y_hi, got [{self.y_lo}, {self.y_hi}]")

    @property
    def dim(self) -> int:
        return self.lo.shape[0] + 1

    def contains(self, x, y) -> np.ndarray:
        """Vectorized membership test; x has shape (n, d-1), y has shape (n,)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float)
        ok = (y >= self.y_lo)
        if math.isfinite(self.y_hi):
            ok = ok & (y <= self.y_hi)
        ok = ok & np.all((x >= self.lo) & (x <= self.hi), axis=-1)
        return ok

    def contains_point(self, z: HPoint) -> bool:
        return bool(self.contains(z.x[None, :], np.array([z.y]))[0])


@dataclass(frozen=True)
class BallSpec:
    """Hyperbolic ball given by center and hyperbolic radius."""

    center: HPoint
    radius: float

    def __post_init__(self):
        if not self.radius >= 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")


def dist_hyp(z1: HPoint, z2: HPoint) -> float:
    """Hyperbolic distance arcosh(1 + dist_euc^2 / (2 y1 y2))."""
    if z1.x.shape != z2.x.shape:
        raise ValueError("dimension mismatch between points")
    d2 = float(np.sum((z1.x - z2.x) ** 2)) + (z1.y - z2.y) ** 2
    return float(acosh1p(d2 / (2.0 * z1.y * z2.y)))


def dist_hyp_arrays(x1, y1, x2, y2):
    """Hyperbolic distance on coordinate arrays (broadcasting over rows)."""
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    d2 = np.sum((x1 - x2) ** 2, axis=-1) + (y1 - y2) ** 2
    return acosh1p(d2 / (2.0 * y1 * y2))


def phi_dist(kappa: float, v: float) -> float:
    """Distance of two points with horizontal offset kappa*y1 and height ratio v.

    Evaluates Phi(t) = log t - log 4 + 2 log(1 + sqrt(1 - 4/t)) at
    t = (kappa^2 + (v+1)^2) / v, which always satisfies t >= 4.
    """
    if not v > 0:
        raise ValueError(f"height ratio must be positive, got {v}")
    t = (kappa * kappa + (v + 1.0) * (v + 1.0)) / v
    s = math.sqrt(max(0.0, 1.0 - 4.0 / t))
    return math.log(t / 4.0) + 2.0 * math.log1p(s)


def sphere_area(d: int) -> float:
    """Surface content of the (d-1)-dimensional Euclidean unit sphere."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(r: float, d: int) -> float:
    """Hyperbolic volume of a ball of radius r in dimension d >= 2.

    Closed forms for d = 2 and d = 3; adaptive quadrature of
    sphere_area(d) * sinh^(d-1) otherwise (relative tolerance 1e-12).
    """
    if r < 0:
        raise ValueError(f"radius must be nonnegative, got {r}")
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    if r == 0.0:
        return 0.0
    if d == 2:
        # 2*pi*(cosh r - 1), cancellation-free for small r
        return 4.0 * math.pi * math.sinh(0.5 * r) ** 2
    if d == 3:
        return math.pi * math.sinh(2.0 * r) - 2.0 * math.pi * r
    val, _ = quad(lambda u: math.sinh(u) ** (d - 1), 0.0, r, epsabs=0.0, epsrel=1e-12, limit=200)
    return sphere_area(d) * val


def ball_volume_arr(r, d: int):
    """Vectorized ball volume; fast closed forms for d in {2, 3}."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    if d == 2:
        return 4.0 * np.pi * np.sinh(0.5 * r) ** 2
    if d == 3:
        return np.pi * np.sinh(2.0 * r) - 2.0 * np.pi * r
    return np.vectorize(lambda ri: ball_volume(float(ri), d))(r)


def inverse_ball_volume(V: float, d: int) -> float:
    """The unique r with ball_volume(r, d) = V; round-trips to ~1e-12."""
    if V < 0:
        raise ValueError(f"volume must be nonnegative, got {V}")
    if V == 0.0:
        return 0.0
    if d == 2:
        return float(acosh1p(V / (2.0 * math.pi)))
    # monotone bracket: double r_hi from 1 (exponential growth of the volume
    # guarantees a bracket within ~60 doublings)
    r_hi = 1.0
    while ball_volume(r_hi, d) < V:
        r_hi *= 2.0
        if r_hi > 1e6:
            raise ValueError(f"volume {V} out of representable range")
    from scipy.optimize import brentq

    return float(brentq(lambda r: ball_volume(r, d) - V, 0.0, r_hi, xtol=1e-13, rtol=8.9e-16))


def region_volume(R: Region, d: int) -> float:
    """Hyperbolic volume of an axis-aligned region.

    Equals |hi-lo|_leb * (y_lo^-(d-1) - y_hi^-(d-1)) / (d-1); an infinite
    y_hi contributes zero to the second term.
    """
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    if R.lo.shape[0] != d - 1:
        raise ValueError("region dimension does not match d")
    leb = float(np.prod(R.hi - R.lo))
    top = 0.0 if math.isinf(R.y_hi) else R.y_hi ** (-(d - 1))
    return leb * (R.y_lo ** (-(d - 1)) - top) / (d - 1)


def ball_bbox(b: BallSpec) -> Region:
    """Tightest axis-aligned region containing a hyperbolic ball.

    Heights span [y e^-r, y e^r]; the horizontal extent is y sinh r in
    every coordinate, attained at height y cosh r.
    """
    y, r = b.center.y, b.radius
    pad = y * math.sinh(r)
    return Region(
        lo=b.center.x - pad,
        hi=b.center.x + pad,
        y_lo=y * math.exp(-r),
        y_hi=y * math.exp(r),
    )


def ball_in_region(b: BallSpec, R: Region) -> bool:
    """Exact test whether every point of the ball lies in the region.

    Once the full height extent [y e^-r, y e^r] fits, the extremal
    horizontal offset y sinh r is attained inside the region, so the
    test reduces to the bounding box.
    """
    y, r = b.center.y, b.radius
    if y * math.exp(-r) < R.y_lo:
        return False
    if math.isfinite(R.y_hi) and y * math.exp(r) > R.y_hi:
        return False
    pad = y * math.sinh(r)
    return bool(np.all(b.center.x - pad >= R.lo) and np.all(b.center.x + pad <= R.hi))


def box_subtract(lo, hi, sub_lo, sub_hi):
    """Decompose box [lo, hi] minus box [sub_lo, sub_hi] into disjoint boxes.

    Standard slab peeling, at most 2 pieces per axis.  Boxes are plain
    (lo, hi) pairs of 1-d float arrays.
    """
    lo = np.asarray(lo, dtype=float).copy()
    hi = np.asarray(hi, dtype=float).copy()
    sub_lo = np.asarray(sub_lo, dtype=float)
    sub_hi = np.asarray(sub_hi, dtype=float)
    clip_lo = np.maximum(lo, sub_lo)
    clip_hi = np.minimum(hi, sub_hi)
    if np.any(clip_lo >= clip_hi):
        return [(lo, hi)] if np.all(lo < hi) else []
    pieces = []
    for ax in range(lo.shape[0]):
        if lo[ax] < clip_lo[ax]:
            p_lo, p_hi = lo.copy(), hi.copy()
            p_hi[ax] = clip_lo[ax]
            pieces.append((p_lo, p_hi))
            lo[ax] = clip_lo[ax]
        if clip_hi[ax] < hi[ax]:
            p_lo, p_hi = lo.copy(), hi.copy()
            p_lo[ax] = clip_hi[ax]
            pieces.append((p_lo, p_hi))
            hi[ax] = clip_hi[ax]
    return [(p_lo, p_hi) for p_lo, p_hi in pieces if np.all(p_lo < p_hi)]
