"""Window blocking, internal regions, and the exceedance point processes.

The window is split into congruent vertical blocks; each block has an
internal region obtained by shrinking its horizontal cross-section at
height y by the margin y*e^r_w, which keeps the r_w-ball of any internal
point inside the block's full-height column.  On top of this sit the
three measures of interest: the exceedance process xi (full window), the
separated per-block process eta, and the Poisson reference process zeta.

Neighbor searches for eta are restricted to the block column
S_m x (0, inf): points of the column below the window floor do count.
Restricting instead to the window-truncated block would inflate the
exceedance intensity of low points by the truncated ball volume and
break the analytic intensity formula (the formula integrates the full
ball volume); the exterior configurations supplied by the sampler carry
exactly those below-window points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .geometry import HPoint, Region, ball_volume_arr
from .limitlaw import Regime, r_threshold
from .nnscore import LayeredIndex
from .rng import RngStream
from .sampler import PointConfig

__all__ = [
    "AtomMeasure",
    "BlockSet",
    "BoundaryCounts",
    "build_blocks",
    "internal_region_margin",
    "internal_mask",
    "in_internal_region",
    "internal_volume_ratio",
    "build_xi",
    "xi_exceed_counts",
    "build_eta",
    "sample_zeta",
    "boundary_counts",
    "layer_regions",
]


@dataclass(frozen=True)
class AtomMeasure:
    """Finite measure on [s0, inf) given by weighted atoms.

    Censored atoms sit at u_cap with a flag: their true value is known
    to exceed u_cap but was not resolved.
    """

    values: np.ndarray
    weights: np.ndarray
    censored: np.ndarray
    s0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        censored = np.asarray(self.censored, dtype=bool)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "censored", censored)
        if not (values.shape == weights.shape == censored.shape):
            raise ValueError("atom array shape mismatch")
        if np.any(values < self.s0):
            raise ValueError("atom below s0")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")

    @classmethod
    def empty(cls, s0: float = 0.0) -> "AtomMeasure":
        return cls(values=np.empty(0), weights=np.empty(0), censored=np.empty(0, dtype=bool), s0=s0)

    @classmethod
    def from_values(cls, values, s0: float = 0.0, censored=None) -> "AtomMeasure":
        values = np.asarray(values, dtype=float)
        if censored is None:
            censored = np.zeros(values.shape, dtype=bool)
        return cls(values=values, weights=np.ones_like(values), censored=censored, s0=s0)

    @property
    def n_atoms(self) -> int:
        return self.values.shape[0]

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def mass_above(self, u: float) -> float:
        """Mass of (u, inf); censored atoms exceed any u below u_cap."""
        return float(np.sum(self.weights[(self.values > u) | self.censored]))


@dataclass(frozen=True)
class BlockSet:
    """Congruent vertical blocks tiling the window horizontally."""

    blocks: tuple
    axis_counts: tuple
    y_lo: float

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def block_of(self, x) -> np.ndarray:
        """Flat block index per row of x; -1 for points outside [0,1]^(d-1)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.all((x >= 0.0) & (x <= 1.0), axis=1)
        idx = np.zeros(x.shape[0], dtype=np.int64)
        for ax, c in enumerate(self.axis_counts):
            j = np.clip(np.floor(x[:, ax] * c).astype(np.int64), 0, c - 1)
            idx = idx * c + j
        idx[~inside] = -1
        return idx

    def boundary_distance(self, x) -> np.ndarray:
        """Euclidean distance from each point to its own block's horizontal
        boundary (for points inside [0,1]^(d-1))."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        dist = np.full(x.shape[0], np.inf)
        for ax, c in enumerate(self.axis_counts):
            j = np.clip(np.floor(x[:, ax] * c).astype(np.int64), 0, c - 1)
            lo = j / c
            d_ax = np.minimum(x[:, ax] - lo, lo + 1.0 / c - x[:, ax])
            dist = np.minimum(dist, d_ax)
        return dist


def _axis_counts(nb: int, dh: int) -> tuple:
    """Factor nb into dh near-equal integers (a concrete tiling rule for
    horizontal dimensions above one)."""
    if dh == 1:
        return (nb,)
    counts = []
    rem = nb
    for axes_left in range(dh, 1, -1):
        target = rem ** (1.0 / axes_left)
        best = 1
        for c in range(1, rem + 1):
            if rem % c == 0 and abs(c - target) < abs(best - target):
                best = c
        counts.append(best)
        rem //= best
    counts.append(rem)
    return tuple(sorted(counts))


def build_blocks(regime: Regime) -> BlockSet:
    """Partition the window into floor(u_lam) congruent vertical blocks."""
    nb = int(math.floor(regime.u_lam))
    if nb < 1:
        raise ValueError(f"requires u_lam >= 1, got {regime.u_lam}")
    dh = regime.d - 1
    counts = _axis_counts(nb, dh)
    y_lo = math.exp(-regime.lam)
    blocks = []
    for flat in range(nb):
        lo = np.empty(dh)
        hi = np.empty(dh)
        r = flat
        for ax in range(dh - 1, -1, -1):
            c = counts[ax]
            j = r % c
            r //= c
            lo[ax] = j / c
            hi[ax] = (j + 1) / c
        blocks.append(Region(lo=lo, hi=hi, y_lo=y_lo))
    return BlockSet(blocks=tuple(blocks), axis_counts=counts, y_lo=y_lo)


def internal_region_margin(y, regime: Regime, margin_scale: float = 1.0):
    """Horizontal shrink margin at height y: y * e^r_w.

    margin_scale=0 is the debug mode with no shrinking.
    """
    y = np.asarray(y, dtype=float)
    out = margin_scale * y * math.exp(regime.r_w)
    return out if out.ndim else float(out)


def internal_mask(blockset: BlockSet, x, y, regime: Regime, margin_scale: float = 1.0):
    """Boolean mask of points lying in the internal region of their block."""
    return blockset.boundary_distance(x) >= internal_region_margin(y, regime, margin_scale)


def in_internal_region(z: HPoint, m: int, regime: Regime, blockset: BlockSet | None = None) -> bool:
    if blockset is None:
        blockset = build_blocks(regime)
    block = blockset.blocks[m]
    if not block.contains_point(z):
        raise ValueError(f"point not in block {m}")
    return bool(internal_mask(blockset, z.x[None, :], np.array([z.y]), regime)[0])


def internal_volume_ratio(regime: Regime, margin_scale: float = 1.0) -> float:
    """|Q_m \\ Q_m^-| / |Q_m|: the volume fraction lost to the margin.

    One-dimensional integral over height of y^(-d) times the horizontal
    deficit area; above y* = (shortest side)/(2*margin slope) the whole
    cross-section is lost.
    """
    if margin_scale == 0.0:
        return 0.0
    blockset = build_blocks(regime)
    sides = np.array([1.0 / c for c in blockset.axis_counts])
    slope = margin_scale * math.exp(regime.r_w)
    area = float(np.prod(sides))
    d = regime.d
    y_lo = blockset.y_lo
    y_star = float(np.min(sides)) / (2.0 * slope)
    block_vol = area * y_lo ** (-(d - 1)) / (d - 1)
    if y_star <= y_lo:
        return 1.0

    def deficit(y):
        inner = np.prod(np.maximum(0.0, sides - 2.0 * slope * y))
        return y ** (-d) * (area - inner)

    below, _ = quad(deficit, y_lo, y_star, epsabs=0.0, epsrel=1e-11, limit=200)
    above = area * y_star ** (-(d - 1)) / (d - 1)
    return (below + above) / block_vol


def _scores_from_radii(radii, regime: Regime):
    """Scores and censor flags for exceedance radii; censored atoms are
    recorded at u_cap.  Values are nudged above s0 so that boundary
    rounding cannot break the atom invariant."""
    censored = ~np.isfinite(radii)
    values = np.full(radii.shape, regime.u_cap)
    fin = ~censored
    s = ball_volume_arr(radii[fin], regime.d) - regime.v_lam
    values[fin] = np.maximum(s, np.nextafter(regime.s0, math.inf))
    return values, censored


def build_xi(interior: PointConfig, exterior: PointConfig, regime: Regime) -> AtomMeasure:
    """Exceedance scores of the window points against the full process.

    The exterior must cover the r_cap-neighborhoods of the interior
    points (sample_extended with r_max = r_cap, or the staged equivalent).
    """
    if interior.n == 0:
        return AtomMeasure.empty(regime.s0)
    x = np.concatenate([interior.x, exterior.x], axis=0)
    y = np.concatenate([interior.y, exterior.y])
    idx = LayeredIndex(x, y, r_cap=regime.r_cap)
    qself = np.arange(interior.n, dtype=np.int64)
    k = regime.k
    cnt = idx.count_within(interior.x, interior.y, regime.r_s0, k, qself=qself)
    cand = np.flatnonzero(cnt <= k - 1)
    if cand.size == 0:
        return AtomMeasure.empty(regime.s0)
    radii = idx.knn(interior.x[cand], interior.y[cand], k, qself=qself[cand])
    values, censored = _scores_from_radii(radii, regime)
    return AtomMeasure.from_values(values, s0=regime.s0, censored=censored)


def xi_exceed_counts(interior: PointConfig, exterior: PointConfig, regime: Regime, u_values):
    """Number of points with score above u, for each u, without scoring.

    Uses the equivalence score > u iff at most k-1 other points lie
    within r_threshold(u); the exterior must cover r_threshold(max u)
    neighborhoods of the interior points.
    """
    u_values = np.asarray(u_values, dtype=float)
    out = np.zeros(u_values.shape, dtype=np.int64)
    if interior.n == 0:
        return out
    x = np.concatenate([interior.x, exterior.x], axis=0)
    y = np.concatenate([interior.y, exterior.y])
    r_max = r_threshold(float(np.max(u_values)), regime)
    idx = LayeredIndex(x, y, r_cap=r_max)
    qself = np.arange(interior.n, dtype=np.int64)
    for j, u in enumerate(u_values):
        cnt = idx.count_within(interior.x, interior.y, r_threshold(float(u), regime),
                               regime.k, qself=qself)
        out[j] = int(np.sum(cnt <= regime.k - 1))
    return out


def _column_labels(blockset: BlockSet, interior: PointConfig, exterior: PointConfig | None):
    """Stack window and exterior coordinates with block-column labels.

    Exterior points horizontally outside [0,1]^(d-1) get label -1 and are
    invisible to any column-restricted query.
    """
    if exterior is None or exterior.n == 0:
        x, y = interior.x, interior.y
        labels = blockset.block_of(interior.x)
    else:
        x = np.concatenate([interior.x, exterior.x], axis=0)
        y = np.concatenate([interior.y, exterior.y])
        labels = np.concatenate([blockset.block_of(interior.x), blockset.block_of(exterior.x)])
    return x, y, labels


def build_eta(
    interior: PointConfig,
    regime: Regime,
    blockset: BlockSet,
    exterior: PointConfig | None = None,
    margin_scale: float = 1.0,
):
    """Separated per-block exceedance processes and their sum.

    Centers are the window points of each internal region; neighbor
    search is restricted to the center's block column (window points of
    the block plus any exterior points below it).  Returns (eta, per-block
    list).
    """
    nb = blockset.n_blocks
    if interior.n == 0:
        empty = AtomMeasure.empty(regime.s0)
        return empty, [empty] * nb
    x, y, labels = _column_labels(blockset, interior, exterior)
    idx = LayeredIndex(x, y, r_cap=regime.r_cap, labels=labels)
    q_block = labels[: interior.n]
    qself_all = np.arange(interior.n, dtype=np.int64)
    internal = internal_mask(blockset, interior.x, interior.y, regime, margin_scale)
    sel = np.flatnonzero(internal)
    k = regime.k
    cnt = idx.count_within(
        interior.x[sel], interior.y[sel], regime.r_s0, k,
        qlab=q_block[sel], qself=qself_all[sel],
    )
    exc = sel[cnt <= k - 1]
    if exc.size:
        radii = idx.knn(
            interior.x[exc], interior.y[exc], k, qlab=q_block[exc], qself=qself_all[exc]
        )
        values, censored = _scores_from_radii(radii, regime)
    else:
        values = np.empty(0)
        censored = np.empty(0, dtype=bool)
    per_block = []
    for m in range(nb):
        pick = q_block[exc] == m
        per_block.append(
            AtomMeasure.from_values(values[pick], s0=regime.s0, censored=censored[pick])
        )
    eta = AtomMeasure.from_values(values, s0=regime.s0, censored=censored)
    return eta, per_block


def sample_zeta(regime: Regime, rng: RngStream, scale: float = 1.0) -> AtomMeasure:
    """Poisson reference process on [s0, inf) with intensity
    scale * u_lam * tau_k: Poisson count, i.i.d. shifted-exponential atoms."""
    gen = rng.generator()
    mean = scale * regime.u_lam * regime.ref.total_mass
    n = int(gen.poisson(mean))
    values = regime.s0 + gen.standard_exponential(n)
    return AtomMeasure.from_values(values, s0=regime.s0)


@dataclass(frozen=True)
class BoundaryCounts:
    """Exceedance counts split by internal/boundary location and radius.

    boundary means the window minus all internal regions.  The two
    pairings of interest are (internal_rw, boundary_rs0) — internal
    points with huge kNN radius, boundary points that are plain
    exceedances — and the transposed pair; all four are reported.
    """

    internal_rw: int
    boundary_rw: int
    internal_rs0: int
    boundary_rs0: int


def boundary_counts(
    interior: PointConfig,
    exterior: PointConfig,
    regime: Regime,
    blockset: BlockSet,
    margin_scale: float = 1.0,
) -> BoundaryCounts:
    """Count window points whose full-process kNN radius exceeds r_w or
    r_s0, split by membership in the internal regions.

    The exterior must cover r_w-neighborhoods of the window points.
    """
    if interior.n == 0:
        return BoundaryCounts(0, 0, 0, 0)
    x = np.concatenate([interior.x, exterior.x], axis=0)
    y = np.concatenate([interior.y, exterior.y])
    idx = LayeredIndex(x, y, r_cap=max(regime.r_w, regime.r_s0))
    qself = np.arange(interior.n, dtype=np.int64)
    k = regime.k
    over_rw = idx.count_within(interior.x, interior.y, regime.r_w, k, qself=qself) <= k - 1
    over_rs0 = idx.count_within(interior.x, interior.y, regime.r_s0, k, qself=qself) <= k - 1
    internal = internal_mask(blockset, interior.x, interior.y, regime, margin_scale)
    return BoundaryCounts(
        internal_rw=int(np.sum(over_rw & internal)),
        boundary_rw=int(np.sum(over_rw & ~internal)),
        internal_rs0=int(np.sum(over_rs0 & internal)),
        boundary_rs0=int(np.sum(over_rs0 & ~internal)),
    )


def layer_regions(regime: Regime, block: Region):
    """Vertical layer decomposition of a block with a diluted box family.

    The layer thickness is a small perturbation r' of r_threshold(s0)
    chosen so the block side is exactly e^(-lam + (l0+2) r'); layers
    l = 0..l0 plus the unbounded tail partition the block.  For each
    layer, the diluted family consists of congruent sub-boxes of
    horizontal side e^(-lam + (l+1) r') spaced 8 sides apart.
    Returns (layers, tail, diluted) with diluted a list per layer.
    """
    lam = regime.lam
    r0 = regime.r_s0
    side = float(np.min(block.hi - block.lo))
    l0 = max(1, round((lam + math.log(side)) / r0) - 2)
    r_adj = (lam + math.log(side)) / (l0 + 2)
    layers = []
    for ell in range(l0 + 1):
        layers.append(
            Region(
                lo=block.lo,
                hi=block.hi,
                y_lo=math.exp(-lam + ell * r_adj),
                y_hi=math.exp(-lam + (ell + 1) * r_adj),
            )
        )
    tail = Region(lo=block.lo, hi=block.hi, y_lo=math.exp(-lam + (l0 + 1) * r_adj))
    diluted = []
    dh = regime.d - 1
    for ell in range(l0 + 1):
        sub = math.exp(-lam + (ell + 1) * r_adj)
        spacing = 8.0 * sub
        per_axis = []
        for ax in range(dh):
            starts = []
            z = 0
            while block.lo[ax] + z * spacing + sub <= block.hi[ax] + 1e-12 * sub:
                starts.append(block.lo[ax] + z * spacing)
                z += 1
            per_axis.append(starts)
        boxes = []
        grids = np.meshgrid(*[np.asarray(s) for s in per_axis], indexing="ij")
        combos = np.stack([g.ravel() for g in grids], axis=1) if grids else np.empty((0, dh))
        for lo in combos:
            boxes.append(
                Region(lo=lo, hi=lo + sub, y_lo=layers[ell].y_lo, y_hi=layers[ell].y_hi)
            )
        diluted.append(boxes)
    return layers, tail, diluted
