"""Thresholds and reference laws for the exceedance analysis.

Bundles the parameter regime (dimension, neighbor order, window scale,
volume threshold and derived radii), the exponential reference measure
on the score half-line, the per-block intensity density, and the
relative-entropy rate function evaluated on binned densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp

from .geometry import Region, ball_volume, inverse_ball_volume, region_volume

__all__ = [
    "Regime",
    "RefMeasure",
    "BinnedDensity",
    "poisson_lower_tail",
    "solve_regime",
    "r_threshold",
    "tau_density",
    "tau_mass",
    "q_density",
    "exceed_prob",
    "default_bin_edges",
    "bin_atoms",
    "relative_entropy",
    "scalar_rate",
]


def poisson_lower_tail(k_minus_1: int, mean: float) -> float:
    """P(Poisson(mean) <= k_minus_1), evaluated in log space.

    Stays accurate for means in the hundreds where the naive sum
    underflows term by term.
    """
    if k_minus_1 < 0:
        return 0.0
    if mean <= 0.0:
        return 1.0
    i = np.arange(k_minus_1 + 1)
    return float(np.exp(logsumexp(-mean + i * math.log(mean) - gammaln(i + 1))))


@dataclass(frozen=True)
class RefMeasure:
    """Reference measure with density e^(-u)/(k-1)! on [s0, inf)."""

    k: int
    s0: float = 0.0

    @property
    def total_mass(self) -> float:
        return math.exp(-self.s0) / math.factorial(self.k - 1)


def tau_density(u, ref: RefMeasure):
    u = np.asarray(u, dtype=float)
    out = np.where(u >= ref.s0, np.exp(-u) / math.factorial(ref.k - 1), 0.0)
    return out if out.ndim else float(out)


def tau_mass(a: float, b: float, ref: RefMeasure) -> float:
    """Mass of [a, b] under the reference measure; b may be math.inf."""
    if b < a:
        raise ValueError("requires b >= a")
    a = max(a, ref.s0)
    if b <= a:
        return 0.0
    hi = 0.0 if math.isinf(b) else math.exp(-b)
    return (math.exp(-a) - hi) / math.factorial(ref.k - 1)


@dataclass(frozen=True)
class Regime:
    """Full parameter bundle for one sampling window.

    u_lam = |W|_hyp * e^(-v_lam) * v_lam^(k-1) is the expected number of
    exceedances; w_lam is the block-separation threshold level; scores
    are censored above u_cap.
    """

    d: int
    k: int
    s0: float
    lam: float
    v_lam: float
    w_lam: float
    u_lam: float
    u_cap: float

    def __post_init__(self):
        if self.d < 2 or self.k < 1:
            raise ValueError("requires d >= 2 and k >= 1")
        if not (0 < self.w_lam < self.v_lam):
            raise ValueError(f"requires 0 < w_lam < v_lam, got w={self.w_lam}, v={self.v_lam}")
        u_check = self.window_volume * math.exp(-self.v_lam) * self.v_lam ** (self.k - 1)
        if abs(u_check - self.u_lam) > 1e-9 * max(1.0, abs(self.u_lam)):
            raise ValueError(
                f"inconsistent regime: u_lam={self.u_lam} but derived value is {u_check}"
            )

    @property
    def window_volume(self) -> float:
        return math.exp((self.d - 1) * self.lam) / (self.d - 1)

    @cached_property
    def window(self) -> Region:
        dh = self.d - 1
        return Region(lo=np.zeros(dh), hi=np.ones(dh), y_lo=math.exp(-self.lam))

    @property
    def ref(self) -> RefMeasure:
        return RefMeasure(k=self.k, s0=self.s0)

    @cached_property
    def r_s0(self) -> float:
        """Exceedance radius: the kNN ball volume threshold at level s0."""
        return r_threshold(self.s0, self)

    @cached_property
    def r_w(self) -> float:
        """Block-separation radius at level w_lam."""
        return r_threshold(self.w_lam, self)

    @cached_property
    def r_cap(self) -> float:
        """Censoring radius: scores above u_cap are right-censored."""
        return r_threshold(self.u_cap, self)

    @property
    def divergence_ok(self) -> bool:
        """Finite-scale form of the threshold growth condition."""
        return self.v_lam - (self.d - 1) * self.lam - (self.k - 1) * math.log(self.lam) < 0

    def with_w(self, w_lam: float) -> "Regime":
        return replace(self, w_lam=w_lam)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "k": self.k,
            "s0": self.s0,
            "lam": self.lam,
            "v_lam": self.v_lam,
            "w_lam": self.w_lam,
            "u_lam": self.u_lam,
            "u_cap": self.u_cap,
            "r_s0": self.r_s0,
            "r_w": self.r_w,
            "r_cap": self.r_cap,
            "divergence_ok": self.divergence_ok,
        }


def solve_regime(
    d: int,
    k: int,
    s0: float,
    lam: float,
    target_u: float,
    u_cap: float | None = None,
    w_lam: float | None = None,
) -> Regime:
    """Solve the volume threshold from a target expected exceedance count.

    Inverts u = |W| e^(-v) v^(k-1) on the decreasing branch v > k - 1;
    by default w_lam = sqrt(v_lam) and u_cap = s0 + 40.
    """
    if target_u < 1:
        raise ValueError(f"requires target_u >= 1, got {target_u}")
    wvol = math.exp((d - 1) * lam) / (d - 1)
    if k == 1:
        v = math.log(wvol / target_u)
    else:
        v_min = float(k - 1)
        u_max = wvol * math.exp(-v_min) * v_min ** (k - 1)
        if target_u > u_max:
            raise ValueError(
                f"target_u={target_u} unattainable; the decreasing branch covers (0, {u_max:.6g}]"
            )
        g = lambda v: math.log(wvol) - v + (k - 1) * math.log(v) - math.log(target_u)
        v_hi = v_min + 1.0
        while g(v_hi) > 0:
            v_hi *= 2.0
        v = float(brentq(g, v_min + 1e-12, v_hi, xtol=1e-13, rtol=8.9e-16))
    if v <= 0:
        raise ValueError(f"window too small for target_u={target_u} (v_lam={v:.4g} <= 0)")
    if w_lam is None:
        w_lam = math.sqrt(v)
    if u_cap is None:
        u_cap = s0 + 40.0
    u = wvol * math.exp(-v) * v ** (k - 1)
    return Regime(d=d, k=k, s0=s0, lam=lam, v_lam=v, w_lam=w_lam, u_lam=u, u_cap=u_cap)


def r_threshold(u: float, regime: Regime) -> float:
    """Radius whose ball volume is u + v_lam."""
    V = u + regime.v_lam
    if V < 0:
        raise ValueError(f"requires u + v_lam >= 0, got {V}")
    return inverse_ball_volume(V, regime.d)


def q_density(u, regime: Regime):
    """Intensity density of the per-block separated process at level u."""
    from .blocks import build_blocks, internal_volume_ratio

    blockset = build_blocks(regime)
    q_vol = region_volume(blockset.blocks[0], regime.d) * (1.0 - internal_volume_ratio(regime))
    u = np.asarray(u, dtype=float)
    v = regime.v_lam
    km1 = regime.k - 1
    out = np.where(
        u > regime.s0,
        q_vol * np.exp(-(u + v) + km1 * np.log(u + v) - gammaln(regime.k)),
        0.0,
    )
    return out if out.ndim else float(out)


def exceed_prob(r: float, k: int, d: int) -> float:
    """P(Poisson(|B_r|) <= k - 1): chance that a ball of radius r holds
    fewer than k process points."""
    if r < 0:
        raise ValueError(f"radius must be nonnegative, got {r}")
    return poisson_lower_tail(k - 1, ball_volume(r, d))


# --- relative entropy on binned densities -------------------------------


@dataclass(frozen=True)
class BinnedDensity:
    """A finite measure on [s0, inf) as masses on bins plus an overflow bin.

    edges are strictly increasing and start at s0; masses has one more
    entry than there are internal bins, the last being the mass of
    [edges[-1], inf).
    """

    edges: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "masses", masses)
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if masses.shape[0] != edges.shape[0]:
            raise ValueError("need len(edges) mass entries (internal bins + overflow)")
        if np.any(masses < 0):
            raise ValueError("negative bin mass")

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))


def default_bin_edges(ref: RefMeasure, u_cap: float, n_bins: int = 64) -> np.ndarray:
    """Uniform bins on [s0, min(u_cap, s0 + 20)]; an overflow bin takes the rest."""
    top = min(u_cap, ref.s0 + 20.0)
    return np.linspace(ref.s0, top, n_bins + 1)


def bin_atoms(values, weights, edges, censored=None) -> BinnedDensity:
    """Bin weighted atoms; censored atoms go to the overflow bin."""
    values = np.asarray(values, dtype=float)
    weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if censored is not None:
        censored = np.asarray(censored, dtype=bool)
    else:
        censored = np.zeros(values.shape, dtype=bool)
    n_bins = edges.shape[0] - 1
    masses = np.zeros(n_bins + 1)
    over = censored | (values >= edges[-1])
    masses[n_bins] = float(np.sum(weights[over]))
    idx = np.clip(np.searchsorted(edges, values[~over], side="right") - 1, 0, n_bins - 1)
    np.add.at(masses, idx, weights[~over])
    return BinnedDensity(edges=edges, masses=masses)


def _tau_bin_masses(edges: np.ndarray, ref: RefMeasure) -> np.ndarray:
    out = np.empty(edges.shape[0])
    for i in range(edges.shape[0] - 1):
        out[i] = tau_mass(edges[i], edges[i + 1], ref)
    out[-1] = tau_mass(edges[-1], math.inf, ref)
    return out


def relative_entropy(rho, ref: RefMeasure, edges=None) -> float:
    """Relative entropy of a binned measure against the reference measure.

    sum_b rho_b log(rho_b / tau_b) - rho_tot + tau_tot, with 0 log 0 = 0;
    +inf if rho charges a bin of zero reference mass (impossible below the
    overflow).  Atomic inputs must be binned first (bin_atoms), since raw
    atomic measures are never absolutely continuous.
    """
    if not isinstance(rho, BinnedDensity):
        from .blocks import AtomMeasure

        if isinstance(rho, AtomMeasure):
            if edges is None:
                raise ValueError("binning edges required for atomic input")
            rho = bin_atoms(rho.values, rho.weights, edges, rho.censored)
        else:
            raise TypeError(f"unsupported input {type(rho)!r}")
    tau_b = _tau_bin_masses(rho.edges, ref)
    masses = rho.masses
    if np.any((masses > 0) & (tau_b == 0)):
        return math.inf
    pos = masses > 0
    h = float(np.sum(masses[pos] * np.log(masses[pos] / tau_b[pos])))
    return h - rho.total_mass + ref.total_mass


def scalar_rate(a: float, ref: RefMeasure) -> float:
    """Rate for the total exceedance mass: minimal relative entropy over
    measures of total mass a, i.e. the Poisson rate a log(a/m) - a + m."""
    if a < 0:
        raise ValueError(f"requires a >= 0, got {a}")
    m = ref.total_mass
    if a == 0.0:
        return m
    return a * math.log(a / m) - a + m
