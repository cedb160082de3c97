"""Replicate orchestration: staged sampling, scoring, artifacts.

A replicate is simulated in two sampling stages.  Stage one draws the
window and a dilation cover deep enough to decide every exceedance
(radius r_dep, at least r_threshold(s0)).  Stage two extends the cover
to radius r_cap around the exceedance candidates only, which is what
makes exact scores affordable: the deep cover is needed for a handful
of points, not for the whole window.  Stage-two points never enter any
stage-one ball (the covers are disjoint by construction), so candidate
sets computed before the extension remain exact afterwards.

Everything is deterministic given (master_seed, replicate): streams are
keyed by path, so results are independent of worker count and resume
points.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .blocks import (
    AtomMeasure,
    BlockSet,
    BoundaryCounts,
    build_blocks,
    internal_mask,
    internal_volume_ratio,
    sample_zeta,
)
from .geometry import ball_volume_arr, region_volume
from .limitlaw import Regime, poisson_lower_tail, r_threshold, solve_regime
from .nnscore import LayeredIndex
from .rng import RngStream
from .sampler import PointConfig, concat_configs, dilation_regions, sample_region

__all__ = [
    "ExperimentConfig",
    "SimOptions",
    "RunData",
    "simulate_replicate",
    "run_experiment",
    "load_run",
    "compare_run",
    "mecke_expectation",
    "eta_block_expectation",
]


@dataclass(frozen=True)
class SimOptions:
    """What to compute per replicate."""

    mecke_u: tuple = ()  # exceedance counts of the full process above these levels
    xi_scores: bool = False
    eta_scores: bool = True
    boundary: bool = True
    zeta: bool = True
    count_only: bool = False  # only the number of exceedances above s0


@dataclass(frozen=True)
class ExperimentConfig:
    d: int = 2
    k: int = 1
    s0: float = 0.0
    lam: float = 8.0
    target_u: float = 20.0
    u_cap: float | None = None
    w_lam: float | None = None
    replicates: int = 100
    master_seed: int = 0
    parallel: int = 1
    options: SimOptions = field(default_factory=SimOptions)

    def regime(self) -> Regime:
        return solve_regime(
            self.d, self.k, self.s0, self.lam, self.target_u,
            u_cap=self.u_cap, w_lam=self.w_lam,
        )

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _sample_cover(W, regions, d, stream):
    parts = [sample_region(R, d, stream.child(j)) for j, R in enumerate(regions)]
    if not parts:
        return PointConfig(x=np.empty((0, d - 1)), y=np.empty(0), seed_path=stream.path)
    return concat_configs(parts, seed_path=stream.path)


def simulate_replicate(
    regime: Regime,
    blockset: BlockSet,
    master_seed: int,
    rep: int,
    opts: SimOptions,
) -> dict:
    """One full replicate; returns a dict of plain arrays and scalars."""
    t0 = time.perf_counter()
    stream = RngStream(master_seed, ("rep", rep))
    d = regime.d
    k = regime.k
    W = regime.window
    step = regime.r_s0 / 2.0
    interior = sample_region(W, d, stream.child(0))
    out = {"replicate": rep, "n_interior": interior.n}

    r_dep = regime.r_s0
    if opts.boundary and not opts.count_only:
        r_dep = max(r_dep, regime.r_w)
    if opts.mecke_u:
        r_dep = max(r_dep, r_threshold(max(opts.mecke_u), regime))
    regs1 = dilation_regions(W, r_dep, d, interior, step=step)
    ext1 = _sample_cover(W, regs1, d, stream.child(1))
    out["n_exterior"] = ext1.n

    if interior.n == 0:
        out.update(
            xi_count=0, mecke_counts=np.zeros(len(opts.mecke_u), dtype=np.int64),
            eta_values=np.empty(0), eta_block=np.empty(0, dtype=np.int64),
            eta_censored=np.empty(0, dtype=bool),
        )
        if opts.zeta and not opts.count_only:
            out["zeta_values"], out["zeta_block"] = _zeta_blocks(regime, blockset, stream)
        out["elapsed_s"] = time.perf_counter() - t0
        return out

    labels = np.concatenate([blockset.block_of(interior.x), blockset.block_of(ext1.x)])
    allx = np.concatenate([interior.x, ext1.x], axis=0)
    ally = np.concatenate([interior.y, ext1.y])
    idx1 = LayeredIndex(allx, ally, r_cap=regime.r_cap, labels=labels)
    qself = np.arange(interior.n, dtype=np.int64)

    cnt_s0 = idx1.count_within(interior.x, interior.y, regime.r_s0, k, qself=qself)
    xi_cand = cnt_s0 <= k - 1
    out["xi_count"] = int(np.sum(xi_cand))
    if opts.count_only:
        out["elapsed_s"] = time.perf_counter() - t0
        return out

    if opts.mecke_u:
        mc = np.empty(len(opts.mecke_u), dtype=np.int64)
        for j, u in enumerate(opts.mecke_u):
            c = idx1.count_within(interior.x, interior.y, r_threshold(float(u), regime),
                                  k, qself=qself)
            mc[j] = int(np.sum(c <= k - 1))
        out["mecke_counts"] = mc

    internal = internal_mask(blockset, interior.x, interior.y, regime)
    if opts.boundary:
        over_rw = idx1.count_within(interior.x, interior.y, regime.r_w, k, qself=qself) <= k - 1
        out["boundary_counts"] = BoundaryCounts(
            internal_rw=int(np.sum(over_rw & internal)),
            boundary_rw=int(np.sum(over_rw & ~internal)),
            internal_rs0=int(np.sum(xi_cand & internal)),
            boundary_rs0=int(np.sum(xi_cand & ~internal)),
        )

    eta_cand = np.empty(0, dtype=np.int64)
    if opts.eta_scores:
        sel = np.flatnonzero(internal)
        ccol = idx1.count_within(
            interior.x[sel], interior.y[sel], regime.r_s0, k,
            qlab=labels[sel], qself=sel,
        )
        eta_cand = sel[ccol <= k - 1]

    # stage two: deepen the cover to r_cap around all scoring candidates
    anchors_idx = np.unique(
        np.concatenate([eta_cand, np.flatnonzero(xi_cand) if opts.xi_scores else np.empty(0, dtype=np.int64)])
    )
    need_scores = (opts.eta_scores and eta_cand.size > 0) or (
        opts.xi_scores and np.any(xi_cand)
    )
    if need_scores and anchors_idx.size:
        anchors = interior.subset(anchors_idx)
        regs2 = dilation_regions(W, regime.r_cap, d, anchors, step=step, minus=regs1)
        ext2 = _sample_cover(W, regs2, d, stream.child(2))
        if ext2.n:
            allx = np.concatenate([allx, ext2.x], axis=0)
            ally = np.concatenate([ally, ext2.y])
            labels = np.concatenate([labels, blockset.block_of(ext2.x)])
            idx1 = LayeredIndex(allx, ally, r_cap=regime.r_cap, labels=labels)
        out["n_exterior"] += ext2.n

    if opts.eta_scores:
        radii = idx1.knn(
            interior.x[eta_cand], interior.y[eta_cand], k,
            qlab=labels[eta_cand], qself=eta_cand,
        )
        values, censored = _scores(radii, regime)
        out["eta_values"] = values
        out["eta_block"] = labels[eta_cand]
        out["eta_censored"] = censored
    if opts.xi_scores:
        cand = np.flatnonzero(xi_cand)
        radii = idx1.knn(interior.x[cand], interior.y[cand], k, qself=cand)
        values, censored = _scores(radii, regime)
        out["xi_values"] = values
        out["xi_censored"] = censored
    if opts.zeta:
        out["zeta_values"], out["zeta_block"] = _zeta_blocks(regime, blockset, stream)
    out["elapsed_s"] = time.perf_counter() - t0
    return out


def _scores(radii, regime):
    censored = ~np.isfinite(radii)
    values = np.full(radii.shape, regime.u_cap)
    fin = ~censored
    s = ball_volume_arr(radii[fin], regime.d) - regime.v_lam
    values[fin] = np.maximum(s, np.nextafter(regime.s0, math.inf))
    return values, censored


def _zeta_blocks(regime, blockset, stream):
    vals, blk = [], []
    scale = 1.0 / blockset.n_blocks
    for m in range(blockset.n_blocks):
        am = sample_zeta(regime, stream.child(3, m), scale=scale)
        vals.append(am.values)
        blk.append(np.full(am.n_atoms, m, dtype=np.int64))
    return np.concatenate(vals), np.concatenate(blk)


@dataclass
class RunData:
    """In-memory results of a run: one dict per replicate, in order."""

    config: ExperimentConfig
    regime: Regime
    blockset: BlockSet
    reps: list

    def eta_measures(self, block: int | None = None):
        out = []
        for r in self.reps:
            v, b, c = r["eta_values"], r["eta_block"], r["eta_censored"]
            if block is not None:
                pick = b == block
                v, c = v[pick], c[pick]
            out.append(AtomMeasure.from_values(v, s0=self.regime.s0, censored=c))
        return out

    def zeta_measures(self, block: int | None = None):
        out = []
        for r in self.reps:
            v, b = r["zeta_values"], r["zeta_block"]
            if block is not None:
                v = v[b == block]
            out.append(AtomMeasure.from_values(v, s0=self.regime.s0))
        return out

    def xi_counts(self) -> np.ndarray:
        return np.array([r["xi_count"] for r in self.reps], dtype=np.int64)

    def mecke_counts(self) -> np.ndarray:
        return np.array([r["mecke_counts"] for r in self.reps], dtype=np.int64)

    def boundary_table(self) -> np.ndarray:
        rows = [
            (
                bc.internal_rw, bc.boundary_rw, bc.internal_rs0, bc.boundary_rs0,
            )
            for bc in (r["boundary_counts"] for r in self.reps)
        ]
        return np.array(rows, dtype=np.int64)


def _replicate_task(args):
    regime, blockset, seed, rep, opts = args
    return simulate_replicate(regime, blockset, seed, rep, opts)


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | None = None,
    resume: bool = False,
    progress: bool = False,
) -> RunData:
    """Run all replicates (optionally in a process pool) and collect
    results in replicate order; write artifacts when out_dir is given."""
    regime = config.regime()
    blockset = build_blocks(regime)
    opts = config.options
    done = {}
    if out_dir and resume and os.path.isdir(out_dir):
        done = {r["replicate"]: r for r in _read_reps(out_dir, opts)}
    todo = [r for r in range(config.replicates) if r not in done]
    tasks = [(regime, blockset, config.master_seed, rep, opts) for rep in todo]
    fresh = {}
    if config.parallel > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.parallel) as pool:
            chunk = max(1, len(tasks) // (8 * config.parallel))
            for res in pool.map(_replicate_task, tasks, chunksize=chunk):
                fresh[res["replicate"]] = res
                if progress and res["replicate"] % 100 == 0:
                    print(f"replicate {res['replicate']} done", flush=True)
    else:
        for t in tasks:
            res = _replicate_task(t)
            fresh[res["replicate"]] = res
            if progress and res["replicate"] % 100 == 0:
                print(f"replicate {res['replicate']} done", flush=True)
    reps = [done.get(r, fresh.get(r)) for r in range(config.replicates)]
    run = RunData(config=config, regime=regime, blockset=blockset, reps=reps)
    if out_dir:
        _write_run(run, out_dir)
    return run


# --- analytic comparisons ----------------------------------------------


def mecke_expectation(u: float, regime: Regime) -> float:
    """E[number of full-process scores above u] = |W| * P(Pois(u+v) <= k-1)."""
    return regime.window_volume * poisson_lower_tail(regime.k - 1, u + regime.v_lam)


def eta_block_expectation(u: float, regime: Regime, blockset: BlockSet) -> float:
    """E[per-block separated-process mass above u] = |Q^-| * P(Pois(u+v) <= k-1)."""
    q_vol = region_volume(blockset.blocks[0], regime.d)
    q_minus = q_vol * (1.0 - internal_volume_ratio(regime))
    return q_minus * poisson_lower_tail(regime.k - 1, u + regime.v_lam)


def _mean_se(values) -> tuple:
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(n))


def compare_run(run: RunData) -> dict:
    """Summary report: Mecke checks, eta/zeta masses, boundary ratios."""
    regime = run.regime
    report = {"regime": regime.to_dict(), "replicates": len(run.reps)}
    opts = run.config.options
    if opts.mecke_u:
        rows = []
        mc = run.mecke_counts()
        for j, u in enumerate(opts.mecke_u):
            mean, se = _mean_se(mc[:, j])
            expect = mecke_expectation(float(u), regime)
            rows.append(
                {"u": float(u), "mean": mean, "se": se, "expected": expect,
                 "z": (mean - expect) / se if se > 0 else 0.0}
            )
        report["mecke"] = rows
    if opts.eta_scores:
        eta_tot = [r["eta_values"].shape[0] for r in run.reps]
        mean, se = _mean_se(eta_tot)
        expect = run.blockset.n_blocks * eta_block_expectation(regime.s0, regime, run.blockset)
        report["eta_total"] = {"mean": mean, "se": se, "expected": expect,
                               "z": (mean - expect) / se if se > 0 else 0.0}
    if opts.zeta:
        zeta_tot = [r["zeta_values"].shape[0] for r in run.reps]
        mean, se = _mean_se(zeta_tot)
        report["zeta_total"] = {"mean": mean, "se": se,
                                "expected": regime.u_lam * regime.ref.total_mass}
    if opts.boundary:
        bt = run.boundary_table()
        u = regime.u_lam
        report["boundary"] = {
            "internal_rw_over_u": float(np.mean(bt[:, 0])) / u,
            "boundary_rw_over_u": float(np.mean(bt[:, 1])) / u,
            "internal_rs0_over_u": float(np.mean(bt[:, 2])) / u,
            "boundary_rs0_over_u": float(np.mean(bt[:, 3])) / u,
        }
    return report


# --- artifacts ----------------------------------------------------------


def _atom_csv_path(out_dir, name):
    return os.path.join(out_dir, f"{name}.csv")


def _write_run(run: RunData, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    opts = run.config.options
    meta = {
        "config": asdict(run.config),
        "config_hash": run.config.config_hash(),
        "regime": run.regime.to_dict(),
        "n_blocks": run.blockset.n_blocks,
        "axis_counts": list(run.blockset.axis_counts),
    }
    with open(os.path.join(out_dir, "regime.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
    if not run.reps:
        return
    with open(_atom_csv_path(out_dir, "counts"), "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["replicate", "n_interior", "n_exterior", "xi_count"]
        header += [f"mecke_{u}" for u in opts.mecke_u]
        if opts.boundary and not opts.count_only:
            header += ["internal_rw", "boundary_rw", "internal_rs0", "boundary_rs0"]
        w.writerow(header)
        for r in run.reps:
            row = [r["replicate"], r["n_interior"], r["n_exterior"], r["xi_count"]]
            if opts.mecke_u:
                row += [int(v) for v in r["mecke_counts"]]
            if opts.boundary and not opts.count_only:
                bc = r["boundary_counts"]
                row += [bc.internal_rw, bc.boundary_rw, bc.internal_rs0, bc.boundary_rs0]
            w.writerow(row)
    if opts.count_only:
        return
    for name, keys in (
        ("eta", ("eta_values", "eta_block", "eta_censored")),
        ("zeta", ("zeta_values", "zeta_block", None)),
        ("xi", ("xi_values", None, "xi_censored")),
    ):
        if keys[0] not in run.reps[0]:
            continue
        with open(_atom_csv_path(out_dir, name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "block", "value", "weight", "censored"])
            for r in run.reps:
                vals = r[keys[0]]
                blk = r[keys[1]] if keys[1] else np.full(vals.shape, -1, dtype=np.int64)
                cen = r[keys[2]] if keys[2] else np.zeros(vals.shape, dtype=bool)
                for v, b, c in zip(vals, blk, cen):
                    w.writerow([r["replicate"], int(b), repr(float(v)), 1.0, int(c)])
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(compare_run(run), fh, indent=2)


def _read_reps(out_dir: str, opts: SimOptions) -> list:
    path = _atom_csv_path(out_dir, "counts")
    if not os.path.exists(path):
        return []
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    atom_data = {}
    for name in ("eta", "zeta", "xi"):
        p = _atom_csv_path(out_dir, name)
        if os.path.exists(p):
            with open(p, newline="") as fh:
                atom_data[name] = list(csv.DictReader(fh))
    reps = []
    for row in rows:
        rep = int(row["replicate"])
        rec = {
            "replicate": rep,
            "n_interior": int(row["n_interior"]),
            "n_exterior": int(row["n_exterior"]),
            "xi_count": int(row["xi_count"]),
        }
        mu = [k for k in row if k.startswith("mecke_")]
        if mu:
            rec["mecke_counts"] = np.array([int(row[k]) for k in mu], dtype=np.int64)
        if "internal_rw" in row:
            rec["boundary_counts"] = BoundaryCounts(
                internal_rw=int(row["internal_rw"]),
                boundary_rw=int(row["boundary_rw"]),
                internal_rs0=int(row["internal_rs0"]),
                boundary_rs0=int(row["boundary_rs0"]),
            )
        for name, (vk, bk, ck) in (
            ("eta", ("eta_values", "eta_block", "eta_censored")),
            ("zeta", ("zeta_values", "zeta_block", None)),
            ("xi", ("xi_values", None, "xi_censored")),
        ):
            if name not in atom_data:
                continue
            mine = [a for a in atom_data[name] if int(a["replicate"]) == rep]
            rec[vk] = np.array([float(a["value"]) for a in mine])
            if bk:
                rec[bk] = np.array([int(a["block"]) for a in mine], dtype=np.int64)
            if ck:
                rec[ck] = np.array([bool(int(a["censored"])) for a in mine])
        reps.append(rec)
    return reps


def load_run(out_dir: str) -> RunData:
    """Rebuild RunData from a run directory written by run_experiment."""
    with open(os.path.join(out_dir, "regime.json")) as fh:
        meta = json.load(fh)
    cfg_dict = dict(meta["config"])
    cfg_dict["options"] = SimOptions(**{
        k: tuple(v) if isinstance(v, list) else v
        for k, v in cfg_dict["options"].items()
    })
    config = ExperimentConfig(**cfg_dict)
    regime = config.regime()
    blockset = build_blocks(regime)
    reps = _read_reps(out_dir, config.options)
    return RunData(config=config, regime=regime, blockset=blockset, reps=reps)
