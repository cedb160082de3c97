import json
import math
import os

import numpy as np
import pytest

from hypknn.pipeline import (
    ExperimentConfig,
    SimOptions,
    compare_run,
    eta_block_expectation,
    load_run,
    mecke_expectation,
    run_experiment,
)
from hypknn.limitlaw import poisson_lower_tail


CFG = ExperimentConfig(
    d=2, k=1, lam=5.0, target_u=20.0, replicates=4, master_seed=17,
    options=SimOptions(mecke_u=(0.0, 1.0), xi_scores=True),
)


def test_replicates_are_deterministic():
    a = run_experiment(CFG)
    b = run_experiment(CFG)
    for ra, rb in zip(a.reps, b.reps):
        assert ra["xi_count"] == rb["xi_count"]
        np.testing.assert_array_equal(ra["eta_values"], rb["eta_values"])
        np.testing.assert_array_equal(ra["zeta_values"], rb["zeta_values"])
        np.testing.assert_array_equal(ra["mecke_counts"], rb["mecke_counts"])


def test_zero_replicates_writes_regime_only(tmp_path):
    out = tmp_path / "empty"
    cfg = ExperimentConfig(d=2, k=1, lam=5.0, replicates=0, master_seed=1)
    run_experiment(cfg, out_dir=str(out))
    assert sorted(os.listdir(out)) == ["regime.json"]
    meta = json.loads((out / "regime.json").read_text())
    assert meta["config_hash"] == cfg.config_hash()
    assert meta["regime"]["lam"] == 5.0


def test_run_directory_round_trip(tmp_path):
    out = str(tmp_path / "run")
    run = run_experiment(CFG, out_dir=out)
    for name in ("regime.json", "counts.csv", "eta.csv", "zeta.csv", "xi.csv", "report.json"):
        assert os.path.exists(os.path.join(out, name))
    back = load_run(out)
    assert back.config == CFG
    for ra, rb in zip(run.reps, back.reps):
        assert ra["xi_count"] == rb["xi_count"]
        np.testing.assert_array_equal(np.sort(ra["eta_values"]), np.sort(rb["eta_values"]))
        np.testing.assert_array_equal(ra["mecke_counts"], rb["mecke_counts"])
        bc_a, bc_b = ra["boundary_counts"], rb["boundary_counts"]
        assert bc_a == bc_b


def test_resume_equals_uninterrupted(tmp_path):
    out = str(tmp_path / "resume")
    partial = ExperimentConfig(**{**CFG.__dict__, "replicates": 2})
    run_experiment(partial, out_dir=out)
    resumed = run_experiment(CFG, out_dir=out, resume=True)
    fresh = run_experiment(CFG)
    for ra, rb in zip(resumed.reps, fresh.reps):
        assert ra["xi_count"] == rb["xi_count"]
        np.testing.assert_allclose(np.sort(ra["eta_values"]), np.sort(rb["eta_values"]))


def test_same_seed_twice_byte_identical_csv(tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    run_experiment(CFG, out_dir=out1)
    run_experiment(CFG, out_dir=out2)
    for name in ("counts.csv", "eta.csv", "zeta.csv", "xi.csv"):
        with open(os.path.join(out1, name), "rb") as f1, open(os.path.join(out2, name), "rb") as f2:
            assert f1.read() == f2.read()


def test_config_hash_distinguishes_configs():
    other = ExperimentConfig(**{**CFG.__dict__, "master_seed": 18})
    assert CFG.config_hash() != other.config_hash()
    assert CFG.config_hash() == ExperimentConfig(**CFG.__dict__).config_hash()


def test_mecke_expectation_closed_form():
    reg = CFG.regime()
    assert mecke_expectation(0.0, reg) == pytest.approx(
        reg.window_volume * math.exp(-reg.v_lam)
    )
    assert mecke_expectation(1.0, reg) == pytest.approx(
        reg.window_volume * poisson_lower_tail(0, 1.0 + reg.v_lam)
    )


def test_eta_expectation_below_mecke():
    run = run_experiment(ExperimentConfig(**{**CFG.__dict__, "replicates": 1}))
    reg, bs = run.regime, run.blockset
    per_block = eta_block_expectation(0.0, reg, bs)
    assert 0.0 < per_block * bs.n_blocks < mecke_expectation(0.0, reg)


def test_compare_run_report_shape():
    run = run_experiment(CFG)
    report = compare_run(run)
    assert report["replicates"] == 4
    assert {row["u"] for row in report["mecke"]} == {0.0, 1.0}
    for row in report["mecke"]:
        assert row["expected"] > 0
    assert set(report["boundary"]) == {
        "internal_rw_over_u", "boundary_rw_over_u",
        "internal_rs0_over_u", "boundary_rs0_over_u",
    }
    assert report["zeta_total"]["expected"] == pytest.approx(run.regime.u_lam)


def test_count_only_skips_score_artifacts(tmp_path):
    out = str(tmp_path / "counts")
    cfg = ExperimentConfig(
        d=2, k=1, lam=5.0, replicates=3, master_seed=3,
        options=SimOptions(count_only=True, eta_scores=False, zeta=False, boundary=False),
    )
    run = run_experiment(cfg, out_dir=out)
    assert sorted(os.listdir(out)) == ["counts.csv", "regime.json"]
    assert all("eta_values" not in r for r in run.reps)
    assert all(r["xi_count"] >= 0 for r in run.reps)


def test_parallel_matches_serial():
    par = ExperimentConfig(**{**CFG.__dict__, "parallel": 2})
    a = run_experiment(CFG)
    b = run_experiment(par)
    for ra, rb in zip(a.reps, b.reps):
        assert ra["xi_count"] == rb["xi_count"]
        np.testing.assert_array_equal(ra["eta_values"], rb["eta_values"])
