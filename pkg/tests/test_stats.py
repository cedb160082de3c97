import math

import numpy as np
import pytest
from scipy import stats as spstats

from hypknn.blocks import AtomMeasure
from hypknn.rng import RngStream
from hypknn.stats import (
    BinnedLaw,
    empirical_law_tv,
    ks_statistic,
    poisson_fit,
    tv_discrete,
)


def _single_bin(counts):
    # one real bin plus an empty overflow column
    return np.stack([counts, np.zeros_like(counts)], axis=1)


def test_tv_discrete_identical_measures():
    assert tv_discrete({1: 0.5, 2: 0.5}, {1: 0.5, 2: 0.5}) == 0.0
    assert tv_discrete(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0


def test_tv_discrete_point_masses():
    assert tv_discrete({0: 1.0}, {1: 1.0}) == 1.0
    # unequal total masses: positive part of 2*delta - delta is 1
    assert tv_discrete({0: 2.0}, {0: 1.0}) == 1.0


def test_tv_discrete_is_a_metric(rng):
    for _ in range(50):
        a, b, c = rng.random((3, 6))
        assert tv_discrete(a, b) == tv_discrete(b, a)
        assert tv_discrete(a, c) <= tv_discrete(a, b) + tv_discrete(b, c) + 1e-12
    with pytest.raises(ValueError):
        tv_discrete(np.ones(3), np.ones(4))


def test_binned_law_validation():
    edges = np.linspace(0, 4, 5)
    BinnedLaw(edges=edges, counts=np.zeros((3, 5), dtype=int))
    with pytest.raises(ValueError):
        BinnedLaw(edges=edges, counts=np.zeros((3, 4), dtype=int))
    with pytest.raises(ValueError):
        BinnedLaw(edges=edges, counts=-np.ones((3, 5), dtype=int))


def test_binned_law_from_atom_measures():
    edges = np.linspace(0.0, 2.0, 3)
    measures = [
        AtomMeasure.from_values(np.array([0.5, 1.5, 5.0])),
        AtomMeasure.from_values(np.array([0.1])),
    ]
    law = BinnedLaw.from_atom_measures(measures, edges)
    np.testing.assert_array_equal(law.counts, [[1, 1, 1], [1, 0, 0]])
    assert law.n_replicates == 2


def test_empirical_law_tv_identical_samples():
    edges = np.linspace(0, 4, 5)
    counts = np.random.default_rng(0).poisson(3.0, size=(200, 5))
    law = BinnedLaw(edges=edges, counts=counts)
    res = empirical_law_tv(law, law, cap=20)
    assert res.estimate == 0.0
    assert not res.few_replicates


def test_empirical_law_tv_same_poisson_law_is_small():
    gen = np.random.default_rng(3)
    edges = np.array([0.0, 1.0])
    a = BinnedLaw(edges=edges, counts=_single_bin(gen.poisson(5.0, size=10000)))
    b = BinnedLaw(edges=edges, counts=_single_bin(gen.poisson(5.0, size=10000)))
    res = empirical_law_tv(a, b, cap=20, n_boot=100)
    assert res.estimate < 0.05


def test_empirical_law_tv_detects_different_poisson_means():
    gen = np.random.default_rng(4)
    edges = np.array([0.0, 1.0])
    a = BinnedLaw(edges=edges, counts=_single_bin(gen.poisson(5.0, size=4000)))
    b = BinnedLaw(edges=edges, counts=_single_bin(gen.poisson(7.0, size=4000)))
    res = empirical_law_tv(a, b, cap=20, n_boot=200)
    kk = np.arange(0, 40)
    exact = 0.5 * np.sum(np.abs(spstats.poisson.pmf(kk, 5.0) - spstats.poisson.pmf(kk, 7.0)))
    assert abs(res.estimate - exact) < 0.06
    assert res.ci_low <= res.estimate <= res.ci_high + 1e-12


def test_empirical_law_tv_flags_few_replicates():
    edges = np.array([0.0, 1.0])
    small = BinnedLaw(edges=edges, counts=np.zeros((20, 2), dtype=int))
    res = empirical_law_tv(small, small, n_boot=10)
    assert res.few_replicates


def test_empirical_law_tv_requires_common_edges():
    a = BinnedLaw(edges=np.array([0.0, 1.0]), counts=np.zeros((5, 2), dtype=int))
    b = BinnedLaw(edges=np.array([0.0, 2.0]), counts=np.zeros((5, 2), dtype=int))
    with pytest.raises(ValueError):
        empirical_law_tv(a, b)


def test_empirical_law_tv_deterministic_given_seed():
    gen = np.random.default_rng(5)
    edges = np.array([0.0, 1.0])
    a = BinnedLaw(edges=edges, counts=_single_bin(gen.poisson(4.0, size=300)))
    b = BinnedLaw(edges=edges, counts=_single_bin(gen.poisson(4.0, size=300)))
    s = RngStream(7, ("boot",))
    r1 = empirical_law_tv(a, b, rng=s, n_boot=50)
    r2 = empirical_law_tv(a, b, rng=s, n_boot=50)
    assert (r1.ci_low, r1.ci_high) == (r2.ci_low, r2.ci_high)


def test_poisson_fit_accepts_poisson_counts():
    counts = np.random.default_rng(6).poisson(4.0, size=5000)
    fit = poisson_fit(counts)
    assert 0.9 < fit.dispersion < 1.1
    assert fit.p_value > 0.01
    assert not fit.degenerate


def test_poisson_fit_rejects_overdispersed_counts():
    gen = np.random.default_rng(7)
    lam = gen.gamma(1.0, 4.0, size=5000)  # mixed Poisson, dispersion ~ 5
    counts = gen.poisson(lam)
    fit = poisson_fit(counts)
    assert fit.dispersion > 1.5
    assert fit.p_value < 0.01


def test_poisson_fit_needs_samples():
    with pytest.raises(ValueError):
        poisson_fit(np.zeros(50, dtype=int))
    fit = poisson_fit(np.zeros(200, dtype=int))
    assert fit.degenerate


def test_ks_statistic_uniform_sample():
    u = np.random.default_rng(8).random(2000)
    res = ks_statistic(u, lambda v: min(max(v, 0.0), 1.0))
    assert not res.reject_1pct
    assert res.critical_1pct == pytest.approx(1.628 / math.sqrt(2000))


def test_ks_statistic_shifted_sample_rejects():
    u = np.random.default_rng(9).random(2000) ** 2
    res = ks_statistic(u, lambda v: min(max(v, 0.0), 1.0))
    assert res.reject_1pct


def test_ks_statistic_point_mass_gap():
    res = ks_statistic(np.full(100, 0.5), lambda v: v)
    assert res.statistic >= 0.5
    with pytest.raises(ValueError):
        ks_statistic(np.empty(0), lambda v: v)
