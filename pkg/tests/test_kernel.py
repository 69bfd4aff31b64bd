import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from coalval.datasets import Coalition, all_coalitions, make_blobs, make_moons
from coalval.exceptions import ConfigError, NonSquare
from coalval.kernel import (
    FAMILIES,
    CoalitionKernel,
    KernelSpec,
    build_matrix,
    kernel_value,
    psd_check,
)
from coalval.transport import CoalitionDistances, SWParams


@pytest.fixture(scope="module")
def moons_dist():
    return CoalitionDistances(make_moons(5, 12, 0.15, seed=0, label_skew=0.6), SWParams(n_projections=50))


def test_spec_validation():
    with pytest.raises(ConfigError):
        KernelSpec("nope")
    with pytest.raises(ConfigError):
        KernelSpec(gamma=0)
    with pytest.raises(ConfigError):
        KernelSpec(eta=0)
    with pytest.raises(ConfigError):
        KernelSpec(rho=1.5)


@pytest.mark.parametrize("family", FAMILIES)
def test_self_similarity_is_one(family, moons_dist):
    c = Coalition(0b10110)
    assert kernel_value(KernelSpec(family, gamma=3.0), c, c, moons_dist) == 1.0


def test_binary_hand_computed():
    v = kernel_value(KernelSpec("binary_rbf", gamma=1.0), Coalition.of([1]), Coalition.of([1, 2]))
    assert v == math.exp(-1.0)


@pytest.mark.parametrize("family", ["ssw_sq_exp", "ssw_l1_exp", "otdd_exp", "binary_rbf"])
def test_strictly_decreasing_in_gamma(family, moons_dist):
    a, b = Coalition(0b00011), Coalition(0b11000)
    vals = [kernel_value(KernelSpec(family, gamma=g), a, b, moons_dist) for g in np.logspace(-2, 2, 12)]
    assert all(x > y for x, y in zip(vals, vals[1:]))
    assert kernel_value(KernelSpec(family, gamma=1e6), a, b, moons_dist) < 1e-3


def test_continuous_in_eta(moons_dist):
    a, b = Coalition(0b00101), Coalition(0b11000)
    v1 = kernel_value(KernelSpec(eta=0.5), a, b, moons_dist)
    v2 = kernel_value(KernelSpec(eta=0.5 + 1e-7), a, b, moons_dist)
    assert abs(v1 - v2) < 1e-5


@pytest.mark.parametrize("family", FAMILIES)
def test_matrix_properties(family, moons_dist):
    cs = all_coalitions(5)[:20]
    K = build_matrix(KernelSpec(family, gamma=0.7), cs, cs, moons_dist).entries
    assert np.all(K > 0) and np.all(K <= 1)
    assert_array_equal(np.diag(K), 1.0)
    assert_array_equal(K, K.T)


def test_matrix_matches_entrywise(moons_dist):
    rows, cols = all_coalitions(5)[3:9], all_coalitions(5)[10:14]
    spec = KernelSpec("ssw_l1_exp", gamma=0.4, eta=0.3, rho=0.5)
    K = build_matrix(spec, rows, cols, moons_dist).entries
    ref = np.array([[kernel_value(spec, a, b, moons_dist) for b in cols] for a in rows])
    assert_array_equal(K, ref)


def test_transport_counts():
    owners = make_moons(5, 6, 0.1, seed=1)
    dist = CoalitionDistances(owners, SWParams(n_projections=10))
    cs = all_coalitions(5)[:8]
    build_matrix(KernelSpec(), cs, cs, dist)
    # diagonal pairs are exactly zero and never transported
    assert dist.n_pairs_computed == 8 * 7 // 2
    rows, cols = all_coalitions(5)[8:11], all_coalitions(5)[11:15]
    build_matrix(KernelSpec(), rows, cols, dist)
    assert dist.n_pairs_computed == 8 * 7 // 2 + 3 * 4


def test_gamma_sweep_reuses_transport(moons_dist):
    cs = all_coalitions(5)[:10]
    build_matrix(KernelSpec(gamma=1.0), cs, cs, moons_dist)
    before = moons_dist.n_pairs_computed
    for g in (0.1, 10.0):
        build_matrix(KernelSpec(gamma=g), cs, cs, moons_dist)
    assert moons_dist.n_pairs_computed == before


def test_order_invariance(moons_dist):
    cs = all_coalitions(5)[:12]
    perm = np.random.default_rng(0).permutation(len(cs))
    spec = KernelSpec(gamma=2.0)
    K = build_matrix(spec, cs, cs, moons_dist).entries
    Kp = build_matrix(spec, [cs[i] for i in perm], [cs[i] for i in perm], moons_dist).entries
    assert_array_equal(Kp, K[np.ix_(perm, perm)])


def test_psd_check_basic():
    rep = psd_check(np.ones((1, 1)))
    assert rep.passed and rep.min_eigenvalue == 1.0
    with pytest.raises(NonSquare):
        psd_check(np.ones((2, 3)))
    rep = psd_check(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert not rep.passed and rep.min_eigenvalue < 0


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["ssw_sq_exp", "ssw_l1_exp"]), st.sampled_from([0.5, 1.0]))
def test_ssw_families_psd(seed, family, rho):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 7))
    owners = make_moons(n, int(rng.integers(5, 15)), 0.2, seed=seed, label_skew=float(rng.uniform(0, 1)))
    dist = CoalitionDistances(owners, SWParams(n_projections=30, seed=seed))
    cs = all_coalitions(n)
    spec = KernelSpec(family, gamma=float(10 ** rng.uniform(-2, 2)), eta=float(rng.uniform(0.1, 1)), rho=rho)
    assert psd_check(CoalitionKernel(dist)(spec, cs, cs)).passed


def test_otdd_failure_is_reported_not_raised():
    rng = np.random.default_rng(0)
    owners = make_blobs(4, rng.normal(size=(3, 8)) * 3, 2.0, [[0], [1], [2], [0, 1, 2]], 6, seed=0)
    dist = CoalitionDistances(owners, SWParams(p=1, n_projections=20))
    cs = all_coalitions(4)
    rep = psd_check(CoalitionKernel(dist)(KernelSpec("otdd_exp", gamma=5.0), cs, cs))
    assert isinstance(rep.passed, bool)


def test_binary_needs_no_transport():
    cs = all_coalitions(3)
    K = CoalitionKernel(None, 3)(KernelSpec("binary_rbf", gamma=0.5), cs, cs)
    H = np.array([[bin(a.bits ^ b.bits).count("1") for b in cs] for a in cs])
    assert_allclose(K, np.exp(-0.5 * H), rtol=1e-15)
    with pytest.raises(ConfigError):
        CoalitionKernel(None, 3)(KernelSpec("ssw_sq_exp"), cs, cs)
