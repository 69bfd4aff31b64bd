import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

from coalval.datasets import AggregatedDataset, Coalition, OwnerDataset, aggregate, make_blobs, make_moons
from coalval.exceptions import (
    CacheMiss,
    ConfigError,
    DimensionMismatch,
    EmptyDistribution,
    MissingEmbedding,
    ProblemTooLarge,
    RegressionUnsupported,
    SingleClass,
)
from coalval.transport import (
    CoalitionDistances,
    LabelEmbedding,
    ProjectionCache,
    ProjectionSet,
    SWParams,
    build_label_embedding,
    classical_mds,
    g_eta_transform,
    otdd_distance,
    pairwise_slice_costs,
    sliced_wasserstein,
    sliced_wasserstein_distance,
    ssw_distance,
    wasserstein_1d,
)

from oracles import brute_uniform_ot, lp_wasserstein_1d

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def _agg(X, y, task="classification", bits=1):
    return AggregatedDataset(np.asarray(X, float), np.asarray(y), Coalition(bits), task)


class TestProjections:
    def test_unit_norm(self):
        P = ProjectionSet.sample(7, 300, seed=3)
        assert_allclose(np.linalg.norm(P.directions, axis=1), 1.0, atol=1e-12)

    def test_deterministic(self):
        a = ProjectionSet.sample(3, 50, seed=9).directions
        b = ProjectionSet.sample(3, 50, seed=9).directions
        assert_array_equal(a, b)
        assert not np.array_equal(a, ProjectionSet.sample(3, 50, seed=10).directions)

    def test_cache_rows_sorted(self):
        cache = ProjectionCache(ProjectionSet.sample(2, 20, seed=0))
        q = cache.add("x", np.random.default_rng(0).normal(size=(13, 2)))
        assert q.shape == (20, 13)
        assert np.all(np.diff(q, axis=1) >= 0)

    def test_cache_miss(self):
        cache = ProjectionCache(ProjectionSet.sample(2, 5))
        with pytest.raises(CacheMiss):
            cache["nope"]

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            sliced_wasserstein_distance(np.zeros((3, 2)), np.zeros((3, 3)))


class TestWasserstein1D:
    def test_point_masses(self):
        assert wasserstein_1d([0.0], [3.0], p=1) == 3.0

    def test_identity(self):
        a = np.sort(np.random.default_rng(1).normal(size=17))
        assert wasserstein_1d(a, a, 1) == 0.0
        assert wasserstein_1d(a, a, 2) == 0.0

    def test_small_lp(self):
        assert_allclose(wasserstein_1d([0, 1], [0, 1, 2], 1), lp_wasserstein_1d([0, 1], [0, 1, 2], 1), atol=1e-9)
        assert_allclose(wasserstein_1d([0, 1], [0, 1, 2], 1), 0.5, atol=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(
        arrays(np.float64, st.integers(1, 6), elements=finite),
        arrays(np.float64, st.integers(1, 6), elements=finite),
        st.sampled_from([1, 2]),
    )
    def test_matches_lp_oracle(self, a, b, p):
        a, b = np.sort(a), np.sort(b)
        assert_allclose(wasserstein_1d(a, b, p) ** p, lp_wasserstein_1d(a, b, p), rtol=1e-9, atol=1e-9)

    def test_errors(self):
        with pytest.raises(EmptyDistribution):
            wasserstein_1d([], [1.0])
        with pytest.raises(ConfigError):
            wasserstein_1d([2.0, 1.0], [1.0])


class TestSliced:
    @pytest.mark.parametrize("L", [1, 2, 7, 100])
    @pytest.mark.parametrize("p", [1, 2])
    def test_one_dimensional_equals_exact(self, L, p):
        rng = np.random.default_rng(L)
        a, b = rng.normal(size=(9, 1)), rng.normal(1.0, 2.0, size=(14, 1))
        exact = wasserstein_1d(np.sort(a.ravel()), np.sort(b.ravel()), p)
        for reduction in ("slice_mean", "power_mean"):
            sw = sliced_wasserstein_distance(a, b, SWParams(p=p, n_projections=L, reduction=reduction))
            assert abs(sw - exact) <= 1e-12

    def test_per_slice_costs_match_lp(self):
        rng = np.random.default_rng(0)
        A, B = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
        P = ProjectionSet.sample(3, 6, seed=2)
        cache = ProjectionCache(P)
        cache.add("a", A)
        cache.add("b", B)
        for p in (1, 2):
            costs = pairwise_slice_costs(cache, [("a", "b")], p)[0]
            for l, theta in enumerate(P.directions):
                ref = lp_wasserstein_1d(A @ theta, B @ theta, p)
                assert abs(costs[l] - ref) <= 1e-9

    def test_identity_and_symmetry(self):
        rng = np.random.default_rng(4)
        cache = ProjectionCache(ProjectionSet.sample(2, 50, seed=0))
        cache.add("a", rng.normal(size=(10, 2)))
        cache.add("b", rng.normal(size=(7, 2)))
        assert sliced_wasserstein("a", "a", cache) == 0.0
        for p in (1, 2):
            assert sliced_wasserstein("a", "b", cache, p) == sliced_wasserstein("b", "a", cache, p)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([1, 2]), st.sampled_from(["slice_mean", "power_mean"]))
    def test_triangle_inequality(self, seed, p, reduction):
        rng = np.random.default_rng(seed)
        cache = ProjectionCache(ProjectionSet.sample(3, 20, seed=seed))
        for k, n in zip("abc", rng.integers(1, 9, 3)):
            cache.add(k, rng.normal(size=(n, 3)) * rng.uniform(0.5, 2))
        d = lambda x, y: sliced_wasserstein(x, y, cache, p, reduction)
        assert d("a", "c") <= d("a", "b") + d("b", "c") + 1e-9

    def test_cache_equivalence_bitwise(self):
        rng = np.random.default_rng(5)
        A, B = rng.normal(size=(11, 2)), rng.normal(size=(8, 2))
        params = SWParams(p=2, n_projections=40, seed=3)
        cache = ProjectionCache(ProjectionSet.sample(2, 40, seed=3))
        cache.add(0, A)
        cache.add(1, B)
        assert sliced_wasserstein(0, 1, cache, 2) == sliced_wasserstein_distance(A, B, params)

    @given(st.floats(0.01, 100))
    @settings(max_examples=20, deadline=None)
    def test_homogeneous(self, s):
        rng = np.random.default_rng(6)
        A, B = rng.normal(size=(6, 2)), rng.normal(size=(5, 2))
        params = SWParams(p=1, n_projections=25)
        assert_allclose(
            sliced_wasserstein_distance(s * A, s * B, params),
            s * sliced_wasserstein_distance(A, B, params),
            rtol=1e-12,
        )

    def test_monte_carlo_stable_across_seeds(self):
        rng = np.random.default_rng(7)
        A = rng.normal(size=(200, 2))
        B = rng.normal(size=(200, 2)) + np.array([2.0, -1.0])
        v = [sliced_wasserstein_distance(A, B, SWParams(p=2, n_projections=10_000, seed=s)) for s in (0, 1)]
        assert abs(v[0] - v[1]) <= 0.05 * max(v)


class TestLabelEmbedding:
    def test_two_classes_exact(self):
        D = np.array([[0.0, 2.5], [2.5, 0.0]])
        Y, stress = classical_mds(D, 1)
        assert abs(abs(Y[0, 0] - Y[1, 0]) - 2.5) <= 1e-12
        assert stress <= 1e-12

    def test_identical_classes(self):
        Y, _ = classical_mds(np.zeros((4, 4)), 3)
        assert_allclose(Y, np.broadcast_to(Y[0], Y.shape), atol=1e-12)

    def test_triangle(self):
        pts = np.array([[0.0, 0.0], [3.0, 0.0], [1.0, 2.0]])
        D = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        Y, stress = classical_mds(D, 2)
        assert stress <= 1e-9
        assert_allclose(np.linalg.norm(Y[:, None] - Y[None], axis=-1), D, atol=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 1000))
    def test_euclidean_matrices_reproduced(self, K, seed):
        pts = np.random.default_rng(seed).normal(size=(K, K - 1))
        D = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        Y, _ = classical_mds(D, K - 1)
        assert_allclose(np.linalg.norm(Y[:, None] - Y[None], axis=-1), D, atol=1e-9)

    def test_from_owners(self):
        owners = make_blobs(3, [[0, 0], [5, 0], [0, 5]], 0.3, [[0, 1], [1, 2], [0, 2]], 30, seed=0)
        emb = build_label_embedding(owners)
        assert emb.dim == 2 and emb.n_classes == 3
        E = np.linalg.norm(emb.vectors[:, None] - emb.vectors[None], axis=-1)
        assert_allclose(E, E.T)
        assert_allclose(np.diag(E), 0.0)
        assert_allclose(E, emb.class_distances, rtol=0.05)

    def test_single_class(self):
        owners = [OwnerDataset(0, np.zeros((3, 2)), np.zeros(3, dtype=int))]
        with pytest.raises(SingleClass):
            build_label_embedding(owners)
        emb = build_label_embedding(owners, allow_single_class=True)
        assert_array_equal(emb.vectors, [[0.0]])
        assert emb.class_distances.shape == (1, 1)


class TestSupervised:
    def test_eta_one_zero_targets(self):
        emb = LabelEmbedding(np.array([[0.0], [3.0]]), np.zeros((2, 2)), 0.0)
        G = g_eta_transform(_agg([[1.0, 2.0], [3.0, 4.0]], [0, 1]), 1.0, emb)
        assert_array_equal(G[:, 2:], 0.0)

    def test_regression_scaling(self):
        G = g_eta_transform(_agg([[2.0]], [4.0], task="regression"), 0.5)
        assert_array_equal(G, [[1.0, 2.0]])

    def test_missing_embedding(self):
        with pytest.raises(MissingEmbedding):
            g_eta_transform(_agg([[1.0]], [0]), 0.5)

    def test_label_only_difference(self):
        emb = LabelEmbedding(np.array([[0.0], [1.0]]), np.array([[0, 1.0], [1.0, 0]]), 0.0)
        X = np.random.default_rng(0).normal(size=(10, 2))
        A, B = _agg(X, np.zeros(10, int)), _agg(X, np.ones(10, int))
        assert ssw_distance(A, B, 0.5, SWParams(), emb) > 0
        assert ssw_distance(A, B, 1.0, SWParams(), emb) == 0.0

    def test_self_distance_zero(self):
        owners = make_moons(2, 10, 0.1, seed=0)
        emb = build_label_embedding(owners)
        A = aggregate(owners, Coalition(3))
        assert ssw_distance(A, A, 0.3, SWParams(), emb) == 0.0

    def test_eta_one_matches_unsupervised_with_zero_column(self):
        owners = make_moons(2, 12, 0.1, seed=1)
        emb = build_label_embedding(owners)
        A, B = aggregate(owners, Coalition(1)), aggregate(owners, Coalition(2))
        params = SWParams(n_projections=30, seed=4)
        pad = lambda X: np.hstack([X, np.zeros((len(X), emb.dim))])
        assert ssw_distance(A, B, 1.0, params, emb) == sliced_wasserstein_distance(
            pad(A.features), pad(B.features), params
        )

    def test_similar_owners_closer(self):
        # owners 0 and 1 share a class; owner 2 holds a far-away class
        owners = make_blobs(5, [[0, 0], [6, 6], [0, 6]], 0.5, [[0], [0], [1], [2], [0, 2]], 25, seed=3)
        dist = CoalitionDistances(owners, SWParams(n_projections=200))
        for bits in range(0, 1 << 5):
            C = Coalition(bits).without_owner(0).without_owner(1).without_owner(2)
            l, lp, j = C.with_owner(0), C.with_owner(1), C.with_owner(2)
            assert dist.distance(l, lp) < dist.distance(l, j)


class TestOTDD:
    def test_identity(self):
        D = _agg(np.random.default_rng(0).normal(size=(6, 2)), [0, 1, 0, 1, 1, 0])
        assert otdd_distance(D, D) <= 1e-12

    def test_two_by_two_brute_force(self):
        rng = np.random.default_rng(1)
        A = _agg(rng.normal(size=(2, 2)), [0, 1])
        B = _agg(rng.normal(size=(2, 2)), [1, 1])
        from coalval.transport import otdd_cost_matrix

        C = otdd_cost_matrix(A, B, SWParams(p=1))
        assert_allclose(otdd_distance(A, B), min(C[0, 0] + C[1, 1], C[0, 1] + C[1, 0]) / 2, atol=1e-12)

    @pytest.mark.parametrize("n,m", [(2, 3), (3, 2), (2, 4), (3, 6)])
    def test_unequal_sizes_brute_force(self, n, m):
        rng = np.random.default_rng(n * 10 + m)
        A = _agg(rng.normal(size=(n, 2)), rng.integers(0, 2, n))
        B = _agg(rng.normal(size=(m, 2)), rng.integers(0, 2, m))
        from coalval.transport import otdd_cost_matrix

        for p in (1, 2):
            params = SWParams(p=p)
            C = otdd_cost_matrix(A, B, params)
            assert_allclose(otdd_distance(A, B, params), brute_uniform_ot(C), atol=1e-9)

    def test_single_class_is_feature_transport_plus_offset(self):
        # the label cost is SW_1 between the two class-0 sets: constant over the coupling
        rng = np.random.default_rng(2)
        XA, XB = rng.normal(size=(4, 2)), rng.normal(size=(4, 2)) + 1.0
        A, B = _agg(XA, np.zeros(4, int)), _agg(XB, np.zeros(4, int))
        params = SWParams(p=1)
        dx = np.linalg.norm(XA[:, None] - XB[None], axis=-1)
        offset = sliced_wasserstein_distance(XA, XB, SWParams(p=1, n_projections=params.n_projections, seed=params.seed))
        assert_allclose(otdd_distance(A, B, params), brute_uniform_ot(dx) + offset, atol=1e-12)

    def test_errors(self):
        A = _agg([[0.0]], [1.0], task="regression")
        with pytest.raises(RegressionUnsupported):
            otdd_distance(A, A)
        B = _agg(np.zeros((10, 1)), np.zeros(10, int))
        with pytest.raises(ProblemTooLarge):
            otdd_distance(B, B, max_points=15)


class TestCoalitionDistances:
    def test_matches_cache_free(self):
        owners = make_moons(3, 10, 0.1, seed=0)
        params = SWParams(p=2, n_projections=30, seed=5)
        dist = CoalitionDistances(owners, params)
        a, b = Coalition(0b011), Coalition(0b110)
        ref = ssw_distance(aggregate(owners, a), aggregate(owners, b), 0.3, params, dist.embedding)
        assert dist.distance(a, b, "ssw", 0.3) == ref

    def test_matrix_symmetric_zero_diagonal_memoized(self):
        owners = make_moons(4, 8, 0.1, seed=2)
        dist = CoalitionDistances(owners, SWParams(n_projections=20))
        cs = [Coalition(b) for b in range(1, 16)]
        D = dist.distance_matrix(cs, cs, "ssw", 0.5)
        assert_array_equal(D, D.T)
        assert_array_equal(np.diag(D), 0.0)
        n = dist.n_pairs_computed
        assert n == 15 * 14 // 2
        dist.distance_matrix(cs[::-1], cs, "ssw", 0.5)
        assert dist.n_pairs_computed == n

    def test_otdd_metric(self):
        owners = make_moons(3, 5, 0.1, seed=3)
        dist = CoalitionDistances(owners, SWParams(p=1, n_projections=20))
        D = dist.distance_matrix([Coalition(1), Coalition(2)], [Coalition(1), Coalition(2)], "otdd")
        assert D[0, 1] == D[1, 0] > 0

    def test_single_class_problem_still_works(self):
        owners = make_blobs(3, [[0, 0]], 0.5, [[0], [0], [0]], 6, seed=0)
        dist = CoalitionDistances(owners)
        assert dist.distance(Coalition(1), Coalition(2)) > 0

    def test_bad_coalitions(self):
        dist = CoalitionDistances(make_moons(2, 5, 0.1, seed=0))
        with pytest.raises(ConfigError):
            dist.distance(Coalition(0), Coalition(1))
        with pytest.raises(ConfigError):
            dist.distance(Coalition(4), Coalition(1))
