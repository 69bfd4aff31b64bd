"""Sliced Wasserstein distances between pooled datasets.

The expensive half of a sliced Wasserstein computation (projecting every
point onto ``L`` shared directions and sorting) depends on one dataset only,
so it is cached per coalition in a :class:`ProjectionCache`.  Comparing two
coalitions then only merges two sorted lists per direction, which is what
:func:`sliced_wasserstein` does.

The 1-D distance between two uniform empirical distributions is evaluated
exactly: the two quantile functions are step functions with breakpoints at
``k/n`` and ``k/m``, so the integral over ``[0, 1]`` is a finite sum over the
merged breakpoints.  Breakpoints are kept as integers in units of
``1/(n*m)`` so coinciding breakpoints merge exactly.

Two reductions over directions are offered:

``"slice_mean"``
    ``mean_l W_p(slice l)`` -- the per-direction root is taken before
    averaging.
``"power_mean"``
    ``(mean_l W_p(slice l)^p)^(1/p)`` -- the usual Monte Carlo estimate of
    ``SW_p``.  For ``p = 2`` its square is a squared Hilbert distance between
    quantile functions, which is what makes ``exp(-gamma SW_2^2)`` positive
    semi-definite for any fixed set of directions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from .datasets import (
    AggregatedDataset,
    Coalition,
    OwnerDataset,
    aggregate,
    check_problem,
    n_classes,
)
from .exceptions import (
    CacheMiss,
    ConfigError,
    DimensionMismatch,
    EmptyDistribution,
    MissingEmbedding,
    NumericalError,
    ProblemTooLarge,
    RegressionUnsupported,
    SingleClass,
)

REDUCTIONS = ("slice_mean", "power_mean")

# upper bound on floats materialized per batch of pairwise comparisons
_BATCH_FLOATS = 4_000_000


@dataclass(frozen=True)
class SWParams:
    """Settings of a sliced Wasserstein estimate.

    ``rho`` is the exponent later applied by kernels; it is carried here so a
    single object describes the distance used inside a kernel.
    """

    p: int = 2
    rho: float = 1.0
    n_projections: int = 100
    seed: int = 0
    reduction: str = "slice_mean"

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ConfigError(f"p must be 1 or 2, got {self.p}")
        if not 0 < self.rho <= 1:
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho}")
        if self.n_projections < 1:
            raise ConfigError("n_projections must be >= 1")
        if self.reduction not in REDUCTIONS:
            raise ConfigError(f"reduction must be one of {REDUCTIONS}")


@dataclass(frozen=True)
class ProjectionSet:
    """``L`` unit directions in dimension ``d``, shape ``(L, d)``."""

    directions: np.ndarray
    seed: int

    @classmethod
    def sample(cls, dim: int, n_projections: int, seed: int = 0) -> "ProjectionSet":
        """Normalized standard Gaussian vectors, i.e. uniform on the sphere."""
        if dim < 1:
            raise ConfigError("dimension must be >= 1")
        rng = np.random.default_rng(seed)
        theta = rng.standard_normal((n_projections, dim))
        norms = np.linalg.norm(theta, axis=1, keepdims=True)
        # a zero draw has probability zero; guard anyway
        norms[norms == 0] = 1.0
        theta = theta / norms
        theta.setflags(write=False)
        return cls(theta, seed)

    @property
    def n_projections(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def project_sorted(self, points: np.ndarray) -> np.ndarray:
        """Sorted projections of ``points`` (rows) on every direction, shape ``(L, rows)``."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise DimensionMismatch(
                f"points of shape {points.shape} do not match direction dimension {self.dim}"
            )
        if points.shape[0] == 0:
            raise EmptyDistribution("cannot project an empty point set")
        proj = np.ascontiguousarray((points @ self.directions.T).T)
        proj.sort(axis=1)
        return proj


class ProjectionCache:
    """Sorted projections keyed by an arbitrary hashable (typically a coalition).

    Entries are added while building; :meth:`freeze` makes the cache
    read-only, after which it may be shared freely.
    """

    def __init__(self, projections: ProjectionSet):
        self.projections = projections
        self._store: dict[Hashable, np.ndarray] = {}
        self._frozen = False

    def add(self, key: Hashable, points: np.ndarray) -> np.ndarray:
        if key in self._store:
            return self._store[key]
        if self._frozen:
            raise RuntimeError("projection cache is frozen")
        q = self.projections.project_sorted(points)
        q.setflags(write=False)
        self._store[key] = q
        return q

    def freeze(self) -> "ProjectionCache":
        self._frozen = True
        return self

    def __contains__(self, key) -> bool:
        return key in self._store

    def __getitem__(self, key) -> np.ndarray:
        try:
            return self._store[key]
        except KeyError:
            raise CacheMiss(f"{key!r} was never projected") from None

    def __len__(self) -> int:
        return len(self._store)


# ----------------------------------------------------------------------------
# exact 1-D transport


@lru_cache(maxsize=4096)
def _quantile_grid(n: int, m: int):
    """Merged quantile breakpoints of two uniform empirical CDFs.

    Returns ``(idx_a, idx_b, widths)``: on the ``k``-th piece of ``[0, 1]``
    the quantile functions equal ``a[idx_a[k]]`` and ``b[idx_b[k]]`` and the
    piece has length ``widths[k]``.
    """
    nm = n * m
    cuts = np.union1d(np.arange(1, n + 1, dtype=np.int64) * m, np.arange(1, m + 1, dtype=np.int64) * n)
    prev = np.concatenate(([0], cuts[:-1]))
    idx_a = (cuts - 1) // m
    idx_b = (cuts - 1) // n
    widths = (cuts - prev) / nm
    for arr in (idx_a, idx_b, widths):
        arr.setflags(write=False)
    return idx_a, idx_b, widths


def _slice_costs(qa: np.ndarray, qb: np.ndarray, p: int) -> np.ndarray:
    """``int_0^1 |F_a^-1 - F_b^-1|^p`` along the last axis; leading axes broadcast."""
    idx_a, idx_b, widths = _quantile_grid(qa.shape[-1], qb.shape[-1])
    diff = np.abs(qa[..., idx_a] - qb[..., idx_b])
    if p == 2:
        diff = diff * diff
    return diff @ widths


def wasserstein_1d(a, b, p: int = 1) -> float:
    """Exact ``W_p`` between two uniform empirical distributions on the line.

    Parameters
    ----------
    a, b : array_like
        Sample values sorted in ascending order (each point has mass
        ``1/len``).  Lengths may differ.
    p : {1, 2}
        Order of the distance.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyDistribution("wasserstein_1d needs non-empty inputs")
    if p not in (1, 2):
        raise ConfigError("p must be 1 or 2")
    if np.any(np.diff(a) < 0) or np.any(np.diff(b) < 0):
        raise ConfigError("inputs must be sorted ascending")
    return float(_slice_costs(a, b, p) ** (1.0 / p))


def reduce_slices(costs: np.ndarray, p: int, reduction: str) -> np.ndarray:
    """Combine per-direction costs ``int |.|^p`` (last axis) into a distance."""
    if reduction == "slice_mean":
        return np.mean(costs ** (1.0 / p), axis=-1)
    if reduction == "power_mean":
        return np.mean(costs, axis=-1) ** (1.0 / p)
    raise ConfigError(f"unknown reduction {reduction!r}")


def sliced_wasserstein(
    a_key: Hashable,
    b_key: Hashable,
    cache: ProjectionCache,
    p: int = 2,
    reduction: str = "slice_mean",
) -> float:
    """Sliced Wasserstein distance between two cached point sets.

    Only the merge of the two sorted projection lists runs here; projecting
    and sorting happened when the keys were added to ``cache``.
    """
    qa, qb = cache[a_key], cache[b_key]
    return float(reduce_slices(_slice_costs(qa, qb, p), p, reduction))


def pairwise_slice_costs(
    cache: ProjectionCache, pairs: Sequence[tuple[Hashable, Hashable]], p: int
) -> np.ndarray:
    """Per-direction costs for many pairs at once, shape ``(len(pairs), L)``.

    Pairs are grouped by the sizes of their two point sets so each group
    shares one quantile grid and runs as a single vectorized gather.
    """
    L = cache.projections.n_projections
    out = np.empty((len(pairs), L))
    groups: dict[tuple[int, int], list[int]] = {}
    for k, (a, b) in enumerate(pairs):
        groups.setdefault((cache[a].shape[1], cache[b].shape[1]), []).append(k)
    for (n, m), ks in groups.items():
        chunk = max(1, _BATCH_FLOATS // (L * (n + m)))
        for start in range(0, len(ks), chunk):
            sel = ks[start : start + chunk]
            qa = np.stack([cache[pairs[k][0]] for k in sel])
            qb = np.stack([cache[pairs[k][1]] for k in sel])
            out[sel] = _slice_costs(qa, qb, p)
    return out


def sliced_wasserstein_distance(X_a, X_b, params: SWParams = SWParams()) -> float:
    """Cache-free sliced Wasserstein distance between two point clouds (rows)."""
    X_a = np.atleast_2d(np.asarray(X_a, dtype=np.float64))
    X_b = np.atleast_2d(np.asarray(X_b, dtype=np.float64))
    if X_a.shape[1] != X_b.shape[1]:
        raise DimensionMismatch("point sets have different dimensions")
    proj = ProjectionSet.sample(X_a.shape[1], params.n_projections, params.seed)
    cache = ProjectionCache(proj)
    cache.add("a", X_a)
    cache.add("b", X_b)
    return sliced_wasserstein("a", "b", cache, params.p, params.reduction)


# ----------------------------------------------------------------------------
# label embedding


@dataclass(frozen=True)
class LabelEmbedding:
    """Euclidean coordinates for class labels.

    ``vectors[j]`` embeds class ``j``; ``class_distances`` holds the sliced
    Wasserstein distances the embedding tries to preserve and ``stress`` the
    normalized residual ``sqrt(sum (d_emb - d)^2 / sum d^2)``.
    """

    vectors: np.ndarray
    class_distances: np.ndarray
    stress: float

    @property
    def n_classes(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def embed(self, labels: np.ndarray) -> np.ndarray:
        return self.vectors[np.asarray(labels, dtype=np.int64)]


def _pairwise_euclidean(Y: np.ndarray) -> np.ndarray:
    sq = np.sum(Y * Y, axis=1)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * Y @ Y.T, 0.0)
    D = np.sqrt(D2)
    np.fill_diagonal(D, 0.0)
    return D


def classical_mds(D: np.ndarray, q: int) -> tuple[np.ndarray, float]:
    """Classical (Torgerson) MDS of a distance matrix into ``q`` dimensions.

    Negative eigenvalues of the double-centred Gram matrix are truncated to
    zero.  Returns the ``(K, q)`` coordinates and the normalized stress.
    """
    D = np.asarray(D, dtype=np.float64)
    K = D.shape[0]
    if D.shape != (K, K):
        raise ConfigError("distance matrix must be square")
    if q < 0:
        raise ConfigError("q must be >= 0")
    J = np.eye(K) - 1.0 / K
    B = -0.5 * J @ (D * D) @ J
    B = 0.5 * (B + B.T)
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1][:q]
    lam = np.clip(evals[order], 0.0, None)
    Y = evecs[:, order] * np.sqrt(lam)
    if Y.shape[1] < q:
        Y = np.hstack([Y, np.zeros((K, q - Y.shape[1]))])
    total = float(np.sum(D * D))
    if total == 0.0:
        stress = 0.0
    else:
        stress = float(np.sqrt(np.sum((_pairwise_euclidean(Y) - D) ** 2) / total))
    return Y, stress


def build_label_embedding(
    owners: Sequence[OwnerDataset],
    params: SWParams = SWParams(),
    q: int | None = None,
    allow_single_class: bool = False,
) -> LabelEmbedding:
    """Embed class labels so Euclidean distances track between-class SW distances.

    The distance between classes ``j`` and ``k`` is the sliced Wasserstein
    distance between the features of all points labelled ``j`` and all
    points labelled ``k``, pooled over every owner.

    A single-class problem raises :class:`SingleClass` unless
    ``allow_single_class`` is set, in which case the class is embedded at
    the origin of a one-dimensional space (1x1 zero distance matrix).
    """
    check_problem(owners)
    if owners[0].task != "classification":
        raise ConfigError("label embeddings need a classification task")
    K = n_classes(owners)
    X = np.concatenate([o.features for o in owners])
    y = np.concatenate([o.targets for o in owners])
    missing = sorted(set(range(K)) - set(np.unique(y).tolist()))
    if missing:
        raise ConfigError(f"classes {missing} never occur in the pooled data")
    if K == 1:
        if not allow_single_class:
            raise SingleClass("only one class present; nothing to embed")
        return LabelEmbedding(np.zeros((1, 1)), np.zeros((1, 1)), 0.0)
    if q is None:
        q = min(K - 1, 8)
    if not 1 <= q <= K - 1:
        raise ConfigError(f"embedding dimension must lie in [1, {K - 1}]")
    proj = ProjectionSet.sample(X.shape[1], params.n_projections, params.seed)
    cache = ProjectionCache(proj)
    for j in range(K):
        cache.add(j, X[y == j])
    pairs = [(j, k) for j in range(K) for k in range(j + 1, K)]
    costs = pairwise_slice_costs(cache, pairs, params.p)
    vals = reduce_slices(costs, params.p, params.reduction)
    D = np.zeros((K, K))
    for (j, k), v in zip(pairs, vals):
        D[j, k] = D[k, j] = v
    Y, stress = classical_mds(D, q)
    return LabelEmbedding(Y, D, stress)


# ----------------------------------------------------------------------------
# supervised transform and distances


def g_eta_transform(
    D: AggregatedDataset, eta: float, embedding: LabelEmbedding | None = None
) -> np.ndarray:
    """Join scaled features and scaled targets: ``[eta * X, (1 - eta) * T]``.

    ``T`` is the target column(s) for regression and the label embedding of
    each row for classification.
    """
    if not 0 < eta <= 1:
        raise ConfigError(f"eta must lie in (0, 1], got {eta}")
    X = D.features
    if D.task == "classification":
        if embedding is None:
            raise MissingEmbedding("classification data needs a label embedding")
        T = embedding.embed(D.targets)
    else:
        T = D.targets.reshape(len(D.targets), -1).astype(np.float64)
    return np.hstack([eta * X, (1.0 - eta) * T])


def ssw_distance(
    A: AggregatedDataset,
    B: AggregatedDataset,
    eta: float,
    params: SWParams = SWParams(),
    embedding: LabelEmbedding | None = None,
) -> float:
    """Supervised sliced Wasserstein distance, computed without any cache."""
    return sliced_wasserstein_distance(
        g_eta_transform(A, eta, embedding), g_eta_transform(B, eta, embedding), params
    )


def _class_sw1(A: AggregatedDataset, B: AggregatedDataset, proj: ProjectionSet) -> dict:
    cache = ProjectionCache(proj)
    la, lb = np.unique(A.targets), np.unique(B.targets)
    for c in la:
        cache.add(("a", int(c)), A.features[A.targets == c])
    for c in lb:
        cache.add(("b", int(c)), B.features[B.targets == c])
    pairs = [(("a", int(c)), ("b", int(d))) for c in la for d in lb]
    vals = reduce_slices(pairwise_slice_costs(cache, pairs, 1), 1, "slice_mean")
    return {(k[0][1], k[1][1]): v for k, v in zip(pairs, vals)}


def otdd_cost_matrix(A: AggregatedDataset, B: AggregatedDataset, params: SWParams) -> np.ndarray:
    """Ground costs ``(||x - x'||^p + SW_1(A^y, B^y'))^(1/p)`` between all point pairs."""
    proj = ProjectionSet.sample(A.features.shape[1], params.n_projections, params.seed)
    label = _class_sw1(A, B, proj)
    diff = A.features[:, None, :] - B.features[None, :, :]
    dx = np.sqrt(np.sum(diff * diff, axis=-1)) ** params.p
    dy = np.empty_like(dx)
    for (c, d), v in label.items():
        dy[np.ix_(A.targets == c, B.targets == d)] = v
    return (dx + dy) ** (1.0 / params.p)


def solve_uniform_ot(C: np.ndarray) -> float:
    """Exact optimal transport cost between uniform marginals for cost matrix ``C``."""
    n, m = C.shape
    if n == m:
        # a permutation is an optimal vertex of the Birkhoff polytope
        r, c = linear_sum_assignment(C)
        return float(C[r, c].sum() / n)
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise NumericalError(f"transport LP failed: {res.message}")
    return float(res.fun)


def otdd_distance(
    A: AggregatedDataset,
    B: AggregatedDataset,
    params: SWParams = SWParams(p=1),
    max_points: int = 2000,
) -> float:
    """Optimal transport dataset distance with a sliced label metric.

    Solved exactly, so only desk-scale inputs are accepted; ``A`` and ``B``
    together may hold at most ``max_points`` rows.
    """
    if A.task != "classification" or B.task != "classification":
        raise RegressionUnsupported("OTDD needs class labels")
    if A.n_rows + B.n_rows > max_points:
        raise ProblemTooLarge(
            f"{A.n_rows + B.n_rows} points exceed the exact-OT limit of {max_points}"
        )
    return solve_uniform_ot(otdd_cost_matrix(A, B, params))


# ----------------------------------------------------------------------------
# coalition-level engine

METRICS = ("sw", "ssw", "otdd")


class CoalitionDistances:
    """Distances between coalitions of one problem, with caching and memoization.

    One :class:`ProjectionSet` is shared by all coalitions so every pairwise
    distance uses identical directions.  Distances are memoized per unordered
    coalition pair and setting, so kernels can sweep ``gamma`` or ``rho``
    without paying for transport again.

    Parameters
    ----------
    owners : sequence of OwnerDataset
    params : SWParams
        ``n_projections`` and ``seed`` fix the shared directions; ``p`` and
        ``reduction`` are the defaults of :meth:`distance`.
    embed_dim : int, optional
        Label-embedding dimension for classification (default
        ``min(K - 1, 8)``).
    """

    def __init__(
        self,
        owners: Sequence[OwnerDataset],
        params: SWParams = SWParams(),
        embed_dim: int | None = None,
        otdd_max_points: int = 2000,
    ):
        check_problem(owners)
        self.owners = list(owners)
        self.n_owners = len(self.owners)
        self.task = self.owners[0].task
        self.params = params
        self.otdd_max_points = otdd_max_points
        m = self.owners[0].n_features
        if self.task == "classification":
            self.embedding = build_label_embedding(
                self.owners, params, embed_dim, allow_single_class=True
            )
            target_dim = self.embedding.dim
        else:
            self.embedding = None
            target_dim = int(np.prod(self.owners[0].targets.shape[1:], dtype=int))
        self.feature_projections = ProjectionSet.sample(m, params.n_projections, params.seed)
        self.supervised_projections = ProjectionSet.sample(
            m + target_dim, params.n_projections, params.seed
        )
        self._caches: dict[object, ProjectionCache] = {}
        self._memo: dict[tuple, dict[tuple[int, int], tuple[float, float]]] = {}
        self.n_pairs_computed = 0

    # -- caches -------------------------------------------------------------
    def _cache(self, metric: str, eta: float) -> ProjectionCache:
        key = "sw" if metric == "sw" else ("ssw", float(eta))
        if key not in self._caches:
            proj = self.feature_projections if metric == "sw" else self.supervised_projections
            self._caches[key] = ProjectionCache(proj)
        return self._caches[key]

    def _points(self, c: Coalition, metric: str, eta: float) -> np.ndarray:
        D = aggregate(self.owners, c)
        if metric == "sw":
            return D.features
        return g_eta_transform(D, eta, self.embedding)

    def project(self, coalitions: Iterable[Coalition], metric: str = "ssw", eta: float = 0.5):
        """Project and sort the given coalitions into the cache for ``(metric, eta)``."""
        cache = self._cache(metric, eta)
        for c in coalitions:
            if c not in cache:
                cache.add(c, self._points(c, metric, eta))
        return cache

    # -- distances ----------------------------------------------------------
    def _memo_for(self, metric, eta, p):
        key = (metric, None if metric == "sw" else float(eta), int(p))
        return self._memo.setdefault(key, {})

    def _fill(self, pairs: list[tuple[Coalition, Coalition]], metric: str, eta: float, p: int):
        memo = self._memo_for(metric, eta, p)
        todo = []
        seen = set()
        for a, b in pairs:
            k = (min(a.bits, b.bits), max(a.bits, b.bits))
            if a.bits == b.bits or k in memo or k in seen:
                continue
            seen.add(k)
            todo.append((Coalition(k[0]), Coalition(k[1])))
        if not todo:
            return memo
        if metric == "otdd":
            prm = SWParams(p=p, n_projections=self.params.n_projections, seed=self.params.seed)
            for a, b in todo:
                v = otdd_distance(
                    aggregate(self.owners, a), aggregate(self.owners, b), prm, self.otdd_max_points
                )
                memo[(a.bits, b.bits)] = (v, v)
        else:
            cache = self.project({c for pr in todo for c in pr}, metric, eta)
            costs = pairwise_slice_costs(cache, todo, p)
            sm = reduce_slices(costs, p, "slice_mean")
            pm = np.mean(costs, axis=-1)
            for (a, b), v1, v2 in zip(todo, sm, pm):
                memo[(a.bits, b.bits)] = (float(v1), float(v2))
        self.n_pairs_computed += len(todo)
        return memo

    def _lookup(self, memo, a: Coalition, b: Coalition, stat: str, p: int) -> float:
        if a.bits == b.bits:
            return 0.0
        v = memo[(min(a.bits, b.bits), max(a.bits, b.bits))]
        if stat == "slice_mean":
            return v[0]
        if stat == "power_mean":
            return v[1] ** (1.0 / p)
        if stat == "power_mean_raw":
            return v[1]
        raise ConfigError(f"unknown statistic {stat!r}")

    def distance(
        self,
        a: Coalition,
        b: Coalition,
        metric: str = "ssw",
        eta: float = 0.5,
        p: int | None = None,
        reduction: str | None = None,
    ) -> float:
        return float(self.distance_matrix([a], [b], metric, eta, p, reduction)[0, 0])

    def distance_matrix(
        self,
        rows: Sequence[Coalition],
        cols: Sequence[Coalition],
        metric: str = "ssw",
        eta: float = 0.5,
        p: int | None = None,
        reduction: str | None = None,
    ) -> np.ndarray:
        """Distances between every row and column coalition.

        ``reduction`` may also be ``"power_mean_raw"``, the unrooted
        ``mean_l W_p^p`` (for ``p = 2`` this is ``SW_2^2``).  For OTDD the
        reduction is ignored.
        """
        if metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}")
        p = self.params.p if p is None else p
        reduction = self.params.reduction if reduction is None else reduction
        if metric == "otdd":
            reduction = "slice_mean"
        if metric != "sw" and not 0 < eta <= 1:
            raise ConfigError(f"eta must lie in (0, 1], got {eta}")
        for c in list(rows) + list(cols):
            if not c:
                raise ConfigError("the empty coalition has no distribution")
            if c.bits >> self.n_owners:
                raise ConfigError(f"{c!r} names owners outside 0..{self.n_owners - 1}")
        memo = self._fill([(a, b) for a in rows for b in cols], metric, eta, p)
        out = np.empty((len(rows), len(cols)))
        for i, a in enumerate(rows):
            for j, b in enumerate(cols):
                out[i, j] = self._lookup(memo, a, b, reduction, p)
        return out
