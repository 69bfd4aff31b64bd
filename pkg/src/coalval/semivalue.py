"""Semivalues as weighted sums of coalition utilities.

A semivalue of owner ``i`` is ``sum_{C subset N \\ i} w_|C| [u(C + i) - u(C)]``
with non-negative weights normalized so ``sum_c w_c binom(n-1, c) = 1``.
Regrouped per coalition, every coalition ``C_j`` gets weight ``+w_{|C_j|-1}``
when ``i`` belongs to it and ``-w_{|C_j|}`` otherwise, so any semivalue is a
dot product between a weight vector and the utility vector.  Splitting the
coalitions into evaluated (``A``) and GP-predicted (``B``) parts gives a
Gaussian estimate whose variance comes from ``B`` only.

The empty coalition has utility 0 by convention and is never evaluated.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .datasets import Coalition
from .exceptions import (
    AlignmentError,
    ConfigError,
    DuplicateCoalition,
    MissingPrefix,
    TooManyOwners,
)

MAX_BRUTEFORCE_OWNERS = 14


@dataclass(frozen=True)
class SemivalueWeights:
    """Per-size weights ``omega_0..omega_{n-1}``."""

    kind: str
    n: int
    omega: tuple[float, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("need at least one owner")
        if len(self.omega) != self.n:
            raise ConfigError(f"expected {self.n} weights, got {len(self.omega)}")
        if any(w < 0 for w in self.omega):
            raise ConfigError("semivalue weights must be non-negative")
        total = sum(w * math.comb(self.n - 1, c) for c, w in enumerate(self.omega))
        if abs(total - 1.0) > 1e-12 * max(1.0, self.n):
            raise ConfigError(f"weights are not normalized: sum w_c binom(n-1, c) = {total!r}")

    @classmethod
    def shapley(cls, n: int) -> "SemivalueWeights":
        return cls("shapley", n, tuple(1.0 / (n * math.comb(n - 1, c)) for c in range(n)))

    @classmethod
    def banzhaf(cls, n: int) -> "SemivalueWeights":
        return cls("banzhaf", n, tuple(1.0 / 2 ** (n - 1) for _ in range(n)))

    @classmethod
    def custom(cls, omega: Sequence[float]) -> "SemivalueWeights":
        return cls("custom", len(omega), tuple(float(w) for w in omega))

    @classmethod
    def named(cls, kind: str, n: int) -> "SemivalueWeights":
        if kind == "shapley":
            return cls.shapley(n)
        if kind == "banzhaf":
            return cls.banzhaf(n)
        raise ConfigError(f"unknown semivalue {kind!r}")

    def coalition_weight(self, owner: int, c: Coalition) -> float:
        if owner in c:
            return self.omega[c.size - 1]
        return -self.omega[c.size]


@dataclass(frozen=True)
class WeightVector:
    owner: int
    coalitions: tuple[Coalition, ...]
    weights: np.ndarray


def _check_distinct(coalitions):
    if len(set(coalitions)) != len(coalitions):
        raise DuplicateCoalition("coalition list contains duplicates")


def weight_vector(
    kind: SemivalueWeights, owner: int, coalitions: Sequence[Coalition]
) -> WeightVector:
    """Weights of ``coalitions`` in the semivalue of ``owner``."""
    coalitions = tuple(coalitions)
    _check_distinct(coalitions)
    if not 0 <= owner < kind.n:
        raise ConfigError(f"owner {owner} out of range for {kind.n} owners")
    w = np.array([kind.coalition_weight(owner, c) for c in coalitions])
    return WeightVector(owner, coalitions, w)


def weight_matrix(kind: SemivalueWeights, coalitions: Sequence[Coalition]) -> np.ndarray:
    """Rows are the weight vectors of owners ``0..n-1``, shape ``(n, len(coalitions))``."""
    coalitions = tuple(coalitions)
    _check_distinct(coalitions)
    W = np.empty((kind.n, len(coalitions)))
    for j, c in enumerate(coalitions):
        s = c.size
        for i in range(kind.n):
            W[i, j] = kind.omega[s - 1] if i in c else -kind.omega[s]
    return W


def _as_oracle(u) -> Callable[[Coalition], float]:
    if callable(u):
        return u
    if isinstance(u, Mapping):
        return lambda c: u[c]
    raise ConfigError("utility oracle must be callable or a mapping")


def exact_semivalue_bruteforce(
    u, n: int, weights: SemivalueWeights | None = None, empty_utility: float | None = 0.0
) -> np.ndarray:
    """Semivalues by direct summation of marginal contributions.

    ``u`` is a callable or mapping from :class:`Coalition` to utility.  Each
    coalition is evaluated once.  ``empty_utility`` fixes ``u(empty)``; pass
    ``None`` to query the oracle for it instead.
    """
    if n > MAX_BRUTEFORCE_OWNERS:
        raise TooManyOwners(f"{n} owners exceed the brute-force limit of {MAX_BRUTEFORCE_OWNERS}")
    weights = weights or SemivalueWeights.shapley(n)
    if weights.n != n:
        raise ConfigError("weights were built for a different owner count")
    oracle = _as_oracle(u)
    values = np.empty(1 << n)
    for b in range(1 << n):
        if b == 0 and empty_utility is not None:
            values[0] = empty_utility
        else:
            values[b] = oracle(Coalition(b))
    phi = np.zeros(n)
    for i in range(n):
        bit = 1 << i
        for b in range(1 << n):
            if b & bit:
                continue
            size = bin(b).count("1")
            phi[i] += weights.omega[size] * (values[b | bit] - values[b])
    return phi


def exact_shapley_bruteforce(u, n: int, empty_utility: float | None = 0.0) -> np.ndarray:
    """Shapley values by direct enumeration of every coalition (``n <= 14``)."""
    return exact_semivalue_bruteforce(u, n, SemivalueWeights.shapley(n), empty_utility)


# ----------------------------------------------------------------------------
# evaluation ledger


@dataclass(frozen=True)
class LedgerEntry:
    utility: float
    source: str
    order: int


class EvaluationLedger:
    """Coalition utilities with provenance (``"actual"`` or ``"predicted"``).

    Insertion is insert-if-absent under a lock; an actual entry is never
    replaced by a predicted one, while a predicted entry is upgraded when the
    coalition is later evaluated.
    """

    def __init__(self):
        self._entries: dict[Coalition, LedgerEntry] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def record(self, c: Coalition, utility: float, source: str = "actual") -> LedgerEntry:
        if source not in ("actual", "predicted"):
            raise ConfigError(f"unknown source {source!r}")
        if not c:
            raise ConfigError("the empty coalition is fixed at utility 0")
        with self._lock:
            old = self._entries.get(c)
            if old is not None and (old.source == "actual" or source == "predicted"):
                return old
            order = old.order if old is not None else self._counter
            if old is None:
                self._counter += 1
            e = LedgerEntry(float(utility), source, order)
            self._entries[c] = e
            return e

    def record_actual(self, c: Coalition, utility: float) -> LedgerEntry:
        return self.record(c, utility, "actual")

    def record_predicted(self, c: Coalition, utility: float) -> LedgerEntry:
        return self.record(c, utility, "predicted")

    def __contains__(self, c) -> bool:
        return c in self._entries

    def __getitem__(self, c: Coalition) -> float:
        if not c:
            return 0.0
        return self._entries[c].utility

    def entry(self, c: Coalition) -> LedgerEntry:
        return self._entries[c]

    def __len__(self) -> int:
        return len(self._entries)

    def coalitions(self, source: str | None = None) -> list[Coalition]:
        items = sorted(self._entries.items(), key=lambda kv: kv[1].order)
        return [c for c, e in items if source is None or e.source == source]

    def counts(self) -> dict[str, int]:
        out = {"actual": 0, "predicted": 0}
        for e in self._entries.values():
            out[e.source] += 1
        return out


# ----------------------------------------------------------------------------
# hybrid assembly


def semivalue_from_hybrid(
    w_actual,
    u_actual,
    w_predicted,
    posterior=None,
) -> tuple[float, float]:
    """Mean and variance of ``w_A . u_A + w_B . u_B`` with ``u_B`` Gaussian.

    ``posterior`` supplies ``mean`` and ``cov`` aligned with ``w_predicted``
    (a :class:`~coalval.gp.Posterior` or anything with those attributes).
    """
    w_a = np.asarray(w_actual, dtype=np.float64).ravel()
    u_a = np.asarray(u_actual, dtype=np.float64).ravel()
    w_b = np.asarray(w_predicted, dtype=np.float64).ravel()
    if w_a.shape != u_a.shape:
        raise AlignmentError(f"{w_a.size} actual weights but {u_a.size} utilities")
    mean = float(w_a @ u_a)
    if w_b.size == 0:
        return mean, 0.0
    if posterior is None:
        raise AlignmentError("predicted weights given without a posterior")
    mu, cov = np.asarray(posterior.mean), np.asarray(posterior.cov)
    if mu.shape != w_b.shape or cov.shape != (w_b.size, w_b.size):
        raise AlignmentError(f"posterior of size {mu.size} does not match {w_b.size} weights")
    if hasattr(posterior, "coalitions") and hasattr(w_predicted, "coalitions"):
        if tuple(posterior.coalitions) != tuple(w_predicted.coalitions):
            raise AlignmentError("posterior and weight vector list different coalitions")
    var = float(w_b @ cov @ w_b)
    return mean + float(w_b @ mu), max(var, 0.0)


def total_uncertainty(sigma_gp: float, sigma_mc: float) -> float:
    """Bound ``sigma_gp^2 + sigma_mc^2 + 2 sigma_gp sigma_mc = (sigma_gp + sigma_mc)^2``."""
    if not (math.isfinite(sigma_gp) and math.isfinite(sigma_mc)):
        raise ConfigError("standard deviations must be finite")
    if sigma_gp < 0 or sigma_mc < 0:
        raise ConfigError("standard deviations must be >= 0")
    return (sigma_gp + sigma_mc) ** 2


# ----------------------------------------------------------------------------
# permutation sampling


@dataclass(frozen=True)
class PermutationSample:
    coalitions: tuple[Coalition, ...]
    permutations: tuple[tuple[int, ...], ...]


def sample_permutation_coalitions(n_coalitions: int, n: int, seed: int = 0) -> PermutationSample:
    """Draw whole permutations until their prefixes cover ``n_coalitions`` distinct coalitions.

    Coalitions are returned in order of first appearance.  The last
    permutation is kept in full even when it overshoots the target.
    """
    if n < 1:
        raise ConfigError("need at least one owner")
    if n_coalitions < n:
        raise ConfigError(f"target of {n_coalitions} coalitions is below the owner count {n}")
    if n_coalitions > (1 << n) - 1:
        raise ConfigError(f"only {(1 << n) - 1} non-empty coalitions exist for {n} owners")
    rng = np.random.default_rng(seed)
    seen: dict[Coalition, None] = {}
    perms = []
    while len(seen) < n_coalitions:
        perm = tuple(int(i) for i in rng.permutation(n))
        perms.append(perm)
        bits = 0
        for i in perm:
            bits |= 1 << i
            seen.setdefault(Coalition(bits), None)
    return PermutationSample(tuple(seen), tuple(perms))


def permutation_weight_matrix(
    permutations: Sequence[Sequence[int]], coalitions: Sequence[Coalition], n: int
) -> np.ndarray:
    """Weights that turn permutation-sampling Shapley estimates into dot products.

    Row ``i`` satisfies ``W[i] @ u == shapley_permutation_estimate(...)[i]``
    for any utilities ``u`` aligned with ``coalitions``.
    """
    index = {c: j for j, c in enumerate(coalitions)}
    W = np.zeros((n, len(index)))
    R = len(permutations)
    for perm in permutations:
        prev, bits = None, 0
        for i in perm:
            bits |= 1 << i
            cur = Coalition(bits)
            if cur not in index:
                raise MissingPrefix(f"{cur!r} is not in the coalition list")
            W[i, index[cur]] += 1.0 / R
            if prev is not None:
                W[i, index[prev]] -= 1.0 / R
            prev = cur
    return W


def permutation_marginals(
    permutations: Sequence[Sequence[int]], utilities, n: int
) -> np.ndarray:
    """Marginal contribution of every owner in every permutation, shape ``(|R|, n)``.

    ``utilities`` is an :class:`EvaluationLedger` or mapping from coalition
    to utility; the empty prefix counts as 0.
    """
    M = np.zeros((len(permutations), n))
    for r, perm in enumerate(permutations):
        prev, bits = 0.0, 0
        for i in perm:
            bits |= 1 << i
            cur_c = Coalition(bits)
            try:
                cur = utilities[cur_c]
            except KeyError:
                raise MissingPrefix(f"no utility recorded for {cur_c!r}") from None
            M[r, i] = cur - prev
            prev = cur
    return M


def shapley_permutation_estimate(
    permutations: Sequence[Sequence[int]], utilities, n: int
) -> np.ndarray:
    """Average marginal contributions over sampled permutations.

    Every occurrence of a prefix counts, even when the same coalition was
    reached by several permutations.
    """
    phi = np.zeros(n)
    R = len(permutations)
    if R == 0:
        raise ConfigError("no permutations")
    for perm in permutations:
        prev, bits = 0.0, 0
        for i in perm:
            bits |= 1 << i
            c = Coalition(bits)
            try:
                cur = utilities[c]
            except KeyError:
                raise MissingPrefix(f"no utility recorded for {c!r}") from None
            phi[i] += (cur - prev) / R
            prev = cur
    return phi


def monte_carlo_std(permutations: Sequence[Sequence[int]], utilities, n: int) -> np.ndarray:
    """Standard error of the permutation estimate: sample std of marginals over ``sqrt(|R|)``.

    NaN when fewer than two permutations were drawn.
    """
    R = len(permutations)
    if R < 2:
        return np.full(n, np.nan)
    M = permutation_marginals(permutations, utilities, n)
    return M.std(axis=0, ddof=1) / math.sqrt(R)


# ----------------------------------------------------------------------------
# reports


@dataclass
class SemivalueReport:
    """Per-owner estimates with their uncertainty and coalition provenance."""

    mean: np.ndarray
    std_gp: np.ndarray
    std_mc: np.ndarray | None = None
    method: str = "exact"
    semivalue: str = "shapley"
    n_actual: int = 0
    n_predicted: int = 0
    provenance: list[dict] = field(default_factory=list)
    model: dict | None = None

    @property
    def n_owners(self) -> int:
        return len(self.mean)

    @property
    def total_std_bound(self) -> np.ndarray:
        mc = np.zeros_like(self.std_gp) if self.std_mc is None else np.nan_to_num(self.std_mc)
        return self.std_gp + mc

    def owners(self) -> list[dict]:
        out = []
        for i in range(self.n_owners):
            mc = None
            if self.std_mc is not None and np.isfinite(self.std_mc[i]):
                mc = float(self.std_mc[i])
            out.append(
                {
                    "owner": i,
                    "mean": float(self.mean[i]),
                    "std_gp": float(self.std_gp[i]),
                    "std_mc": mc,
                    "bound": float(self.total_std_bound[i]),
                }
            )
        return out

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "semivalue": self.semivalue,
            "owners": self.owners(),
            "n_actual": self.n_actual,
            "n_predicted": self.n_predicted,
            "model": self.model,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SemivalueReport":
        owners = sorted(d["owners"], key=lambda o: o["owner"])
        mc = [o.get("std_mc") for o in owners]
        std_mc = None if all(v is None for v in mc) else np.array([np.nan if v is None else v for v in mc])
        return cls(
            mean=np.array([o["mean"] for o in owners]),
            std_gp=np.array([o.get("std_gp", 0.0) for o in owners]),
            std_mc=std_mc,
            method=d.get("method", "exact"),
            semivalue=d.get("semivalue", "shapley"),
            n_actual=d.get("n_actual", 0),
            n_predicted=d.get("n_predicted", 0),
            provenance=d.get("provenance", []),
            model=d.get("model"),
        )
