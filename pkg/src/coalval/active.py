"""Greedy choice of extra coalitions to evaluate.

Given a fitted GP on evaluated coalitions ``A`` and a pool ``B`` of
unevaluated ones with semivalue weights ``w`` over ``B``, each greedy step
adds the candidate ``G`` maximizing::

    VR(G) = w' K_{B, A+C} (K_{A+C, A+C} + s I)^-1 K_{A+C, B} w,   C = chosen + (G,)

which is the variance of ``w' u_B`` explained by observing ``A + C``.  The
inverse for ``A + C`` is grown from the previous one by a block
(Schur-complement) update, so scoring a candidate costs ``O(t^2)`` instead
of ``O(t^3)`` for ``t = |A + C|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datasets import Coalition
from .exceptions import AlignmentError, BudgetExceedsPool, DegenerateSchur
from .gp import GPModel

REFRESH_EVERY = 16
SCHUR_FLOOR = 1e-12


def incremental_inverse(inv_prev: np.ndarray, new_col, new_diag: float, floor: float = SCHUR_FLOOR) -> np.ndarray:
    """Inverse of ``[[M, b], [b', d]]`` from ``M^-1``, ``b`` and ``d``.

    Raises :class:`DegenerateSchur` when ``S = d - b' M^-1 b <= floor``;
    the caller should refactorize from scratch in that case.
    """
    inv_prev = np.asarray(inv_prev, dtype=np.float64)
    b = np.asarray(new_col, dtype=np.float64).ravel()
    t = inv_prev.shape[0]
    if b.size != t:
        raise AlignmentError(f"new column has length {b.size}, expected {t}")
    v = inv_prev @ b
    S = float(new_diag - b @ v)
    if not S > floor:
        raise DegenerateSchur(f"Schur complement {S:.3e} is not positive")
    out = np.empty((t + 1, t + 1))
    out[:t, :t] = inv_prev + np.outer(v, v) / S
    out[:t, t] = -v / S
    out[t, :t] = -v / S
    out[t, t] = 1.0 / S
    return out


def aggregate_weight(weight_vectors) -> np.ndarray:
    """Element-wise root-sum-square of per-owner weight vectors (rows)."""
    W = np.atleast_2d(np.asarray(weight_vectors, dtype=np.float64))
    if W.ndim != 2:
        raise AlignmentError("expected one weight vector per owner")
    return np.sqrt(np.sum(W * W, axis=0))


@dataclass
class SelectionState:
    """Result of :func:`greedy_select`: picks in order and the objective after each."""

    chosen: list[Coalition] = field(default_factory=list)
    chosen_index: list[int] = field(default_factory=list)
    objective_trace: list[float] = field(default_factory=list)
    scores: list[np.ndarray] = field(default_factory=list)  # per step, -inf for taken candidates
    inv: np.ndarray | None = None
    n_refreshes: int = 0


def _dense_inverse(K: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(K)
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def greedy_select(
    model: GPModel,
    pool: Sequence[Coalition],
    weights,
    budget: int,
    refresh_every: int = REFRESH_EVERY,
    check: bool = True,
) -> SelectionState:
    """Greedily pick ``budget`` coalitions from ``pool`` to reduce semivalue variance.

    Parameters
    ----------
    model : GPModel
        Fitted GP; its training coalitions play the role of ``A`` and its
        noise plus jitter is the diagonal ``s``.
    pool : sequence of Coalition
        Candidate coalitions ``B``.  Chosen coalitions stay in ``B`` for
        scoring.
    weights : array_like
        Weight vector aligned with ``pool`` (see :func:`aggregate_weight`
        for a single vector covering all owners).
    budget : int
        Number of picks.  Ties go to the lowest pool index.
    refresh_every : int
        Recompute the inverse from scratch after this many block updates.
    check : bool
        Spot-check ``inv @ (K + s I) ~ I`` (within 1e-8) after every pick.
    """
    pool = tuple(pool)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size != len(pool):
        raise AlignmentError(f"{w.size} weights for a pool of {len(pool)}")
    if budget > len(pool):
        raise BudgetExceedsPool(f"budget {budget} exceeds pool size {len(pool)}")
    if len(set(pool)) != len(pool):
        raise AlignmentError("pool contains duplicate coalitions")

    s = model.effective_noise
    A = tuple(model.coalitions)
    spec, kern = model.spec, model.kernel
    K_AA = kern(spec, A, A)
    K_AB = kern(spec, A, pool)
    K_BB = kern(spec, pool, pool)
    kw = K_BB @ w  # kw[g] = k(G_g, B) . w

    cond = list(A)
    rows = K_AB.copy()  # rows[j] = k(cond_j, B)
    inv = _dense_inverse(K_AA + s * np.eye(len(A)))
    state = SelectionState()
    remaining = np.ones(len(pool), dtype=bool)
    since_refresh = 0

    for _ in range(budget):
        v = rows @ w  # K_{cond, B} w
        iv = inv @ v
        base = float(v @ iv)
        # candidate columns k(cond, G) are rows[:, g]; k(G, G) = 1 for every family
        Kc = rows
        S = 1.0 + s - np.einsum("ig,ij,jg->g", Kc, inv, Kc)
        gain_num = (kw - Kc.T @ iv) ** 2
        scores = np.full(len(pool), -np.inf)
        ok = remaining & (S > SCHUR_FLOOR)
        scores[ok] = base + gain_num[ok] / S[ok]
        for g in np.flatnonzero(remaining & ~ok):
            # degenerate block update: score by full refactorization
            idx = cond + [pool[g]]
            Kf = kern(spec, idx, idx) + s * np.eye(len(idx))
            vf = np.append(v, kw[g])
            try:
                scores[g] = float(vf @ np.linalg.solve(Kf, vf))
            except np.linalg.LinAlgError:
                scores[g] = base
        g_star = int(np.argmax(scores))  # first maximum
        state.scores.append(scores)
        state.chosen.append(pool[g_star])
        state.chosen_index.append(g_star)
        state.objective_trace.append(float(scores[g_star]))
        remaining[g_star] = False

        new_col = rows[:, g_star].copy()
        cond.append(pool[g_star])
        rows = np.vstack([rows, K_BB[g_star]])
        since_refresh += 1
        try:
            if since_refresh >= refresh_every:
                raise DegenerateSchur("scheduled refresh")
            inv = incremental_inverse(inv, new_col, 1.0 + s)
        except DegenerateSchur:
            inv = _dense_inverse(kern(spec, cond, cond) + s * np.eye(len(cond)))
            since_refresh = 0
            state.n_refreshes += 1
        if check:
            Kfull = kern(spec, cond, cond) + s * np.eye(len(cond))
            err = np.max(np.abs(inv @ Kfull - np.eye(len(cond))))
            if err > 1e-8:
                inv = _dense_inverse(Kfull)
                since_refresh = 0
                state.n_refreshes += 1
    state.inv = inv
    return state


def greedy_select_dense(model: GPModel, pool: Sequence[Coalition], weights, budget: int) -> list[int]:
    """Reference greedy selection recomputing every score with a dense solve.

    Slow; used to cross-check :func:`greedy_select`.
    """
    pool = tuple(pool)
    w = np.asarray(weights, dtype=np.float64).ravel()
    s = model.effective_noise
    spec, kern = model.spec, model.kernel
    chosen: list[int] = []
    for _ in range(budget):
        best, best_g = -np.inf, None
        for g in range(len(pool)):
            if g in chosen:
                continue
            cond = list(model.coalitions) + [pool[j] for j in chosen] + [pool[g]]
            Kcc = kern(spec, cond, cond) + s * np.eye(len(cond))
            v = kern(spec, cond, pool) @ w
            vr = float(v @ np.linalg.inv(Kcc) @ v)
            if vr > best:
                best, best_g = vr, g
        chosen.append(best_g)
    return chosen
