"""Slow, obviously-correct reference implementations used only by the tests."""

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from coalval.datasets import Coalition


def lp_transport(C, a=None, b=None):
    """Optimal transport cost for cost matrix C via the dense LP in coupling space."""
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, float)
    b = np.full(m, 1.0 / m) if b is None else np.asarray(b, float)
    A_eq = []
    for i in range(n):
        row = np.zeros((n, m))
        row[i, :] = 1
        A_eq.append(row.ravel())
    for j in range(m):
        row = np.zeros((n, m))
        row[:, j] = 1
        A_eq.append(row.ravel())
    res = linprog(C.ravel(), A_eq=np.array(A_eq), b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert res.success
    return res.fun


def lp_wasserstein_1d(x, y, p):
    """W_p^p between uniform empirical measures (no root, which is ill-conditioned near 0)."""
    C = np.abs(np.asarray(x, float)[:, None] - np.asarray(y, float)[None, :]) ** p
    return lp_transport(C)


def brute_uniform_ot(C):
    """Exact uniform OT by replicating points to a common size and trying every matching."""
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    L = n * m // math.gcd(n, m)
    big = np.repeat(np.repeat(C, L // n, axis=0), L // m, axis=1)
    return min(big[np.arange(L), list(p)].sum() for p in itertools.permutations(range(L))) / L


def dense_gp(K_AA, K_AB, K_BB, u, noise, mean=0.0):
    inv = np.linalg.inv(K_AA + noise * np.eye(len(u)))
    mu = mean + K_AB.T @ inv @ (np.asarray(u) - mean)
    cov = K_BB - K_AB.T @ inv @ K_AB
    return mu, cov


def shapley_by_permutations(u, n):
    """Average marginal contribution over all n! orderings; u(empty) = 0."""
    phi = np.zeros(n)
    perms = list(itertools.permutations(range(n)))
    for perm in perms:
        bits, prev = 0, 0.0
        for i in perm:
            bits |= 1 << i
            cur = u(Coalition(bits))
            phi[i] += cur - prev
            prev = cur
    return phi / len(perms)


def banzhaf_double_sum(u, n):
    """(1 / 2^(n-1)) * sum over S not containing i of u(S + i) - u(S)."""
    val = lambda bits: 0.0 if bits == 0 else u(Coalition(bits))
    phi = np.zeros(n)
    for i in range(n):
        for bits in range(1 << n):
            if bits >> i & 1:
                continue
            phi[i] += val(bits | 1 << i) - val(bits)
    return phi / 2 ** (n - 1)


def random_table_game(n, rng):
    vals = {b: float(rng.normal()) for b in range(1, 1 << n)}
    return lambda c: vals[c.bits]


def greedy_vr_oracle(K, a_idx, pool_idx, w, noise, budget):
    """Greedy variance-reduction picks from a full Gram matrix ``K`` with dense solves.

    Returns (picks as positions in ``pool_idx``, score vectors per step).
    """
    w = np.asarray(w, float)
    chosen, all_scores = [], []
    for _ in range(budget):
        scores = np.full(len(pool_idx), -np.inf)
        for g in range(len(pool_idx)):
            if g in chosen:
                continue
            cond = list(a_idx) + [pool_idx[j] for j in chosen] + [pool_idx[g]]
            M = K[np.ix_(cond, cond)] + noise * np.eye(len(cond))
            v = K[np.ix_(cond, pool_idx)] @ w
            scores[g] = v @ np.linalg.solve(M, v)
        best = max(range(len(scores)), key=lambda g: (scores[g], -g))
        chosen.append(best)
        all_scores.append(scores)
    return chosen, all_scores


def shapley_subset_formula(u, n):
    """sum over S not containing i of |S|! (n-|S|-1)! / n! * (u(S+i) - u(S)), with u(empty) = 0."""
    val = lambda members: 0.0 if not members else u(Coalition(sum(1 << j for j in members)))
    phi = np.zeros(n)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for k in range(n):
            w = math.factorial(k) * math.factorial(n - k - 1) / math.factorial(n)
            for S in itertools.combinations(others, k):
                phi[i] += w * (val(S + (i,)) - val(S))
    return phi
