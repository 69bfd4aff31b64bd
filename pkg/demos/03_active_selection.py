"""
Choosing which coalitions to train next
=======================================

After fitting the GP on an initial set of coalitions, some budget remains for
extra trainings.  Picking them greedily by how much they shrink the variance
of the Shapley estimates beats picking them at random.
"""

import numpy as np

from coalval import (
    KNNAccuracy,
    SemivalueWeights,
    aggregate_weight,
    all_coalitions,
    condition,
    fit,
    greedy_select,
    make_moons,
    make_moons_validation,
    predict,
    weight_matrix,
)
from coalval.pipeline import make_grid, make_kernel, partition

owners = make_moons(6, 30, 0.1, seed=1, label_skew=0.8)
X_val, y_val = make_moons_validation(300, 0.1, seed=1000)
u = KNNAccuracy(owners, X_val, y_val)

cs = all_coalitions(6)
col = {c: j for j, c in enumerate(cs)}
W = weight_matrix(SemivalueWeights.shapley(6), cs)
A, B = partition(cs, 6, 0.5, seed=1)
kernel = make_kernel("ssw", owners, 6)
model = fit(kernel, A, [u(c) for c in A], make_grid("ssw"))
print("fitted:", model.summary())

# one weight per candidate, covering every owner at once
w = aggregate_weight(W[:, [col[c] for c in B]])
state = greedy_select(model, B, w, 10)
print("greedy picks:", [list(c.members) for c in state.chosen])


def owner_variance(extra):
    A2 = A + list(extra)
    B2 = [c for c in B if c not in set(extra)]
    post = predict(condition(kernel, model.spec, model.noise_var, A2, [u(c) for c in A2]), B2)
    WB = W[:, [col[c] for c in B2]]
    return np.einsum("ij,jk,ik->i", WB, post.cov, WB)


rng = np.random.default_rng(0)
random_picks = [B[j] for j in rng.choice(len(B), 10, replace=False)]
print("per-owner variance, active:", np.array2string(owner_variance(state.chosen), precision=2))
print("per-owner variance, random:", np.array2string(owner_variance(random_picks), precision=2))
