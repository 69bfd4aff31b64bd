"""
Sampled permutations and the total uncertainty
==============================================

With many owners the power set is out of reach, so coalitions come from
sampled permutations.  The estimate then carries two kinds of error: GP
prediction error on the untrained prefixes and Monte Carlo error from using
few permutations.  Their standard deviations add up to a bound on the
root-mean-square error.
"""

import math
import tempfile
from pathlib import Path

import numpy as np

from coalval import TableUtility, exact_shapley_bruteforce
from coalval.pipeline import RunConfig, run_valuation

# a saturating game with a little noise, cheap enough to solve exactly
n = 8
a = np.linspace(0.1, 0.6, n)
rng = np.random.default_rng(123)
eps = {b: 0.01 * rng.standard_normal() for b in range(1, 1 << n)}
table = TableUtility.from_function(lambda c: 1 - math.exp(-a[list(c.members)].sum()) + eps[c.bits], n)
exact = exact_shapley_bruteforce(table, n)

out = Path(tempfile.mkdtemp())
config = RunConfig(kernel="binary_rbf", method="permutation", budget=100, actual_fraction=0.3, seed=0,
                   n_owners=n, utility="table:x", curve_csv=str(out / "curve.csv"), curve_steps=6)
report = run_valuation(config, utility=table)

print(f"{report.n_actual} coalitions trained, {report.n_predicted} predicted")
print(" owner   exact  estimate   |err|  sd_gp  sd_mc  bound")
for i, row in enumerate(report.owners()):
    print(f"{i:6d} {exact[i]:7.4f} {row['mean']:9.4f} {abs(row['mean'] - exact[i]):7.4f} "
          f"{row['std_gp']:6.4f} {row['std_mc']:6.4f} {row['bound']:6.4f}")

# the curve file holds mean and a one-sigma band per owner as evaluations grow
print("\n" + (out / "curve.csv").read_text().splitlines()[0][:80], "...")
for line in (out / "curve.csv").read_text().splitlines()[1:]:
    print(line.split(",")[0], "evaluated ->", ",".join(f"{float(x):.3f}" for x in line.split(",")[1:4]))
