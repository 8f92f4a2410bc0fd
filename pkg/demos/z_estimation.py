"""Estimating functionals as roots of empirical identification functions."""

import numpy as np

from idfunc.catalog import identification_function
from idfunc.distributions import normal
from idfunc.osband import apply_transform, mean_var_matrix, quantile_es_matrix
from idfunc.zestimate import z_estimate

five = [1.0, 2.0, 3.0, 4.0, 5.0]
e = z_estimate(identification_function("quantile-es:0.4"), five)
print(f"(VaR, ES) at 0.4 on 1..5: {e.estimate.tolist()}, VaR stretch {e.intervals[0]}")
print(f"  same data, quantile at 0.3: {z_estimate(identification_function('quantile:0.3'), five).status}")

n = 100_000
y = normal(1.0, 4.0).sample(n, seed=8)
V = identification_function("mean-var")
e = z_estimate(V, y)
se = np.array([2.0, np.sqrt(32.0)]) / np.sqrt(n)
print(f"\nmean-var on {n} draws of N(1, 4): {e.estimate.round(4).tolist()}  (z = {((e.estimate - [1, 4]) / se).round(2)})")

# multiplying by a full-rank matrix leaves the roots alone
for key, h in (("mean-var", mean_var_matrix()), ("quantile-es:0.1", quantile_es_matrix(0.1))):
    W = identification_function(key)
    a, b = z_estimate(W, y), z_estimate(apply_transform(h, W), y)
    print(f"  {key}: plain {a.estimate.round(6).tolist()} ({a.method}), "
          f"transformed {b.estimate.round(6).tolist()} ({b.method})")
