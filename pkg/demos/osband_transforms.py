"""Two identification functions for the same functional differ by a matrix.

Recover that matrix numerically for the (mean, variance) pair and for
(VaR, ES), then watch the recovery break down for a pair that shares a zero
set but is not linked by any matrix.
"""

import numpy as np

from idfunc.catalog import identification_function
from idfunc.distributions import normal
from idfunc.exceptions import InconsistentPairError
from idfunc.osband import check_v1, find_v1_battery, recover_h
from idfunc.verifier import zero_set_counterexample_check

np.set_printoptions(precision=6, suppress=True)


def show(key, key2, points):
    V, Vp = identification_function(key), identification_function(key2)
    print(f"\n{key} -> {key2}")
    for x in points:
        battery = find_v1_battery(V, x)
        bary = check_v1(V, x, battery).barycentric
        r = recover_h(V, Vp, x, battery)
        print(f"  x = {x}: h(x) = {r.matrix.tolist()}, det = {r.determinant:.12f}, "
              f"held-out residual = {r.heldout_residual:.1e}, barycentric = {bary}")


show("mean-var", "mean-var-prime", [[0.5, 1.0], [-1.0, 2.0]])
# the lower-left entry should be x1 / alpha = 20 x1
show("quantile-es:0.05", "quantile-es-prime:0.05", [[-1.5, -2.0], [-2.0, -2.5]])

V, W = identification_function("mean-var"), identification_function("mean-var-modified")
print("\nmean-var against mean-var-modified (same zeros, no linking matrix):")
# below x2 = 0 every law gives a positive variance component, so no battery
# can surround the origin; the solve still runs on a fixed battery
battery = [normal(0.0, 1.0), normal(1.0, 1.0), normal(0.0, 4.0)]
print(f"  richness at (0.5, -1): {check_v1(V, [0.5, -1.0], battery).passed}")
try:
    recover_h(V, W, [0.5, -1.0], battery)
except InconsistentPairError as err:
    print(f"  x = (0.5, -1): inconsistent pair, held-out residual {err.result.heldout_residual:.3f}")

report = zero_set_counterexample_check()
print(f"  full check ok = {report.ok}")
for note in report.notes:
    print("  ", note)
