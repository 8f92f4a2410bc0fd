"""Where identification goes wrong: atoms, flat stretches, the one-dimensional
CoVaR condition, and functionals without convex level sets."""

import numpy as np

from idfunc.catalog import functional_for, identification_function
from idfunc.distributions import bivariate_gaussian, discrete, normal
from idfunc.verifier import (
    convex_level_sets_check,
    find_es_witness,
    quantile_trichotomy,
    verify_identification,
)

print("quantile at level 0.25")
for name, F in [("standard normal", normal(0.0, 1.0)),
                ("atoms -1, 1", discrete([-1.0, 1.0], [0.5, 0.5])),
                ("atoms 0, 1 at level 0.5", discrete([0.0, 1.0], [0.5, 0.5]))]:
    alpha = 0.5 if "0.5" in name else 0.25
    t = quantile_trichotomy(F, alpha)
    print(f"  {name:26s} case={t['case']:6s} V vanishes at VaR: {t['vanishes_at_var']}")

r = verify_identification(identification_function("quantile:0.25"), functional_for("quantile:0.25"),
                          [discrete([-1.0, 1.0], [0.5, 0.5])])
for f in r.flagged:
    print(f"  flagged {f.check} at x={f.x}: {f.reason}")

print("\none-dimensional CoVaR condition under independent standard gaussians")
F = bivariate_gaussian()
c1 = identification_function("covar-1d:0.05,0.1")
vc = identification_function("var-covar:0.05,0.1")
for x in ([1.281552, 1.644854], [1.644854, 1.281552]):
    print(f"  x={x}: covar-1d {np.round(c1.expected(x, F), 8)}   var-covar {np.round(vc.expected(x, F), 8)}")

print("\nconvex level sets")
r = convex_level_sets_check(functional_for("variance"), normal(0.0, 1.0), normal(2.0, 1.0), [0.5])
print(f"  variance: both laws have variance 1, the 50/50 mixture has 1 + {r.findings[0].deviation:.6f}")
w = find_es_witness(0.05)
print(f"  ES at 0.05: {w['G']} matches N(0,1) (ES {w['es_F']:.6f}); "
      f"mixing with weight {w['lambda']} gives {w['es_mixture']:.6f}")
