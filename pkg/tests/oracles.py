"""Reference computations that share no code path with the package.

High-precision quadrature via mpmath, exact rational arithmetic via
fractions, and Genz's multivariate normal CDF via scipy.stats.
"""

from fractions import Fraction

import mpmath as mp
import numpy as np
from scipy import stats

mp.mp.dps = 30


def normal_quantile(u, mean=0.0, var=1.0):
    return mp.mpf(mean) + mp.sqrt(var) * mp.sqrt(2) * mp.erfinv(2 * mp.mpf(u) - 1)


def normal_es(alpha, mean=0.0, var=1.0):
    """(1/alpha) int_0^alpha VaR_b db by high-precision quadrature."""
    return float(mp.quad(lambda u: normal_quantile(u, mean, var), [0, alpha]) / alpha)


def normal_partial_expectation(c, mean=0.0, var=1.0):
    s = mp.sqrt(var)
    dens = lambda y: mp.exp(-((y - mean) ** 2) / (2 * var)) / (s * mp.sqrt(2 * mp.pi))
    return float(mp.quad(lambda y: y * dens(y), [-mp.inf, c]))


def chi2_sf(x, k):
    """Regularised upper incomplete gamma Q(k/2, x/2)."""
    return float(mp.gammainc(mp.mpf(k) / 2, mp.mpf(x) / 2, mp.inf, regularized=True))


def gaussian_orthant(x1, x2, rho):
    """P(Y1 < x1, Y2 < x2) for a standard pair with correlation rho (Genz)."""
    return float(stats.multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]]).cdf([x1, x2]))


def discrete_es(atoms, probs, alpha):
    """ES of a discrete law as an exact rational average of VaR_b over (0, alpha]."""
    pairs = sorted(zip(map(Fraction, atoms), map(Fraction, probs)))
    alpha = Fraction(alpha)
    acc, cum = Fraction(0), Fraction(0)
    for a, p in pairs:
        take = min(p, alpha - cum)
        if take <= 0:
            break
        acc += a * take
        cum += take
    return acc / alpha


def empirical_quantile_es(data, alpha):
    """Exact (VaR, ES) of an empirical law with rational weights 1/n."""
    n = len(data)
    return discrete_es(data, [Fraction(1, n)] * n, alpha)


def brute_force_zero_set(moment, grid, tol=1e-12):
    """Grid points where a vector moment vanishes."""
    return [x for x in grid if np.max(np.abs(moment(x))) <= tol]
