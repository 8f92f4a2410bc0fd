"""Univariate and bivariate distribution families with closed-form functionals.

These objects are the ground truth against which identification functions are
checked. Every value is immutable; sampling takes an explicit seed.

Normal laws are parameterised by ``(mean, variance)`` throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special

from .exceptions import UnsupportedMomentError

SCALAR_FAMILIES = ("normal", "exponential", "uniform", "student-t", "discrete-atoms", "mixture")
BIVARIATE_FAMILIES = ("bivariate-gaussian", "discrete-atoms-2d")

# cumulative sums of atom masses are compared with this slack when deciding
# whether the CDF sits exactly on a level
_LEVEL_TOL = 1e-12
_ES_AGREEMENT_TOL = 1e-8


def _as_seed(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _t_quantile(dof, u):
    """Standard Student-t quantile, polished so that F(q) >= u.

    ``stdtrit`` alone is accurate to a few 1e-12, enough to put F(q) a hair
    below u. One Newton step on the CDF and a few upward ulp nudges fix that.
    """
    u = np.asarray(u, dtype=float)
    q = np.asarray(special.stdtrit(dof, u), dtype=float)
    q = np.where(u == 0.5, 0.0, q)
    fin = np.isfinite(q) & (u != 0.5)
    dens = _t_pdf(np.where(fin, q, 0.0), dof)
    step = np.where(fin & (dens > 0), (u - special.stdtr(dof, np.where(fin, q, 0.0))) / np.where(dens > 0, dens, 1.0), 0.0)
    q = np.where(fin, q + step, q)
    for _ in range(8):
        low = fin & (special.stdtr(dof, np.where(fin, q, 0.0)) < u)
        if not np.any(low):
            break
        q = np.where(low, np.nextafter(q, np.inf), q)
    return q[()] if q.ndim == 0 else q


@dataclass(frozen=True)
class ScalarDistribution:
    """A univariate law.

    Use the factory functions (:func:`normal`, :func:`exponential`,
    :func:`uniform`, :func:`student_t`, :func:`discrete`, :func:`mixture`)
    rather than calling the constructor directly.
    """

    family: str
    params: tuple = ()
    atoms: tuple = ()
    probs: tuple = ()
    components: tuple = ()
    weights: tuple = ()
    _cum: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.family not in SCALAR_FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "discrete-atoms":
            p = np.asarray(self.probs, dtype=float)
            if len(self.atoms) == 0 or len(self.atoms) != len(p):
                raise ValueError("atoms and probabilities must be nonempty and of equal length")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError("atom probabilities must be nonnegative and sum to 1")
            if list(self.atoms) != sorted(self.atoms) or len(set(self.atoms)) != len(self.atoms):
                raise ValueError("atoms must be strictly increasing; use discrete() to build")
            object.__setattr__(self, "_cum", tuple(np.cumsum(p)))
        elif self.family == "mixture":
            w = np.asarray(self.weights, dtype=float)
            if len(self.components) == 0 or len(self.components) != len(w):
                raise ValueError("components and weights must be nonempty and of equal length")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("mixture weights must be nonnegative and sum to 1")
        elif self.family == "normal":
            if self.params[1] <= 0:
                raise ValueError("normal variance must be positive")
        elif self.family == "exponential":
            if self.params[0] <= 0:
                raise ValueError("exponential rate must be positive")
        elif self.family == "uniform":
            if not self.params[0] < self.params[1]:
                raise ValueError("uniform requires low < high")
        elif self.family == "student-t":
            if self.params[0] <= 0 or self.params[2] <= 0:
                raise ValueError("student-t requires positive dof and scale")

    # ------------------------------------------------------------------
    # structure helpers

    @property
    def is_discrete(self) -> bool:
        if self.family == "discrete-atoms":
            return True
        if self.family == "mixture":
            return all(c.is_discrete for c in self.components)
        return False

    @property
    def is_continuous(self) -> bool:
        if self.family == "mixture":
            return all(c.is_continuous for c in self.components)
        return self.family != "discrete-atoms"

    def _merged_atoms(self):
        """Sorted atoms and masses of a purely discrete law."""
        if self.family == "discrete-atoms":
            return np.asarray(self.atoms, float), np.asarray(self.probs, float)
        locs, masses = [], []
        for w, c in zip(self.weights, self.components):
            a, p = c._merged_atoms()
            locs.append(a)
            masses.append(w * p)
        locs = np.concatenate(locs)
        masses = np.concatenate(masses)
        uniq, inv = np.unique(locs, return_inverse=True)
        return uniq, np.bincount(inv, weights=masses)

    def _atom_locations(self):
        """Locations of every point mass, including those inside mixtures."""
        if self.family == "discrete-atoms":
            return list(self.atoms)
        if self.family == "mixture":
            out = []
            for c in self.components:
                out.extend(c._atom_locations())
            return sorted(set(out))
        return []

    # ------------------------------------------------------------------
    # distribution function

    def cdf(self, y):
        """P(Y <= y), vectorised over ``y``."""
        y = np.asarray(y, dtype=float)
        fam = self.family
        if fam == "normal":
            m, v = self.params
            return special.ndtr((y - m) / math.sqrt(v))
        if fam == "exponential":
            (rate,) = self.params
            return np.where(y > 0, -np.expm1(-rate * np.maximum(y, 0.0)), 0.0)
        if fam == "uniform":
            a, b = self.params
            return np.clip((y - a) / (b - a), 0.0, 1.0)
        if fam == "student-t":
            dof, loc, scale = self.params
            return special.stdtr(dof, (y - loc) / scale)
        if fam == "discrete-atoms":
            idx = np.searchsorted(np.asarray(self.atoms), y, side="right") - 1
            cum = np.concatenate([[0.0], self._cum])
            out = cum[idx + 1]
            return np.minimum(out, 1.0)
        return sum(w * c.cdf(y) for w, c in zip(self.weights, self.components))

    def cdf_left(self, y):
        """P(Y < y), the left limit of the CDF."""
        y = np.asarray(y, dtype=float)
        if self.family == "discrete-atoms":
            idx = np.searchsorted(np.asarray(self.atoms), y, side="left") - 1
            cum = np.concatenate([[0.0], self._cum])
            return np.minimum(cum[idx + 1], 1.0)
        if self.family == "mixture":
            return sum(w * c.cdf_left(y) for w, c in zip(self.weights, self.components))
        return self.cdf(y)

    def pdf(self, y):
        """Density of a continuous family (mixtures of continuous laws included)."""
        y = np.asarray(y, dtype=float)
        fam = self.family
        if fam == "normal":
            m, v = self.params
            s = math.sqrt(v)
            return np.exp(-0.5 * ((y - m) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        if fam == "exponential":
            (rate,) = self.params
            return np.where(y >= 0, rate * np.exp(-rate * np.maximum(y, 0.0)), 0.0)
        if fam == "uniform":
            a, b = self.params
            return np.where((y >= a) & (y <= b), 1.0 / (b - a), 0.0)
        if fam == "student-t":
            dof, loc, scale = self.params
            return _t_pdf((y - loc) / scale, dof) / scale
        if fam == "mixture" and self.is_continuous:
            return sum(w * c.pdf(y) for w, c in zip(self.weights, self.components))
        raise ValueError(f"{fam} has no density")

    # ------------------------------------------------------------------
    # quantiles

    def quantile(self, u):
        """Generalised inverse inf{x : F(x) >= u}, vectorised over ``u``."""
        u = np.asarray(u, dtype=float)
        fam = self.family
        if fam == "normal":
            m, v = self.params
            return m + math.sqrt(v) * special.ndtri(u)
        if fam == "exponential":
            (rate,) = self.params
            return -np.log1p(-u) / rate
        if fam == "uniform":
            a, b = self.params
            return a + u * (b - a)
        if fam == "student-t":
            dof, loc, scale = self.params
            return loc + scale * _t_quantile(dof, u)
        if u.ndim == 0:
            return np.float64(self.quantile_set(float(u))[0])
        return np.array([self.quantile_set(float(ui))[0] for ui in u.ravel()]).reshape(u.shape)

    def quantile_set(self, alpha: float):
        """The closed interval ``[lo, hi]`` of alpha-quantiles.

        ``lo`` is inf{x : F(x) >= alpha}; ``hi`` is sup{x : F(x-) <= alpha}.
        The two coincide unless the CDF is flat at level alpha.
        """
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.family in ("normal", "exponential", "uniform", "student-t"):
            q = float(self.quantile(alpha))
            return (q, q)
        if self.is_discrete:
            locs, masses = self._merged_atoms()
            cum = np.cumsum(masses)
            i = int(np.argmax(cum >= alpha - _LEVEL_TOL))
            lo = float(locs[i])
            if abs(cum[i] - alpha) <= _LEVEL_TOL and i + 1 < len(locs):
                return (lo, float(locs[i + 1]))
            return (lo, lo)
        return self._mixture_quantile_set(alpha)

    def _mixture_quantile_set(self, alpha):
        comp_sets = [c.quantile_set(alpha) for c in self.components]
        a = min(s[0] for s in comp_sets)
        b = max(s[0] for s in comp_sets)
        lo = _bisect_predicate(lambda x: float(self.cdf(x)) >= alpha, a, b)
        hi_bound = max(max(s[1] for s in comp_sets), lo)
        if float(self.cdf(lo)) > alpha:
            return (lo, lo)
        hi = _bisect_predicate(lambda x: float(self.cdf(x)) > alpha, lo, hi_bound)
        prev = float(np.nextafter(hi, -np.inf))
        if hi > lo and float(self.cdf_left(hi)) > alpha and float(self.cdf(prev)) <= alpha:
            # {F > alpha} is open at its infimum: the last point of the flat is prev
            hi = prev
        if hi - lo <= 1e-12 * max(1.0, abs(lo)):
            hi = lo
        return (lo, hi)

    def var_lower(self, alpha: float) -> float:
        """Value-at-Risk: the lower endpoint of the alpha-quantile set."""
        return self.quantile_set(alpha)[0]

    def attains_level(self, alpha: float) -> bool:
        """Whether some x has F(x) = alpha exactly (membership in the class F_alpha)."""
        v = self.var_lower(alpha)
        return abs(float(self.cdf(v)) - alpha) <= _LEVEL_TOL

    # ------------------------------------------------------------------
    # moments

    def mean(self) -> float:
        fam = self.family
        if fam == "normal":
            return float(self.params[0])
        if fam == "exponential":
            return 1.0 / self.params[0]
        if fam == "uniform":
            return 0.5 * (self.params[0] + self.params[1])
        if fam == "student-t":
            dof, loc, _ = self.params
            if dof <= 1:
                raise UnsupportedMomentError(f"student-t with dof={dof} has no finite mean")
            return float(loc)
        if fam == "discrete-atoms":
            return float(np.dot(self.atoms, self.probs))
        return float(sum(w * c.mean() for w, c in zip(self.weights, self.components)))

    def variance(self) -> float:
        fam = self.family
        if fam == "normal":
            return float(self.params[1])
        if fam == "exponential":
            return 1.0 / self.params[0] ** 2
        if fam == "uniform":
            a, b = self.params
            return (b - a) ** 2 / 12.0
        if fam == "student-t":
            dof, _, scale = self.params
            if dof <= 2:
                raise UnsupportedMomentError(f"student-t with dof={dof} has no finite variance")
            return scale**2 * dof / (dof - 2)
        if fam == "discrete-atoms":
            a = np.asarray(self.atoms)
            m = float(np.dot(a, self.probs))
            return float(np.dot((a - m) ** 2, self.probs))
        m = self.mean()
        return float(
            sum(w * (c.variance() + (c.mean() - m) ** 2) for w, c in zip(self.weights, self.components))
        )

    def second_moment(self) -> float:
        return self.variance() + self.mean() ** 2

    def partial_expectation(self, c):
        """E[Y 1{Y <= c}], vectorised over ``c``; equals the mean at c = +inf."""
        c = np.asarray(c, dtype=float)
        fam = self.family
        if fam == "normal":
            m, v = self.params
            s = math.sqrt(v)
            z = (c - m) / s
            phi = np.where(np.isfinite(z), np.exp(-0.5 * np.where(np.isfinite(z), z, 0.0) ** 2), 0.0)
            return m * special.ndtr(z) - s * phi / math.sqrt(2 * math.pi)
        if fam == "exponential":
            (rate,) = self.params
            cc = np.maximum(c, 0.0)
            with np.errstate(invalid="ignore"):
                tail = np.where(np.isfinite(cc), np.exp(-rate * cc) * (1.0 + rate * cc), 0.0)
            return (1.0 - tail) / rate
        if fam == "uniform":
            a, b = self.params
            cc = np.clip(c, a, b)
            return (cc**2 - a**2) / (2.0 * (b - a))
        if fam == "student-t":
            dof, loc, scale = self.params
            if dof <= 1:
                raise UnsupportedMomentError(f"student-t with dof={dof} has no finite mean")
            z = (c - loc) / scale
            zf = np.where(np.isfinite(z), z, 0.0)
            g = np.where(np.isfinite(z), -(dof + zf**2) / (dof - 1) * _t_pdf(zf, dof), 0.0)
            return loc * special.stdtr(dof, z) + scale * g
        if fam == "discrete-atoms":
            a = np.asarray(self.atoms)
            p = np.asarray(self.probs)
            return np.sum(np.where(a <= c[..., None], a * p, 0.0), axis=-1)
        return sum(w * comp.partial_expectation(c) for w, comp in zip(self.weights, self.components))

    # ------------------------------------------------------------------
    # expected shortfall

    def es_lower(self, alpha: float, check: bool = True) -> float:
        """Lower-tail Expected Shortfall, the average of VaR_beta over beta in (0, alpha).

        The value is computed as a quantile average. With ``check`` the
        truncated-expectation form with its atom correction
        (:meth:`es_truncated_form`) is evaluated as well and the two must agree
        within 1e-8 (relative to max(1, |ES|)).
        """
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        self.mean()  # raises for families without a mean
        if self.is_discrete:
            locs, masses = self._merged_atoms()
            cum = np.cumsum(masses)
            prev = np.concatenate([[0.0], cum[:-1]])
            lengths = np.minimum(alpha, cum) - np.minimum(alpha, prev)
            lengths = np.maximum(lengths, 0.0)
            value = float(np.dot(locs, lengths) / alpha)
        else:
            value = self._quantile_average(alpha)
        if check:
            other = self.es_truncated_form(alpha)
            if abs(other - value) > _ES_AGREEMENT_TOL * max(1.0, abs(value)):
                raise ArithmeticError(
                    f"ES forms disagree for {self!r} at alpha={alpha}: {value!r} vs {other!r}"
                )
        return value

    def es_truncated_form(self, alpha: float) -> float:
        """(1/alpha) E[Y 1{Y <= v}] - (v/alpha)(F(v) - alpha) with v = VaR_alpha."""
        v = self.var_lower(alpha)
        pe = float(self.partial_expectation(v))
        return pe / alpha - v / alpha * (float(self.cdf(v)) - alpha)

    def _quantile_average(self, alpha):
        if self.family in ("normal", "exponential", "uniform", "student-t"):
            q = lambda u: float(self.quantile(u))
        else:
            q = self._scalar_quantile
        breaks = []
        for a in self._atom_locations():
            for lvl in (float(self.cdf_left(a)), float(self.cdf(a))):
                if 0.0 < lvl < alpha:
                    breaks.append(lvl)
        kw = dict(epsabs=1e-13, epsrel=1e-12, limit=400)
        if breaks:
            kw["points"] = sorted(set(breaks))
        total, _ = integrate.quad(q, 0.0, alpha, **kw)
        return total / alpha

    def _scalar_quantile(self, u):
        # root of a continuous CDF; only used inside integrals, so any point of a
        # flat stretch is acceptable
        if u <= 0.0 or u >= 1.0:
            return float(self.quantile(min(max(u, 1e-300), 1 - 1e-16)))
        if not self.is_continuous:
            return self.quantile_set(u)[0]
        qs = [float(c.quantile(u)) for c in self.components]
        a, b = min(qs), max(qs)
        if a == b:
            return a
        g = lambda x: float(self.cdf(x)) - u
        ga, gb = g(a), g(b)
        if ga * gb >= 0.0:
            # bracket only a few ulps wide: rounding decides the sign
            return a if abs(ga) <= abs(gb) else b
        return optimize.brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    # ------------------------------------------------------------------
    # sampling

    def sample(self, n: int, seed) -> np.ndarray:
        """Draw ``n`` observations; identical output for identical seeds."""
        if n < 1:
            raise ValueError("n must be at least 1")
        rng = np.random.default_rng(_as_seed(seed))
        return self._draw(rng, n)

    def _draw(self, rng, n):
        fam = self.family
        if fam == "normal":
            m, v = self.params
            return rng.normal(m, math.sqrt(v), n)
        if fam == "exponential":
            return rng.exponential(1.0 / self.params[0], n)
        if fam == "uniform":
            return rng.uniform(self.params[0], self.params[1], n)
        if fam == "student-t":
            dof, loc, scale = self.params
            return loc + scale * rng.standard_t(dof, n)
        if fam == "discrete-atoms":
            return rng.choice(np.asarray(self.atoms, float), size=n, p=np.asarray(self.probs))
        which = rng.choice(len(self.components), size=n, p=np.asarray(self.weights))
        out = np.empty(n)
        for j, comp in enumerate(self.components):
            mask = which == j
            cnt = int(mask.sum())
            if cnt:
                out[mask] = comp._draw(rng, cnt)
        return out

    # ------------------------------------------------------------------
    # serialisation

    def to_dict(self) -> dict:
        if self.family == "discrete-atoms":
            return {"family": self.family, "atoms": [[a, p] for a, p in zip(self.atoms, self.probs)]}
        if self.family == "mixture":
            return {
                "family": self.family,
                "params": list(self.weights),
                "components": [c.to_dict() for c in self.components],
            }
        return {"family": self.family, "params": list(self.params)}

    @classmethod
    def from_dict(cls, spec: dict) -> "ScalarDistribution":
        fam = spec["family"]
        params = spec.get("params", [])
        if fam == "normal":
            return normal(*params)
        if fam == "exponential":
            return exponential(*params)
        if fam == "uniform":
            return uniform(*params)
        if fam == "student-t":
            return student_t(*params)
        if fam == "discrete-atoms":
            pairs = spec["atoms"]
            return discrete([a for a, _ in pairs], [p for _, p in pairs])
        if fam == "mixture":
            return mixture([cls.from_dict(c) for c in spec["components"]], params)
        raise ValueError(f"unknown family {fam!r}")

    def describe(self) -> str:
        if self.family == "discrete-atoms":
            inner = ", ".join(f"({a:g}, {p:g})" for a, p in zip(self.atoms, self.probs))
            return f"atoms{{{inner}}}"
        if self.family == "mixture":
            return " + ".join(f"{w:g}*{c.describe()}" for w, c in zip(self.weights, self.components))
        return f"{self.family}({', '.join(f'{p:g}' for p in self.params)})"


def _t_pdf(z, dof):
    z = np.asarray(z, dtype=float)
    logc = special.gammaln((dof + 1) / 2) - special.gammaln(dof / 2) - 0.5 * math.log(dof * math.pi)
    return np.exp(logc - (dof + 1) / 2 * np.log1p(z**2 / dof))


def _bisect_predicate(pred, a, b):
    """Smallest x in [a, b] (to machine precision) with ``pred(x)`` true.

    ``pred`` must be monotone (false then true) and true at ``b``.
    """
    if pred(a):
        return float(a)
    a, b = float(a), float(b)
    for _ in range(2000):
        mid = a + 0.5 * (b - a)
        if mid <= a or mid >= b:
            break
        if pred(mid):
            b = mid
        else:
            a = mid
    return b


# ----------------------------------------------------------------------
# factories


def normal(mean: float = 0.0, variance: float = 1.0) -> ScalarDistribution:
    return ScalarDistribution("normal", (float(mean), float(variance)))


def exponential(rate: float = 1.0) -> ScalarDistribution:
    return ScalarDistribution("exponential", (float(rate),))


def uniform(low: float = 0.0, high: float = 1.0) -> ScalarDistribution:
    return ScalarDistribution("uniform", (float(low), float(high)))


def student_t(dof: float, loc: float = 0.0, scale: float = 1.0) -> ScalarDistribution:
    return ScalarDistribution("student-t", (float(dof), float(loc), float(scale)))


def discrete(locations: Sequence[float], probabilities: Sequence[float]) -> ScalarDistribution:
    """Finite discrete law; repeated locations are merged and zero masses dropped."""
    locs = np.asarray(locations, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if locs.shape != p.shape or locs.ndim != 1 or locs.size == 0:
        raise ValueError("locations and probabilities must be equal-length 1-d sequences")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("atom probabilities must be nonnegative and sum to 1")
    uniq, inv = np.unique(locs, return_inverse=True)
    mass = np.bincount(inv, weights=p)
    keep = mass > 0
    return ScalarDistribution(
        "discrete-atoms", atoms=tuple(float(a) for a in uniq[keep]), probs=tuple(float(m) for m in mass[keep])
    )


def dirac(y: float) -> ScalarDistribution:
    return discrete([y], [1.0])


def mixture(components: Sequence[ScalarDistribution], weights: Sequence[float]) -> ScalarDistribution:
    """Finite mixture; nested mixtures are flattened, zero weights dropped."""
    comps, ws = [], []
    for c, w in zip(components, weights):
        if w < 0:
            raise ValueError("mixture weights must be nonnegative")
        if w == 0:
            continue
        if c.family == "mixture":
            comps.extend(c.components)
            ws.extend(w * cw for cw in c.weights)
        else:
            comps.append(c)
            ws.append(float(w))
    if abs(sum(ws) - 1.0) > 1e-12:
        raise ValueError("mixture weights must sum to 1")
    if len(comps) == 1:
        return comps[0]
    return ScalarDistribution("mixture", components=tuple(comps), weights=tuple(ws))


def mix(F: ScalarDistribution, G: ScalarDistribution, lam: float) -> ScalarDistribution:
    """The convex combination (1 - lam) F + lam G."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if lam == 0.0 or F == G:
        return F
    if lam == 1.0:
        return G
    return mixture([F, G], [1.0 - lam, lam])


# ----------------------------------------------------------------------
# bivariate


_OPS = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
}


@dataclass(frozen=True)
class BivariateDistribution:
    """Law of an observation pair (Y1, Y2)."""

    family: str
    mean: tuple = ()
    cov: tuple = ()
    atoms: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.family not in BIVARIATE_FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "bivariate-gaussian":
            c = np.asarray(self.cov, dtype=float)
            if c.shape != (2, 2) or not np.allclose(c, c.T, atol=0, rtol=1e-14):
                raise ValueError("covariance must be a symmetric 2x2 matrix")
            if np.linalg.eigvalsh(c).min() < -1e-14 * max(1.0, np.trace(c)) or c[0, 0] <= 0 or c[1, 1] <= 0:
                raise ValueError("covariance must be positive semi-definite with positive variances")
        else:
            p = np.asarray(self.probs, dtype=float)
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12 or len(self.atoms) != len(p):
                raise ValueError("atom probabilities must be nonnegative and sum to 1")

    @property
    def correlation(self) -> float:
        c = self.cov
        return c[0][1] / math.sqrt(c[0][0] * c[1][1])

    def marginal(self, i: int) -> ScalarDistribution:
        if self.family == "bivariate-gaussian":
            return normal(self.mean[i], self.cov[i][i])
        return discrete([a[i] for a in self.atoms], self.probs)

    def lower_orthant(self, x1: float, x2: float) -> float:
        """P(Y1 <= x1, Y2 <= x2)."""
        return self.tail_prob(x1, x2, ("<=", "<="))

    def tail_prob(self, x1: float, x2: float, region=("<", "<")) -> float:
        """Probability of the quadrant {Y1 op1 x1, Y2 op2 x2}.

        ``region`` is a pair of comparison operators from ``<, <=, >, >=``.
        For the gaussian family strict and weak inequalities coincide.
        """
        op1, op2 = region
        if op1 not in _OPS or op2 not in _OPS:
            raise ValueError(f"bad region selector {region!r}")
        if self.family == "discrete-atoms-2d":
            a = np.asarray(self.atoms, dtype=float)
            hit = _OPS[op1](a[:, 0], x1) & _OPS[op2](a[:, 1], x2)
            return float(np.dot(hit, self.probs))
        low1 = op1 in ("<", "<=")
        low2 = op2 in ("<", "<=")
        L = self._gauss_lower(x1, x2)
        F1 = float(self.marginal(0).cdf(x1))
        F2 = float(self.marginal(1).cdf(x2))
        if low1 and low2:
            p = L
        elif low1:
            p = F1 - L
        elif low2:
            p = F2 - L
        else:
            p = 1.0 - F1 - F2 + L
        return float(min(max(p, 0.0), 1.0))

    def _gauss_lower(self, x1, x2):
        m1, m2 = self.mean
        z1 = (x1 - m1) / math.sqrt(self.cov[0][0])
        z2 = (x2 - m2) / math.sqrt(self.cov[1][1])
        if z1 == -math.inf or z2 == -math.inf:
            return 0.0
        if z1 == math.inf:
            return float(special.ndtr(z2))
        if z2 == math.inf:
            return float(special.ndtr(z1))
        rho = self.correlation
        if rho == 0.0:
            return float(special.ndtr(z1) * special.ndtr(z2))
        if rho >= 1.0:
            return float(special.ndtr(min(z1, z2)))
        if rho <= -1.0:
            return float(max(0.0, special.ndtr(z1) + special.ndtr(z2) - 1.0))
        # condition on the first coordinate: P(Z2 <= z2 | Z1 = t) = Phi((z2 - rho t)/sqrt(1 - rho^2))
        r = math.sqrt(1.0 - rho * rho)
        f = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi) * special.ndtr((z2 - rho * t) / r)
        val, _ = integrate.quad(f, -np.inf, z1, epsabs=1e-14, epsrel=1e-13, limit=200)
        return float(val)

    def sample(self, n: int, seed) -> np.ndarray:
        """Draw an ``(n, 2)`` array of observation pairs."""
        if n < 1:
            raise ValueError("n must be at least 1")
        rng = np.random.default_rng(_as_seed(seed))
        return self._draw(rng, n)

    def _draw(self, rng, n):
        if self.family == "bivariate-gaussian":
            return rng.multivariate_normal(np.asarray(self.mean, float), np.asarray(self.cov, float), size=n)
        idx = rng.choice(len(self.atoms), size=n, p=np.asarray(self.probs))
        return np.asarray(self.atoms, dtype=float)[idx]

    def to_dict(self) -> dict:
        if self.family == "bivariate-gaussian":
            return {"family": self.family, "mean": list(self.mean), "cov": [list(r) for r in self.cov]}
        return {"family": self.family, "atoms": [[a[0], a[1], p] for a, p in zip(self.atoms, self.probs)]}

    @classmethod
    def from_dict(cls, spec: dict) -> "BivariateDistribution":
        if spec["family"] == "bivariate-gaussian":
            return bivariate_gaussian(spec["mean"], spec["cov"])
        if spec["family"] == "discrete-atoms-2d":
            rows = spec["atoms"]
            return discrete_2d([r[:2] for r in rows], [r[2] for r in rows])
        raise ValueError(f"unknown family {spec['family']!r}")

    def describe(self) -> str:
        if self.family == "bivariate-gaussian":
            return f"bivariate-gaussian(mean={list(self.mean)}, rho={self.correlation:g})"
        return f"atoms2d[{len(self.atoms)}]"


def bivariate_gaussian(mean=(0.0, 0.0), cov=((1.0, 0.0), (0.0, 1.0))) -> BivariateDistribution:
    m = tuple(float(v) for v in mean)
    c = tuple(tuple(float(v) for v in row) for row in cov)
    return BivariateDistribution("bivariate-gaussian", mean=m, cov=c)


def discrete_2d(points, probabilities) -> BivariateDistribution:
    pts = tuple(tuple(float(v) for v in p) for p in points)
    return BivariateDistribution("discrete-atoms-2d", atoms=pts, probs=tuple(float(p) for p in probabilities))


def distribution_from_dict(spec: dict):
    """Build a scalar or bivariate law from its JSON description."""
    if spec["family"] in BIVARIATE_FAMILIES:
        return BivariateDistribution.from_dict(spec)
    return ScalarDistribution.from_dict(spec)


def sample(F, n: int, seed) -> np.ndarray:
    return F.sample(n, seed)


def bivariate_tail_prob(F: BivariateDistribution, x1: float, x2: float, region=("<", "<")) -> float:
    return F.tail_prob(x1, x2, region)
