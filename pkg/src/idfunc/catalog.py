"""Catalog of identification functions and the functionals they identify.

Every entry evaluates pointwise, ``V(x, y)``, and in expectation,
``V_bar(x, F) = E_F[V(x, Y)]``. Expectations use closed-form primitives of the
distribution (CDF, partial expectation, orthant probabilities); anything
without a closed form falls back to quadrature on the quantile transform.

Indicator conventions follow the displayed formulas: ``1{y <= x}`` for
quantile-type terms, strict ``1{x1 > y1}`` for the CoVaR terms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize, special

from .distributions import BivariateDistribution, ScalarDistribution

# ----------------------------------------------------------------------
# indicators


def hard_step(t, strict=False):
    """1{t >= 0} (or 1{t > 0} when ``strict``)."""
    t = np.asarray(t, dtype=float)
    return (t > 0).astype(float) if strict else (t >= 0).astype(float)


def ramp_step(delta):
    """Linear ramp of half-width ``delta`` replacing the indicator 1{t >= 0}."""

    def step(t, strict=False):
        return np.clip(0.5 + np.asarray(t, dtype=float) / (2.0 * delta), 0.0, 1.0)

    return step


# ----------------------------------------------------------------------
# action domains


@dataclass(frozen=True)
class ActionDomain:
    """Admissible forecast vectors.

    ``constraint`` is one of ``"real"`` (all of R^k), ``"halfspace"``
    (x1 >= x2) or ``"product"`` (R x [0, inf)).
    """

    dim: int
    constraint: str = "real"

    def __post_init__(self):
        if self.constraint not in ("real", "halfspace", "product"):
            raise ValueError(f"unknown constraint {self.constraint!r}")
        if self.constraint != "real" and self.dim != 2:
            raise ValueError(f"{self.constraint} domain is two-dimensional")

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            return False
        if self.constraint == "halfspace":
            return bool(x[0] >= x[1])
        if self.constraint == "product":
            return bool(x[1] >= 0)
        return True

    def interior(self, x) -> bool:
        if not self.contains(x):
            return False
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.constraint == "halfspace":
            return bool(x[0] > x[1])
        if self.constraint == "product":
            return bool(x[1] > 0)
        return True

    def to_dict(self):
        return {"dim": self.dim, "constraint": self.constraint}


# ----------------------------------------------------------------------
# pointwise formulas


def _split(x, dim):
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return [x[..., i] for i in range(dim)]


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def v_mean(x, y):
    """x - y."""
    (x1,) = _split(x, 1)
    return _stack(x1 - np.asarray(y, dtype=float))


def v_expectile(tau, x, y, step=hard_step):
    """2 |1{y <= x} - tau| (x - y)."""
    (x1,) = _split(x, 1)
    y = np.asarray(y, dtype=float)
    return _stack(2.0 * np.abs(step(x1 - y) - tau) * (x1 - y))


def v_quantile(alpha, x, y, step=hard_step):
    """1{y <= x} - alpha."""
    (x1,) = _split(x, 1)
    return _stack(step(x1 - np.asarray(y, dtype=float)) - alpha)


def v_mean_var(x, y):
    x1, x2 = _split(x, 2)
    y = np.asarray(y, dtype=float)
    return _stack(x1 - y, x2 - (y - x1) ** 2)


def v_mean_var_prime(x, y):
    x1, x2 = _split(x, 2)
    y = np.asarray(y, dtype=float)
    return _stack(x1 - y, x2 + x1**2 - y**2)


def v_mean_var_modified(x, y):
    """The mean-variance function switched to the constant 1 wherever x2 < 0.

    A strict identification function on the action domain R^2 that is not a
    matrix multiple of :func:`v_mean_var`.
    """
    x1, x2 = _split(x, 2)
    v = v_mean_var_prime(x, y)
    neg = (x2 < 0)[..., None]
    return np.where(neg, 1.0, v)


def v_quantile_es(alpha, x, y, step=hard_step):
    x1, x2 = _split(x, 2)
    y = np.asarray(y, dtype=float)
    ind = step(x1 - y)
    return _stack(ind - alpha, x2 - y / alpha * ind)


def v_quantile_es_prime(alpha, x, y, step=hard_step):
    x1, x2 = _split(x, 2)
    y = np.asarray(y, dtype=float)
    ind = step(x1 - y)
    return _stack(ind - alpha, x2 - y / alpha * ind + x1 / alpha * (ind - alpha))


def v_var_covar(alpha, beta, x, y, step=hard_step):
    """(1{x1 <= y1} - beta, 1{x1 > y1}(1{x2 <= y2} - alpha))."""
    x1, x2 = _split(x, 2)
    y = np.asarray(y, dtype=float)
    y1, y2 = y[..., 0], y[..., 1]
    return _stack(step(y1 - x1) - beta, step(x1 - y1, strict=True) * (step(y2 - x2) - alpha))


def v_covar_1d(alpha, beta, x, y, step=hard_step):
    """1{x1 > y1} 1{x2 > y2} - (1 - alpha)(1 - beta)."""
    x1, x2 = _split(x, 2)
    y = np.asarray(y, dtype=float)
    y1, y2 = y[..., 0], y[..., 1]
    return _stack(step(x1 - y1, strict=True) * step(x2 - y2, strict=True) - (1 - alpha) * (1 - beta))


# ----------------------------------------------------------------------
# identification function objects


@dataclass(frozen=True)
class IndicatorCoordinate:
    """An action coordinate on which the empirical moment is a step function.

    ``column`` is the observation column whose values are the jump points;
    ``closed`` says which end of a constant stretch is attained
    (``"lower"`` for 1{y <= x}, ``"upper"`` for 1{x <= y}). ``pure`` says
    that moment component ``coord`` is itself a monotone step function of
    the coordinate; a matrix transform mixing the components clears it.
    """

    coord: int
    column: int
    closed: str
    pure: bool = True


@dataclass(frozen=True, eq=False)
class IdentificationFunction:
    """A map V: A x O -> R^k.

    ``pointwise(x, y, step)`` evaluates the formula with the supplied indicator
    implementation; ``closed_form(x, F)`` (optional) returns the expectation.
    """

    key: str
    k: int
    action_dim: int
    obs_dim: int
    domain: ActionDomain
    pointwise: Callable
    closed_form: Optional[Callable] = None
    breakpoints: Callable = field(default=lambda x: ())
    tag: Optional[str] = None
    params: tuple = ()
    indicators: tuple = ()
    smooth_ok: bool = True

    def __call__(self, x, y):
        return self.evaluate(x, y)

    def evaluate(self, x, y, step=hard_step):
        """V(x, y); broadcasts ``x`` of shape (..., action_dim) against ``y``."""
        return self.pointwise(x, y, step)

    def expected(self, x, F):
        """V_bar(x, F) as a length-k vector."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.closed_form is not None:
            return np.asarray(self.closed_form(x, F), dtype=float).reshape(self.k)
        return expected_by_quadrature(self, x, F)

    def __repr__(self):
        return f"IdentificationFunction({self.key!r}, k={self.k})"


def expected_v(V: IdentificationFunction, x, F):
    return V.expected(x, F)


def expected_by_quadrature(V: IdentificationFunction, x, F):
    """Componentwise integral of V(x, .) against F without closed forms.

    Continuous laws are integrated over u in (0, 1) after the quantile
    transform y = F^{-1}(u), split at u = F(b) for every jump point b of V(x, .).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(F, BivariateDistribution):
        return _bivariate_quadrature(V, x, F)
    if F.family == "discrete-atoms":
        vals = V.evaluate(x, np.asarray(F.atoms))
        return np.asarray(F.probs) @ vals
    if F.family == "mixture":
        return sum(w * expected_by_quadrature(V, x, c) for w, c in zip(F.weights, F.components))
    pts = sorted({float(F.cdf(b)) for b in V.breakpoints(x) if 0.0 < float(F.cdf(b)) < 1.0})
    out = np.empty(V.k)
    for j in range(V.k):
        f = lambda u, j=j: float(V.evaluate(x, float(F.quantile(u)))[..., j].item())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(f, 0.0, 1.0, points=pts or None, epsabs=1e-12, epsrel=1e-11, limit=400)
        out[j] = val
    return out


def _bivariate_quadrature(V, x, F):
    if F.family == "discrete-atoms-2d":
        vals = V.evaluate(x, np.asarray(F.atoms, dtype=float))
        return np.asarray(F.probs) @ vals
    # Y1 = m1 + s1 Z1, Y2 | Y1 normal; integrate the inner coordinate on its quantile scale
    m1, m2 = F.mean
    s1 = math.sqrt(F.cov[0][0])
    s2 = math.sqrt(F.cov[1][1])
    rho = F.correlation
    cs = s2 * math.sqrt(max(1.0 - rho * rho, 0.0))
    bps = list(V.breakpoints(x))
    z_breaks = sorted({(b[0] - m1) / s1 for b in bps})
    out = np.empty(V.k)
    for j in range(V.k):

        def inner(z1):
            y1 = m1 + s1 * z1
            cm = m2 + rho * s2 * z1
            if cs == 0.0:
                return float(V.evaluate(x, np.array([y1, cm]))[j])
            ups = sorted({float(special.ndtr((b[1] - cm) / cs)) for b in bps} - {0.0, 1.0})
            g = lambda u: float(V.evaluate(x, np.array([y1, cm + cs * special.ndtri(u)]))[j])
            val, _ = integrate.quad(g, 0.0, 1.0, points=ups or None, epsabs=1e-11, epsrel=1e-10, limit=200)
            return val

        f = lambda z1: math.exp(-0.5 * z1 * z1) / math.sqrt(2 * math.pi) * inner(z1)
        edges = [-np.inf] + z_breaks + [np.inf]
        val = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            val += integrate.quad(f, a, b, epsabs=1e-11, epsrel=1e-10, limit=200)[0]
        out[j] = val
    return out


# ----------------------------------------------------------------------
# closed-form expectations


def _require_scalar(F):
    if not isinstance(F, ScalarDistribution):
        raise TypeError("this identification function needs a univariate distribution")


def _require_bivariate(F):
    if not isinstance(F, BivariateDistribution):
        raise TypeError("this identification function needs a bivariate distribution")


def _ebar_mean(x, F):
    _require_scalar(F)
    return [x[0] - F.mean()]


def _ebar_expectile(tau):
    def ebar(x, F):
        _require_scalar(F)
        c = x[0]
        Fc = float(F.cdf(c))
        pe = float(F.partial_expectation(c))
        below = c * Fc - pe  # E[(x - Y) 1{Y <= x}]
        above = c * (1.0 - Fc) - (F.mean() - pe)  # E[(x - Y) 1{Y > x}]
        return [2.0 * ((1.0 - tau) * below + tau * above)]

    return ebar


def _ebar_quantile(alpha):
    def ebar(x, F):
        _require_scalar(F)
        return [float(F.cdf(x[0])) - alpha]

    return ebar


def _ebar_mean_var(x, F):
    _require_scalar(F)
    m = F.mean()
    return [x[0] - m, x[1] - (F.variance() + (m - x[0]) ** 2)]


def _ebar_mean_var_prime(x, F):
    _require_scalar(F)
    return [x[0] - F.mean(), x[1] + x[0] ** 2 - F.second_moment()]


def _ebar_mean_var_modified(x, F):
    if x[1] < 0:
        return [1.0, 1.0]
    return _ebar_mean_var_prime(x, F)


def _ebar_quantile_es(alpha, prime):
    def ebar(x, F):
        _require_scalar(F)
        Fc = float(F.cdf(x[0]))
        pe = float(F.partial_expectation(x[0]))
        second = x[1] - pe / alpha
        if prime:
            second += x[0] / alpha * (Fc - alpha)
        return [Fc - alpha, second]

    return ebar


def _ebar_var_covar(alpha, beta):
    def ebar(x, F):
        _require_bivariate(F)
        p_below = float(F.marginal(0).cdf_left(x[0]))  # P(Y1 < x1)
        joint = F.tail_prob(x[0], x[1], ("<", ">="))
        return [(1.0 - p_below) - beta, joint - alpha * p_below]

    return ebar


def _ebar_covar_1d(alpha, beta):
    def ebar(x, F):
        _require_bivariate(F)
        return [F.tail_prob(x[0], x[1], ("<", "<")) - (1 - alpha) * (1 - beta)]

    return ebar


# ----------------------------------------------------------------------
# functionals


@dataclass(frozen=True)
class FunctionalSpec:
    """A (possibly set-valued) functional T with values in R^k.

    ``value(F)`` returns one closed interval ``(lo, hi)`` per coordinate;
    point values are degenerate intervals. ``kinds`` records how each
    coordinate responds to the location-scale map y -> mu + s y
    (``"location"``: mu + s c, ``"scale2"``: s^2 c).
    """

    key: str
    tag: str
    params: tuple
    dim: int
    kinds: tuple

    def value(self, F):
        tag = self.tag
        if tag == "mean":
            m = F.mean()
            return [(m, m)]
        if tag == "variance":
            v = F.variance()
            return [(v, v)]
        if tag == "expectile":
            e = expectile(F, self.params[0])
            return [(e, e)]
        if tag == "quantile":
            return [F.quantile_set(self.params[0])]
        if tag == "es":
            e = F.es_lower(self.params[0])
            return [(e, e)]
        if tag == "mean-variance":
            m, v = F.mean(), F.variance()
            return [(m, m), (v, v)]
        if tag == "quantile-es":
            alpha = self.params[0]
            q = F.quantile_set(alpha)
            e = F.es_lower(alpha)
            return [q, (e, e)]
        if tag == "var-covar":
            x1, x2 = var_covar(F, *self.params)
            return [(x1, x1), (x2, x2)]
        raise ValueError(f"unknown functional {tag!r}")

    def point(self, F):
        """Point selection: lower endpoint of every coordinate interval."""
        return np.array([lo for lo, _ in self.value(F)])

    def contains(self, x, F, tol=0.0) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return all(lo - tol <= xi <= hi + tol for xi, (lo, hi) in zip(x, self.value(F)))


def functional_value(T: FunctionalSpec, F):
    return T.value(F)


def expectile(F: ScalarDistribution, tau: float) -> float:
    """The tau-expectile: root of the expected expectile identification function."""
    g = lambda c: _ebar_expectile(tau)(np.array([c]), F)[0]
    lo, hi = F.quantile_set(1e-9)[0], F.quantile_set(1 - 1e-9)[1]
    lo, hi = min(lo, F.mean()) - 1.0, max(hi, F.mean()) + 1.0
    while g(lo) > 0:
        lo -= 2 * (hi - lo)
    while g(hi) < 0:
        hi += 2 * (hi - lo)
    return optimize.brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def var_covar(F: BivariateDistribution, alpha: float, beta: float):
    """The pair solving the two (VaR, CoVaR) moment conditions of the catalog.

    x1 solves P(Y1 >= x1) = beta; x2 solves P(Y2 >= x2 | Y1 < x1) = alpha.
    Defined for the bivariate gaussian family (continuous, positive density).
    """
    if F.family != "bivariate-gaussian":
        raise ValueError("var-covar is defined here for continuous bivariate laws only")
    m1 = F.marginal(0)
    x1 = float(m1.quantile(1.0 - beta))
    p_below = float(m1.cdf(x1))
    s2 = math.sqrt(F.cov[1][1])
    g = lambda t: F.tail_prob(x1, t, ("<", ">=")) - alpha * p_below
    lo, hi = F.mean[1] - 40 * s2, F.mean[1] + 40 * s2
    x2 = optimize.brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return x1, float(x2)


# ----------------------------------------------------------------------
# registry


CATALOG_KEYS = (
    "mean",
    "expectile:tau",
    "quantile:alpha",
    "mean-var",
    "mean-var-prime",
    "quantile-es:alpha",
    "quantile-es-prime:alpha",
    "var-covar:alpha,beta",
    "covar-1d:alpha,beta",
    "mean-var-modified",
)


def _parse_key(key: str):
    name, _, rest = key.partition(":")
    params = tuple(float(p) for p in rest.split(",")) if rest else ()
    return name.strip(), params


def _check_level(name, *levels):
    for p in levels:
        if not 0.0 < p < 1.0:
            raise ValueError(f"{name}: levels must lie in (0, 1), got {p}")


def _first_coord_break(x):
    return (x[0],)


def identification_function(key: str) -> IdentificationFunction:
    """Look up a catalog entry by its string key, e.g. ``"quantile-es:0.025"``."""
    name, p = _parse_key(key)
    nparams = {
        "mean": 0,
        "expectile": 1,
        "quantile": 1,
        "mean-var": 0,
        "mean-var-prime": 0,
        "mean-var-modified": 0,
        "quantile-es": 1,
        "quantile-es-prime": 1,
        "var-covar": 2,
        "covar-1d": 2,
    }
    if name not in nparams:
        raise KeyError(f"unknown catalog key {key!r}")
    if len(p) != nparams[name]:
        raise ValueError(f"{name} takes {nparams[name]} parameter(s), got {len(p)}")
    _check_level(name, *p)
    real1 = ActionDomain(1)
    if name == "mean":
        return IdentificationFunction(
            key, 1, 1, 1, real1, lambda x, y, step=hard_step: v_mean(x, y), _ebar_mean, tag="mean"
        )
    if name == "expectile":
        (tau,) = p
        return IdentificationFunction(
            key, 1, 1, 1, real1,
            lambda x, y, step=hard_step: v_expectile(tau, x, y, step),
            _ebar_expectile(tau), _first_coord_break, tag="expectile", params=p,
        )
    if name == "quantile":
        (alpha,) = p
        return IdentificationFunction(
            key, 1, 1, 1, real1,
            lambda x, y, step=hard_step: v_quantile(alpha, x, y, step),
            _ebar_quantile(alpha), _first_coord_break, tag="quantile", params=p,
            indicators=(IndicatorCoordinate(0, 0, "lower"),),
        )
    if name == "mean-var":
        return IdentificationFunction(
            key, 2, 2, 1, ActionDomain(2, "product"),
            lambda x, y, step=hard_step: v_mean_var(x, y), _ebar_mean_var, tag="mean-var",
        )
    if name == "mean-var-prime":
        return IdentificationFunction(
            key, 2, 2, 1, ActionDomain(2, "product"),
            lambda x, y, step=hard_step: v_mean_var_prime(x, y), _ebar_mean_var_prime, tag="mean-var-prime",
        )
    if name == "mean-var-modified":
        return IdentificationFunction(
            key, 2, 2, 1, ActionDomain(2, "real"),
            lambda x, y, step=hard_step: v_mean_var_modified(x, y), _ebar_mean_var_modified,
            tag="mean-var-modified", smooth_ok=False,
        )
    if name in ("quantile-es", "quantile-es-prime"):
        (alpha,) = p
        prime = name.endswith("prime")
        f = v_quantile_es_prime if prime else v_quantile_es
        return IdentificationFunction(
            key, 2, 2, 1, ActionDomain(2, "halfspace"),
            lambda x, y, step=hard_step: f(alpha, x, y, step),
            _ebar_quantile_es(alpha, prime), _first_coord_break, tag=name, params=p,
            indicators=(IndicatorCoordinate(0, 0, "lower"),),
        )
    if name == "var-covar":
        alpha, beta = p
        return IdentificationFunction(
            key, 2, 2, 2, ActionDomain(2),
            lambda x, y, step=hard_step: v_var_covar(alpha, beta, x, y, step),
            _ebar_var_covar(alpha, beta), lambda x: ((x[0], x[1]),), tag="var-covar", params=p,
            indicators=(IndicatorCoordinate(0, 0, "upper"), IndicatorCoordinate(1, 1, "upper")),
        )
    alpha, beta = p
    return IdentificationFunction(
        key, 1, 2, 2, ActionDomain(2),
        lambda x, y, step=hard_step: v_covar_1d(alpha, beta, x, y, step),
        _ebar_covar_1d(alpha, beta), lambda x: ((x[0], x[1]),), tag="covar-1d", params=p,
    )


def functional_for(key: str) -> FunctionalSpec:
    """The functional identified by catalog entry ``key`` (or a bare functional key).

    Bare keys additionally include ``"variance"`` and ``"es:alpha"``, which
    have no identification function of their own.
    """
    name, p = _parse_key(key)
    if name == "mean":
        return FunctionalSpec("mean", "mean", (), 1, ("location",))
    if name == "variance":
        return FunctionalSpec("variance", "variance", (), 1, ("scale2",))
    if name == "expectile":
        return FunctionalSpec(f"expectile:{p[0]:g}", "expectile", p, 1, ("location",))
    if name == "quantile":
        return FunctionalSpec(f"quantile:{p[0]:g}", "quantile", p, 1, ("location",))
    if name == "es":
        return FunctionalSpec(f"es:{p[0]:g}", "es", p, 1, ("location",))
    if name in ("mean-var", "mean-var-prime", "mean-var-modified", "mean-variance"):
        return FunctionalSpec("mean-variance", "mean-variance", (), 2, ("location", "scale2"))
    if name in ("quantile-es", "quantile-es-prime"):
        return FunctionalSpec(f"quantile-es:{p[0]:g}", "quantile-es", p, 2, ("location", "location"))
    if name in ("var-covar", "covar-1d"):
        return FunctionalSpec(f"var-covar:{p[0]:g},{p[1]:g}", "var-covar", p, 2, ("location", "location"))
    raise KeyError(f"unknown functional key {key!r}")
