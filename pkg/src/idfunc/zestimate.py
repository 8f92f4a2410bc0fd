"""Z-estimation: roots of empirical moment conditions.

The empirical moment of an identification function is its expectation under
the empirical distribution of a sample. Catalog systems are solved by
specialised routes (bisection, order statistics, sequential plug-in); anything
else goes through a damped Newton iteration on a smoothed moment whose
indicator coordinates are then snapped to exact breakpoints.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .catalog import ActionDomain, IdentificationFunction, hard_step, ramp_step
from .exceptions import EmptyRootError, NonConvergenceError
from .osband import MatrixTransform, apply_transform

ROOT_TOL = 1e-9


@dataclass(frozen=True)
class Sample:
    """Observations y_1, ..., y_n; shape (n,) for scalars or (n, d)."""

    observations: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.observations, dtype=float)
        if y.ndim == 0:
            y = y[None]
        if y.ndim == 2 and y.shape[1] == 1:
            y = y[:, 0]
        if y.shape[0] < 1:
            raise ValueError("a sample needs at least one observation")
        if not np.all(np.isfinite(y)):
            raise ValueError("sample contains non-finite values")
        object.__setattr__(self, "observations", y)

    @property
    def n(self) -> int:
        return int(self.observations.shape[0])

    @property
    def dim(self) -> int:
        return 1 if self.observations.ndim == 1 else int(self.observations.shape[1])

    def column(self, j: int) -> np.ndarray:
        y = self.observations
        return y if y.ndim == 1 else y[:, j]

    def __len__(self):
        return self.n


def as_sample(data) -> Sample:
    return data if isinstance(data, Sample) else Sample(np.asarray(data, dtype=float))


@dataclass
class ZEstimate:
    """Result of :func:`z_estimate`.

    ``intervals`` holds, per coordinate, ``None`` for an isolated root or a
    dict ``{"lo", "hi", "closed"}`` when the empirical moment vanishes on a
    whole stretch of that coordinate. ``closed`` names the attained end.
    """

    estimate: np.ndarray
    intervals: list
    residual: float
    converged: bool
    status: str = "ok"
    boundary: bool = False
    method: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "estimate": [float(v) for v in self.estimate],
            "residual": float(self.residual),
            "converged": bool(self.converged),
            "status": self.status,
            "boundary": bool(self.boundary),
            "method": self.method,
        }
        if any(iv is not None for iv in self.intervals):
            out["interval"] = [
                None if iv is None else [float(iv["lo"]), float(iv["hi"])] for iv in self.intervals
            ]
            out["interval_closed"] = [None if iv is None else iv["closed"] for iv in self.intervals]
        if self.diagnostics:
            out["diagnostics"] = self.diagnostics
        return out


def empirical_moment(V: IdentificationFunction, x, sample, step=hard_step) -> np.ndarray:
    """(1/n) sum_i V(x, y_i), a length-k vector."""
    s = as_sample(sample)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    vals = V.evaluate(x, s.observations, step)
    # numpy's pairwise summation keeps the reduction order fixed
    return np.sum(vals, axis=0) / s.n


def _residual(V, x, s):
    return float(np.max(np.abs(empirical_moment(V, x, s))))


# ----------------------------------------------------------------------
# one-dimensional building blocks


def _bisect_scalar(g, lo, hi):
    """Root of a monotone scalar function on [lo, hi]."""
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if np.sign(glo) == np.sign(ghi):
        raise EmptyRootError(f"no sign change on [{lo}, {hi}]")
    return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=1000)


def _order_stat_root(values, target, closed):
    """Root stretch of a step count against a target count.

    For ``closed == "lower"`` the count is #{y <= x} and the moment vanishes
    on [s_j, s_{j+1}) with j = target. For ``"upper"`` the count is
    #{y >= x} and it vanishes on (s_m, s_{m+1}] with m = n - target. Order
    statistics are 1-based here. Returns (point, lo, hi, exact); without an
    exact root, ``point`` is the crossing order statistic.
    """
    s = np.sort(values)
    n = s.size
    t = float(target)
    j = int(np.ceil(t - 1e-9 * max(1.0, t)))
    exact = abs(t - j) <= 1e-9 * max(1.0, t)
    if j < 1 or j > n:
        raise EmptyRootError("target count outside the attainable range")
    if closed == "lower":
        lo = s[j - 1]
        hi = s[j] if j < n else np.inf
        exact = exact and j < n and s[j] != s[j - 1]
        return lo, lo, hi, exact
    m = n - j
    hi = s[m]
    lo = s[m - 1] if m >= 1 else -np.inf
    exact = exact and m >= 1 and s[m] != s[m - 1]
    return hi, lo, hi, exact


# ----------------------------------------------------------------------
# sequential solvers for the catalog systems


def _solve_mean(s, bounds):
    y = s.column(0)
    lo, hi = bounds[0] if bounds else (y.min(), y.max())
    if y.min() == y.max() and not bounds:
        return np.array([y[0]]), [None], {}
    x = _bisect_scalar(lambda c: float(np.mean(c - y)), lo, hi)
    return np.array([x]), [None], {}


def _solve_expectile(s, tau, bounds):
    y = s.column(0)
    lo, hi = bounds[0] if bounds else (y.min(), y.max())
    if y.min() == y.max() and not bounds:
        return np.array([y[0]]), [None], {}
    g = lambda c: float(np.mean(2.0 * np.abs((y <= c) - tau) * (c - y)))
    return np.array([_bisect_scalar(g, lo, hi)]), [None], {}


def _quantile_coord(y, alpha):
    point, lo, hi, exact = _order_stat_root(y, alpha * y.size, "lower")
    interval = {"lo": float(lo), "hi": float(hi), "closed": "lower"} if exact else None
    return point, interval, exact


def _solve_quantile(s, alpha):
    point, interval, exact = _quantile_coord(s.column(0), alpha)
    return np.array([point]), [interval], {"exact_root": bool(exact)}


def _solve_quantile_es(s, alpha, prime):
    y = s.column(0)
    x1, interval, exact = _quantile_coord(y, alpha)
    ind = y <= x1
    # x2 = x1 + sum (y - x1) 1{y <= x1} / (alpha n): the sum is never positive,
    # so x2 <= x1 holds in floating point too. At an exact quantile root this
    # is also the root of the uncorrected function; without one the
    # uncorrected moment has no root and the atom-corrected value is reported.
    x2 = x1 + float(np.sum((y - x1) * ind)) / (alpha * s.n)
    diag = {"exact_root": bool(exact)}
    if not (exact or prime):
        diag["es_coordinate"] = "atom-corrected"
    return np.array([x1, x2]), [interval, None], diag


def _solve_mean_var(s, prime):
    y = s.column(0)
    (x1,), _, _ = _solve_mean(s, None)
    if prime:
        x2 = max(float(np.mean(y * y)) - x1 * x1, 0.0)
    else:
        x2 = float(np.mean((y - x1) ** 2))
    return np.array([x1, x2]), [None, None], {}


def _solve_var_covar(s, alpha, beta):
    y1, y2 = s.column(0), s.column(1)
    x1, lo1, hi1, exact1 = _order_stat_root(y1, beta * s.n, "upper")
    below = y1 < x1
    m = int(np.sum(below))
    if m == 0:
        raise EmptyRootError("no observation below the VaR coordinate")
    x2, lo2, hi2, exact2 = _order_stat_root(y2[below], alpha * m, "upper")
    iv = [
        {"lo": float(lo1), "hi": float(hi1), "closed": "upper"} if exact1 else None,
        {"lo": float(lo2), "hi": float(hi2), "closed": "upper"} if exact2 else None,
    ]
    return np.array([x1, x2]), iv, {"exact_root": bool(exact1 and exact2), "conditioning_count": m}


def _sequential(V, s, bounds):
    tag, p = V.tag, V.params
    if tag == "mean":
        return _solve_mean(s, bounds)
    if tag == "expectile":
        return _solve_expectile(s, p[0], bounds)
    if tag == "quantile":
        return _solve_quantile(s, p[0])
    if tag in ("quantile-es", "quantile-es-prime"):
        return _solve_quantile_es(s, p[0], tag.endswith("prime"))
    if tag == "mean-var":
        return _solve_mean_var(s, False)
    if tag in ("mean-var-prime", "mean-var-modified"):
        return _solve_mean_var(s, True)
    if tag == "var-covar":
        return _solve_var_covar(s, *p)
    return None


# ----------------------------------------------------------------------
# general fallback


def _fd_jacobian(f, x, fx, h=None):
    k = x.size
    J = np.empty((fx.size, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = h if h is not None else 1e-7 * max(1.0, abs(x[j]))
        J[:, j] = (f(x + e) - f(x - e)) / (2 * e[j])
    return J


def _damped_newton(f, x0, tol, max_iter=100, project=None):
    x = np.array(x0, dtype=float)
    fx = f(x)
    norm = float(np.max(np.abs(fx)))
    it = 0
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return x, norm, it - 1, True
        J = _fd_jacobian(f, x, fx)
        step = np.linalg.lstsq(J, -fx, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            cand = x + t * step
            if project is not None:
                cand = project(cand)
            fc = f(cand)
            nc = float(np.max(np.abs(fc)))
            if nc < norm:
                x, fx, norm = cand, fc, nc
                break
            t *= 0.5
        else:
            break
    return x, norm, it, norm <= tol


def _project(domain):
    if domain is None or domain.constraint == "real":
        return None
    if domain.constraint == "product":
        return lambda x: np.array([x[0], max(x[1], 0.0)])
    return lambda x: np.array([x[0], min(x[1], x[0])])


def _initial_point(V, s):
    x0 = np.empty(V.action_dim)
    for i in range(V.action_dim):
        x0[i] = float(np.median(s.column(min(i, s.dim - 1))))
    if V.domain.constraint == "product":
        x0[1] = max(float(np.var(s.column(0))), 1.0)
    return x0


def _first_index(pred, n):
    """Smallest i in [0, n) with pred(i) true, for a monotone predicate; n if none."""
    a, b = 0, n
    while a < b:
        mid = (a + b) // 2
        if pred(mid):
            b = mid
        else:
            a = mid + 1
    return a


def _snap_indicator(V, s, x, ind, tol):
    """Move a pure indicator coordinate onto the attained end of its root stretch.

    Moment component ``ind.coord`` is a monotone step function of that
    coordinate, so bisection over the sorted breakpoints finds the stretch
    where it vanishes, or the crossing when none does.
    """
    c = ind.coord
    pts = np.unique(s.column(ind.column))
    n = pts.size

    def comp(i):
        z = x.copy()
        z[c] = pts[i]
        return float(empirical_moment(V, z, s)[c])

    sgn = 1.0 if comp(n - 1) >= comp(0) else -1.0
    g = lambda i: sgn * comp(i)
    if ind.closed == "lower":
        a = _first_index(lambda i: g(i) >= -tol, n)
        if a == n:
            raise EmptyRootError(f"coordinate {c}: moment never reaches zero on the data range")
        exact = abs(g(a)) <= tol
        b = _first_index(lambda i: g(i) > tol, n) if exact else a + 1
        lo, hi = pts[a], (pts[b] if b < n else np.inf)
        point = pts[a]
    else:
        a = _first_index(lambda i: g(i) > tol, n) - 1
        if a < 0:
            raise EmptyRootError(f"coordinate {c}: moment never reaches zero on the data range")
        exact = abs(g(a)) <= tol
        b = _first_index(lambda i: g(i) >= -tol, n) - 1 if exact else a - 1
        lo, hi = (pts[b] if b >= 0 else -np.inf), pts[a]
        point = pts[a]
    x = x.copy()
    x[c] = point
    interval = {"lo": float(lo), "hi": float(hi), "closed": ind.closed} if exact else None
    return x, interval, bool(exact)


def _solve_smooth(V, s, x, smooth, rows, tol):
    """Damped Newton on the unsmoothed moment over the ``smooth`` coordinates."""
    if not smooth:
        return x, _residual(V, x, s), 0

    def g(z):
        full = x.copy()
        full[smooth] = z
        return empirical_moment(V, full, s)[rows]

    z, _, its, _ = _damped_newton(g, x[smooth], tol * 1e-3)
    x = x.copy()
    x[smooth] = z
    return x, _residual(V, x, s), its


def _search_indicators(V, s, x, smooth, tol, window):
    """Breakpoint search for indicator coordinates of a transformed function.

    Once components are mixed no single component is a step function, so
    nearby breakpoints of every indicator coordinate are tried jointly, the
    smooth coordinates re-solved for each, and the full residual compared.
    Returns the point, its per-coordinate stretches and whether it is exact.
    """
    inds = V.indicators
    pts = [np.unique(s.column(ind.column)) for ind in inds]
    centre = [int(np.clip(np.searchsorted(p, x[ind.coord]), 0, p.size - 1)) for p, ind in zip(pts, inds)]
    ranges = [range(max(0, c - window), min(p.size, c + window + 1)) for p, c in zip(pts, centre)]
    combos = sorted(itertools.product(*ranges),
                    key=lambda idx: (max(abs(i - c) for i, c in zip(idx, centre)), idx))

    def solve(idx):
        z = x.copy()
        for ind, p, i in zip(inds, pts, idx):
            z[ind.coord] = p[i]
        return _solve_smooth(V, s, z, smooth, list(range(V.k)), tol)

    best = None
    for idx in combos:
        z, res, _ = solve(idx)
        if best is None or res < best[2]:
            best = (list(idx), z, res)
        if res <= tol:
            break
    idx, z, res = best
    if res > tol:
        return z, [None] * V.action_dim, False
    # walk each coordinate to the attained end of its stretch, then find the open end
    intervals = [None] * V.action_dim
    for m, (ind, p) in enumerate(zip(inds, pts)):
        toward = -1 if ind.closed == "lower" else 1

        def zero_at(i, m=m):
            trial = list(idx)
            trial[m] = i
            return 0 <= i < p.size and solve(trial)[1] <= tol

        while zero_at(idx[m] + toward):
            idx[m] += toward
        far = idx[m] - toward
        while zero_at(far):
            far -= toward
        inf = -np.inf if toward > 0 else np.inf
        other = p[far] if 0 <= far < p.size else inf
        lo, hi = (p[idx[m]], other) if ind.closed == "lower" else (other, p[idx[m]])
        intervals[ind.coord] = {"lo": float(lo), "hi": float(hi), "closed": ind.closed}
    z, res, _ = solve(idx)
    return z, intervals, True


def _general(V, s, domain, tol):
    project = _project(domain)
    y = s.observations
    spread = float(np.ptp(y)) if y.size else 0.0
    delta = max(spread, 1.0) / np.sqrt(s.n)
    x = _initial_point(V, s)
    diag = {"bandwidths": [], "newton_iterations": []}
    for _ in range(3):
        step = ramp_step(delta)
        f = lambda z: empirical_moment(V, z, s, step)
        x, _, its, _ = _damped_newton(f, x, tol * 1e-3, project=project)
        diag["bandwidths"].append(float(delta))
        diag["newton_iterations"].append(int(its))
        delta *= 0.5

    coords = {ind.coord for ind in V.indicators}
    smooth = [i for i in range(V.action_dim) if i not in coords]
    intervals = [None] * V.action_dim
    exact = True
    if V.indicators and all(ind.pure for ind in V.indicators):
        for ind in V.indicators:
            x, iv, ok = _snap_indicator(V, s, x, ind, tol)
            intervals[ind.coord] = iv
            exact = exact and ok
        x, _, its = _solve_smooth(V, s, x, smooth, smooth, tol)
        diag["newton_iterations"].append(int(its))
    elif V.indicators:
        # points within a few final bandwidths of the smoothed root, at least 4 a side
        window = 4 + int(np.ceil(3.0 * delta * s.n / max(spread, 1e-300)))
        x, intervals, exact = _search_indicators(V, s, x, smooth, tol, min(window, 200))
        diag["search_window"] = int(min(window, 200))
    else:
        x, _, its = _solve_smooth(V, s, x, smooth, list(range(V.k)), tol)
        diag["newton_iterations"].append(int(its))
    if project is not None:
        # Newton can overshoot a domain edge by rounding; without an exact
        # root this also puts the reported crossing inside the domain. A
        # projection that moves a root is caught by the residual check.
        x = project(x)
    diag["exact_root"] = exact
    return x, intervals, diag


# ----------------------------------------------------------------------


def _boundary(V, x):
    return V.domain.constraint != "real" and not V.domain.interior(x)


def z_estimate(
    V: IdentificationFunction,
    sample,
    domain: Optional[ActionDomain] = None,
    seed=None,
    method: str = "auto",
    bounds=None,
    tol: float = ROOT_TOL,
) -> ZEstimate:
    """Solve (1/n) sum_i V(x, y_i) = 0.

    Parameters
    ----------
    V : IdentificationFunction
    sample : Sample or array_like
    domain : ActionDomain, optional
        Defaults to ``V.domain``. The estimate must lie in it.
    seed : optional
        Recorded in the diagnostics; every solver here is deterministic.
    method : {"auto", "sequential", "general"}
        ``"auto"`` uses the specialised route for catalog entries.
    bounds : sequence of (lo, hi), optional
        Bracket for the scalar monotone moments (mean, expectile).
    tol : float
        Residual tolerance for declaring an exact root.

    Returns
    -------
    ZEstimate
        Indicator coordinates report the attained end of their root stretch
        (the lower end for 1{y <= x}). Without an exact root the crossing
        point is returned with ``converged=False``.

    Raises
    ------
    EmptyRootError
        The moment does not change sign inside the bracket or domain.
    NonConvergenceError
        Only when ``method="general"`` stalls on a smooth system.
    """
    s = as_sample(sample)
    domain = domain or V.domain
    if V.k < V.action_dim:
        raise ValueError(f"{V.key}: {V.k} moment(s) for {V.action_dim} coordinates; roots are not isolated")
    expected_obs = V.obs_dim
    if s.dim != expected_obs:
        raise ValueError(f"{V.key} takes {expected_obs}-dimensional observations, got {s.dim}")

    solved = None
    used = method
    if method in ("auto", "sequential"):
        solved = _sequential(V, s, bounds)
        used = "sequential"
        if solved is None and method == "sequential":
            raise ValueError(f"no sequential solver for {V.key}")
    if solved is None:
        solved = _general(V, s, domain, tol)
        used = "general"
    x, intervals, diag = solved
    x = np.asarray(x, dtype=float)
    if seed is not None:
        diag = dict(diag, seed=seed)

    if not domain.contains(x):
        raise EmptyRootError(f"{V.key}: solution {x.tolist()} lies outside the action domain")
    res = _residual(V, x, s)
    if res <= tol:
        status, converged = "ok", True
    elif diag.get("exact_root") is False:
        status, converged = "no-exact-root", False
    else:
        status, converged = "non-converged", False
        if method == "general":
            raise NonConvergenceError(f"{V.key}: residual {res:.3g} above tolerance {tol:.3g}")
    return ZEstimate(x, intervals, res, converged, status, _boundary(V, x), used, diag)


def root_invariance_check(V: IdentificationFunction, h: MatrixTransform, sample, tol: float = ROOT_TOL) -> bool:
    """Do V and h.V share the solver-reported root set on this sample?

    Both functions are solved; their estimates and root stretches must agree,
    and each estimate must be an exact root of the other function.
    """
    s = as_sample(sample)
    # ``h`` may also be a second identification function (e.g. a catalog variant)
    Vp = h if isinstance(h, IdentificationFunction) else apply_transform(h, V)
    a = z_estimate(V, s, tol=tol)
    b = z_estimate(Vp, s, tol=tol)
    if not (a.converged and b.converged):
        return False
    if not np.allclose(a.estimate, b.estimate, rtol=0, atol=1e-8 * max(1.0, float(np.max(np.abs(a.estimate))))):
        return False
    for ia, ib in zip(a.intervals, b.intervals):
        if (ia is None) != (ib is None):
            return False
        if ia is not None and (ia["lo"], ia["hi"], ia["closed"]) != (ib["lo"], ib["hi"], ib["closed"]):
            return False
    return _residual(Vp, a.estimate, s) <= tol and _residual(V, b.estimate, s) <= tol
