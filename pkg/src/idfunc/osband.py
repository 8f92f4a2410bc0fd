"""Matrix transforms of identification functions.

Multiplying a strict identification function by a pointwise full-rank matrix
function ``h(x)`` yields another strict identification function, and under a
richness condition every identification function for the same functional
arises this way. This module applies ``h``, recovers it numerically from a pair
of identification functions, and checks the richness condition on a battery of
distributions.
"""

from __future__ import annotations

import csv
import io
import math
import itertools
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .catalog import IdentificationFunction
from .distributions import bivariate_gaussian, normal
from .exceptions import (
    DegenerateSimplexError,
    DimensionMismatchError,
    InconsistentPairError,
    SingularBatteryError,
)

BARYCENTRIC_CUTOFF = 1e-9
SIMPLEX_VOLUME_MIN = 1e-10
CONDITION_MAX = 1e8


def _det(M):
    """Determinant; the explicit formula for 2x2 keeps unit-triangular results exact."""
    M = np.asarray(M, dtype=float)
    if M.shape[-2:] == (2, 2):
        return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    return np.linalg.det(M)


class MatrixTransform:
    """A matrix-valued function ``h`` of the action point.

    ``func`` maps an action point of shape (action_dim,) to a (k, k) array.
    Calling the transform on a stack of points of shape (..., action_dim)
    returns (..., k, k).
    """

    def __init__(self, k: int, func: Callable, key: str = "custom"):
        self.k = k
        self.key = key
        self._func = func

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim <= 1:
            return np.asarray(self._func(np.atleast_1d(x)), dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        out = np.stack([np.asarray(self._func(p), dtype=float) for p in flat])
        return out.reshape(x.shape[:-1] + (self.k, self.k))

    def det(self, x):
        return _det(self(x))

    def __matmul__(self, other: "MatrixTransform") -> "MatrixTransform":
        if other.k != self.k:
            raise DimensionMismatchError("cannot compose transforms of different sizes")
        return MatrixTransform(self.k, lambda x: self(x) @ other(x), key=f"{self.key}@{other.key}")

    def __repr__(self):
        return f"MatrixTransform({self.key!r}, k={self.k})"


class _VectorisedTransform(MatrixTransform):
    """Transform whose ``func`` already broadcasts over leading axes."""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x[None]
        return np.asarray(self._func(x), dtype=float)


def identity(k: int) -> MatrixTransform:
    return constant(np.eye(k), key="identity")


def constant(matrix, key: Optional[str] = None) -> MatrixTransform:
    M = np.array(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatchError("transform matrix must be square")
    k = M.shape[0]

    def f(x):
        return np.broadcast_to(M, x.shape[:-1] + (k, k)).copy()

    return _VectorisedTransform(k, f, key=key or "const")


def mean_var_matrix() -> MatrixTransform:
    """h(x) = [[1, 0], [2 x1, 1]]: turns the central second moment into the raw one."""

    def f(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        out[..., 1, 0] = 2.0 * x[..., 0]
        return out

    return _VectorisedTransform(2, f, key="mean-var")


def quantile_es_matrix(alpha: float) -> MatrixTransform:
    """h(x) = [[1, 0], [x1/alpha, 1]]: adds the atom correction to the ES component."""

    def f(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        out[..., 1, 0] = x[..., 0] / alpha
        return out

    return _VectorisedTransform(2, f, key=f"quantile-es:{alpha:g}")


def tabulated(axes: Sequence[Sequence[float]], values) -> MatrixTransform:
    """Piecewise-linear interpolation of matrices tabulated on a rectilinear grid.

    ``values`` has shape ``(len(axes[0]), ..., len(axes[-1]), k, k)``.
    Points outside the grid raise ``ValueError``; no extrapolation.
    """
    values = np.asarray(values, dtype=float)
    k = values.shape[-1]
    interp = RegularGridInterpolator(
        tuple(np.asarray(a, dtype=float) for a in axes), values.reshape(values.shape[:-2] + (k * k,)),
        method="linear", bounds_error=True,
    )

    def f(x):
        return interp(x[None, :])[0].reshape(k, k)

    return MatrixTransform(k, f, key="tabulated")


def transform_from_key(key: str, k: int = 2) -> MatrixTransform:
    """Built-in transforms by name: ``identity``, ``mean-var``, ``quantile-es:alpha``,
    ``scale:c`` (c times identity) and ``const:a11,a12,...`` (row-major)."""
    name, _, rest = key.partition(":")
    if name == "identity":
        return identity(int(rest) if rest else k)
    if name == "mean-var":
        if rest:
            raise ValueError(f"transform {key!r} takes no parameter")
        return mean_var_matrix()
    if name == "quantile-es":
        return quantile_es_matrix(float(rest))
    if name == "scale":
        return constant(float(rest) * np.eye(k), key=key)
    if name == "const":
        vals = [float(v) for v in rest.split(",")]
        n = int(round(len(vals) ** 0.5))
        if n * n != len(vals):
            raise ValueError("const transform needs a square number of entries")
        return constant(np.reshape(vals, (n, n)), key=key)
    raise KeyError(f"unknown transform {key!r}")


# ----------------------------------------------------------------------
# applying transforms


def apply_transform(h: MatrixTransform, V: IdentificationFunction) -> IdentificationFunction:
    """V'(x, y) = h(x) V(x, y), with expectation h(x) V_bar(x, F)."""
    if h.k != V.k:
        raise DimensionMismatchError(f"transform is {h.k}x{h.k} but V has {V.k} components")

    def pointwise(x, y, step=None):
        vals = V.evaluate(x, y) if step is None else V.evaluate(x, y, step)
        return np.einsum("...ij,...j->...i", h(x), vals)

    def closed_form(x, F):
        return h(x) @ V.expected(x, F)

    return IdentificationFunction(
        key=f"{h.key}*{V.key}",
        k=V.k,
        action_dim=V.action_dim,
        obs_dim=V.obs_dim,
        domain=V.domain,
        pointwise=pointwise,
        closed_form=closed_form,
        breakpoints=V.breakpoints,
        tag=None,
        params=V.params,
        indicators=tuple(replace(ind, pure=False) for ind in V.indicators),
        smooth_ok=V.smooth_ok,
    )


def is_full_rank(h: MatrixTransform, x, tol: float = 1e-12):
    """Return ``(|det h(x)| > tol, det h(x))``."""
    d = float(_det(h(x)))
    return abs(d) > tol, d


# ----------------------------------------------------------------------
# recovering h


@dataclass
class RecoveredMatrix:
    x: np.ndarray
    matrix: np.ndarray
    determinant: float
    heldout_residual: Optional[float]
    condition: float

    def to_dict(self):
        return {
            "x": [float(v) for v in self.x],
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "determinant": float(self.determinant),
            "heldout_residual": None if self.heldout_residual is None else float(self.heldout_residual),
        }


def recover_h(V, V_prime, x, battery, tol: float = 1e-6) -> RecoveredMatrix:
    """Solve M [V_bar(x, F_1) ... V_bar(x, F_k)] = [V_bar'(x, F_1) ... V_bar'(x, F_k)].

    The first ``k`` distributions of ``battery`` determine ``M``; any further
    ones are held out and ``max ||V_bar'(x, G) - M V_bar(x, G)||_inf`` over them
    is reported as the held-out residual.

    Raises
    ------
    SingularBatteryError
        If the first ``k`` expected vectors are not linearly independent
        (condition number >= 1e8).
    InconsistentPairError
        If the held-out residual exceeds ``tol``; the result is attached.
    """
    if V.k != V_prime.k:
        raise DimensionMismatchError("identification functions differ in dimension")
    k = V.k
    if len(battery) < k:
        raise ValueError(f"need at least {k} distributions, got {len(battery)}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    A = np.column_stack([V.expected(x, F) for F in battery[:k]])
    B = np.column_stack([V_prime.expected(x, F) for F in battery[:k]])
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond >= CONDITION_MAX:
        raise SingularBatteryError(f"battery vectors are not independent at x={x.tolist()} (cond={cond:.3g})")
    M = np.linalg.solve(A.T, B.T).T
    residual = None
    if len(battery) > k:
        residual = max(
            float(np.max(np.abs(V_prime.expected(x, G) - M @ V.expected(x, G)))) for G in battery[k:]
        )
    result = RecoveredMatrix(x, M, float(_det(M)), residual, cond)
    if residual is not None and residual > tol:
        raise InconsistentPairError(
            f"held-out residual {residual:.3g} exceeds {tol:g} at x={x.tolist()}", result=result
        )
    return result


def recover_h_grid(V, V_prime, x_grid, battery=None, candidates=None, tol: float = 1e-6):
    """Run :func:`recover_h` at every grid point.

    Without an explicit ``battery`` one passing :func:`check_v1` for ``V`` is
    searched at each point among ``candidates`` (default: :func:`default_candidates`).
    """
    out = []
    for x in np.atleast_2d(np.asarray(x_grid, dtype=float)):
        bat = battery if battery is not None else find_v1_battery(V, x, candidates)
        out.append(recover_h(V, V_prime, x, bat, tol=tol))
    return out


def determinant_sign_constant(results) -> bool:
    signs = {np.sign(r.determinant) for r in results}
    return len(signs) == 1 and 0.0 not in signs


def grid_csv(results) -> str:
    """CSV rows ``x..., det, residual`` for a grid sweep."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    dim = len(results[0].x) if results else 0
    w.writerow([f"x{i + 1}" for i in range(dim)] + ["det", "residual"])
    for r in results:
        res = "" if r.heldout_residual is None else f"{r.heldout_residual:.17g}"
        w.writerow([f"{v:.17g}" for v in r.x] + [f"{r.determinant:.17g}", res])
    return buf.getvalue()


# ----------------------------------------------------------------------
# richness condition


@dataclass
class V1Result:
    passed: bool
    barycentric: np.ndarray
    points: np.ndarray
    volume: float


def _simplex_volume(points):
    """k-volume after scaling each coordinate of the vertices to unit max-norm."""
    k = points.shape[1]
    scale = np.max(np.abs(points), axis=0)
    scale[scale == 0] = 1.0
    p = points / scale
    edges = (p[1:] - p[0]).T
    return abs(np.linalg.det(edges)) / math.factorial(k)


def barycentric_origin(points):
    """Barycentric coordinates of the origin w.r.t. the simplex with vertices ``points``."""
    points = np.asarray(points, dtype=float)
    n, k = points.shape
    A = np.vstack([points.T, np.ones(n)])
    rhs = np.zeros(k + 1)
    rhs[-1] = 1.0
    return np.linalg.solve(A, rhs)


def check_v1(V, x, battery) -> V1Result:
    """Does 0 lie in the interior of the convex hull of V_bar(x, F_1..F_{k+1})?"""
    k = V.k
    if len(battery) != k + 1:
        raise ValueError(f"need exactly {k + 1} distributions, got {len(battery)}")
    pts = np.array([V.expected(x, F) for F in battery])
    vol = _simplex_volume(pts)
    if vol <= SIMPLEX_VOLUME_MIN:
        raise DegenerateSimplexError(f"expected vectors span a degenerate simplex (volume {vol:.3g})")
    lam = barycentric_origin(pts)
    return V1Result(bool(np.all(lam > BARYCENTRIC_CUTOFF)), lam, pts, vol)


def default_candidates(V, x):
    """Location-scale gaussians around ``x`` to search for a battery."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if V.obs_dim == 2:
        offs = (-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
        return [
            bivariate_gaussian((x[0] + a, x[1] + b), ((1.0, r), (r, 1.0)))
            for a in offs
            for b in offs
            for r in (0.0, 0.5)
        ]
    b = 1.0
    if V.domain.constraint == "product" and len(x) > 1 and x[1] > 0:
        b = float(np.sqrt(x[1]))
    offs = np.arange(-3.0, 3.01, 0.5)
    variances = (0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 9.0, 16.0, 36.0)
    return [normal(x[0] + b * o, b * b * v) for o in offs for v in variances]


def find_v1_battery(V, x, candidates=None):
    """The (k+1)-subset of ``candidates`` whose expected vectors contain the origin
    most centrally (largest minimum barycentric coordinate).

    Raises ``SingularBatteryError`` if no subset passes :func:`check_v1`.
    """
    if candidates is None:
        candidates = default_candidates(V, x)
    k = V.k
    pts = np.array([V.expected(x, F) for F in candidates])
    combos = np.array(list(itertools.combinations(range(len(pts)), k + 1)))
    best, best_score = None, BARYCENTRIC_CUTOFF
    for chunk in np.array_split(combos, max(1, len(combos) // 20000)):
        P = pts[chunk]  # (m, k+1, k)
        A = np.concatenate([np.swapaxes(P, 1, 2), np.ones((len(chunk), 1, k + 1))], axis=1)
        rhs = np.zeros(k + 1)
        rhs[-1] = 1.0
        dets = np.linalg.det(A)
        ok = np.abs(dets) > 1e-12
        if not ok.any():
            continue
        lam = np.full((len(chunk), k + 1), -np.inf)
        lam[ok] = np.linalg.solve(A[ok], np.broadcast_to(rhs, (ok.sum(), k + 1))[..., None])[..., 0]
        score = lam.min(axis=1)
        i = int(np.argmax(score))
        if score[i] > best_score:
            best, best_score = chunk[i], score[i]
    if best is None:
        raise SingularBatteryError(f"no battery among {len(candidates)} candidates satisfies the richness check")
    battery = [candidates[i] for i in best]
    check_v1(V, x, battery)  # confirms nondegeneracy with the scaled-volume test
    return battery


# ----------------------------------------------------------------------
# pointwise identity


def pointwise_osband_check(V, V_prime, h, x_grid, y_grid, n_random: int = 0, seed=None) -> float:
    """max over the grid of ||V'(x, y) - h(x) V(x, y)||_inf.

    With ``n_random`` > 0, additional points are drawn uniformly from the
    bounding boxes of the grids, since the identity is only asserted almost
    everywhere and grid points alone cannot probe that.
    """
    X = np.atleast_2d(np.asarray(x_grid, dtype=float))
    if V.action_dim == 1 and X.shape[-1] != 1:
        X = X.reshape(-1, 1)
    Y = np.asarray(y_grid, dtype=float)
    if V.obs_dim == 1:
        Y = Y.reshape(-1)
    else:
        Y = Y.reshape(-1, V.obs_dim)
    XX = np.repeat(X, len(Y), axis=0)
    YY = np.tile(Y, (len(X),) + (1,) * (Y.ndim - 1))
    if n_random:
        rng = np.random.default_rng(seed)
        xr = rng.uniform(X.min(axis=0), X.max(axis=0), size=(n_random, X.shape[1]))
        if Y.ndim == 1:
            yr = rng.uniform(Y.min(), Y.max(), size=n_random)
        else:
            yr = rng.uniform(Y.min(axis=0), Y.max(axis=0), size=(n_random, Y.shape[1]))
        XX = np.concatenate([XX, xr])
        YY = np.concatenate([YY, yr])
    lhs = V_prime.evaluate(XX, YY)
    rhs = np.einsum("...ij,...j->...i", h(XX), V.evaluate(XX, YY))
    return float(np.max(np.abs(lhs - rhs)))
