import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from idfunc.catalog import functional_for, identification_function
from idfunc.distributions import bivariate_gaussian, exponential, normal, student_t
from idfunc.exceptions import EmptyRootError
from idfunc.osband import apply_transform, constant, identity, mean_var_matrix, quantile_es_matrix
from idfunc.zestimate import Sample, as_sample, empirical_moment, root_invariance_check, z_estimate

FIVE = [1.0, 2.0, 3.0, 4.0, 5.0]

KEYS = ["mean", "expectile:0.3", "quantile:0.25", "mean-var", "mean-var-prime", "quantile-es:0.1",
        "quantile-es-prime:0.1", "var-covar:0.1,0.2", "mean-var-modified"]
PAIR = bivariate_gaussian((0.0, 1.0), ((1.0, 0.5), (0.5, 2.0)))


def _draws(V, n, seed):
    F = PAIR if V.obs_dim == 2 else normal(1.0, 4.0)
    return F, F.sample(n, seed)


# ----------------------------------------------------------------------
# samples and empirical moments


def test_sample_validation():
    assert Sample([1.0, 2.0]).n == 2 and Sample([[1.0], [2.0]]).dim == 1
    assert Sample(np.zeros((3, 2))).dim == 2
    with pytest.raises(ValueError):
        Sample([])
    with pytest.raises(ValueError):
        Sample([1.0, np.nan])
    s = Sample(FIVE)
    assert as_sample(s) is s and len(s) == 5


def test_empirical_moment_examples():
    assert empirical_moment(identification_function("mean"), [3.0], FIVE).tolist() == [0.0]
    assert empirical_moment(identification_function("quantile:0.4"), [2.0], FIVE)[0] == pytest.approx(0.0, abs=1e-16)
    m = empirical_moment(identification_function("quantile-es:0.4"), [2.0, 1.5], FIVE)
    np.testing.assert_allclose(m, 0.0, atol=1e-15)
    # exact rational check of the second component: 1.5 - (1/0.4) (1 + 2) / 5
    assert Fraction(3, 2) - Fraction(5, 2) * Fraction(3, 5) == 0


# ----------------------------------------------------------------------
# estimates


def test_mean_example():
    est = z_estimate(identification_function("mean"), FIVE)
    assert est.estimate.tolist() == [3.0] and est.residual == 0.0 and est.converged


def test_quantile_es_example():
    est = z_estimate(identification_function("quantile-es:0.4"), FIVE)
    assert est.estimate.tolist() == [2.0, 1.5]
    assert est.intervals[0] == {"lo": 2.0, "hi": 3.0, "closed": "lower"}
    assert est.intervals[1] is None
    assert est.status == "ok"
    d = est.to_dict()
    assert d["interval"] == [[2.0, 3.0], None] and d["interval_closed"] == ["lower", None]


def test_exact_quantile_es_matches_rational_oracle():
    rng = np.random.default_rng(9)
    y = np.round(rng.normal(size=40), 3)
    est = z_estimate(identification_function("quantile-es:0.25"), y)
    ref = oracles.empirical_quantile_es(y.tolist(), Fraction(1, 4))
    assert est.estimate[1] == pytest.approx(float(ref), abs=1e-12)
    assert est.estimate[0] == np.sort(y)[9]


def test_mean_var_example():
    est = z_estimate(identification_function("mean-var"), FIVE)
    assert est.estimate.tolist() == [3.0, 2.0]


def test_mean_var_large_sample_within_clt_bound():
    n = 100_000
    y = normal(1.0, 4.0).sample(n, seed=20240601)
    est = z_estimate(identification_function("mean-var"), y, seed=20240601)
    sigma2 = 4.0
    se = np.array([math.sqrt(sigma2 / n), math.sqrt(2.0) * sigma2 / math.sqrt(n)])
    assert np.all(np.abs(est.estimate - [1.0, 4.0]) <= 3 * se)
    assert est.diagnostics["seed"] == 20240601


def _sandwich_se(V, x, y):
    """Asymptotic standard errors J^-1 S J^-T / n with J from the closed-form expectation."""
    F = PAIR if V.obs_dim == 2 else normal(1.0, 4.0)
    k = V.k
    J = np.empty((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = 1e-5
        J[:, j] = (V.expected(x + e, F) - V.expected(x - e, F)) / 2e-5
    S = np.atleast_2d(np.cov(V.evaluate(x, y), rowvar=False))
    Ji = np.linalg.inv(J)
    return np.sqrt(np.diag(Ji @ S @ Ji.T) / len(y))


@pytest.mark.parametrize("key", KEYS)
def test_consistency_within_four_standard_errors(key):
    V = identification_function(key)
    F, y = _draws(V, 100_000, seed=77)
    truth = functional_for(key).point(F)
    est = z_estimate(V, y)
    se = _sandwich_se(V, truth, y)
    assert np.all(np.abs(est.estimate - truth) <= 4 * se), (est.estimate, truth, se)


def test_sandwich_matches_textbook_quantile_se():
    # for the quantile the sandwich is sqrt(a(1-a)) / (f(q) sqrt(n))
    V = identification_function("quantile:0.25")
    F, y = _draws(V, 50_000, seed=1)
    q = F.quantile(0.25)
    textbook = math.sqrt(0.25 * 0.75) / (float(F.pdf(q)) * math.sqrt(len(y)))
    assert _sandwich_se(V, np.array([q]), y)[0] == pytest.approx(textbook, rel=0.02)


SMALL = np.array([3.0, 17.0, 8.0, 1.0, 12.0, 20.0, 5.0, 14.0, 9.0, 2.0,
                  16.0, 7.0, 11.0, 19.0, 4.0, 13.0, 6.0, 18.0, 10.0, 15.0])
EXACT_KEYS = [k if not k.startswith("var-covar") else "var-covar:0.25,0.2" for k in KEYS]


@pytest.mark.parametrize("key", EXACT_KEYS)
@pytest.mark.parametrize("n", [20, 2000])
def test_sequential_and_general_agree(key, n):
    # sample sizes chosen so every indicator coordinate has an exact root
    V = identification_function(key)
    if n == 20:
        y = np.column_stack([SMALL, SMALL[::-1]]) if V.obs_dim == 2 else SMALL
    else:
        _, y = _draws(V, n, seed=3)
    a = z_estimate(V, y, method="sequential")
    b = z_estimate(V, y, method="general")
    assert a.method == "sequential" and b.method == "general"
    assert a.converged and b.converged
    assert np.max(np.abs(a.estimate - b.estimate)) <= 1e-8
    assert a.intervals == b.intervals


@pytest.mark.parametrize("key", ["quantile:0.1", "quantile-es:0.1", "quantile-es-prime:0.1", "var-covar:0.1,0.2"])
def test_no_exact_root_reported_by_both_routes(key):
    V = identification_function(key)
    y = np.column_stack([FIVE, [3.0, 1.0, 5.0, 2.0, 4.0]]) if V.obs_dim == 2 else np.array(FIVE)
    for method in ("sequential", "general"):
        est = z_estimate(V, y, method=method)
        assert est.status == "no-exact-root" and not est.converged
        assert V.domain.contains(est.estimate)


def test_atom_corrected_es_without_exact_root():
    est = z_estimate(identification_function("quantile-es:0.1"), FIVE)
    # VaR = 1 and ES = 1 (the lowest atom carries all of the tail mass)
    assert est.estimate.tolist() == [1.0, 1.0]
    assert est.diagnostics["es_coordinate"] == "atom-corrected"
    assert est.status == "no-exact-root"


def test_expectile_oracle_on_small_sample():
    y = np.array([0.0, 1.0, 5.0])
    tau = 0.3
    # on [1, 5): (1 - tau)(2x - 1) = tau (5 - x)  =>  x = (5 tau + 1 - tau) / (2 (1 - tau) + tau)
    ref = (5 * tau + (1 - tau)) / (2 * (1 - tau) + tau)
    est = z_estimate(identification_function("expectile:0.3"), y)
    assert est.estimate[0] == pytest.approx(ref, abs=1e-12)


def test_var_covar_upper_closed_ends():
    y = np.column_stack([np.arange(1.0, 11.0), np.arange(10.0, 0.0, -1.0)])
    est = z_estimate(identification_function("var-covar:0.5,0.2"), y)
    # #{y1 >= x1} = 2 on (8, 9]; the 8 below have y2 in 3..10 and
    # #{y2 >= x2} = 4 on (6, 7]
    assert est.estimate.tolist() == [9.0, 7.0]
    assert [iv["closed"] for iv in est.intervals] == ["upper", "upper"]
    assert (est.intervals[0]["lo"], est.intervals[0]["hi"]) == (8.0, 9.0)
    assert (est.intervals[1]["lo"], est.intervals[1]["hi"]) == (6.0, 7.0)
    gen = z_estimate(identification_function("var-covar:0.5,0.2"), y, method="general")
    assert gen.estimate.tolist() == [9.0, 7.0] and gen.intervals == est.intervals


def test_no_exact_quantile_root_reported():
    est = z_estimate(identification_function("quantile:0.3"), FIVE)
    assert est.status == "no-exact-root" and not est.converged
    assert est.estimate.tolist() == [2.0]


# ----------------------------------------------------------------------
# degenerate samples and errors


def test_degenerate_sample():
    y = [2.0, 2.0, 2.0]
    assert z_estimate(identification_function("mean"), y).estimate.tolist() == [2.0]
    q = z_estimate(identification_function("quantile:0.5"), y)
    assert q.estimate.tolist() == [2.0]
    mv = z_estimate(identification_function("mean-var"), y)
    assert mv.estimate.tolist() == [2.0, 0.0]
    assert mv.boundary and mv.converged


def test_errors():
    with pytest.raises(ValueError):
        z_estimate(identification_function("covar-1d:0.1,0.1"), np.zeros((5, 2)))
    with pytest.raises(ValueError):
        z_estimate(identification_function("mean"), np.zeros((5, 2)))
    with pytest.raises(EmptyRootError):
        z_estimate(identification_function("mean"), FIVE, bounds=[(10.0, 20.0)])
    with pytest.raises(ValueError):
        z_estimate(apply_transform(identity(1), identification_function("mean")), FIVE, method="sequential")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=60),
       st.sampled_from([0.1, 0.25, 0.5]))
def test_estimates_respect_domain(data, alpha):
    y = np.array(data)
    mv = z_estimate(identification_function("mean-var"), y)
    assert mv.estimate[1] >= 0.0
    qe = z_estimate(identification_function(f"quantile-es-prime:{alpha}"), y)
    assert qe.estimate[1] <= qe.estimate[0]


# ----------------------------------------------------------------------
# root invariance


def test_root_invariance_examples():
    V = identification_function("quantile-es:0.4")
    assert root_invariance_check(V, identification_function("quantile-es-prime:0.4"), FIVE)
    assert root_invariance_check(V, quantile_es_matrix(0.4), FIVE)
    W = identification_function("mean-var")
    assert root_invariance_check(W, identification_function("mean-var-prime"), FIVE)
    assert root_invariance_check(W, mean_var_matrix(), FIVE)
    assert root_invariance_check(W, identity(2), FIVE)
    assert z_estimate(identification_function("mean-var-prime"), FIVE).estimate.tolist() == [3.0, 2.0]


def test_root_invariance_constant_transform_on_draws():
    y = exponential(1.0).sample(1000, seed=4)
    h = constant([[2.0, 1.0], [-1.0, 3.0]])
    assert root_invariance_check(identification_function("mean-var"), h, y)
    assert root_invariance_check(identification_function("quantile-es:0.2"), h, y)
    y2 = PAIR.sample(1000, seed=4)
    assert root_invariance_check(identification_function("var-covar:0.1,0.2"), h, y2)
    # the joint breakpoint search recovers the upper-closed stretches exactly
    V = identification_function("var-covar:0.1,0.2")
    a, b = z_estimate(V, y2), z_estimate(apply_transform(h, V), y2)
    assert b.method == "general" and a.estimate.tolist() == b.estimate.tolist() and a.intervals == b.intervals


def test_root_invariance_detects_different_functional():
    assert not root_invariance_check(identification_function("mean"), identification_function("quantile:0.5"),
                                     student_t(5.0).sample(101, seed=2))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=4, max_size=40, unique=True))
def test_exact_root_invariance_property(ints):
    y = np.array(ints, dtype=float)
    n = len(y)
    alpha = 0.25 if n % 4 == 0 else 1.0 / n
    V = identification_function(f"quantile-es:{alpha!r}")
    est = z_estimate(V, y)
    assert est.converged
    Vp = apply_transform(quantile_es_matrix(alpha), V)
    assert np.max(np.abs(empirical_moment(Vp, est.estimate, y))) <= 1e-9
    assert root_invariance_check(V, quantile_es_matrix(alpha), y)
