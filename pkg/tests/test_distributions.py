import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from idfunc.distributions import (
    BivariateDistribution,
    ScalarDistribution,
    bivariate_gaussian,
    bivariate_tail_prob,
    dirac,
    discrete,
    discrete_2d,
    distribution_from_dict,
    exponential,
    mix,
    mixture,
    normal,
    student_t,
    uniform,
)
from idfunc.exceptions import UnsupportedMomentError

TWO_ATOMS = discrete([-1.0, 1.0], [0.5, 0.5])

LAWS = [
    normal(0.0, 1.0),
    normal(1.0, 4.0),
    exponential(1.0),
    exponential(2.5),
    uniform(-1.0, 3.0),
    student_t(5.0, 0.5, 2.0),
    TWO_ATOMS,
    discrete([0.0, 1.0, 3.0], [0.2, 0.5, 0.3]),
    mixture([normal(0, 1), exponential(1.0)], [0.5, 0.5]),
    mixture([normal(-2, 0.5), discrete([1.0, 2.0], [0.5, 0.5])], [0.6, 0.4]),
]


# ----------------------------------------------------------------------
# cdf and quantiles


def test_cdf_examples():
    assert normal().cdf(0.0) == 0.5
    assert exponential(1.0).cdf(0.5) == pytest.approx(1 - math.exp(-0.5), abs=1e-15)
    assert exponential(1.0).cdf(0.5) == pytest.approx(0.393469, abs=1e-6)
    assert TWO_ATOMS.cdf(-1.0) == 0.5
    assert TWO_ATOMS.cdf_left(-1.0) == 0.0


@pytest.mark.parametrize("F", LAWS, ids=lambda F: F.describe())
def test_cdf_monotone_with_limits(F):
    grid = np.linspace(-30, 30, 4001)
    c = F.cdf(grid)
    assert np.all(np.diff(c) >= 0)
    assert c[0] < 1e-3 and c[-1] > 1 - 1e-3
    assert np.all((0 <= c) & (c <= 1))


@pytest.mark.parametrize("F", LAWS, ids=lambda F: F.describe())
def test_generalised_inverse(F):
    for u in np.linspace(0.01, 0.99, 99):
        q = float(F.quantile(u))
        assert F.cdf(q) >= u - 1e-12
        assert F.cdf(q - 1e-9) < u + 1e-12 or F.pdf(q) == 0


def test_quantile_set_examples():
    assert normal().quantile_set(0.5) == (0.0, 0.0)
    assert discrete([0.0, 1.0], [0.5, 0.5]).quantile_set(0.5) == (0.0, 1.0)
    lo, hi = exponential(1.0).quantile_set(0.25)
    assert lo == hi == pytest.approx(-math.log(0.75), abs=1e-12)
    assert lo == pytest.approx(0.287682, abs=1e-6)


def test_quantile_set_of_mixture_with_gap():
    # two uniforms leave a flat stretch of the CDF at level 0.5 on [1, 2]
    F = mixture([uniform(0, 1), uniform(2, 3)], [0.5, 0.5])
    lo, hi = F.quantile_set(0.5)
    assert lo == pytest.approx(1.0, abs=1e-12)
    assert hi == pytest.approx(2.0, abs=1e-12)


def test_var_lower_examples():
    assert normal().var_lower(0.05) == pytest.approx(-1.644854, abs=1e-6)
    assert normal().var_lower(0.05) == pytest.approx(stats.norm.ppf(0.05), abs=1e-12)
    assert TWO_ATOMS.var_lower(0.25) == -1.0
    assert normal(0.0, 3.0).var_lower(0.5) == 0.0
    assert student_t(4.0).var_lower(0.5) == 0.0


def test_attains_level():
    assert not TWO_ATOMS.attains_level(0.25)
    assert TWO_ATOMS.attains_level(0.5)
    assert normal().attains_level(0.01)


# ----------------------------------------------------------------------
# moments


def test_moment_examples():
    M = mix(normal(0, 1), normal(2, 1), 0.5)
    assert M.mean() == pytest.approx(1.0, abs=1e-14)
    assert M.variance() == pytest.approx(2.0, abs=1e-14)
    assert exponential(1.0).mean() == 1.0 and exponential(1.0).variance() == 1.0
    assert TWO_ATOMS.mean() == 0.0 and TWO_ATOMS.variance() == 1.0


def test_unsupported_moments():
    with pytest.raises(UnsupportedMomentError):
        student_t(2.0).variance()
    with pytest.raises(UnsupportedMomentError):
        student_t(1.0).mean()
    with pytest.raises(UnsupportedMomentError):
        student_t(1.0).partial_expectation(0.0)
    assert student_t(3.0).variance() == pytest.approx(3.0)


@given(
    m1=st.floats(-5, 5), v1=st.floats(0.1, 5), m2=st.floats(-5, 5), v2=st.floats(0.1, 5),
    lam=st.floats(0.0, 1.0),
)
@settings(max_examples=60, deadline=None)
def test_mixture_moments(m1, v1, m2, v2, lam):
    F, G = normal(m1, v1), normal(m2, v2)
    M = mix(F, G, lam)
    assert M.mean() == pytest.approx((1 - lam) * m1 + lam * m2, abs=1e-10)
    expect = (1 - lam) * v1 + lam * v2 + lam * (1 - lam) * (m1 - m2) ** 2
    assert M.variance() == pytest.approx(expect, abs=1e-10)


def test_partial_expectation_examples():
    c = -1.644854
    assert normal().partial_expectation(c) == pytest.approx(-0.103136, abs=1e-6)
    assert normal().partial_expectation(c) == pytest.approx(oracles.normal_partial_expectation(c), abs=1e-12)
    assert TWO_ATOMS.partial_expectation(-1.0) == -0.5
    for F in LAWS:
        assert F.partial_expectation(np.inf) == pytest.approx(F.mean(), abs=1e-12)


@pytest.mark.parametrize("F", [L for L in LAWS if L.family in ("normal", "exponential", "uniform", "student-t")],
                         ids=lambda F: F.describe())
def test_partial_expectation_against_quadrature(F):
    from scipy import integrate

    for c in (-1.0, 0.3, 2.0):
        lo = float(F.quantile(1e-12))
        if c <= lo:
            assert F.partial_expectation(c) == 0.0
            continue
        ref = integrate.quad(lambda y: y * float(F.pdf(y)), lo, c, epsabs=1e-13, limit=200)[0]
        assert F.partial_expectation(c) == pytest.approx(ref, abs=1e-8)


# ----------------------------------------------------------------------
# expected shortfall


def test_es_examples():
    assert normal().es_lower(0.05) == pytest.approx(-2.062713, abs=1e-6)
    assert normal().es_lower(0.05) == pytest.approx(oracles.normal_es(0.05), abs=1e-10)
    assert TWO_ATOMS.es_lower(0.25) == pytest.approx(-1.0, abs=1e-15)
    assert TWO_ATOMS.es_truncated_form(0.25) == pytest.approx(-1.0, abs=1e-15)
    assert uniform(0, 1).es_lower(0.5) == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("F", LAWS, ids=lambda F: F.describe())
@pytest.mark.parametrize("alpha", [0.025, 0.1, 0.25, 0.5, 0.9])
def test_es_two_forms_agree(F, alpha):
    a = F.es_lower(alpha, check=False)
    b = F.es_truncated_form(alpha)
    assert a == pytest.approx(b, abs=1e-8 * max(1.0, abs(a)))


@given(
    atoms=st.lists(st.integers(-20, 20), min_size=1, max_size=6, unique=True),
    raw=st.lists(st.integers(1, 9), min_size=6, max_size=6),
    alpha=st.sampled_from([0.05, 0.1, 0.2, 0.25, 0.3, 0.5, 0.75]),
)
@settings(max_examples=80, deadline=None)
def test_discrete_es_matches_exact_rational(atoms, raw, alpha):
    w = raw[: len(atoms)]
    probs = [x / sum(w) for x in w]
    F = discrete([float(a) for a in atoms], probs)
    ref = float(oracles.discrete_es(atoms, probs, alpha))
    assert F.es_lower(alpha) == pytest.approx(ref, abs=1e-10)
    # the truncated form with its atom correction
    v = F.var_lower(alpha)
    trunc = F.partial_expectation(v) / alpha - v / alpha * (float(F.cdf(v)) - alpha)
    assert trunc == pytest.approx(ref, abs=1e-10)


def test_partial_expectation_is_first_es_term():
    for F in LAWS:
        for alpha in (0.05, 0.3):
            v = F.var_lower(alpha)
            first = F.partial_expectation(v) / alpha
            correction = v / alpha * (float(F.cdf(v)) - alpha)
            assert first - correction == pytest.approx(F.es_lower(alpha), abs=1e-8)


# ----------------------------------------------------------------------
# mixtures


def test_mix_examples():
    F, G = normal(0, 1), normal(2, 1)
    assert mix(F, G, 0.0) is F
    assert mix(F, F, 0.3) == F
    assert float(mix(F, G, 0.5).cdf(1.0)) == pytest.approx(0.5, abs=1e-15)


@given(lam=st.floats(0, 1), y=st.floats(-10, 10))
@settings(max_examples=60, deadline=None)
def test_mix_cdf_is_convex_combination(lam, y):
    F, G = exponential(0.7), TWO_ATOMS
    M = mix(F, G, lam)
    assert float(M.cdf(y)) == pytest.approx((1 - lam) * float(F.cdf(y)) + lam * float(G.cdf(y)), abs=1e-14)


def test_invalid_construction():
    with pytest.raises(ValueError):
        discrete([0.0, 1.0], [0.6, 0.6])
    with pytest.raises(ValueError):
        mixture([normal(), normal(1)], [0.5, 0.4])
    with pytest.raises(ValueError):
        mix(normal(), normal(1), 1.5)


# ----------------------------------------------------------------------
# sampling


def test_sampling_deterministic_and_supported():
    F = normal()
    assert np.array_equal(F.sample(1000, 5), F.sample(1000, 5))
    assert abs(F.sample(10**5, 5).mean()) < 0.02
    assert set(np.unique(TWO_ATOMS.sample(10**5, 5))) == {-1.0, 1.0}


@pytest.mark.parametrize("F", [L for L in LAWS if L.is_continuous], ids=lambda F: F.describe())
def test_sampling_ks(F):
    n = 10**5
    y = F.sample(n, 11)
    d = stats.kstest(y, lambda t: F.cdf(t)).statistic
    assert d < 1.95 / math.sqrt(n) * 1.5


# ----------------------------------------------------------------------
# serialisation


@pytest.mark.parametrize("F", LAWS + [dirac(2.0)], ids=lambda F: F.describe())
def test_json_round_trip(F):
    G = distribution_from_dict(F.to_dict())
    grid = np.linspace(-5, 5, 41)
    assert np.array_equal(F.cdf(grid), G.cdf(grid))


def test_json_formats():
    assert normal(1.0, 4.0).to_dict() == {"family": "normal", "params": [1.0, 4.0]}
    assert TWO_ATOMS.to_dict() == {"family": "discrete-atoms", "atoms": [[-1.0, 0.5], [1.0, 0.5]]}
    B = bivariate_gaussian((0.0, 1.0), ((1.0, 0.2), (0.2, 2.0)))
    assert BivariateDistribution.from_dict(B.to_dict()) == B


# ----------------------------------------------------------------------
# bivariate


def test_tail_prob_examples():
    B = bivariate_gaussian()
    assert bivariate_tail_prob(B, 0.0, 0.0) == pytest.approx(0.25, abs=1e-14)
    assert bivariate_tail_prob(B, 1.281552, 1.644854) == pytest.approx(0.855, abs=1e-6)
    C = bivariate_gaussian(cov=((1.0, 0.5), (0.5, 1.0)))
    assert C.tail_prob(0.0, 0.0) == pytest.approx(1 / 3, abs=1e-10)
    assert C.tail_prob(0.0, 0.0) == pytest.approx(0.25 + math.asin(0.5) / (2 * math.pi), abs=1e-12)


def test_tail_prob_correlated_monte_carlo():
    C = bivariate_gaussian(cov=((1.0, 0.5), (0.5, 1.0)))
    y = C.sample(10**6, 3)
    p = np.mean((y[:, 0] < 0) & (y[:, 1] < 0))
    assert abs(p - 1 / 3) < 3 * math.sqrt(p * (1 - p) / 10**6)


@given(
    x1=st.floats(-3, 3), x2=st.floats(-3, 3), rho=st.floats(-0.9, 0.9),
)
@settings(max_examples=40, deadline=None)
def test_lower_orthant_against_genz(x1, x2, rho):
    C = bivariate_gaussian(cov=((1.0, rho), (rho, 1.0)))
    assert C.lower_orthant(x1, x2) == pytest.approx(oracles.gaussian_orthant(x1, x2, rho), abs=2e-7)


@given(x1=st.floats(-3, 3), x2=st.floats(-3, 3), rho=st.floats(-0.9, 0.9))
@settings(max_examples=30, deadline=None)
def test_quadrants_partition(x1, x2, rho):
    C = bivariate_gaussian(cov=((1.0, rho), (rho, 1.0)))
    total = sum(C.tail_prob(x1, x2, (a, b)) for a in ("<", ">=") for b in ("<", ">="))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_joint_cdf_monotone():
    C = bivariate_gaussian(cov=((2.0, -0.7), (-0.7, 1.0)))
    g = np.linspace(-3, 3, 13)
    P = np.array([[C.lower_orthant(a, b) for b in g] for a in g])
    assert np.all(np.diff(P, axis=0) >= -1e-15) and np.all(np.diff(P, axis=1) >= -1e-15)


def test_discrete_2d():
    D = discrete_2d([(0.0, 0.0), (1.0, 2.0)], [0.3, 0.7])
    assert D.tail_prob(1.0, 5.0, ("<", "<")) == pytest.approx(0.3)
    assert D.tail_prob(1.0, 2.0, ("<=", ">=")) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        bivariate_gaussian(cov=((1.0, 2.0), (2.0, 1.0)))
