import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, stats

from ruinsim.distributions import (
    INF,
    Constant,
    DiscreteWeighted,
    DomainError,
    Exponential,
    Gamma,
    Interval,
    Normal,
    Pareto,
    RngStream,
    ShiftedLogNormal,
    cgf,
    distribution_from_dict,
    log_moment,
    moment_index,
)

FAMILIES = [
    ShiftedLogNormal(0.1, 0.1),
    Exponential(2.0),
    Gamma(3.0, 1.5),
    Pareto(1.0, 3.5),
]


def quad_log_moment(dist, a):
    """log E[X^a] by adaptive quadrature against the scipy density."""
    d = dist.scipy()
    lo, hi = d.support()
    val, _ = integrate.quad(lambda x: x**a * d.pdf(x), lo, hi, epsabs=0, epsrel=1e-12, limit=200)
    return math.log(val)


def quad_cgf(dist, a):
    d = dist.scipy()
    lo, hi = d.support()
    val, _ = integrate.quad(lambda x: np.exp(a * x + d.logpdf(x)), lo, hi, epsabs=0, epsrel=1e-12, limit=200)
    return math.log(val)


@pytest.mark.parametrize("dist", FAMILIES, ids=lambda d: d.family)
@pytest.mark.parametrize("a", [-0.5, 0.5, 1.0, 2.0, 3.0])
def test_log_moment_matches_quadrature(dist, a):
    if a not in dist.log_moment_domain():
        assert dist.log_moment(a) == INF
        return
    assert_allclose(dist.log_moment(a), quad_log_moment(dist, a), rtol=1e-8, atol=1e-8)


@pytest.mark.parametrize("dist", [Exponential(2.0), Gamma(3.0, 1.5), Normal(-0.2, 1.0)], ids=lambda d: d.family)
@pytest.mark.parametrize("a", [-1.0, 0.2, 0.4])
def test_cgf_matches_quadrature(dist, a):
    assert_allclose(dist.cgf(a), quad_cgf(dist, a), rtol=1e-8, atol=1e-8)


def test_lognormal_cgf_uses_quadrature_inside_domain():
    d = ShiftedLogNormal(0.1, 0.1)
    assert d.cgf_domain().hi == 0.0
    assert_allclose(d.cgf(-0.7), quad_cgf(d, -0.7), rtol=1e-8)
    assert d.cgf(0.1) == INF


def test_pareto_cgf_negative_side():
    d = Pareto(1.0, 3.5)
    assert_allclose(d.cgf(-0.3), quad_cgf(d, -0.3), rtol=1e-8)
    assert d.cgf(0.01) == INF


@pytest.mark.parametrize(
    "dist",
    FAMILIES + [DiscreteWeighted((0.5, 1.5), (0.3, 0.7)), Constant(1.2)],
    ids=lambda d: d.family,
)
@pytest.mark.parametrize("a", [0.3, 1.7])
def test_log_moment_derivative_matches_finite_difference(dist, a):
    h = 1e-5
    fd = (dist.log_moment(a + h) - dist.log_moment(a - h)) / (2 * h)
    assert_allclose(dist.log_moment_deriv(a), fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize(
    "dist",
    [Exponential(2.0), Gamma(3.0, 1.5), Normal(-0.2, 1.0), DiscreteWeighted((0.5, 1.5), (0.3, 0.7))],
    ids=lambda d: d.family,
)
def test_cgf_derivative_matches_finite_difference(dist):
    a, h = 0.2, 1e-5
    fd = (dist.cgf(a + h) - dist.cgf(a - h)) / (2 * h)
    assert_allclose(dist.cgf_deriv(a), fd, rtol=1e-6)


def test_lognormal_log_moment_is_quadratic():
    d = ShiftedLogNormal(0.1, 0.1)
    for a in (-1.0, 0.5, 2.0, 7.0):
        assert_allclose(d.log_moment(a), 0.1 * a + 0.05 * a * a, rtol=1e-14)


def test_exponential_log_moment_domain_and_value():
    d = Exponential(1.0)
    assert d.log_moment_domain().lo == -1.0
    assert log_moment(d, 2.0) == pytest.approx(math.log(2.0))
    assert d.log_moment(-1.0) == INF


def test_moment_index():
    assert moment_index(Pareto(1.0, 3.5)) == 3.5
    assert moment_index(Exponential(1.0)) == INF
    with pytest.raises(DomainError):
        moment_index(Normal(0.0, 1.0))


def test_log_moment_refuses_laws_with_negative_support():
    with pytest.raises(DomainError):
        log_moment(Normal(0.0, 1.0), 1.0)


def test_normal_cgf_closed_form():
    assert cgf(Normal(-0.2, 1.0), 0.4) == pytest.approx(-0.08 + 0.08)


def test_discrete_validation():
    with pytest.raises(ValueError):
        DiscreteWeighted((1.0, 2.0), (0.5, 0.6))
    with pytest.raises(ValueError):
        DiscreteWeighted((), ())


def test_interval_membership_and_scaling():
    iv = Interval(-1.0, 2.0, True, False)
    assert -1.0 in iv and 2.0 not in iv
    flipped = iv.scaled(-1.0)
    assert flipped.lo == -2.0 and flipped.hi == 1.0
    assert 1.0 in flipped and -2.0 not in flipped
    assert iv.intersect(Interval(0.0, 5.0)) == Interval(0.0, 2.0, False, False)


@pytest.mark.parametrize("dist", FAMILIES[:3] + [DiscreteWeighted((0.5, 1.5), (0.5, 0.5))], ids=lambda d: d.family)
def test_sample_mean_within_five_standard_errors(dist):
    gen = RngStream(7, 0).generator
    x = dist.sample(gen, 200_000)
    se = math.sqrt(dist.variance() / x.size)
    assert abs(x.mean() - dist.expectation()) < 5 * se


@pytest.mark.parametrize("dist", [Exponential(1.0), Gamma(2.5, 2.0)], ids=lambda d: d.family)
def test_sample_sum_matches_convolution(dist):
    gen = RngStream(11, 0).generator
    sums = dist.sample_sum(np.full(20_000, 3), gen)
    # a sum of three iid gamma variables is gamma with three times the shape
    shape, scale = (1.0, dist.expectation()) if isinstance(dist, Exponential) else (dist.shape, 1 / dist.rate)
    ref = stats.gamma(3 * shape, scale=scale)
    assert stats.kstest(sums, ref.cdf).pvalue > 1e-3


def test_streams_are_reproducible_and_distinct():
    a = RngStream(5, 3).generator.random(4)
    b = RngStream(5, 3).generator.random(4)
    c = RngStream(5, 4).generator.random(4)
    assert_allclose(a, b)
    assert not np.allclose(a, c)


@pytest.mark.parametrize(
    "dist",
    FAMILIES + [Constant(1.05), DiscreteWeighted((0.5, 1.5), (0.5, 0.5)), Normal(0.0, 2.0)],
    ids=lambda d: d.family,
)
def test_dict_round_trip(dist):
    assert distribution_from_dict(dist.to_dict()) == dist


def test_unknown_family_rejected():
    with pytest.raises(ValueError):
        distribution_from_dict({"family": "weibull", "shape": 1.0})


@settings(max_examples=60, deadline=None)
@given(
    mean_log=st.floats(-1, 1),
    var_log=st.floats(0.01, 1),
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
    t=st.floats(0, 1),
)
def test_log_moment_is_convex(mean_log, var_log, a, b, t):
    for d in (ShiftedLogNormal(mean_log, var_log), Gamma(1 + var_log * 5, 1.0)):
        if a not in d.log_moment_domain() or b not in d.log_moment_domain():
            continue
        mid = d.log_moment(t * a + (1 - t) * b)
        assert mid <= t * d.log_moment(a) + (1 - t) * d.log_moment(b) + 1e-9


@settings(max_examples=40, deadline=None)
@given(values=st.lists(st.floats(0.05, 5), min_size=1, max_size=5), seed=st.integers(0, 1000))
def test_log_moment_vanishes_at_zero(values, seed):
    probs = np.random.default_rng(seed).dirichlet(np.ones(len(values)))
    probs[-1] = 1.0 - probs[:-1].sum()
    d = DiscreteWeighted(tuple(values), tuple(probs))
    assert abs(d.log_moment(0.0)) < 1e-12
    assert abs(d.cgf(0.0)) < 1e-12
