import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import special

from ruinsim.distributions import DiscreteWeighted, Gamma
from ruinsim.runoff import (
    DelayModel,
    RegVaryingFactor,
    RunoffExposure,
    asymptotic_report_rate,
    delay_weights,
    expected_xi,
    report_prefactor,
    single_report_probability,
    xi_from_exposure,
    xi_sequence,
)

UNIFORM = DelayModel(kind="tabulated", x_grid=(0.0, 1.0), cdf=(0.0, 1.0), phi=1.0, h_model=RegVaryingFactor(1.0, 0.0))


def gamma_weight_oracle(shape, rate, k):
    """P(k < D + U <= k + 1) for D ~ Gamma, U ~ Uniform(0, 1), via the integrated CDF.

    The antiderivative of the Gamma CDF is x G_a(x) - (a / rate) G_{a+1}(x).
    """

    def integrated_cdf(x):
        if x <= 0:
            return 0.0
        return x * special.gammainc(shape, rate * x) - shape / rate * special.gammainc(shape + 1, rate * x)

    def window(x):
        return integrated_cdf(x) - integrated_cdf(x - 1)

    return window(k + 1) - window(k)


def test_uniform_delay_splits_between_first_two_years():
    assert_allclose(delay_weights(UNIFORM, 4), [0.5, 0.5, 0.0, 0.0, 0.0], atol=1e-13)


def test_near_instant_reporting_lands_in_first_year():
    b = delay_weights(DelayModel(kind="gamma", shape=1.0, rate=1000.0), 3)
    assert b[0] > 0.998
    assert_allclose(b.sum(), 1.0, atol=1e-10)


@pytest.mark.parametrize("shape,rate", [(2.0, 0.1), (0.7, 1.3), (5.0, 2.0)])
def test_gamma_weights_match_closed_form(shape, rate):
    b = delay_weights(DelayModel(kind="gamma", shape=shape, rate=rate), 60)
    oracle = [gamma_weight_oracle(shape, rate, k) for k in range(61)]
    assert_allclose(b, oracle, rtol=1e-8, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(shape=st.floats(0.3, 6.0), rate=st.floats(0.05, 5.0))
def test_weight_partial_sums_increase_to_at_most_one(shape, rate):
    b = delay_weights(DelayModel(kind="gamma", shape=shape, rate=rate), 40)
    partial = np.cumsum(b)
    assert np.all(b >= 0)
    assert np.all(np.diff(partial) >= -1e-15)
    assert partial[-1] <= 1 + 1e-10


def test_xi_matches_hand_sum(exposure):
    q = np.array([0.5, 1.5, 1.5])
    b = exposure.weights(10)
    n = 7
    # year m in {-2, -1, 0} is stored at index m + 2 and lags by n - m
    hand = sum(exposure.pi[m + 2] * b[n - m] * q[m + 2] for m in (-2, -1, 0))
    assert_allclose(xi_from_exposure(exposure, n, q), hand, rtol=1e-14)
    seq = xi_sequence(exposure, 10, q)
    assert_allclose(seq[n - 1], hand, rtol=1e-14)


def test_expected_xi_uses_unit_means(exposure):
    assert_allclose(expected_xi(exposure, 5), xi_from_exposure(exposure, 5, np.ones(3)))


def test_batched_xi(exposure):
    q = np.array([[0.5, 0.5, 0.5], [1.5, 1.5, 1.5]])
    out = xi_from_exposure(exposure, 3, q)
    assert out.shape == (2,)
    assert_allclose(out[1], 3 * out[0])


def test_report_probability_enumeration_matches_simulation(exposure):
    exact, _ = single_report_probability(exposure, 0.5, 20, method="enumerate")
    est, se = single_report_probability(exposure, 0.5, 20, method="mc", n_mc=200_000, rng=3)
    assert abs(est - exact) < 5 * se


def test_report_probability_for_continuous_mixing():
    exp = RunoffExposure(2, (0.8, 0.9, 1.0), Gamma(4.0, 4.0), DelayModel(kind="gamma", shape=2.0, rate=0.1))
    est, se = single_report_probability(exp, 0.5, 30, n_mc=100_000, rng=1)
    assert se > 0 and 0 < est < 0.5


@pytest.mark.parametrize("n,band", [(50, 0.05), (100, 0.03), (200, 0.02)])
def test_report_rate_converges(exposure, n, band):
    exact, _ = single_report_probability(exposure, 0.5, n)
    ratio = asymptotic_report_rate(exposure, 0.5, n) / exact
    assert abs(ratio - 1) < band


def test_report_prefactor_closed_form(exposure):
    phi = 0.1
    s = 0.8 * math.exp(-2 * phi) + 0.9 * math.exp(-phi) + 1.0
    assert_allclose(report_prefactor(exposure), (math.exp(phi) - 1) * (1 - math.exp(-phi)) * s / phi)


def test_gamma_leading_term():
    h = DelayModel(kind="gamma", shape=2.0, rate=0.1).leading_h()
    assert_allclose(h(30.0), 0.1 * 30.0)


def test_exposure_validation():
    delay = DelayModel(kind="gamma", shape=2.0, rate=0.1)
    q = DiscreteWeighted((0.5, 1.5), (0.5, 0.5))
    with pytest.raises(ValueError):
        RunoffExposure(1, (1.0,), q, delay)
    with pytest.raises(ValueError):
        RunoffExposure(1, (0.5, 0.9), q, delay)
    with pytest.raises(ValueError):
        RunoffExposure(0, (1.0,), DiscreteWeighted((0.5, 2.5), (0.5, 0.5)), delay)


def test_delay_validation():
    with pytest.raises(ValueError):
        DelayModel(kind="gamma", shape=-1.0)
    with pytest.raises(ValueError):
        DelayModel(kind="tabulated", x_grid=(0.0, 1.0), cdf=(0.0, 0.9), phi=1.0, h_model=RegVaryingFactor(1.0, 0.0))
    with pytest.raises(ValueError):
        DelayModel(kind="tabulated", x_grid=(0.0, 1.0), cdf=(0.0, 1.0))
    with pytest.raises(ValueError):
        DelayModel(kind="weibull")


def test_exposure_csv_and_dict_round_trip(tmp_path, exposure):
    path = tmp_path / "volumes.csv"
    path.write_text("m,pi\n-2,0.8\n-1,0.9\n0,1.0\n")
    loaded = RunoffExposure.from_csv(path, exposure.dist_q_past, exposure.delay)
    assert loaded == exposure
    assert RunoffExposure.from_dict(exposure.to_dict()) == exposure
    assert DelayModel.from_dict(UNIFORM.to_dict()) == UNIFORM


def test_exposure_csv_with_gap(tmp_path, exposure):
    path = tmp_path / "volumes.csv"
    path.write_text("-2,0.8\n0,1.0\n")
    with pytest.raises(ValueError):
        RunoffExposure.from_csv(path, exposure.dist_q_past, exposure.delay)


def test_delay_sampler_matches_cdf():
    gen = np.random.default_rng(0)
    x = UNIFORM.sample(gen, 50_000)
    assert abs(np.mean(x < 0.25) - 0.25) < 0.01
