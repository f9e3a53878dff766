import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from ruinsim.distributions import Constant, DiscreteWeighted, Exponential, RngStream, ShiftedLogNormal
from ruinsim.model import (
    DeterministicExp,
    GrowthModelSpec,
    JointFactors,
    RunoffModelSpec,
    draw_factor_batch,
    draw_year,
    initial_state,
    model_from_dict,
    sample_claim_count,
    simulate_path,
    simulate_year,
)

from conftest import exposure_model, fading_model, growth_model

MODELS = {
    "fading": lambda: fading_model(),
    "fading-end-of-year": lambda: fading_model(transition_rule="claims_end_of_year"),
    "exposure": lambda: exposure_model(),
    "growth": lambda: growth_model(lam=5.0),
    "growth-end-of-year": lambda: growth_model(lam=5.0, transition_rule="claims_end_of_year"),
}


@pytest.mark.parametrize("name", sorted(MODELS))
def test_capital_equals_accumulated_discounted_reserve(name):
    # U_n = (1+r_1)...(1+r_n) (u - Y_n) on every path, under both transition rules
    spec = MODELS[name]()
    gen = RngStream(3, 0).generator
    u = 5.0
    for _ in range(50):
        state = initial_state(spec, u, gen)
        acc = 1.0
        for _ in range(40):
            out = draw_year(spec, state, gen)
            state, _ = simulate_year(replace(state, ruined=False), spec, gen, outcome=out)
            acc *= out.ret
            assert_allclose(state.capital, acc * (u - state.discounted_claims), rtol=1e-9, atol=1e-9 * acc)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_ruin_time_agrees_with_threshold_crossing(name):
    spec = MODELS[name]()
    gen = RngStream(5, 1).generator
    mismatches = 0
    ruined = 0
    for _ in range(400):
        res = simulate_path(spec, 2.0, 60, gen)
        mismatches += res.capital_ruin_year != res.threshold_ruin_year
        ruined += res.capital_ruin_year is not None
    assert mismatches == 0
    assert ruined > 0


def test_trace_file(tmp_path):
    path = tmp_path / "trace.csv"
    res = simulate_path(fading_model(lam=2.0), 3.0, 10, RngStream(1, 0), trace=str(path))
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["year", "U", "Y", "K", "X"]
    assert len(rows) == 11
    assert float(rows[-1][2]) == pytest.approx(res.final_state.discounted_claims)


def test_claim_counts_are_poisson():
    spec = fading_model(lam=3.0)
    gen = RngStream(9, 0).generator
    batch = draw_factor_batch(spec, gen, 1_000_000, year=1)
    mean = 3.0 * math.exp(-0.1)
    ks = np.arange(0, 30)
    emp = np.bincount(batch["counts"], minlength=ks.size)[: ks.size] / batch["counts"].size
    tv = 0.5 * np.abs(emp - stats.poisson.pmf(ks, mean)).sum()
    assert tv < 0.003


def test_claim_sums_given_count_are_gamma():
    spec = fading_model(lam=3.0)
    gen = RngStream(10, 0).generator
    batch = draw_factor_batch(spec, gen, 200_000, year=1)
    for k in (1, 3):
        sums = batch["claims"][batch["counts"] == k]
        assert stats.kstest(sums, stats.gamma(k).cdf).pvalue > 1e-3
    assert np.all(batch["claims"][batch["counts"] == 0] == 0)


def test_sample_claim_count_validates():
    with pytest.raises(ValueError):
        sample_claim_count(0.0, 1.0, 0)
    assert sample_claim_count(0.5, 2.0, 0) >= 0


def test_fading_rate_function_is_quadratic():
    expr = fading_model().lambda_2()
    for a in (0.5, 1.0, 2.0, 3.0):
        assert_allclose(expr(a), (0.05 - 0.1) * a + 0.05 * a * a - 0.1, rtol=1e-12, atol=1e-14)


def test_growth_rate_function_and_bound(growth):
    expr = growth.lambda_1()
    for a in (0.5, 2.0):
        assert_allclose(expr(a), -0.05 * a + 0.025 * a * a, rtol=1e-12, atol=1e-14)
    assert growth.beta_1() == math.inf
    assert growth.premium_rate() == pytest.approx(1.1 * 1000.0)


def test_positivity_support_check():
    assert growth_model().positivity_possible()
    assert growth_model(s=0.2, structure=DiscreteWeighted((0.5, 1.5), (0.5, 0.5))).positivity_possible()
    assert not growth_model(s=0.2, structure=DiscreteWeighted((0.9, 1.1), (0.5, 0.5))).positivity_possible()


def test_log_d_admissibility():
    assert growth_model().log_d_admissible()
    lattice = GrowthModelSpec(
        lam=1.0,
        s=0.1,
        growth_factor=Constant(1.01),
        structure=Constant(1.0),
        inflation_factor=Constant(1.02),
        return_factor=DiscreteWeighted((1.0, 1.2), (0.5, 0.5)),
        claim_size=Exponential(1.0),
    )
    assert not lattice.log_d_admissible()


def test_joint_factors_enter_the_discount_law():
    joint = JointFactors(inflation=(1.01, 1.05), returns=(1.10, 1.02), probs=(0.6, 0.4))
    spec = RunoffModelSpec(
        lam=1.0,
        inflation_factor=Constant(1.0),
        return_factor=Constant(1.0),
        claim_size=Exponential(1.0),
        xi_model=DeterministicExp(0.1),
        joint_ir=joint,
    )
    a = 1.7
    hand = math.log(0.6 * (1.01 / 1.10) ** a + 0.4 * (1.05 / 1.02) ** a)
    assert_allclose(spec.discount_expr()(a), hand, rtol=1e-12)
    infl, ret = spec.draw_ir(np.random.default_rng(0), 1000)
    pairs = set(zip(infl.round(6), ret.round(6)))
    assert pairs <= {(1.01, 1.1), (1.05, 1.02)}


@pytest.mark.parametrize("name", sorted(MODELS))
def test_model_dict_round_trip(name):
    spec = MODELS[name]()
    assert model_from_dict(spec.to_dict()) == spec


def test_model_validation():
    with pytest.raises(ValueError):
        fading_model(lam=-1.0)
    with pytest.raises(ValueError):
        fading_model(transition_rule="mid_year")
    with pytest.raises(ValueError):
        growth_model(s=0.0)
    with pytest.raises(ValueError):
        growth_model(structure=Constant(1.2))
    with pytest.raises(ValueError):
        RunoffModelSpec(
            lam=1.0,
            inflation_factor=Constant(0.0),
            return_factor=ShiftedLogNormal(0.1, 0.1),
            claim_size=Exponential(1.0),
            xi_model=DeterministicExp(0.1),
        )


def test_exposure_paths_draw_a_scenario():
    spec = exposure_model()
    state = initial_state(spec, 1.0, RngStream(0, 0))
    assert state.scenario_q.shape == (3,)
    assert_allclose(spec.xi_at(4, state.scenario_q), spec.xi_coefficients(4) @ state.scenario_q)
