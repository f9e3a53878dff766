import math

import pytest

from ruinsim.distributions import Constant, DiscreteWeighted, Exponential, Gamma, ShiftedLogNormal
from ruinsim.model import DeterministicExp, GrowthModelSpec, ReportingDelay, RunoffModelSpec
from ruinsim.runoff import DelayModel, RunoffExposure


def fading_model(lam=0.1, phi=0.1, transition_rule="claims_start_of_year"):
    """Log-normal returns, constant inflation, exponential claims, xi_n = exp(-phi n)."""
    return RunoffModelSpec(
        lam=lam,
        inflation_factor=Constant(math.exp(0.05)),
        return_factor=ShiftedLogNormal(0.1, 0.1),
        claim_size=Exponential(1.0),
        xi_model=DeterministicExp(phi),
        transition_rule=transition_rule,
    )


def small_exposure(q_values=(0.5, 1.5)):
    return RunoffExposure(
        d=2,
        pi=(0.8, 0.9, 1.0),
        dist_q_past=DiscreteWeighted(q_values, (0.5, 0.5)),
        delay=DelayModel(kind="gamma", shape=2.0, rate=0.1),
    )


def exposure_model(lam=0.5):
    return RunoffModelSpec(
        lam=lam,
        inflation_factor=Constant(math.exp(0.05)),
        return_factor=ShiftedLogNormal(0.1, 0.1),
        claim_size=Exponential(1.0),
        xi_model=ReportingDelay(small_exposure()),
    )


def growth_model(lam=1000.0, s=0.1, structure=None, transition_rule="claims_start_of_year"):
    """Growing book whose discount factor is log-normal, so the tail rate is a quadratic root."""
    return GrowthModelSpec(
        lam=lam,
        s=s,
        growth_factor=Constant(math.exp(0.01)),
        structure=structure if structure is not None else Gamma(4.0, 4.0),
        inflation_factor=Constant(math.exp(0.02)),
        return_factor=ShiftedLogNormal(0.08, 0.05),
        claim_size=Exponential(1.0),
        transition_rule=transition_rule,
    )


@pytest.fixture
def fading():
    return fading_model()


@pytest.fixture
def exposure():
    return small_exposure()


@pytest.fixture
def growth():
    return growth_model()


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
