"""Capital process of an insurer with stochastic returns, inflation and claim intensities.

The yearly transition is

    U_n = (1 + r_n)(U_{n-1} + P_n - X_n)        (claims_start_of_year)
    U_n = (1 + r_n)(U_{n-1} + P_n) - X_n        (claims_end_of_year)

with ``X_n = I_n V_n``, ``I_n = prod_{k<=n}(1 + i_k)`` and ``V_n`` the sum of
``K_n ~ Poisson(lam * xi_n)`` claim sizes.  Dividing by the accumulated
returns gives the discounted claim process ``Y_n``; ruin happens exactly when
``Y_n > u``.  Factor laws are given for the gross factors ``1 + i``, ``1 + r``
and ``1 + g``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .distributions import (
    Constant,
    DiscreteWeighted,
    DistributionSpec,
    as_generator,
    distribution_from_dict,
)
from .lundberg import CgfExpr, ConstantTerm, LogMomentTerm
from .runoff import RegVaryingFactor, RunoffExposure, report_prefactor

__all__ = [
    "TRANSITION_RULES",
    "JointFactors",
    "DeterministicExp",
    "ReportingDelay",
    "GrowthModelSpec",
    "RunoffModelSpec",
    "PathState",
    "YearOutcome",
    "sample_claim_count",
    "draw_factor_batch",
    "draw_year",
    "simulate_year",
    "discounted_increment",
    "discounted_supremum_path",
    "simulate_path",
    "initial_state",
    "model_from_dict",
]

TRANSITION_RULES = ("claims_start_of_year", "claims_end_of_year")


@dataclass(frozen=True)
class JointFactors:
    """Discrete joint law of the gross factors ``(1 + i, 1 + r)``."""

    inflation: tuple[float, ...]
    returns: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        for name in ("inflation", "returns", "probs"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        n = len(self.probs)
        if not (len(self.inflation) == len(self.returns) == n and n > 0):
            raise ValueError("joint factor atoms must have equal lengths")
        if min(self.inflation) <= 0 or min(self.returns) <= 0:
            raise ValueError("gross factors must be positive")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("joint factor probabilities must be non-negative and sum to 1")

    def discount_law(self) -> DiscreteWeighted:
        ratios = np.asarray(self.inflation) / np.asarray(self.returns)
        return DiscreteWeighted(tuple(ratios), self.probs)

    def inflation_law(self) -> DiscreteWeighted:
        return DiscreteWeighted(self.inflation, self.probs)

    def sample(self, gen, size):
        idx = gen.choice(len(self.probs), size=size, p=np.asarray(self.probs))
        return np.asarray(self.inflation)[idx], np.asarray(self.returns)[idx]

    def to_dict(self) -> dict:
        return {"inflation": list(self.inflation), "returns": list(self.returns), "probs": list(self.probs)}


@dataclass(frozen=True)
class DeterministicExp:
    """``xi_n = exp(-n phi)``."""

    phi: float

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError("phi must be positive")

    def to_dict(self) -> dict:
        return {"kind": "deterministic_exp", "phi": self.phi}


@dataclass(frozen=True)
class ReportingDelay:
    """``xi_n`` built from past exposure and a reporting delay law."""

    exposure: RunoffExposure

    def to_dict(self) -> dict:
        return {"kind": "reporting_delay", "exposure": self.exposure.to_dict()}


XiModel = Union[DeterministicExp, ReportingDelay]


def _check_factor(name: str, dist: DistributionSpec) -> None:
    lo, _ = dist.support()
    if lo < 0 or (lo == 0 and isinstance(dist, (Constant, DiscreteWeighted))):
        raise ValueError(f"{name} must be a positive gross factor, support starts at {lo}")


@dataclass(frozen=True)
class _FactorMixin:
    """Shared handling of the (1+i, 1+r) laws."""

    def discount_expr(self) -> CgfExpr:
        """``alpha -> log E[A**alpha]`` with ``A = (1 + i)/(1 + r)``."""
        if self.joint_ir is not None:
            return CgfExpr((LogMomentTerm(self.joint_ir.discount_law()),))
        return CgfExpr((LogMomentTerm(self.inflation_factor), LogMomentTerm(self.return_factor, -1.0)))

    def inflation_law(self) -> DistributionSpec:
        return self.joint_ir.inflation_law() if self.joint_ir is not None else self.inflation_factor

    def draw_ir(self, gen, size):
        if self.joint_ir is not None:
            return self.joint_ir.sample(gen, size)
        infl = np.asarray(self.inflation_factor.sample(gen, size), dtype=float)
        ret = np.asarray(self.return_factor.sample(gen, size), dtype=float)
        return infl, ret

    def _validate_common(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.transition_rule not in TRANSITION_RULES:
            raise ValueError(f"transition_rule must be one of {TRANSITION_RULES}")
        if self.joint_ir is None:
            _check_factor("inflation_factor", self.inflation_factor)
            _check_factor("return_factor", self.return_factor)
        if self.claim_size.support()[0] < 0:
            raise ValueError("claim sizes must be non-negative")

    @property
    def mean_claim(self) -> float:
        return self.claim_size.expectation()


@dataclass(frozen=True)
class GrowthModelSpec(_FactorMixin):
    """Business volume growing by ``1 + g`` a year, premiums loaded by ``s``."""

    lam: float
    s: float
    growth_factor: DistributionSpec
    structure: DistributionSpec
    inflation_factor: DistributionSpec
    return_factor: DistributionSpec
    claim_size: DistributionSpec
    transition_rule: str = "claims_start_of_year"
    joint_ir: Optional[JointFactors] = None

    regime = "growth"

    def __post_init__(self):
        self._validate_common()
        if not self.s > 0:
            raise ValueError("safety loading s must be positive")
        if abs(self.structure.expectation() - 1.0) > 1e-9:
            raise ValueError(f"structure variable must have mean 1, got {self.structure.expectation()}")
        if self.structure.support()[0] < 0:
            raise ValueError("structure variable must be positive")
        _check_factor("growth_factor", self.growth_factor)

    def growth_expr(self) -> CgfExpr:
        return CgfExpr((LogMomentTerm(self.growth_factor),))

    def lambda_1(self) -> CgfExpr:
        return self.discount_expr() + self.growth_expr()

    def beta_1(self) -> float:
        bound = self.lambda_1().domain().hi
        for d in (self.inflation_law(), self.claim_size, self.structure):
            bound = min(bound, d.log_moment_domain().hi)
        return bound

    def premium_rate(self) -> float:
        """Inflation- and growth-free premium ``(1 + s) lam m_Z``."""
        return (1.0 + self.s) * self.lam * self.mean_claim

    def log_d_admissible(self) -> bool:
        """Whether ``log D`` has an absolutely continuous part (independent factors)."""
        laws = [self.growth_factor]
        laws += [self.joint_ir.discount_law()] if self.joint_ir is not None else [self.inflation_factor, self.return_factor]
        return any(d.continuous for d in laws)

    def positivity_possible(self) -> bool:
        """Exact support check of ``P(q > 1 + s) > 0``."""
        q = self.structure
        if isinstance(q, DiscreteWeighted):
            return any(v > 1.0 + self.s and p > 0 for v, p in zip(q.values, q.probs))
        return q.support()[1] > 1.0 + self.s

    def to_dict(self) -> dict:
        d = {
            "regime": "growth",
            "lam": self.lam,
            "s": self.s,
            "growth_factor": self.growth_factor.to_dict(),
            "structure": self.structure.to_dict(),
            "inflation_factor": self.inflation_factor.to_dict(),
            "return_factor": self.return_factor.to_dict(),
            "claim_size": self.claim_size.to_dict(),
            "transition_rule": self.transition_rule,
        }
        if self.joint_ir is not None:
            d["joint_ir"] = self.joint_ir.to_dict()
        return d


@dataclass(frozen=True)
class RunoffModelSpec(_FactorMixin):
    """No premiums; claim intensity ``lam * xi_n`` fading out over time."""

    lam: float
    inflation_factor: DistributionSpec
    return_factor: DistributionSpec
    claim_size: DistributionSpec
    xi_model: XiModel
    transition_rule: str = "claims_start_of_year"
    joint_ir: Optional[JointFactors] = None

    regime = "runoff"

    def __post_init__(self):
        self._validate_common()
        if not isinstance(self.xi_model, (DeterministicExp, ReportingDelay)):
            raise TypeError("xi_model must be DeterministicExp or ReportingDelay")
        if not (math.isfinite(self.xi_log_rate) and self.xi_log_rate < 0):
            raise ValueError("the log-decay rate of E xi_n must be finite and negative")

    @property
    def phi(self) -> float:
        if isinstance(self.xi_model, DeterministicExp):
            return self.xi_model.phi
        return self.xi_model.exposure.delay.tail_rate

    @property
    def xi_log_rate(self) -> float:
        """``lim n^-1 log E xi_n``; equals ``-phi`` for both supported mixing models."""
        return -self.phi

    def lambda_2(self) -> CgfExpr:
        return self.discount_expr() + ConstantTerm(self.xi_log_rate)

    def beta_2(self) -> float:
        bound = self.lambda_2().domain().hi
        for d in (self.inflation_law(), self.claim_size):
            bound = min(bound, d.log_moment_domain().hi)
        return bound

    def f_model(self) -> RegVaryingFactor:
        """Regularly varying factor in ``P(K_n = 1) ~ lam f(n) exp(n * xi_log_rate)``."""
        if isinstance(self.xi_model, DeterministicExp):
            return RegVaryingFactor(1.0, 0.0)
        exp = self.xi_model.exposure
        return exp.delay.leading_h().scaled(report_prefactor(exp))

    @property
    def deterministic_xi(self) -> bool:
        return isinstance(self.xi_model, DeterministicExp)

    def xi_coefficients(self, n: int) -> np.ndarray:
        """Weights ``c`` with ``xi_n = c @ q`` for exposure-driven mixing."""
        exp = self.xi_model.exposure
        b = exp.weights(n)
        return np.asarray(exp.pi) * b[n + exp.d - np.arange(exp.d + 1)]

    def xi_at(self, n: int, scenario_q=None):
        if isinstance(self.xi_model, DeterministicExp):
            return math.exp(-n * self.xi_model.phi)
        return np.asarray(scenario_q, dtype=float) @ self.xi_coefficients(n)

    def draw_scenario(self, gen, size=None):
        """Past mixing draws for exposure models; ``None`` otherwise."""
        if isinstance(self.xi_model, DeterministicExp):
            return None
        return self.xi_model.exposure.sample_q(gen, size)

    def with_lam(self, lam: float) -> "RunoffModelSpec":
        return replace(self, lam=lam)

    def to_dict(self) -> dict:
        d = {
            "regime": "runoff",
            "lam": self.lam,
            "inflation_factor": self.inflation_factor.to_dict(),
            "return_factor": self.return_factor.to_dict(),
            "claim_size": self.claim_size.to_dict(),
            "xi_model": self.xi_model.to_dict(),
            "transition_rule": self.transition_rule,
        }
        if self.joint_ir is not None:
            d["joint_ir"] = self.joint_ir.to_dict()
        return d


ModelSpec = Union[GrowthModelSpec, RunoffModelSpec]


def model_from_dict(d: dict) -> ModelSpec:
    joint = JointFactors(**d["joint_ir"]) if d.get("joint_ir") else None
    common = dict(
        lam=float(d["lam"]),
        inflation_factor=distribution_from_dict(d["inflation_factor"]),
        return_factor=distribution_from_dict(d["return_factor"]),
        claim_size=distribution_from_dict(d["claim_size"]),
        transition_rule=d.get("transition_rule", "claims_start_of_year"),
        joint_ir=joint,
    )
    if d["regime"] == "growth":
        return GrowthModelSpec(
            s=float(d["s"]),
            growth_factor=distribution_from_dict(d["growth_factor"]),
            structure=distribution_from_dict(d["structure"]),
            **common,
        )
    if d["regime"] == "runoff":
        xm = d["xi_model"]
        if xm["kind"] == "deterministic_exp":
            xi = DeterministicExp(float(xm["phi"]))
        elif xm["kind"] == "reporting_delay":
            xi = ReportingDelay(RunoffExposure.from_dict(xm["exposure"]))
        else:
            raise ValueError(f"unknown xi_model kind {xm['kind']!r}")
        return RunoffModelSpec(xi_model=xi, **common)
    raise ValueError(f"unknown regime {d['regime']!r}")


@dataclass
class PathState:
    year: int = 0
    capital: float = 0.0
    inflation_product: float = 1.0
    discount_product: float = 1.0
    growth_product: float = 1.0
    discounted_claims: float = 0.0
    ruined: bool = False
    ruin_year: Optional[int] = None
    scenario_q: Optional[np.ndarray] = None


@dataclass(frozen=True)
class YearOutcome:
    claim_count: int
    claims_real: float
    claims_paid: float
    premium: float
    inflation: float
    ret: float
    growth: Optional[float]
    structure: Optional[float]
    xi: float


def sample_claim_count(xi: float, lam: float, rng) -> int:
    if not (xi > 0 and lam > 0):
        raise ValueError("xi and lam must be positive")
    return int(as_generator(rng).poisson(lam * xi))


def draw_factor_batch(spec: ModelSpec, gen, size: int, year: int, growth_products=None, scenario_q=None):
    """One year's random inputs for ``size`` paths, in the fixed order
    (1+i, 1+r), (1+g, q), claim count, claim sizes.

    Returns a dict of arrays: inflation, ret, growth, structure, xi, counts, claims.
    """
    infl, ret = spec.draw_ir(gen, size)
    out = {"inflation": infl, "ret": ret, "growth": None, "structure": None}
    if spec.regime == "growth":
        gf = np.asarray(spec.growth_factor.sample(gen, size), dtype=float)
        q = np.asarray(spec.structure.sample(gen, size), dtype=float)
        gp = (np.ones(size) if growth_products is None else np.asarray(growth_products)) * gf
        xi = gp * q
        out.update(growth=gf, structure=q)
    else:
        xi = np.broadcast_to(np.asarray(spec.xi_at(year, scenario_q), dtype=float), (size,))
    counts = gen.poisson(spec.lam * xi)
    out["xi"] = np.asarray(xi, dtype=float)
    out["counts"] = counts
    out["claims"] = np.asarray(spec.claim_size.sample_sum(counts, gen), dtype=float)
    return out


def initial_state(spec: ModelSpec, u: float, rng=None) -> PathState:
    """Starting state; exposure models draw their past mixing values here."""
    state = PathState(capital=float(u))
    if spec.regime == "runoff" and not spec.deterministic_xi:
        state.scenario_q = spec.draw_scenario(as_generator(rng))
    return state


def draw_year(spec: ModelSpec, state: PathState, rng) -> YearOutcome:
    gen = as_generator(rng)
    n = state.year + 1
    b = draw_factor_batch(spec, gen, 1, n, growth_products=[state.growth_product], scenario_q=state.scenario_q)
    infl = float(b["inflation"][0])
    v = float(b["claims"][0])
    inflation_product = state.inflation_product * infl
    premium = 0.0
    if spec.regime == "growth":
        premium = spec.premium_rate() * state.growth_product * float(b["growth"][0]) * inflation_product
    return YearOutcome(
        claim_count=int(b["counts"][0]),
        claims_real=v,
        claims_paid=inflation_product * v,
        premium=premium,
        inflation=infl,
        ret=float(b["ret"][0]),
        growth=None if b["growth"] is None else float(b["growth"][0]),
        structure=None if b["structure"] is None else float(b["structure"][0]),
        xi=float(b["xi"][0]),
    )


def simulate_year(state: PathState, spec: ModelSpec, rng, outcome: YearOutcome | None = None) -> tuple[PathState, YearOutcome]:
    """Advance the capital by one year; ``outcome`` replays given draws."""
    if state.ruined:
        raise ValueError("cannot advance a ruined path")
    out = draw_year(spec, state, rng) if outcome is None else outcome
    if spec.transition_rule == "claims_start_of_year":
        capital = out.ret * (state.capital + out.premium - out.claims_paid)
    else:
        capital = out.ret * (state.capital + out.premium) - out.claims_paid
    n = state.year + 1
    new = PathState(
        year=n,
        capital=capital,
        inflation_product=state.inflation_product * out.inflation,
        discount_product=state.discount_product * out.inflation / out.ret,
        growth_product=state.growth_product * (out.growth if out.growth is not None else 1.0),
        discounted_claims=state.discounted_claims + discounted_increment(spec, state, out),
        ruined=capital < 0,
        ruin_year=n if capital < 0 else None,
        scenario_q=state.scenario_q,
    )
    return new, out


def discounted_increment(spec: ModelSpec, state: PathState, out: YearOutcome) -> float:
    """Contribution of year ``n`` to ``Y_n`` given the state after year ``n - 1``."""
    lead = state.discount_product * out.inflation
    premium_real = 0.0
    if spec.regime == "growth":
        premium_real = spec.premium_rate() * state.growth_product * out.growth
    if spec.transition_rule == "claims_start_of_year":
        return lead * (out.claims_real - premium_real)
    return lead / out.ret * out.claims_real - lead * premium_real


@dataclass(frozen=True)
class PathResult:
    capital_ruin_year: Optional[int]
    threshold_ruin_year: Optional[int]
    sup_discounted: float
    final_state: PathState


def simulate_path(spec: ModelSpec, u: float, horizon: int, rng, trace: str | None = None) -> PathResult:
    """Run the capital recursion and the discounted-claims recursion on the same draws.

    Both ruin times are recorded; the path continues after ruin so that the
    running supremum of ``Y`` covers the whole horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    gen = as_generator(rng)
    state = initial_state(spec, u, gen)
    t_cap = t_thr = None
    y_sup = 0.0
    rows = []
    for _ in range(horizon):
        out = draw_year(spec, state, gen)
        state, _ = simulate_year(replace(state, ruined=False), spec, gen, outcome=out)
        if t_cap is None and state.ruined:
            t_cap = state.year
        y = state.discounted_claims
        y_sup = max(y_sup, y)
        if t_thr is None and y > u:
            t_thr = state.year
        if trace is not None:
            rows.append((state.year, state.capital, y, out.claim_count, out.claims_paid))
    if trace is not None:
        with open(trace, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["year", "U", "Y", "K", "X"])
            w.writerows(rows)
    return PathResult(t_cap, t_thr, y_sup, state)


def discounted_supremum_path(spec: ModelSpec, u: float, horizon: int, rng) -> tuple[float, Optional[int]]:
    """Running maximum of ``Y_n`` (floored at 0) and the first year with ``Y_n > u``."""
    res = simulate_path(spec, u, horizon, rng)
    return res.sup_discounted, res.threshold_ruin_year
