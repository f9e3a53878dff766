"""Asymptotic ruin estimators.

Growing business volume: the ruin probability decays like ``C u^{-rho_1}``
where ``C`` is the tail constant of the stationary solution of
``R = Q + M max(0, R)``; ``C`` is estimated from a simulated chain.

Run-off business: closed form ``K lam f(mu_2 log u) u^{-rho_2}``, its
single-claim series representation, and the compound-sum tail estimate it
rests on.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .distributions import (
    Constant,
    DistributionSpec,
    ShiftedLogNormal,
    as_generator,
)
from .lundberg import (
    CgfExpr,
    CgfTerm,
    ConstantTerm,
    LogMomentTerm,
    LundbergSolution,
    NoPositiveRate,
    UnboundedRate,
    solve_rate,
)
from .model import GrowthModelSpec, RunoffModelSpec
from .report import EstimateReport
from .runoff import RegVaryingFactor, expected_xi, single_report_probability

__all__ = [
    "HypothesisViolation",
    "DivergenceDetected",
    "NonPositiveM",
    "GoldieProblem",
    "simulate_fixed_point",
    "estimate_goldie_constant",
    "tail_slope",
    "growth_hypotheses",
    "asymptotic_ruin_growth",
    "RunoffAsymptotic",
    "runoff_asymptotic",
    "runoff_hypotheses",
    "asymptotic_ruin_runoff",
    "typical_ruin_time",
    "CompoundTailProblem",
    "CompoundTailResult",
    "compound_tail",
    "compound_tail_mc",
    "runoff_compound_problem",
    "single_claim_decomposition",
]


class HypothesisViolation(ValueError):
    """A theorem hypothesis needed by an estimator does not hold."""

    def __init__(self, condition: str, detail: str = ""):
        self.condition = condition
        super().__init__(f"hypothesis violated: {condition}" + (f" ({detail})" if detail else ""))


class DivergenceDetected(RuntimeError):
    """The fixed-point chain ran off to infinity."""


class NonPositiveM(ValueError):
    """``E(M^kappa log M) <= 0``."""


# --- increasing volumes ------------------------------------------------------


@dataclass(frozen=True)
class GoldieProblem:
    """I.i.d. pairs ``(Q, M)`` with ``M >= 0`` and ``E M^kappa = 1``.

    ``sampler(gen, n)`` returns two arrays of length ``n``.  ``m`` is
    ``E(M^kappa log M)`` when known in closed form; otherwise it is estimated
    by Monte Carlo.
    """

    sampler: Callable
    kappa: float
    m: Optional[float] = None
    rate_solution: Optional[LundbergSolution] = None

    @classmethod
    def from_growth(cls, spec: GrowthModelSpec) -> "GoldieProblem":
        sol = solve_rate(spec.lambda_1())
        kappa = sol.rate
        if not sol.interior:
            raise HypothesisViolation("rho_1 interior", "rate sits on the finiteness boundary")
        if abs(math.expm1(spec.lambda_1().eval(kappa))) > 1e-8:
            raise ValueError("E M^kappa differs from 1")
        scale = spec.lam * spec.mean_claim
        loading = 1.0 + spec.s

        def sampler(gen, n):
            infl, ret = spec.draw_ir(gen, n)
            gf = np.asarray(spec.growth_factor.sample(gen, n), dtype=float)
            q = np.asarray(spec.structure.sample(gen, n), dtype=float)
            return infl * gf * scale * (q - loading), infl / ret * gf

        # E M^k log M is the derivative of E M^a at k, and E M^k = 1
        return cls(sampler, kappa, m=sol.derivative, rate_solution=sol)


def _step(problem: GoldieProblem, gen, r: np.ndarray) -> np.ndarray:
    q, m = problem.sampler(gen, r.size)
    return q + m * np.maximum(r, 0.0)


def simulate_fixed_point(
    problem: GoldieProblem,
    burn_in: int = 10_000,
    n_samples: int = 10**6,
    rng=None,
    thin: int = 10,
    lanes: int = 2000,
) -> np.ndarray:
    """Approximately stationary draws of ``R`` from parallel chains.

    Every lane starts at 0 and runs ``burn_in`` steps; afterwards every
    ``thin``-th state is recorded.  The result is ordered by recording time,
    so contiguous slices are natural batches for batch means.
    """
    if burn_in < 1000:
        raise ValueError("burn_in must be at least 1000")
    gen = as_generator(rng)
    lanes = max(1, min(lanes, n_samples))
    r = np.zeros(lanes)

    def check(step):
        if np.mean(np.abs(r) > 1e12) > 0.01:
            raise DivergenceDetected(f"|R| above 1e12 on over 1% of chains after {step} steps")

    for t in range(burn_in):
        r = _step(problem, gen, r)
        if t % 500 == 499:
            check(t + 1)
    check(burn_in)
    n_rec = -(-n_samples // lanes)
    out = np.empty((n_rec, lanes))
    for j in range(n_rec):
        for _ in range(thin):
            r = _step(problem, gen, r)
        out[j] = r
    check(burn_in + n_rec * thin)
    return out.ravel()[:n_samples]


def _batch_se(values: np.ndarray, n_batches: int) -> float:
    n_batches = max(2, min(n_batches, values.size))
    means = np.array([b.mean() for b in np.array_split(values, n_batches)])
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def estimate_goldie_constant(
    problem: GoldieProblem,
    samples: np.ndarray,
    rng=None,
    n_batches: int = 100,
    m_draws: int = 10**6,
) -> EstimateReport:
    """``C = E[((Q + M R^+)^+)^k - ((M R)^+)^k] / (k m)`` with fresh ``(Q, M)`` per ``R``."""
    t0 = time.perf_counter()
    gen = as_generator(rng)
    kappa = problem.kappa
    r = np.asarray(samples, dtype=float)
    diffs = np.empty_like(r)
    for lo in range(0, r.size, 10**6):
        chunk = r[lo : lo + 10**6]
        q, m = problem.sampler(gen, chunk.size)
        rp = np.maximum(chunk, 0.0)
        diffs[lo : lo + chunk.size] = np.maximum(q + m * rp, 0.0) ** kappa - (m * rp) ** kappa
    if problem.m is not None:
        m_hat, m_source = problem.m, "analytic"
    else:
        _, mm = problem.sampler(gen, m_draws)
        with np.errstate(divide="ignore", invalid="ignore"):
            mk = np.where(mm > 0, mm**kappa * np.log(mm), 0.0)
        m_hat, m_source = float(mk.mean()), "monte-carlo"
    if not m_hat > 0:
        raise NonPositiveM(f"E(M^kappa log M) estimated as {m_hat}")
    denom = kappa * m_hat
    c = float(diffs.mean()) / denom
    se = _batch_se(diffs, n_batches) / denom
    return EstimateReport(
        method="goldie-constant",
        estimate=c,
        std_error=se,
        replications=r.size,
        probability=False,
        wall_ms=1e3 * (time.perf_counter() - t0),
        extras={"kappa": kappa, "m": m_hat, "m_source": m_source},
    )


def tail_slope(samples: np.ndarray, top_fraction: float = 0.1) -> float:
    """Least-squares slope of log empirical survival vs log level over the top fraction."""
    x = np.sort(np.asarray(samples, dtype=float))[::-1]
    k = int(top_fraction * x.size)
    x = x[:k]
    if k < 10 or x[-1] <= 0:
        raise ValueError("not enough positive samples in the top fraction")
    sf = np.arange(1, k + 1) / (samples.size if hasattr(samples, "size") else len(samples))
    slope, _ = np.polyfit(np.log(x), np.log(sf), 1)
    return float(slope)


def growth_hypotheses(spec: GrowthModelSpec) -> tuple[dict, Optional[LundbergSolution]]:
    """Checks for the increasing-volume estimate, in the order they are reported."""
    checks: dict = {}
    checks["default transition rule"] = spec.transition_rule == "claims_start_of_year"
    checks["E log(1+g) >= 0"] = spec.growth_factor.log_moment_deriv(0.0) >= 0
    checks["P(g = 0) < 1"] = not (isinstance(spec.growth_factor, Constant) and spec.growth_factor.value == 1.0)
    sol = None
    try:
        sol = solve_rate(spec.lambda_1())
        checks["rho_1 exists"] = True
    except (NoPositiveRate, UnboundedRate, ValueError):
        checks["rho_1 exists"] = False
    beta = spec.beta_1()
    checks["beta_1 > 0"] = beta > 0
    checks["rho_1 in (0, beta_1)"] = sol is not None and sol.interior and 0 < sol.rate < beta
    checks["E Z^a finite for some a > 1"] = spec.claim_size.log_moment_domain().hi > 1
    checks["log D has an absolutely continuous part"] = spec.log_d_admissible()
    return checks, sol


def _raise_first(checks: dict) -> None:
    for name, ok in checks.items():
        if ok is False:
            raise HypothesisViolation(name)


def asymptotic_ruin_growth(
    spec: GrowthModelSpec,
    u: float,
    constant: Optional[EstimateReport] = None,
    rng=None,
    n_samples: int = 10**6,
    burn_in: int = 10_000,
) -> EstimateReport:
    """``C u^{-rho_1}``; pass ``constant`` to reuse an estimated ``C`` across ``u``."""
    t0 = time.perf_counter()
    checks, sol = growth_hypotheses(spec)
    _raise_first(checks)
    rho = sol.rate
    positive = spec.positivity_possible()
    checks["P(q > 1+s) > 0"] = positive
    if constant is None:
        if not positive:
            constant = EstimateReport("goldie-constant", 0.0, probability=False, extras={"exact": True})
        else:
            problem = GoldieProblem.from_growth(spec)
            gen = as_generator(rng)
            samples = simulate_fixed_point(problem, burn_in=burn_in, n_samples=n_samples, rng=gen)
            constant = estimate_goldie_constant(problem, samples, gen)
    scale = u ** (-rho)
    return EstimateReport(
        method="asymptotic-growth",
        estimate=constant.estimate * scale,
        std_error=constant.std_error * scale,
        u=u,
        lam=spec.lam,
        replications=constant.replications,
        probability=False,
        wall_ms=1e3 * (time.perf_counter() - t0),
        hypothesis_checks=checks,
        extras={"rho": rho, "beta": spec.beta_1(), "C": constant.estimate, "C_se": constant.std_error},
    )


# --- run-off -----------------------------------------------------------------


@dataclass(frozen=True)
class RunoffAsymptotic:
    """``prefactor * lam * f(mu log u) * u^{-rho}``.

    ``f`` is evaluated at ``max(mu log u, 1)`` so that the expression stays
    defined for small ``u``, where the formula is outside its range anyway.
    """

    rho: float
    mu: float
    prefactor: float
    f: RegVaryingFactor
    beta: float

    def __call__(self, u, lam):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            arg = np.maximum(self.mu * np.log(u), 1.0)
            out = self.prefactor * np.asarray(lam) * self.f(arg) * u ** (-self.rho)
        return float(out) if np.ndim(out) == 0 else out


def runoff_hypotheses(spec: RunoffModelSpec) -> tuple[dict, Optional[LundbergSolution]]:
    checks: dict = {}
    checks["default transition rule"] = spec.transition_rule == "claims_start_of_year"
    checks["Lambda_xi(1) finite and negative"] = math.isfinite(spec.xi_log_rate) and spec.xi_log_rate < 0
    sol = None
    try:
        sol = solve_rate(spec.lambda_2())
        checks["rho_2 exists"] = True
    except (NoPositiveRate, UnboundedRate, ValueError):
        checks["rho_2 exists"] = False
    beta = spec.beta_2()
    checks["beta_2 > 1"] = beta > 1
    checks["rho_2 in (1, beta_2)"] = sol is not None and sol.interior and 1 < sol.rate < beta
    a_laws = (
        [spec.joint_ir.discount_law()] if spec.joint_ir is not None else [spec.inflation_factor, spec.return_factor]
    )
    if all(isinstance(d, Constant) for d in a_laws):
        checks["log A non-lattice"] = False
    elif any(d.continuous for d in a_laws):
        checks["log A non-lattice"] = True
    else:
        checks["log A non-lattice"] = "unverified (discrete law)"
    if not spec.deterministic_xi:
        q = spec.xi_model.exposure.dist_q_past
        checks["E q^a finite for all a > 0"] = math.isinf(q.moment_index())
    return checks, sol


def runoff_asymptotic(spec: RunoffModelSpec) -> RunoffAsymptotic:
    """Validated closed-form tail for the run-off model."""
    checks, sol = runoff_hypotheses(spec)
    _raise_first(checks)
    rho, mu = sol.rate, 1.0 / spec.discount_expr().deriv(sol.rate)
    log_k = (
        spec.inflation_law().log_moment(rho)
        + spec.claim_size.log_moment(rho)
        + spec.xi_log_rate
        + math.log(mu / rho)
    )
    return RunoffAsymptotic(rho, mu, math.exp(log_k), spec.f_model(), spec.beta_2())


def _validity_ratio(spec: RunoffModelSpec, n_typ: float) -> float:
    if spec.deterministic_xi:
        return spec.lam * math.exp(-spec.xi_model.phi * n_typ)
    return spec.lam * expected_xi(spec.xi_model.exposure, max(1, int(round(n_typ))))


def asymptotic_ruin_runoff(spec: RunoffModelSpec, u: float, lam: Optional[float] = None) -> EstimateReport:
    t0 = time.perf_counter()
    checks, _ = runoff_hypotheses(spec)
    asym = runoff_asymptotic(spec)
    lam = spec.lam if lam is None else lam
    est = asym(u, lam)
    n_typ = asym.mu * math.log(u) if u > 1 else 0.0
    return EstimateReport(
        method="asymptotic-runoff",
        estimate=est,
        u=u,
        lam=lam,
        probability=False,
        wall_ms=1e3 * (time.perf_counter() - t0),
        hypothesis_checks=checks,
        extras={
            "rho": asym.rho,
            "mu": asym.mu,
            "beta": asym.beta,
            "prefactor": asym.prefactor,
            "validity_ratio": _validity_ratio(spec.with_lam(lam), n_typ),
        },
    )


def typical_ruin_time(spec: RunoffModelSpec, u: float, eps: float = 0.0) -> tuple[float, tuple[float, float]]:
    """Centre ``mu_2 log u`` of the ruin-time window and ``[(mu_2 - eps), (mu_2 + eps)] log u``."""
    asym = runoff_asymptotic(spec)
    lu = math.log(u)
    return asym.mu * lu, ((asym.mu - eps) * lu, (asym.mu + eps) * lu)


# --- compound sums -----------------------------------------------------------


@dataclass(frozen=True)
class CompoundTailProblem:
    """``P(eta_1 + ... + eta_N + W > u)`` with ``P(N = n) ~ f(n) e^{-n upsilon}``.

    ``eta_cgf`` and ``w_cgf`` are the cumulant generating functions of one
    increment and of ``W``.  The optional samplers are used only by the
    brute-force check.
    """

    eta_cgf: CgfExpr
    w_cgf: CgfExpr
    upsilon: float
    f_model: RegVaryingFactor
    eta_sampler: Optional[Callable] = None
    w_sampler: Optional[Callable] = None
    eta_continuous: bool = True

    @classmethod
    def from_distributions(
        cls, eta: DistributionSpec, w: DistributionSpec, upsilon: float, f_model: RegVaryingFactor | None = None
    ) -> "CompoundTailProblem":
        """Geometric counts (``f = 1 - e^{-upsilon}``) unless ``f_model`` is given."""
        if f_model is None:
            f_model = RegVaryingFactor(-math.expm1(-upsilon), 0.0)
        return cls(
            CgfExpr((CgfTerm(eta),)),
            CgfExpr((CgfTerm(w),)),
            upsilon,
            f_model,
            eta_sampler=lambda gen, n: np.asarray(eta.sample(gen, n), dtype=float),
            w_sampler=lambda gen, n: np.asarray(w.sample(gen, n), dtype=float),
            eta_continuous=eta.continuous,
        )


@dataclass(frozen=True)
class CompoundTailResult:
    rho: float
    mu: float
    log_rate_estimate: float
    refined_estimate: float
    hypothesis_checks: dict = field(default_factory=dict)


def compound_tail(p: CompoundTailProblem, u: float) -> CompoundTailResult:
    """Crude ``e^{-rho u}`` and refined ``E(e^{rho W}) mu / rho f(mu u) e^{-rho u}``."""
    checks: dict = {"upsilon > 0": p.upsilon > 0}
    _raise_first(checks)
    try:
        sol = solve_rate(p.eta_cgf + ConstantTerm(-p.upsilon))
    except (NoPositiveRate, UnboundedRate, ValueError) as exc:
        raise HypothesisViolation("Lambda_eta(rho) = upsilon solvable", str(exc)) from exc
    rho = sol.rate
    checks["Lambda_eta(rho) = upsilon solvable"] = sol.interior
    checks["Lambda_eta finite beyond rho"] = p.eta_cgf.domain().hi > rho
    checks["E e^(aW) finite beyond rho"] = p.w_cgf.domain().hi > rho
    checks["eta non-arithmetic"] = p.eta_continuous or "unverified (discrete law)"
    _raise_first(checks)
    mu = 1.0 / sol.derivative
    crude = math.exp(-rho * u)
    refined = math.exp(p.w_cgf.eval(rho) - rho * u) * mu / rho * p.f_model(max(mu * u, 1e-300))
    return CompoundTailResult(rho, mu, crude, refined, checks)


def compound_tail_mc(
    p: CompoundTailProblem, u: float, n: int, rng=None, chunk: int = 10**6
) -> tuple[float, float]:
    """Brute-force ``P(V_N + W > u)`` for geometric ``N``; returns (estimate, standard error)."""
    if p.eta_sampler is None or p.w_sampler is None:
        raise ValueError("problem has no samplers")
    gen = as_generator(rng)
    success = -math.expm1(-p.upsilon)
    hits = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        counts = gen.geometric(success, m) - 1
        total = int(counts.sum())
        eta = p.eta_sampler(gen, total)
        sums = np.zeros(m)
        nz = counts > 0
        if total:
            starts = np.concatenate(([0], np.cumsum(counts[nz])[:-1]))
            sums[nz] = np.add.reduceat(eta, starts)
        hits += int(np.count_nonzero(sums + p.w_sampler(gen, m) > u))
        done += m
    est = hits / n
    return est, math.sqrt(est * (1 - est) / n)


def runoff_compound_problem(spec: RunoffModelSpec) -> CompoundTailProblem:
    """Run-off tail as a compound sum on the log scale.

    Increments are ``log A``, ``W = log((1 + i) Z)`` and ``N = n - 1`` for the
    year of the last claim, so the count law decays at rate ``-Lambda_xi(1)``.
    """
    if not spec.deterministic_xi:
        raise ValueError("compound representation implemented for deterministic mixing")
    eta = spec.discount_expr()
    w = CgfExpr((LogMomentTerm(spec.inflation_law()), LogMomentTerm(spec.claim_size)))
    return CompoundTailProblem(eta, w, -spec.xi_log_rate, spec.f_model())


# --- single-claim representation -------------------------------------------


def _gaussian_log_params(dist: DistributionSpec) -> Optional[tuple[float, float]]:
    if isinstance(dist, Constant):
        return math.log(dist.value), 0.0
    if isinstance(dist, ShiftedLogNormal):
        return dist.mean_log, dist.var_log
    return None


_STD_GRID = np.linspace(-12.0, 12.0, 8001)
_STD_WEIGHTS = np.exp(-0.5 * _STD_GRID**2) / math.sqrt(2 * math.pi)


def _exceed_prob_gaussian(mean: float, var: float, z: DistributionSpec, u: float) -> float:
    """``P(e^L Z > u)`` for ``L ~ N(mean, var)`` independent of ``Z``.

    Conditioning on ``L`` leaves a smooth integrand in the standard normal
    variable, integrated with Simpson's rule on [-12, 12].
    """
    if var == 0:
        return float(z.sf(u * math.exp(-mean)))
    sf = np.asarray(z.sf(u * np.exp(-(mean + math.sqrt(var) * _STD_GRID))), dtype=float)
    return float(integrate.simpson(_STD_WEIGHTS * sf, x=_STD_GRID))


@dataclass(frozen=True)
class DecompositionResult:
    years: np.ndarray
    terms: np.ndarray
    total: float
    truncation_bound: float
    method: str

    @property
    def peak_year(self) -> int:
        return int(self.years[np.argmax(self.terms)])


def single_claim_decomposition(
    spec: RunoffModelSpec, u: float, n_max: int, method: str = "auto", n_mc: int = 10**5, rng=None
) -> DecompositionResult:
    """Terms ``P(A_1...A_{n-1} (1 + i_n) Z > u) P(K_n = 1)`` for ``n = 1..n_max``."""
    years = np.arange(1, n_max + 1)
    if spec.deterministic_xi:
        lam_xi = spec.lam * np.exp(-spec.xi_model.phi * years)
        p_one = lam_xi * np.exp(-lam_xi)
        tail_mass = spec.lam * math.exp(-spec.xi_model.phi * (n_max + 1)) / -math.expm1(-spec.xi_model.phi)
    else:
        exp = spec.xi_model.exposure
        p_one = np.array([single_report_probability(exp, spec.lam, int(n), rng=rng)[0] for n in years])
        b = exp.weights(n_max)
        reported = sum(p * b[: n_max + exp.d - j + 1].sum() for j, p in enumerate(exp.pi))
        tail_mass = spec.lam * max(sum(exp.pi) - reported, 0.0)

    gauss_i = _gaussian_log_params(spec.inflation_factor) if spec.joint_ir is None else None
    gauss_r = _gaussian_log_params(spec.return_factor) if spec.joint_ir is None else None
    if method == "auto":
        method = "gaussian" if gauss_i is not None and gauss_r is not None else "mc"
    probs = np.empty(n_max)
    if method == "gaussian":
        if gauss_i is None or gauss_r is None:
            raise ValueError("gaussian method needs Constant/ShiftedLogNormal factors")
        step_mean = gauss_i[0] - gauss_r[0]
        step_var = gauss_i[1] + gauss_r[1]
        for k, n in enumerate(years):
            probs[k] = _exceed_prob_gaussian((n - 1) * step_mean + gauss_i[0], (n - 1) * step_var + gauss_i[1], spec.claim_size, u)
    elif method == "mc":
        gen = as_generator(rng)
        log_prod = np.zeros(n_mc)
        for k in range(n_max):
            infl, ret = spec.draw_ir(gen, n_mc)
            probs[k] = float(np.mean(spec.claim_size.sf(u * np.exp(-log_prod) / infl)))
            log_prod += np.log(infl) - np.log(ret)
    else:
        raise ValueError(f"unknown method {method!r}")
    terms = probs * p_one
    return DecompositionResult(years, terms, float(terms.sum()), float(tail_mass), method)
