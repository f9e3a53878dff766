"""Crude Monte Carlo ruin probabilities and the short-horizon hybrid estimator.

Paths are simulated in blocks; block ``b`` always uses the counter-based
stream ``(seed, b)``, so results do not depend on how blocks are spread over
worker processes.  All paths of a block share one vectorised year loop that
tracks the discounted claims ``Y_n`` for a whole grid of initial capitals.

Truncation.  A surviving path is stopped once its remaining expected
discounted claims are negligible.  At the stop the Markov bound

    P(later ruin) <= E[future discounted claims] / (u - Y_n)

is added to the report's ``truncation_bias_bound`` (an upper bound on the
probability mass the truncation can have missed).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import __version__
from .distributions import RngStream
from .estimators import HypothesisViolation, RunoffAsymptotic, runoff_asymptotic
from .model import GrowthModelSpec, RunoffModelSpec, draw_factor_batch
from .report import EstimateReport
from .runoff import RegVaryingFactor, expected_xi

__all__ = [
    "FixedHorizon",
    "AdaptiveRunoff",
    "AdaptiveGrowth",
    "McConfig",
    "mc_ruin",
    "mc_ruin_grid",
    "choose_n0",
    "hybrid_ruin",
    "hybrid_ruin_grid",
]


@dataclass(frozen=True)
class FixedHorizon:
    years: int

    def __post_init__(self):
        if self.years < 1:
            raise ValueError("horizon must be at least one year")

    def to_dict(self):
        return {"kind": "fixed", "years": self.years}


@dataclass(frozen=True)
class AdaptiveRunoff:
    """Stop once the remaining expected claim count ``lam * sum_{k>n} E xi_k`` drops below the floor."""

    intensity_floor: float = 1e-7
    max_years: int = 5000

    def __post_init__(self):
        if not 0 < self.intensity_floor < 1:
            raise ValueError("intensity_floor must lie in (0, 1)")

    def to_dict(self):
        return {"kind": "adaptive_runoff", "intensity_floor": self.intensity_floor, "max_years": self.max_years}


@dataclass(frozen=True)
class AdaptiveGrowth:
    """Stop a path once its residual ruin bound (see module docstring) is below ``residual_tol``."""

    residual_tol: float = 1e-6
    max_years: int = 5000

    def __post_init__(self):
        if not 0 < self.residual_tol < 1:
            raise ValueError("residual_tol must lie in (0, 1)")

    def to_dict(self):
        return {"kind": "adaptive_growth", "residual_tol": self.residual_tol, "max_years": self.max_years}


HorizonPolicy = Union[FixedHorizon, AdaptiveRunoff, AdaptiveGrowth]


def horizon_from_dict(d: dict) -> HorizonPolicy:
    kind = d["kind"]
    args = {k: v for k, v in d.items() if k != "kind"}
    return {"fixed": FixedHorizon, "adaptive_runoff": AdaptiveRunoff, "adaptive_growth": AdaptiveGrowth}[kind](**args)


@dataclass(frozen=True)
class McConfig:
    replications: int = 10**6
    seed: int = 20240601
    workers: int = 1
    horizon: Optional[HorizonPolicy] = None
    block_size: int = 65536

    def __post_init__(self):
        if self.replications < 1 or self.workers < 1 or self.block_size < 1:
            raise ValueError("replications, workers and block_size must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def policy_for(self, spec) -> HorizonPolicy:
        if self.horizon is not None:
            return self.horizon
        return AdaptiveGrowth() if spec.regime == "growth" else AdaptiveRunoff()

    def to_dict(self):
        d = {"replications": self.replications, "seed": self.seed, "workers": self.workers, "block_size": self.block_size}
        if self.horizon is not None:
            d["horizon"] = self.horizon.to_dict()
        return d


# --- residual bounds ---------------------------------------------------------


@dataclass(frozen=True)
class _Residual:
    """Per-path ingredients of the truncation bound.

    ``bound = scale * lead * future / headroom`` where ``lead`` is the path's
    discount product and ``future`` a path- and year-dependent sum.
    """

    scale: float
    geometric: float  # ratio of consecutive expected discount factors
    ok: bool


def _residual_setup(spec) -> _Residual:
    claims_end = spec.transition_rule == "claims_end_of_year"
    e_lead = math.exp(spec.discount_expr().eval(1.0)) if claims_end else spec.inflation_law().expectation()
    e_a = math.exp(spec.discount_expr().eval(1.0))
    if spec.regime == "growth":
        e_g = spec.growth_factor.expectation()
        ratio = e_a * e_g
        scale = spec.lam * spec.mean_claim * e_lead * e_g
        return _Residual(scale / (1 - ratio) if ratio < 1 else math.inf, ratio, ratio < 1)
    return _Residual(spec.lam * spec.mean_claim * e_lead, e_a, True)


def _runoff_future(spec: RunoffModelSpec, n: int, q, e_a: float) -> np.ndarray | float:
    """``sum_{k>n} xi_k e_a^{k-1-n}`` (an upper bound for exposure models with ``e_a <= 1``)."""
    if spec.deterministic_xi:
        phi = spec.xi_model.phi
        r = e_a * math.exp(-phi)
        return math.exp(-(n + 1) * phi) / (1 - r) if r < 1 else math.inf
    if e_a > 1:
        return math.inf
    exp = spec.xi_model.exposure
    b = exp.weights(n + exp.d)
    # sum_{k>n} b_{k-m} = 1 - sum_{j <= n-m} b_j, year m = idx - d
    done = np.array([b[: n + exp.d - j + 1].sum() for j in range(exp.d + 1)])
    coef = np.asarray(exp.pi) * np.maximum(1.0 - done, 0.0)
    return np.asarray(q) @ coef


def _remaining_intensity(spec: RunoffModelSpec, n: int, q) -> np.ndarray | float:
    return spec.lam * _runoff_future(spec, n, q, 1.0)


# --- block kernel ------------------------------------------------------------


@dataclass
class _BlockResult:
    n: int
    ruins: np.ndarray
    t_sum: np.ndarray
    t_sq: np.ndarray
    t_log_sum: np.ndarray
    bias: np.ndarray
    hybrid_sum: np.ndarray
    hybrid_sq: np.ndarray
    clamped: np.ndarray
    max_year: int
    capped: int

    def __add__(self, other: "_BlockResult") -> "_BlockResult":
        return _BlockResult(
            self.n + other.n,
            self.ruins + other.ruins,
            self.t_sum + other.t_sum,
            self.t_sq + other.t_sq,
            self.t_log_sum + other.t_log_sum,
            self.bias + other.bias,
            self.hybrid_sum + other.hybrid_sum,
            self.hybrid_sq + other.hybrid_sq,
            self.clamped + other.clamped,
            max(self.max_year, other.max_year),
            self.capped + other.capped,
        )


@dataclass(frozen=True)
class _Task:
    spec: Union[GrowthModelSpec, RunoffModelSpec]
    u_grid: tuple[float, ...]
    n_paths: int
    seed: int
    block: int
    policy: HorizonPolicy
    hybrid_n0: Optional[int] = None
    hybrid_tail: Optional[RunoffAsymptotic] = None


def _run_block(task: _Task) -> _BlockResult:
    spec, policy = task.spec, task.policy
    u = np.asarray(task.u_grid, dtype=float)
    nu = u.size
    gen = RngStream(task.seed, task.block).generator
    n = task.n_paths
    growth = spec.regime == "growth"
    residual = _residual_setup(spec)

    y = np.zeros(n)
    ymax = np.zeros(n)
    aprod = np.ones(n)
    gprod = np.ones(n)
    q = spec.draw_scenario(gen, n) if not growth and not spec.deterministic_xi else None
    ruin_year = np.zeros((n, nu), dtype=np.int64)
    lane = np.arange(n)

    res = _BlockResult(
        n, np.zeros(nu, np.int64), np.zeros(nu), np.zeros(nu), np.zeros(nu), np.zeros(nu),
        np.zeros(nu), np.zeros(nu), np.zeros(nu, np.int64), 0, 0,
    )
    if task.hybrid_n0 is not None:
        max_years = task.hybrid_n0
    elif isinstance(policy, FixedHorizon):
        max_years = policy.years
    else:
        max_years = policy.max_years
    premium = spec.premium_rate() if growth else 0.0
    claims_end = spec.transition_rule == "claims_end_of_year"
    log_u = np.log(np.maximum(u, 1.0 + 1e-12))

    def bound(idx, year):
        """Residual ruin bound per (lane, u) for the lanes ``idx``."""
        head = u[None, :] - y[idx, None]
        if growth:
            fut = residual.scale * (aprod[idx] * gprod[idx])
        else:
            f = _runoff_future(spec, year, None if q is None else q[idx], residual.geometric)
            fut = residual.scale * aprod[idx] * f
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(head > 0, np.asarray(fut)[:, None] / head, 1.0)
        return np.minimum(b, 1.0)

    def retire(idx, year):
        if idx.size == 0:
            return
        alive_u = ruin_year[lane[idx]] == 0
        res.bias[:] += (bound(idx, year) * alive_u).sum(axis=0)

    year = 0
    for year in range(1, max_years + 1):
        m = y.size
        if m == 0:
            year -= 1
            break
        b = draw_factor_batch(spec, gen, m, year, growth_products=gprod, scenario_q=q)
        infl, ret = b["inflation"], b["ret"]
        lead = aprod * infl
        if growth:
            gprod = gprod * b["growth"]
            prem = premium * gprod
        else:
            prem = 0.0
        if claims_end:
            y = y + lead / ret * b["claims"] - lead * prem
        else:
            y = y + lead * (b["claims"] - prem)
        aprod = aprod * (infl / ret)
        ymax = np.maximum(ymax, y)

        hot = np.flatnonzero(ymax > u[0])
        if hot.size:
            rows = lane[hot]
            fresh = (ymax[hot, None] > u[None, :]) & (ruin_year[rows] == 0)
            ruin_year[rows] = np.where(fresh, year, ruin_year[rows])
        # lanes ruined at every level need no further simulation
        keep = ymax <= u[-1]
        if task.hybrid_n0 is None and not isinstance(policy, FixedHorizon):
            if growth:
                first_alive = np.argmax(ymax[:, None] <= u[None, :], axis=1)
                head = u[first_alive] - y
                with np.errstate(divide="ignore"):
                    lane_bound = residual.scale * aprod * gprod / np.where(head > 0, head, np.nan)
                stop = keep & (lane_bound <= policy.residual_tol)
            else:
                stop = keep & (_remaining_intensity(spec, year, q) < policy.intensity_floor)
                stop = np.broadcast_to(stop, keep.shape)
            if stop.any():
                retire(np.flatnonzero(stop), year)
                keep = keep & ~stop
        if not keep.all():
            y, ymax, aprod, gprod, lane = y[keep], ymax[keep], aprod[keep], gprod[keep], lane[keep]
            if q is not None:
                q = q[keep]

    res.max_year = year
    survivors = np.arange(y.size)
    if task.hybrid_n0 is None:
        # paths still running at the cap
        res.capped = int(y.size)
        retire(survivors, year)
    else:
        tail = task.hybrid_tail
        n0 = task.hybrid_n0
        if q is None:
            lam_now = spec.lam * (math.exp(-n0 * spec.xi_model.phi) if n0 > 0 else 1.0)
            lam_now = np.full(y.size, lam_now)
        else:
            lam_now = spec.lam * spec.xi_at(n0, q) if n0 > 0 else np.full(y.size, spec.lam)
        alive_u = ruin_year[lane] == 0
        head = u[None, :] - y[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            u_restart = np.where(head > 0, head / aprod[:, None], np.nan)
            raw = tail(np.where(alive_u, u_restart, 1.0), lam_now[:, None])
        raw = np.where(alive_u, np.where(head > 0, raw, 1.0), 0.0)
        res.clamped += ((raw > 1.0) & alive_u).sum(axis=0)
        e = np.minimum(raw, 1.0)
        res.hybrid_sum += e.sum(axis=0)
        res.hybrid_sq += (e * e).sum(axis=0)

    ruined = ruin_year > 0
    t = ruin_year.astype(float)
    res.ruins += ruined.sum(axis=0)
    res.t_sum += t.sum(axis=0)
    res.t_sq += (t * t).sum(axis=0)
    res.t_log_sum += (t / log_u[None, :]).sum(axis=0)
    if task.hybrid_n0 is not None:
        res.hybrid_sum += ruined.sum(axis=0)
        res.hybrid_sq += ruined.sum(axis=0)
    return res


def _run(spec, u_grid, cfg: McConfig, policy, hybrid_n0=None, hybrid_tail=None) -> _BlockResult:
    reps, bs = cfg.replications, cfg.block_size
    tasks = [
        _Task(spec, tuple(u_grid), min(bs, reps - lo), cfg.seed, k, policy, hybrid_n0, hybrid_tail)
        for k, lo in enumerate(range(0, reps, bs))
    ]
    if cfg.workers == 1 or len(tasks) == 1:
        results = [_run_block(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_block, tasks))
    total = results[0]
    for r in results[1:]:
        total = total + r
    return total


def _sorted_grid(u_grid: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u_grid, dtype=float)
    if u.ndim != 1 or u.size == 0 or np.any(u < 0):
        raise ValueError("u grid must be a non-empty list of non-negative levels")
    order = np.argsort(u, kind="stable")
    return u[order], order


def mc_ruin_grid(spec, u_grid: Sequence[float], cfg: McConfig) -> list[EstimateReport]:
    """Crude Monte Carlo ruin probabilities for every level in ``u_grid`` on shared paths."""
    t0 = time.perf_counter()
    u_sorted, order = _sorted_grid(u_grid)
    policy = cfg.policy_for(spec)
    tot = _run(spec, u_sorted, cfg, policy)
    wall = 1e3 * (time.perf_counter() - t0)
    reports = [None] * u_sorted.size
    n = tot.n
    for j, pos in enumerate(order):
        p = tot.ruins[j] / n
        k = int(tot.ruins[j])
        mean_t = tot.t_sum[j] / k if k else math.nan
        sd_t = math.sqrt(max(tot.t_sq[j] / k - mean_t**2, 0.0)) if k else math.nan
        reports[pos] = EstimateReport(
            method="mc",
            estimate=float(p),
            std_error=math.sqrt(p * (1 - p) / n),
            replications=n,
            seed=cfg.seed,
            u=float(u_sorted[j]),
            lam=spec.lam,
            wall_ms=wall,
            horizon={
                **policy.to_dict(),
                "max_year": tot.max_year,
                "paths_at_cap": tot.capped,
                "truncation_bias_bound": float(tot.bias[j] / n),
            },
            extras={
                "ruins": k,
                "mean_ruin_time": mean_t,
                "sd_ruin_time": sd_t,
                "mean_ruin_time_over_log_u": tot.t_log_sum[j] / k if k else math.nan,
                "workers": cfg.workers,
                "version": __version__,
            },
        )
    return reports


def mc_ruin(spec, u: float, cfg: McConfig) -> EstimateReport:
    if not u > 0:
        raise ValueError("u must be positive")
    return mc_ruin_grid(spec, [u], cfg)[0]


def choose_n0(spec: RunoffModelSpec, lam0: float, max_years: int = 100_000) -> int:
    """Smallest ``n`` with ``lam * E xi_n <= lam0`` (``0`` when ``lam <= lam0``).

    For exposure-driven mixing the search starts after the peak of ``E xi_n``.
    """
    if not lam0 > 0:
        raise ValueError("lam0 must be positive")
    if spec.lam <= lam0:
        return 0
    if spec.deterministic_xi:
        phi = spec.xi_model.phi
        n = 0
        while spec.lam * math.exp(-n * phi) > lam0:
            n += 1
            if n > max_years:
                raise ValueError("n0 search exceeded max_years")
        return n
    exp = spec.xi_model.exposure
    prev = math.inf
    for n in range(1, max_years + 1):
        cur = spec.lam * expected_xi(exp, n)
        if cur <= lam0 and cur <= prev:
            return n
        prev = cur
    raise ValueError("n0 search exceeded max_years")


def _hybrid_tail(spec: RunoffModelSpec) -> RunoffAsymptotic:
    """Closed-form tail with ``f = 1``: after year ``n0`` the fading is
    approximated by the exponential rate alone, with the realised intensity
    ``lam xi_{n0}`` as the new level.
    """
    asym = runoff_asymptotic(spec)
    if spec.deterministic_xi:
        return asym
    # the exposure prefactor lives in f; the restart keeps only e^{Lambda_xi(1)}
    return RunoffAsymptotic(asym.rho, asym.mu, asym.prefactor, RegVaryingFactor(1.0, 0.0), asym.beta)


def hybrid_ruin_grid(spec: RunoffModelSpec, u_grid: Sequence[float], lam0: float, cfg: McConfig) -> list[EstimateReport]:
    """Simulate ``n0`` years, then replace the remaining ruin chance of each
    surviving path by the closed-form tail at its restart capital.

    A survivor with discounted claims ``Y`` and discount product ``A_1...A_n0``
    restarts with capital ``(u - Y) / (A_1...A_n0)`` in year-``n0`` money and
    claim intensity ``lam xi_n0``.
    """
    if spec.regime != "runoff":
        raise HypothesisViolation("run-off model", "hybrid estimator needs a run-off model")
    t0 = time.perf_counter()
    tail = _hybrid_tail(spec)
    n0 = choose_n0(spec, lam0)
    u_sorted, order = _sorted_grid(u_grid)
    policy = FixedHorizon(max(n0, 1))
    reports = [None] * u_sorted.size
    if n0 == 0:
        for j, pos in enumerate(order):
            raw = tail(u_sorted[j], spec.lam)
            reports[pos] = EstimateReport(
                method="hybrid",
                estimate=min(raw, 1.0),
                u=float(u_sorted[j]),
                lam=spec.lam,
                seed=cfg.seed,
                horizon={"n0": 0, "lam0": lam0},
                extras={"clamped": int(raw > 1), "ruins_by_n0": 0, "version": __version__},
            )
        return reports
    tot = _run(spec, u_sorted, cfg, policy, hybrid_n0=n0, hybrid_tail=tail)
    wall = 1e3 * (time.perf_counter() - t0)
    n = tot.n
    for j, pos in enumerate(order):
        mean = tot.hybrid_sum[j] / n
        var = max(tot.hybrid_sq[j] / n - mean * mean, 0.0)
        reports[pos] = EstimateReport(
            method="hybrid",
            estimate=float(mean),
            std_error=math.sqrt(var / n),
            replications=n,
            seed=cfg.seed,
            u=float(u_sorted[j]),
            lam=spec.lam,
            wall_ms=wall,
            horizon={"n0": n0, "lam0": lam0, "restart_intensity": spec.lam * float(expected_xi_at(spec, n0))},
            extras={
                "ruins_by_n0": int(tot.ruins[j]),
                "clamped": int(tot.clamped[j]),
                "workers": cfg.workers,
                "version": __version__,
            },
        )
    return reports


def expected_xi_at(spec: RunoffModelSpec, n: int) -> float:
    if spec.deterministic_xi:
        return math.exp(-n * spec.xi_model.phi)
    return expected_xi(spec.xi_model.exposure, n)


def hybrid_ruin(spec: RunoffModelSpec, u: float, lam0: float, cfg: McConfig) -> EstimateReport:
    return hybrid_ruin_grid(spec, [u], lam0, cfg)[0]
