"""Reporting delays turning past exposure into yearly claim intensities.

Claims that occurred during the past ``d + 1`` years (indexed ``m = -d..0``)
are reported later with delay distribution ``G``.  The fraction of a year-``m``
cohort reported in year ``n`` is ``b_{n-m}`` with

    b_k = int_0^1 (G(k + 1 - s) - G(k - s)) ds,   k = 0, 1, 2, ...

and the mixing value for year ``n >= 1`` is ``xi_n = sum_m pi_m b_{n-m} q_m``.
"""

from __future__ import annotations

import csv
import functools
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from .distributions import DiscreteWeighted, DistributionSpec, as_generator, distribution_from_dict

__all__ = [
    "RegVaryingFactor",
    "DelayModel",
    "RunoffExposure",
    "delay_weights",
    "xi_from_exposure",
    "xi_sequence",
    "expected_xi",
    "asymptotic_report_rate",
    "report_prefactor",
    "single_report_probability",
]


@dataclass(frozen=True)
class RegVaryingFactor:
    """``f(x) = c * x**gamma``."""

    c: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("RegVaryingFactor needs c > 0")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.c * x**self.gamma
        return float(out) if out.ndim == 0 else out

    def scaled(self, k: float) -> "RegVaryingFactor":
        return RegVaryingFactor(self.c * k, self.gamma)

    def to_dict(self) -> dict:
        return {"c": self.c, "gamma": self.gamma}


@dataclass(frozen=True)
class DelayModel:
    """Reporting delay law with exponential-type tail ``h(x) exp(-phi x)``.

    ``kind="gamma"`` uses a Gamma(shape, rate) law; the tail rate is then the
    Gamma rate.  ``kind="tabulated"`` interpolates a CDF linearly between the
    points ``(x_grid, cdf)`` and needs ``phi`` and ``h_model`` supplied.

    For Gamma delays ``h(x) = (phi x)**(shape - 1) / Gamma(shape)``, the
    power-law leading term of the incomplete gamma tail (see docs/gamma_tail.md).
    """

    kind: str = "gamma"
    shape: float = 1.0
    rate: float = 1.0
    x_grid: tuple[float, ...] = ()
    cdf: tuple[float, ...] = ()
    phi: float | None = None
    h_model: RegVaryingFactor | None = None

    def __post_init__(self):
        if self.kind == "gamma":
            if not (self.shape > 0 and self.rate > 0):
                raise ValueError("gamma delay needs shape > 0 and rate > 0")
        elif self.kind == "tabulated":
            x = np.asarray(self.x_grid, dtype=float)
            g = np.asarray(self.cdf, dtype=float)
            if x.size < 2 or x.size != g.size:
                raise ValueError("tabulated delay needs matching x_grid and cdf of length >= 2")
            if x[0] != 0 or g[0] != 0:
                raise ValueError("tabulated delay must start at G(0) = 0")
            if np.any(np.diff(x) <= 0) or np.any(np.diff(g) < 0):
                raise ValueError("x_grid must increase and cdf must be non-decreasing")
            if abs(g[-1] - 1.0) > 1e-12:
                raise ValueError("tabulated cdf must end at 1")
            if self.phi is None or self.h_model is None:
                raise ValueError("tabulated delay needs phi and h_model for the tail")
            object.__setattr__(self, "x_grid", tuple(float(v) for v in x))
            object.__setattr__(self, "cdf", tuple(float(v) for v in g))
        else:
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.phi is not None and not self.phi > 0:
            raise ValueError("phi must be positive")

    @property
    def tail_rate(self) -> float:
        if self.kind == "gamma":
            return self.rate if self.phi is None else self.phi
        return float(self.phi)

    def leading_h(self) -> RegVaryingFactor:
        if self.h_model is not None:
            return self.h_model
        a, phi = self.shape, self.rate
        return RegVaryingFactor(phi ** (a - 1) / math.gamma(a), a - 1)

    def sf(self, x):
        """``1 - G(x)`` with ``G = 0`` on ``(-inf, 0]``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "gamma":
            out = stats.gamma.sf(x, self.shape, scale=1.0 / self.rate)
            out = np.where(x <= 0, 1.0, out)
        else:
            out = 1.0 - np.interp(x, self.x_grid, self.cdf, left=0.0, right=1.0)
        return float(out) if out.ndim == 0 else out

    def cdf_at(self, x):
        return 1.0 - np.asarray(self.sf(x))

    def h(self, x) -> float:
        return float(self.leading_h()(x))

    def sample(self, gen, size=None):
        gen = as_generator(gen)
        if self.kind == "gamma":
            return gen.gamma(self.shape, 1.0 / self.rate, size=size)
        u = gen.random(size)
        return np.interp(u, self.cdf, self.x_grid)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "gamma":
            d.update(shape=self.shape, rate=self.rate)
        else:
            d.update(x_grid=list(self.x_grid), cdf=list(self.cdf))
        if self.phi is not None:
            d["phi"] = self.phi
        if self.h_model is not None:
            d["h_model"] = self.h_model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DelayModel":
        d = dict(d)
        if "h_model" in d and d["h_model"] is not None:
            d["h_model"] = RegVaryingFactor(**d["h_model"])
        for key in ("x_grid", "cdf"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@functools.lru_cache(maxsize=None)
def _delay_weight(delay: DelayModel, k: int) -> float:
    # written with survival functions so that tail weights keep relative precision
    def integrand(s):
        return delay.sf(k - s) - delay.sf(k + 1 - s)

    points = None
    if delay.kind == "tabulated":
        knots = [k + 1 - x for x in delay.x_grid] + [k - x for x in delay.x_grid]
        points = sorted({p for p in knots if 0 < p < 1}) or None
    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200, points=points)
    return max(val, 0.0)


def delay_weights(delay: DelayModel, k_max: int) -> np.ndarray:
    """Array ``[b_0, b_1, ..., b_{k_max}]`` of yearly reporting fractions."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    return np.array([_delay_weight(delay, k) for k in range(k_max + 1)])


@dataclass(frozen=True)
class RunoffExposure:
    """Past business volumes ``pi_m`` for ``m = -d..0`` (``pi_0 = 1``).

    ``pi`` is stored oldest first, so ``pi[j]`` is the volume of year ``j - d``.
    """

    d: int
    pi: tuple[float, ...]
    dist_q_past: DistributionSpec
    delay: DelayModel

    def __post_init__(self):
        object.__setattr__(self, "pi", tuple(float(p) for p in self.pi))
        if self.d < 0:
            raise ValueError("d must be non-negative")
        if len(self.pi) != self.d + 1:
            raise ValueError(f"need d + 1 = {self.d + 1} volumes, got {len(self.pi)}")
        if any(not p > 0 for p in self.pi):
            raise ValueError("all volumes must be positive")
        if abs(self.pi[-1] - 1.0) > 1e-12:
            raise ValueError("the current-year volume pi_0 must equal 1")
        if abs(self.dist_q_past.expectation() - 1.0) > 1e-9:
            raise ValueError("past mixing variables must have mean 1")
        if self.dist_q_past.support()[0] < 0:
            raise ValueError("past mixing variables must be non-negative")

    @property
    def years(self) -> np.ndarray:
        return np.arange(-self.d, 1)

    def weights(self, n_max: int) -> np.ndarray:
        return delay_weights(self.delay, n_max + self.d)

    def sample_q(self, gen, size=None) -> np.ndarray:
        shape = (self.d + 1,) if size is None else (size, self.d + 1)
        return np.asarray(self.dist_q_past.sample(as_generator(gen), shape), dtype=float)

    @classmethod
    def from_csv(cls, path: str | Path, dist_q_past: DistributionSpec, delay: DelayModel) -> "RunoffExposure":
        """Read rows ``m, pi_m`` (an optional header is skipped)."""
        rows = {}
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    m, p = int(row[0]), float(row[1])
                except ValueError:
                    continue
                rows[m] = p
        if not rows:
            raise ValueError(f"no exposure rows in {path}")
        d = -min(rows)
        if set(rows) != set(range(-d, 1)):
            raise ValueError("exposure rows must cover m = -d..0 without gaps")
        return cls(d, tuple(rows[m] for m in range(-d, 1)), dist_q_past, delay)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "pi": list(self.pi),
            "dist_q_past": self.dist_q_past.to_dict(),
            "delay": self.delay.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunoffExposure":
        return cls(
            int(d["d"]),
            tuple(d["pi"]),
            distribution_from_dict(d["dist_q_past"]),
            DelayModel.from_dict(d["delay"]),
        )


def xi_from_exposure(exp: RunoffExposure, n: int, q_values) -> float | np.ndarray:
    """Mixing value of year ``n`` given the past draws ``q_values`` (oldest first).

    ``q_values`` may carry leading batch dimensions.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    b = exp.weights(n)
    # year m = j - d contributes b_{n - m} = b_{n + d - j}
    lags = n + exp.d - np.arange(exp.d + 1)
    coef = np.asarray(exp.pi) * b[lags]
    out = np.asarray(q_values, dtype=float) @ coef
    return float(out) if np.ndim(out) == 0 else out


def xi_sequence(exp: RunoffExposure, n_max: int, q_values) -> np.ndarray:
    """``xi_1..xi_{n_max}``; shape ``(..., n_max)`` for batched ``q_values``."""
    b = exp.weights(n_max)
    n = np.arange(1, n_max + 1)
    lags = n[None, :] + exp.d - np.arange(exp.d + 1)[:, None]
    coef = np.asarray(exp.pi)[:, None] * b[lags]
    return np.asarray(q_values, dtype=float) @ coef


def expected_xi(exp: RunoffExposure, n: int) -> float:
    return xi_from_exposure(exp, n, np.full(exp.d + 1, exp.dist_q_past.expectation()))


def report_prefactor(exp: RunoffExposure) -> float:
    """``(e^phi - 1)(1 - e^-phi) sum_m pi_m e^{m phi} / phi``."""
    phi = exp.delay.tail_rate
    s = float(np.sum(np.asarray(exp.pi) * np.exp(exp.years * phi)))
    return math.expm1(phi) * -math.expm1(-phi) * s / phi


def asymptotic_report_rate(exp: RunoffExposure, lam: float, n: int) -> float:
    """Large-``n`` approximation of ``P(K_n = 1)``."""
    phi = exp.delay.tail_rate
    return lam * report_prefactor(exp) * exp.delay.h(n) * math.exp(-n * phi)


def single_report_probability(
    exp: RunoffExposure,
    lam: float,
    n: int,
    method: str = "auto",
    n_mc: int = 10**6,
    rng=None,
) -> tuple[float, float]:
    """``P(K_n = 1) = E[lam xi_n exp(-lam xi_n)]`` and its standard error.

    Discrete past mixing laws are enumerated exactly; otherwise the
    expectation over ``q`` is taken by Monte Carlo, with the Poisson step
    integrated out analytically.
    """
    dq = exp.dist_q_past
    if method == "auto":
        method = "enumerate" if isinstance(dq, DiscreteWeighted) and len(dq.values) ** (exp.d + 1) <= 10**6 else "mc"
    b = exp.weights(n)
    coef = np.asarray(exp.pi) * b[n + exp.d - np.arange(exp.d + 1)]
    if method == "enumerate":
        if not isinstance(dq, DiscreteWeighted):
            raise ValueError("enumeration needs a discrete mixing law")
        vals = np.asarray(dq.values, dtype=float)
        probs = np.asarray(dq.probs, dtype=float)
        total = 0.0
        for idx in itertools.product(range(vals.size), repeat=exp.d + 1):
            idx = np.asarray(idx)
            rate = lam * float(vals[idx] @ coef)
            total += float(np.prod(probs[idx])) * rate * math.exp(-rate)
        return total, 0.0
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    gen = as_generator(rng if rng is not None else 0)
    q = exp.sample_q(gen, n_mc)
    rate = lam * (q @ coef)
    vals = rate * np.exp(-rate)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_mc))

