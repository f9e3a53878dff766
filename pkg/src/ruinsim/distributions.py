"""Parametric laws with exact samplers and analytic log-moment / CGF evaluation.

Every family exposes two cumulant-type functions:

* ``log_moment(a) = log E[X**a]`` for positive variables,
* ``cgf(a) = log E[exp(a X)]``,

both returning ``math.inf`` outside their finiteness domain instead of raising.
Root finders probe the domain boundary through these infinities.

Model ingredients that must be positive (claim sizes, structure variables and
the gross factors ``1+i``, ``1+r``, ``1+g``) are described directly by a
positive law, so "inflation is constant 5%" is ``Constant(1.05)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Any, ClassVar

import numpy as np
from scipy import integrate, special, stats

__all__ = [
    "DomainError",
    "Interval",
    "RngStream",
    "as_generator",
    "DistributionSpec",
    "Constant",
    "ShiftedLogNormal",
    "LogNormal",
    "Exponential",
    "Gamma",
    "DiscreteWeighted",
    "Normal",
    "Pareto",
    "sample",
    "log_moment",
    "cgf",
    "moment_index",
    "distribution_from_dict",
]

INF = math.inf


class DomainError(ValueError):
    """Raised when a log-moment is requested for a law not supported in (0, inf)."""


@dataclass(frozen=True)
class Interval:
    """Real interval with open/closed ends; infinite ends are always open."""

    lo: float = -INF
    hi: float = INF
    lo_closed: bool = False
    hi_closed: bool = False

    def __contains__(self, x: float) -> bool:
        above = x > self.lo or (self.lo_closed and x == self.lo)
        below = x < self.hi or (self.hi_closed and x == self.hi)
        return above and below

    def scaled(self, c: float) -> "Interval":
        """Domain of ``a -> f(c a)`` when this is the domain of ``f``."""
        if c == 0:
            return Interval()
        if c > 0:
            return Interval(self.lo / c, self.hi / c, self.lo_closed, self.hi_closed)
        return Interval(self.hi / c, self.lo / c, self.hi_closed, self.lo_closed)

    def intersect(self, other: "Interval") -> "Interval":
        if self.lo > other.lo:
            lo, lo_c = self.lo, self.lo_closed
        elif self.lo < other.lo:
            lo, lo_c = other.lo, other.lo_closed
        else:
            lo, lo_c = self.lo, self.lo_closed and other.lo_closed
        if self.hi < other.hi:
            hi, hi_c = self.hi, self.hi_closed
        elif self.hi > other.hi:
            hi, hi_c = other.hi, other.hi_closed
        else:
            hi, hi_c = self.hi, self.hi_closed and other.hi_closed
        return Interval(lo, hi, lo_c, hi_c)


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by the counter-based Philox bit generator. The stream id enters the
    seed sequence as a spawn key, so streams with distinct ids are independent
    and a given pair always reproduces the same draws regardless of which
    worker consumes it.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def as_generator(rng: RngStream | np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(0 if rng is None else int(rng)).generator


def _logsumexp_weighted(log_terms: np.ndarray, weights: np.ndarray) -> float:
    return float(special.logsumexp(log_terms, b=weights))


@dataclass(frozen=True)
class DistributionSpec:
    """Base class for the closed family list.

    Subclasses supply analytic ``log_moment``/``cgf`` and their derivatives,
    the finiteness domains of both, ``moment_index`` and an exact sampler.
    """

    family: ClassVar[str] = ""
    #: law has a non-trivial absolutely continuous component
    continuous: ClassVar[bool] = True

    # -- moments --------------------------------------------------------
    def expectation(self) -> float:
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        """Closed hull ``(lo, hi)`` of the support."""
        raise NotImplementedError

    def positive(self) -> bool:
        lo, _ = self.support()
        return lo > 0 or (lo == 0 and self.continuous)

    def _require_positive(self) -> None:
        if not self.positive():
            raise DomainError(f"{self!r} has support touching (-inf, 0]")

    # -- log E X^a -----------------------------------------------------
    def log_moment_domain(self) -> Interval:
        self._require_positive()
        return Interval()

    def log_moment(self, a: float) -> float:
        raise NotImplementedError

    def log_moment_deriv(self, a: float) -> float:
        raise NotImplementedError

    # -- log E e^{aX} ----------------------------------------------------
    def cgf_domain(self) -> Interval:
        return Interval()

    def cgf(self, a: float) -> float:
        raise NotImplementedError

    def cgf_deriv(self, a: float) -> float:
        raise NotImplementedError

    def moment_index(self) -> float:
        return INF

    # -- sampling ----------------------------------------------------------
    def sample(self, gen: np.random.Generator, size=None):
        raise NotImplementedError

    def sample_log(self, gen: np.random.Generator, size=None):
        """Draws of ``log X``; overridden where that is cheaper than ``log(sample)``."""
        return np.log(self.sample(gen, size))

    def sample_sum(self, counts: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        """Independent draws of ``X_1 + ... + X_k`` for each ``k`` in ``counts``."""
        counts = np.asarray(counts, dtype=np.int64)
        out = np.zeros(counts.shape, dtype=float)
        total = int(counts.sum())
        if total == 0:
            return out
        draws = np.atleast_1d(self.sample(gen, total))
        nz = np.flatnonzero(counts)
        starts = np.concatenate(([0], np.cumsum(counts[nz])[:-1]))
        out[nz] = np.add.reduceat(draws, starts)
        return out

    def scipy(self):
        """Frozen scipy distribution, for densities and tail functions."""
        raise NotImplementedError(f"{self.family} has no scipy counterpart")

    def sf(self, x):
        return self.scipy().sf(x)

    # -- serialisation -----------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"family": self.family}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d


def _check_positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class Constant(DistributionSpec):
    value: float
    family: ClassVar[str] = "constant"
    continuous: ClassVar[bool] = False

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("constant value must be finite")

    def expectation(self):
        return float(self.value)

    def variance(self):
        return 0.0

    def support(self):
        return (self.value, self.value)

    def positive(self):
        return self.value > 0

    def log_moment(self, a):
        self._require_positive()
        return a * math.log(self.value)

    def log_moment_deriv(self, a):
        self._require_positive()
        return math.log(self.value)

    def cgf(self, a):
        return a * self.value

    def cgf_deriv(self, a):
        return float(self.value)

    def sample(self, gen, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))

    def sample_log(self, gen, size=None):
        self._require_positive()
        if size is None:
            return math.log(self.value)
        return np.full(size, math.log(self.value))

    def sample_sum(self, counts, gen):
        return np.asarray(counts, dtype=float) * self.value


@dataclass(frozen=True)
class ShiftedLogNormal(DistributionSpec):
    """``X = exp(N)`` with ``N ~ Normal(mean_log, var_log)``.

    Used for gross factors such as ``1 + r``; the rate itself is ``X - 1``.
    """

    mean_log: float
    var_log: float
    family: ClassVar[str] = "lognormal"

    def __post_init__(self):
        _check_positive("var_log", self.var_log)

    @property
    def sd_log(self) -> float:
        return math.sqrt(self.var_log)

    def expectation(self):
        return math.exp(self.mean_log + self.var_log / 2)

    def variance(self):
        return math.expm1(self.var_log) * math.exp(2 * self.mean_log + self.var_log)

    def support(self):
        return (0.0, INF)

    def log_moment(self, a):
        return self.mean_log * a + self.var_log * a * a / 2

    def log_moment_deriv(self, a):
        return self.mean_log + self.var_log * a

    def cgf_domain(self):
        return Interval(-INF, 0.0, False, True)

    def _mgf_quad(self, a: float, weight_x: bool = False) -> float:
        # a <= 0 so the integrand is bounded by the normal density; |z| > 14 is negligible
        m, s = self.mean_log, self.sd_log

        def f(z):
            x = math.exp(m + s * z)
            return math.exp(a * x - z * z / 2) * (x if weight_x else 1.0)

        val, _ = integrate.quad(f, -14.0, 14.0, epsabs=0, epsrel=1e-12, limit=400)
        return val / math.sqrt(2 * math.pi)

    def cgf(self, a):
        if a > 0:
            return INF
        if a == 0:
            return 0.0
        return math.log(self._mgf_quad(a))

    def cgf_deriv(self, a):
        if a > 0:
            return INF
        if a == 0:
            return self.expectation()
        return self._mgf_quad(a, weight_x=True) / self._mgf_quad(a)

    def sample(self, gen, size=None):
        return np.exp(gen.normal(self.mean_log, self.sd_log, size))

    def sample_log(self, gen, size=None):
        return gen.normal(self.mean_log, self.sd_log, size)

    def scipy(self):
        return stats.lognorm(s=self.sd_log, scale=math.exp(self.mean_log))


LogNormal = ShiftedLogNormal


@dataclass(frozen=True)
class Exponential(DistributionSpec):
    mean: float
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        _check_positive("mean", self.mean)

    def expectation(self):
        return float(self.mean)

    def variance(self):
        return self.mean**2

    def support(self):
        return (0.0, INF)

    def log_moment_domain(self):
        return Interval(-1.0, INF)

    def log_moment(self, a):
        if a <= -1:
            return INF
        return a * math.log(self.mean) + special.gammaln(1 + a)

    def log_moment_deriv(self, a):
        if a <= -1:
            return INF
        return math.log(self.mean) + special.digamma(1 + a)

    def cgf_domain(self):
        return Interval(-INF, 1 / self.mean)

    def cgf(self, a):
        if a * self.mean >= 1:
            return INF
        return -math.log1p(-a * self.mean)

    def cgf_deriv(self, a):
        if a * self.mean >= 1:
            return INF
        return self.mean / (1 - a * self.mean)

    def sample(self, gen, size=None):
        return gen.exponential(self.mean, size)

    def sample_sum(self, counts, gen):
        counts = np.asarray(counts)
        out = np.zeros(counts.shape, dtype=float)
        nz = np.flatnonzero(counts)
        if nz.size:
            out[nz] = gen.gamma(counts[nz].astype(float), self.mean)
        return out

    def scipy(self):
        return stats.expon(scale=self.mean)


@dataclass(frozen=True)
class Gamma(DistributionSpec):
    shape: float
    rate: float
    family: ClassVar[str] = "gamma"

    def __post_init__(self):
        _check_positive("shape", self.shape)
        _check_positive("rate", self.rate)

    def expectation(self):
        return self.shape / self.rate

    def variance(self):
        return self.shape / self.rate**2

    def support(self):
        return (0.0, INF)

    def log_moment_domain(self):
        return Interval(-self.shape, INF)

    def log_moment(self, a):
        if a <= -self.shape:
            return INF
        return special.gammaln(self.shape + a) - special.gammaln(self.shape) - a * math.log(self.rate)

    def log_moment_deriv(self, a):
        if a <= -self.shape:
            return INF
        return special.digamma(self.shape + a) - math.log(self.rate)

    def cgf_domain(self):
        return Interval(-INF, self.rate)

    def cgf(self, a):
        if a >= self.rate:
            return INF
        return -self.shape * math.log1p(-a / self.rate)

    def cgf_deriv(self, a):
        if a >= self.rate:
            return INF
        return self.shape / (self.rate - a)

    def sample(self, gen, size=None):
        return gen.gamma(self.shape, 1 / self.rate, size)

    def sample_sum(self, counts, gen):
        counts = np.asarray(counts)
        out = np.zeros(counts.shape, dtype=float)
        nz = np.flatnonzero(counts)
        if nz.size:
            out[nz] = gen.gamma(self.shape * counts[nz], 1 / self.rate)
        return out

    def scipy(self):
        return stats.gamma(self.shape, scale=1 / self.rate)


@dataclass(frozen=True)
class DiscreteWeighted(DistributionSpec):
    values: tuple[float, ...]
    probs: tuple[float, ...]
    family: ClassVar[str] = "discrete"
    continuous: ClassVar[bool] = False

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be non-empty and of equal length")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be non-negative")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(self.probs)!r}, not 1")

    @property
    def _atoms(self) -> tuple[np.ndarray, np.ndarray]:
        v = np.asarray(self.values)
        p = np.asarray(self.probs)
        keep = p > 0
        return v[keep], p[keep]

    def expectation(self):
        v, p = self._atoms
        return float(np.dot(v, p))

    def variance(self):
        v, p = self._atoms
        m = np.dot(v, p)
        return float(np.dot((v - m) ** 2, p))

    def support(self):
        v, _ = self._atoms
        return (float(v.min()), float(v.max()))

    def positive(self):
        return self.support()[0] > 0

    def log_moment(self, a):
        self._require_positive()
        v, p = self._atoms
        return _logsumexp_weighted(a * np.log(v), p)

    def log_moment_deriv(self, a):
        self._require_positive()
        v, p = self._atoms
        lv = np.log(v)
        w = p * np.exp(a * lv - a * lv.max())
        return float(np.dot(w, lv) / w.sum())

    def cgf(self, a):
        v, p = self._atoms
        return _logsumexp_weighted(a * v, p)

    def cgf_deriv(self, a):
        v, p = self._atoms
        w = p * np.exp(a * v - (a * v).max())
        return float(np.dot(w, v) / w.sum())

    def sample(self, gen, size=None):
        v, p = self._atoms
        idx = gen.choice(len(v), size=size, p=p)
        return v[idx] if size is not None else float(v[idx])


@dataclass(frozen=True)
class Normal(DistributionSpec):
    """Gaussian law; used for increments such as ``log A`` that may be negative."""

    mean: float
    var: float = 1.0
    family: ClassVar[str] = "normal"

    def __post_init__(self):
        _check_positive("var", self.var)

    def expectation(self):
        return float(self.mean)

    def variance(self):
        return float(self.var)

    def support(self):
        return (-INF, INF)

    def log_moment(self, a):
        self._require_positive()

    def log_moment_deriv(self, a):
        self._require_positive()

    def cgf(self, a):
        return self.mean * a + self.var * a * a / 2

    def cgf_deriv(self, a):
        return self.mean + self.var * a

    def moment_index(self):
        self._require_positive()

    def sample(self, gen, size=None):
        return gen.normal(self.mean, math.sqrt(self.var), size)

    def scipy(self):
        return stats.norm(self.mean, math.sqrt(self.var))


@dataclass(frozen=True)
class Pareto(DistributionSpec):
    """Pareto law ``P(X > x) = (scale / x)**shape`` on ``[scale, inf)``.

    The one heavy-tailed family; its moment index is finite, which makes the
    domain-boundary branches of the rate solver reachable.
    """

    scale: float
    shape: float
    family: ClassVar[str] = "pareto"

    def __post_init__(self):
        _check_positive("scale", self.scale)
        _check_positive("shape", self.shape)

    def expectation(self):
        return INF if self.shape <= 1 else self.shape * self.scale / (self.shape - 1)

    def variance(self):
        a = self.shape
        if a <= 2:
            return INF
        return self.scale**2 * a / ((a - 1) ** 2 * (a - 2))

    def support(self):
        return (self.scale, INF)

    def log_moment_domain(self):
        return Interval(-INF, self.shape)

    def log_moment(self, a):
        if a >= self.shape:
            return INF
        return a * math.log(self.scale) + math.log(self.shape / (self.shape - a))

    def log_moment_deriv(self, a):
        if a >= self.shape:
            return INF
        return math.log(self.scale) + 1 / (self.shape - a)

    def cgf_domain(self):
        return Interval(-INF, 0.0, False, True)

    def _mgf_quad(self, a, weight_x=False):
        dist = self.scipy()
        return dist.expect(lambda x: np.exp(a * x) * (x if weight_x else 1.0), epsrel=1e-12)

    def cgf(self, a):
        if a > 0:
            return INF
        if a == 0:
            return 0.0
        return math.log(self._mgf_quad(a))

    def cgf_deriv(self, a):
        if a > 0:
            return INF
        if a == 0:
            return self.expectation()
        return self._mgf_quad(a, True) / self._mgf_quad(a)

    def moment_index(self):
        return float(self.shape)

    def sample(self, gen, size=None):
        return self.scale * (1 - gen.random(size)) ** (-1 / self.shape)

    def scipy(self):
        return stats.pareto(self.shape, scale=self.scale)


_FAMILIES: dict[str, type[DistributionSpec]] = {
    cls.family: cls
    for cls in (Constant, ShiftedLogNormal, Exponential, Gamma, DiscreteWeighted, Normal, Pareto)
}


def distribution_from_dict(d: dict[str, Any]) -> DistributionSpec:
    """Inverse of ``DistributionSpec.to_dict``.

    >>> distribution_from_dict({"family": "exponential", "mean": 1.0})
    Exponential(mean=1.0)
    """
    d = dict(d)
    try:
        cls = _FAMILIES[d.pop("family")]
    except KeyError as exc:
        raise ValueError(f"unknown or missing distribution family in {d!r}") from exc
    return cls(**d)


# -- module-level operations ---------------------------------------------


def sample(d: DistributionSpec, rng, size=None):
    """One draw (or ``size`` draws) from ``d``; advances ``rng``."""
    return d.sample(as_generator(rng), size)


def log_moment(d: DistributionSpec, a: float) -> float:
    """``log E[X**a]``; ``inf`` where the moment diverges."""
    d._require_positive()
    return d.log_moment(a)


def cgf(d: DistributionSpec, a: float) -> float:
    """``log E[exp(a X)]``; ``inf`` beyond the convergence abscissa."""
    return d.cgf(a)


def moment_index(d: DistributionSpec) -> float:
    """``sup{a >= 0 : E X**a < inf}`` for a law on ``[0, inf)``."""
    if d.support()[0] < 0:
        raise DomainError(f"{d!r} is not supported in [0, inf)")
    return d.moment_index()
