"""Composite cumulant functions, Lundberg-type rate equations and conjugates.

A ``CgfExpr`` is a sum of atomic terms (log-moments, CGFs, constants).  It is
convex in its argument wherever finite, which is what makes plain bracketing
safe for ``solve_rate`` and a derivative bisection safe for ``legendre``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np
from scipy import optimize

from .distributions import INF, DistributionSpec, Interval

__all__ = [
    "NoPositiveRate",
    "UnboundedRate",
    "LogMomentTerm",
    "CgfTerm",
    "ConstantTerm",
    "CgfExpr",
    "LundbergSolution",
    "eval_expr",
    "solve_rate",
    "legendre",
    "finiteness_bound",
]


class NoPositiveRate(ValueError):
    """The expression is positive immediately to the right of zero."""


class UnboundedRate(ValueError):
    """The expression stays non-positive on its whole (unbounded) domain."""


@dataclass(frozen=True)
class LogMomentTerm:
    """``a -> log E[X**(power * a)]``."""

    dist: DistributionSpec
    power: float = 1.0

    def value(self, a: float) -> float:
        return self.dist.log_moment(self.power * a)

    def deriv(self, a: float) -> float:
        return self.power * self.dist.log_moment_deriv(self.power * a)

    def domain(self) -> Interval:
        return self.dist.log_moment_domain().scaled(self.power)


@dataclass(frozen=True)
class CgfTerm:
    """``a -> log E[exp(scale * a * X)]``."""

    dist: DistributionSpec
    scale: float = 1.0

    def value(self, a: float) -> float:
        return self.dist.cgf(self.scale * a)

    def deriv(self, a: float) -> float:
        return self.scale * self.dist.cgf_deriv(self.scale * a)

    def domain(self) -> Interval:
        return self.dist.cgf_domain().scaled(self.scale)


@dataclass(frozen=True)
class ConstantTerm:
    c: float

    def value(self, a: float) -> float:
        return float(self.c)

    def deriv(self, a: float) -> float:
        return 0.0

    def domain(self) -> Interval:
        return Interval()


Term = Union[LogMomentTerm, CgfTerm, ConstantTerm]


def _central_difference(f, a: float, h: float = 1e-6) -> float:
    # Richardson extrapolation of two central differences
    d1 = (f(a + h) - f(a - h)) / (2 * h)
    d2 = (f(a + h / 2) - f(a - h / 2)) / h
    return (4 * d2 - d1) / 3


@dataclass(frozen=True)
class CgfExpr:
    terms: tuple[Term, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def __add__(self, other: "CgfExpr | Term") -> "CgfExpr":
        if isinstance(other, CgfExpr):
            return CgfExpr(self.terms + other.terms)
        return CgfExpr(self.terms + (other,))

    def __call__(self, a: float) -> float:
        return self.eval(a)

    def eval(self, a: float) -> float:
        total = 0.0
        for t in self.terms:
            if a not in t.domain():
                return INF
            v = t.value(a)
            if v == INF:
                return INF
            total += v
        return total

    def deriv(self, a: float) -> float:
        total = 0.0
        for t in self.terms:
            try:
                total += t.deriv(a)
            except NotImplementedError:
                total += _central_difference(t.value, a)
        return total

    def domain(self) -> Interval:
        dom = Interval()
        for t in self.terms:
            dom = dom.intersect(t.domain())
        return dom

    def constant(self) -> float:
        return sum(t.c for t in self.terms if isinstance(t, ConstantTerm))

    def shifted(self, c: float) -> "CgfExpr":
        """This expression plus the constant ``c``."""
        return self + ConstantTerm(c)


def eval_expr(expr: CgfExpr, a: float) -> float:
    return expr.eval(a)


@dataclass(frozen=True)
class LundbergSolution:
    rate: float
    derivative: float
    mu: float
    domain_bound: float
    interior: bool
    bracket: tuple[float, float]
    tol: float

    @property
    def at_boundary(self) -> bool:
        return not self.interior


def _bisect(pred_positive, lo: float, hi: float, xtol: float, max_iter: int = 200) -> tuple[float, float]:
    """Shrink ``[lo, hi]`` keeping ``pred_positive(lo)`` false and ``pred_positive(hi)`` true."""
    for _ in range(max_iter):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred_positive(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


def solve_rate(expr: CgfExpr, alpha_max_hint: float = 1e3, tol: float = 1e-10) -> LundbergSolution:
    """``sup{a >= 0 : expr(a) <= 0}`` by geometric bracketing, then Brent or bisection.

    Raises
    ------
    NoPositiveRate
        if ``expr(0) == 0`` and the expression turns positive right of zero.
    UnboundedRate
        if the expression is still non-positive at ``alpha_max_hint`` and its
        finiteness domain extends beyond it.
    """
    f0 = expr.eval(0.0)
    if not f0 <= tol:
        raise ValueError(f"expression must be non-positive at 0, got {f0}")
    dom = expr.domain()
    if 0.0 not in dom:
        raise ValueError("expression is not finite at 0")

    def positive(a: float) -> bool:
        return expr.eval(a) > 0

    lo, b = 0.0, 1e-6
    if b not in dom:
        b = 0.5 * dom.hi
    if positive(b) and abs(f0) <= tol:
        raise NoPositiveRate("expression is positive immediately right of 0 (drift condition fails)")

    boundary_solution = False
    while not positive(b):
        lo = b
        nxt = 2.0 * b
        if nxt >= dom.hi:
            if dom.hi_closed:
                if positive(dom.hi):
                    b = dom.hi
                else:
                    boundary_solution = True
                    lo = b = dom.hi
                break
            # open end: the moment diverges there, so expr -> +inf
            b = dom.hi
            break
        if nxt > alpha_max_hint:
            raise UnboundedRate(f"expression is non-positive on [0, {alpha_max_hint}]")
        b = nxt

    if boundary_solution:
        rate = dom.hi
        bracket = (rate, rate)
    else:
        f_lo, f_b = expr.eval(lo), expr.eval(b)
        if f_lo < 0 and math.isfinite(f_b):
            # a strict sign change on a finite bracket: Brent converges in ~10 evaluations
            rate = optimize.brentq(expr.eval, lo, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        else:
            lo, b = _bisect(positive, lo, b, xtol=0.0)
            rate = 0.5 * (lo + b)
        bracket = (lo, b)
        if rate not in dom:
            rate = lo
    d = expr.deriv(rate)
    return LundbergSolution(
        rate=rate,
        derivative=d,
        mu=1.0 / d if d != 0 else INF,
        domain_bound=dom.hi,
        interior=not boundary_solution,
        bracket=bracket,
        tol=tol,
    )


def legendre(expr: CgfExpr, x: float, cap: float = 1e8) -> float:
    """Convex conjugate ``sup_a (a x - expr(a))``; may be ``inf``.

    The objective is concave, so its derivative ``x - expr'(a)`` changes sign
    at most once.  The sign change is bracketed by doubling steps from zero
    and then located by bisection.
    """
    dom = expr.domain()

    def h(a):
        v = expr.eval(a)
        return -INF if v == INF else a * x - v

    def slope(a):
        return x - expr.deriv(a)

    def climb(direction: int) -> float:
        # walk from 0 in `direction` while the objective still increases
        end = dom.hi if direction > 0 else dom.lo
        closed = dom.hi_closed if direction > 0 else dom.lo_closed
        prev, step = 0.0, 1.0
        while True:
            a = direction * step
            if (direction > 0 and a >= end) or (direction < 0 and a <= end):
                if closed and direction * slope(end) >= 0:
                    return h(end)
                edge = end if closed else end - direction * 1e-12 * max(1.0, abs(end))
                if direction * slope(edge) >= 0 and not closed:
                    return h(edge)
                lo, hi = (prev, edge) if direction > 0 else (edge, prev)
                break
            if direction * slope(a) <= 0:
                lo, hi = (prev, a) if direction > 0 else (a, prev)
                break
            if step > cap:
                return INF if h(a) - h(a / 2) > 1e-9 else h(a)
            prev, step = a, step * 2.0
        # slope(lo) > 0 >= slope(hi)
        lo, hi = _bisect(lambda t: slope(t) <= 0, lo, hi, xtol=1e-13 * max(1.0, abs(hi)))
        return max(h(lo), h(hi))

    s0 = slope(0.0)
    if s0 > 0:
        return climb(+1)
    if s0 < 0:
        return climb(-1)
    return h(0.0)


def finiteness_bound(expr: CgfExpr | None = None, extra: Iterable[DistributionSpec] = ()) -> float:
    """Supremum of ``a`` where ``expr`` and every ``E[X**a]`` in ``extra`` are finite."""
    bound = INF if expr is None else expr.domain().hi
    for d in extra:
        bound = min(bound, d.log_moment_domain().hi)
    return bound
