"""Estimate records shared by the asymptotic and Monte Carlo estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

CSV_COLUMNS = ("u", "lambda", "method", "estimate", "std_error", "ci_lo", "ci_hi", "reps", "seed", "wall_ms")


@dataclass
class EstimateReport:
    """One estimate with its uncertainty and provenance.

    ``probability=False`` marks quantities that are not probabilities (the
    Goldie constant, or an asymptotic formula evaluated where it exceeds 1).
    """

    method: str
    estimate: float
    std_error: float = 0.0
    ci95: Optional[tuple[float, float]] = None
    replications: int = 0
    seed: Optional[int] = None
    u: Optional[float] = None
    lam: Optional[float] = None
    wall_ms: float = 0.0
    probability: bool = True
    hypothesis_checks: dict[str, Any] = field(default_factory=dict)
    horizon: dict[str, Any] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.ci95 is None:
            half = 1.959963984540054 * self.std_error
            lo, hi = self.estimate - half, self.estimate + half
            if self.probability:
                lo, hi = max(lo, 0.0), min(hi, 1.0)
            self.ci95 = (lo, hi)
        if self.probability and not (0.0 <= self.estimate <= 1.0):
            raise ValueError(f"probability estimate {self.estimate} outside [0, 1]")
        if not (self.ci95[0] <= self.estimate <= self.ci95[1]):
            raise ValueError("confidence interval must contain the estimate")

    @property
    def relative_error(self) -> float:
        return self.std_error / self.estimate if self.estimate else math.inf

    def csv_row(self) -> dict[str, Any]:
        return {
            "u": self.u,
            "lambda": self.lam,
            "method": self.method,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "ci_lo": self.ci95[0],
            "ci_hi": self.ci95[1],
            "reps": self.replications,
            "seed": self.seed,
            "wall_ms": round(self.wall_ms, 3),
        }

    def to_csv_row(self) -> list[Any]:
        row = self.csv_row()
        return [row[c] for c in CSV_COLUMNS]

    def to_text(self) -> str:
        lines = [
            f"method: {self.method}",
            f"u: {self.u}",
            f"lambda: {self.lam}",
            f"estimate: {self.estimate:.6g}",
            f"std_error: {self.std_error:.3g}",
            f"ci95: [{self.ci95[0]:.6g}, {self.ci95[1]:.6g}]",
            f"replications: {self.replications}",
            f"seed: {self.seed}",
        ]
        for name, block in (("hypothesis", self.hypothesis_checks), ("horizon", self.horizon), ("extra", self.extras)):
            for k, v in block.items():
                lines.append(f"{name}.{k}: {v}")
        return "\n".join(lines)
