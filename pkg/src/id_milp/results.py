"""Solver-independent result record."""

from __future__ import annotations

from dataclasses import dataclass, field

from .diagram import DecisionStrategy, InfluenceDiagram

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
CAP_EXCEEDED = "cap_exceeded"
TIMEOUT = "timeout"
STATUSES = (OPTIMAL, FEASIBLE, INFEASIBLE, CAP_EXCEEDED, TIMEOUT)


@dataclass
class SolveResult:
    """Outcome of one solve.

    ``objective`` is in the units of the original (unshifted) utilities: the
    expected utility for EU solves, the CVaR for CVaR solves.
    """

    status: str
    objective: float | None = None
    strategy: DecisionStrategy | None = None
    distribution: list[tuple[float, float]] = field(default_factory=list)
    tau_p: float = 0.0
    tau_s: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def tau_t(self) -> float:
        return self.tau_p + self.tau_s

    @property
    def solved(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE) and self.strategy is not None

    def to_json(self, d: InfluenceDiagram | None = None) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "strategy": self.strategy.to_json(d) if self.strategy is not None else None,
            "distribution": [[u, q] for u, q in self.distribution],
            "tau_p": self.tau_p,
            "tau_s": self.tau_s,
            "tau_t": self.tau_t,
            "info": self.info,
        }
