"""Solver result container shared by every optimization engine."""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import Evaluation, Policy


@dataclass(frozen=True)
class SolverReport:
    """What a solver chose and why.

    ``score`` is the objective value the solver used when selecting the
    policy; ``evaluation`` is the exact analytic evaluation of the returned
    policy.  ``certificate`` carries enough structure to re-derive the choice
    (configuration, DP indices, branch taken); ``diagnostics`` carries effort
    counters (configurations enumerated, DP cell updates, wall time).
    """

    method: str
    objective: dict
    policy: Policy
    evaluation: Evaluation
    score: float
    certificate: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
