"""Closed-form precision maximization under Equal Opportunity.

The opportunity-ratio policy scales each group's promote-on-pass probability
so every group's qualified members reach the interview at the same rate, and
it never promotes failed candidates.  It attains the maximum precision over
all Equal Opportunity policies,

    max precision = ||q||_1 / (||q||_1 + sum_X u_X * prod_i tau0_X^i / tau1_X^i),

whether the correction is applied once at the first stage or at every stage.
The better of this policy and all-bypass 2-approximates any linear
combination of precision and recall.
"""

from __future__ import annotations

import enum
import math

from .model import FULL_USE, Pipeline, Policy, StagePolicy, evaluate
from .objectives import LinearObjective, Objective
from .reports import SolverReport


class RatioPolicyKind(enum.Enum):
    # All correction at stage 1, remaining stages fully trusted.
    FIRST_STAGE = "first_stage"
    # Correction applied independently at every stage; also equalizes
    # cumulative TPR after each stage, at the same precision (recall may drop).
    PER_STAGE = "per_stage"


def _argmin_group(pl: Pipeline, key) -> str:
    """Group id minimizing ``key``; ties broken lexicographically by id."""
    best = min(key(g) for g in pl.groups)
    return min(g.id for g in pl.groups if key(g) == best)


def opportunity_ratio(pl: Pipeline, kind: RatioPolicyKind = RatioPolicyKind.FIRST_STAGE) -> Policy:
    """The precision-maximizing Equal Opportunity policy."""
    pl.require_minimally_effective()
    if kind is RatioPolicyKind.FIRST_STAGE:
        star = pl.group(_argmin_group(pl, lambda g: math.prod(t.tau1 for t in g.stages)))
        stages = {}
        for g in pl.groups:
            rho = math.prod(s.tau1 / t.tau1 for s, t in zip(star.stages, g.stages))
            stages[g.id] = (StagePolicy(min(1.0, rho), 0.0),) + (FULL_USE,) * (pl.k - 1)
        return Policy(stages)
    if kind is RatioPolicyKind.PER_STAGE:
        stars = [
            pl.group(_argmin_group(pl, lambda g, i=i: g.stages[i].tau1)) for i in range(pl.k)
        ]
        return Policy(
            {
                g.id: tuple(
                    StagePolicy(min(1.0, stars[i].stages[i].tau1 / g.stages[i].tau1), 0.0)
                    for i in range(pl.k)
                )
                for g in pl.groups
            }
        )
    raise ValueError(f"unknown kind {kind!r}")


def max_precision(pl: Pipeline) -> float:
    """Best achievable precision under Equal Opportunity (closed form)."""
    pl.require_minimally_effective()
    q = pl.total_q
    spill = sum(g.u * math.prod(t.tau0 / t.tau1 for t in g.stages) for g in pl.groups)
    return q / (q + spill)


def two_approx(pl: Pipeline, objective: Objective) -> SolverReport:
    """Better of all-bypass and the opportunity-ratio policy.

    2-approximates any linear combination of precision and recall: bypass
    maximizes recall, the ratio policy maximizes precision.
    """
    if not isinstance(objective, LinearObjective):
        raise ValueError("two_approx applies to linear precision/recall objectives only")
    candidates = [
        ("bypass", Policy.bypass(pl)),
        ("opportunity_ratio", opportunity_ratio(pl, RatioPolicyKind.FIRST_STAGE)),
    ]
    scored = [(name, pol, evaluate(pl, pol)) for name, pol in candidates]
    scores = {name: objective.of(ev) for name, _, ev in scored}
    name, pol, ev = max(scored, key=lambda item: objective.of(item[2]))
    return SolverReport(
        method="two_approx",
        objective=objective.describe(),
        policy=pol,
        evaluation=ev,
        score=objective.of(ev),
        certificate={"chosen": name, "candidate_scores": scores},
    )
