"""Equalized Odds analysis: precision ceiling, worst-case gap, and structure.

No optimizer lives here.  Equalized Odds admits a closed-form upper bound on
precision, a constructive family of pipelines where requiring it (instead of
Equal Opportunity alone) costs almost a factor 1/||q||_1 in precision, and a
structural fact about single-stage optima; the oracle's grid sweeps turn
these into checkable claims.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidParams, ShapeMismatch
from .model import Group, Pipeline, Policy, TestStats
from .ratio import max_precision


@dataclass(frozen=True)
class EoddsBound:
    """Precision ceiling for policies satisfying Equalized Odds at the end."""

    value: float
    rho: float  # max over groups of prod_i tau0^i / tau1^i

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise InvalidParams(f"bound outside [0,1]: {self.value}")


def eodds_precision_bound(pl: Pipeline) -> EoddsBound:
    """||q||_1 / (||q||_1 + rho * sum_X u_X) with rho the worst fpr/tpr ratio product.

    Under Equalized Odds all groups share cumulative rates (M, N), and every
    group forces N >= (prod tau0/tau1) * M, so the largest ratio binds.
    """
    pl.require_minimally_effective()
    rho = max(math.prod(t.tau0 / t.tau1 for t in g.stages) for g in pl.groups)
    q = pl.total_q
    return EoddsBound(value=q / (q + rho * pl.total_u), rho=rho)


def gap_instance(gamma: float, mu: float, delta: float, k: int, n_groups: int) -> Pipeline:
    """Pipeline where Equal Opportunity beats Equalized Odds by nearly 1/gamma.

    One distinguished group (the first) carries almost no unqualified mass but
    has per-stage ratio (1-delta); every other group has ratio zero and holds
    the remaining unqualified mass.  An Equal Opportunity policy only pays for
    the distinguished group's false positives; Equalized Odds charges the
    worst ratio against all unqualified mass.  As mu and delta shrink, the
    precision ratio of the two optima approaches 1/gamma.
    """
    if k < 1 or n_groups < 2:
        raise InvalidParams("need k >= 1 and at least two groups")
    if not (0.0 < gamma < 1.0 and 0.0 < mu < 1.0 and 0.0 < delta < 1.0):
        raise InvalidParams("gamma, mu, delta must lie in (0,1)")
    if gamma + mu >= 1.0:
        raise InvalidParams("gamma + mu must be < 1 so other groups keep positive mass")
    q_each = gamma / n_groups
    u_other = (1.0 - gamma - mu) / (n_groups - 1)
    star_stats = (TestStats(1.0, 1.0 - delta),) * k
    other_stats = (TestStats(1.0, 0.0),) * k
    ids = [chr(ord("A") + i) for i in range(n_groups)]
    groups = [Group(ids[0], q_each, mu, star_stats)]
    groups += [Group(gid, q_each, u_other, other_stats) for gid in ids[1:]]
    return Pipeline(tuple(groups))


def gap_instance_ratio(gamma: float, mu: float, delta: float, k: int, n_groups: int = 2) -> float:
    """max_precision / eodds_precision_bound on the constructed instance."""
    pl = gap_instance(gamma, mu, delta, k, n_groups)
    return max_precision(pl) / eodds_precision_bound(pl).value


def _is_trivial(values: list[float], tolerance: float) -> bool:
    return all(v <= tolerance for v in values) or all(v >= 1.0 - tolerance for v in values)


def verify_eodds_structure(pl: Pipeline, pol: Policy, tolerance: float = 1e-9) -> bool:
    """True iff the policy is trivial (all-0 or all-1) or some entry is zero.

    Non-trivial single-stage optima under Equalized Odds always zero out at
    least one promotion probability: subtracting a common epsilon from all
    four entries preserves the constraint and strictly improves precision.
    """
    if pl.k != 1:
        raise ShapeMismatch(f"structure check applies to single-stage pipelines, got k={pl.k}")
    pol.validate_shape(pl)
    entries = [v for gid in pl.group_ids for v in (pol.for_group(gid)[0].pi1, pol.for_group(gid)[0].pi0)]
    return _is_trivial(entries, tolerance) or min(entries) <= tolerance
