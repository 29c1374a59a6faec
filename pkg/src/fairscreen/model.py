"""Domain types for screening pipelines and exact analytic policy evaluation.

A pipeline is a sequence of k tests applied to every member of every
demographic group; a promotion policy assigns each group, at each stage, a
probability of advancing candidates who passed the stage's test (pi1) and
candidates who failed it (pi0).  Group masses are population probabilities:
``q`` is the mass of qualified members, ``u`` the mass of unqualified members,
and the masses of all groups sum to one.

Everything here is a pure function of immutable values; the simulation
counterpart of :func:`evaluate` lives in :mod:`fairscreen.oracle`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import InvalidParams, NotMinimallyEffective, ShapeMismatch

MASS_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TestStats:
    """Pass probabilities of one stage's test.

    ``tau1`` is the probability a qualified candidate passes, ``tau0`` the
    probability an unqualified candidate passes.  ``tau0 <= tau1`` is required
    so a test is never anti-informative; strict inequality (the "minimally
    effective" property) is required only by the optimizing solvers, not for
    evaluation or fairness checking.
    """

    tau1: float
    tau0: float

    def __post_init__(self):
        if not (0.0 <= self.tau0 <= self.tau1 <= 1.0):
            raise InvalidParams(
                f"test statistics need 0 <= tau0 <= tau1 <= 1, got tau1={self.tau1}, tau0={self.tau0}"
            )

    @property
    def minimally_effective(self) -> bool:
        return self.tau1 > self.tau0


@dataclass(frozen=True)
class Group:
    """One demographic group: masses and its per-stage test statistics."""

    id: str
    q: float
    u: float
    stages: tuple[TestStats, ...]

    def __post_init__(self):
        if not self.id:
            raise InvalidParams("group id must be a non-empty string")
        if not self.q > 0.0:
            raise InvalidParams(f"group {self.id!r}: qualified mass q must be > 0, got {self.q}")
        if self.u < 0.0:
            raise InvalidParams(f"group {self.id!r}: unqualified mass u must be >= 0, got {self.u}")
        if len(self.stages) < 1:
            raise InvalidParams(f"group {self.id!r}: needs at least one stage")
        object.__setattr__(self, "stages", tuple(self.stages))

    @property
    def k(self) -> int:
        return len(self.stages)


@dataclass(frozen=True)
class Pipeline:
    """A k-stage screening process over disjoint groups with masses summing to 1."""

    groups: tuple[Group, ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if len(self.groups) < 1:
            raise InvalidParams("pipeline needs at least one group")
        ids = [g.id for g in self.groups]
        if len(set(ids)) != len(ids):
            raise InvalidParams(f"duplicate group ids: {ids}")
        ks = {g.k for g in self.groups}
        if len(ks) != 1:
            raise InvalidParams(f"all groups must share the same stage count, got {sorted(ks)}")
        total = sum(g.q + g.u for g in self.groups)
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise InvalidParams(f"group masses must sum to 1 (within {MASS_TOLERANCE}), got {total!r}")

    @classmethod
    def normalized(cls, groups: Iterable[Group]) -> "Pipeline":
        """Build a pipeline after rescaling raw masses to sum to one."""
        groups = tuple(groups)
        total = sum(g.q + g.u for g in groups)
        if total <= 0.0:
            raise InvalidParams("total mass must be positive")
        return cls(tuple(Group(g.id, g.q / total, g.u / total, g.stages) for g in groups))

    @property
    def k(self) -> int:
        return self.groups[0].k

    @property
    def group_ids(self) -> tuple[str, ...]:
        return tuple(g.id for g in self.groups)

    @property
    def total_q(self) -> float:
        return sum(g.q for g in self.groups)

    @property
    def total_u(self) -> float:
        return sum(g.u for g in self.groups)

    @property
    def minimally_effective(self) -> bool:
        return all(t.minimally_effective for g in self.groups for t in g.stages)

    def group(self, gid: str) -> Group:
        for g in self.groups:
            if g.id == gid:
                return g
        raise KeyError(gid)

    def require_minimally_effective(self) -> None:
        if not self.minimally_effective:
            raise NotMinimallyEffective(
                "solver requires tau1 > tau0 at every stage of every group"
            )


@dataclass(frozen=True)
class StagePolicy:
    """Promotion probabilities at one stage: pi1 on pass, pi0 on fail."""

    pi1: float
    pi0: float

    def __post_init__(self):
        if not (0.0 <= self.pi1 <= 1.0 and 0.0 <= self.pi0 <= 1.0):
            raise InvalidParams(f"promotion probabilities must lie in [0,1], got ({self.pi1}, {self.pi0})")


BYPASS = StagePolicy(1.0, 1.0)
FULL_USE = StagePolicy(1.0, 0.0)


@dataclass(frozen=True)
class Policy:
    """A promotion policy: an ordered list of StagePolicy per group id."""

    stages: Mapping[str, tuple[StagePolicy, ...]]

    def __post_init__(self):
        object.__setattr__(
            self, "stages", {gid: tuple(sps) for gid, sps in self.stages.items()}
        )

    @classmethod
    def bypass(cls, pl: Pipeline) -> "Policy":
        return cls({g.id: (BYPASS,) * pl.k for g in pl.groups})

    @classmethod
    def full_use(cls, pl: Pipeline) -> "Policy":
        return cls({g.id: (FULL_USE,) * pl.k for g in pl.groups})

    @classmethod
    def shared(cls, pl: Pipeline, stages: Sequence[StagePolicy]) -> "Policy":
        """Group-blind policy: the same stage list for every group."""
        return cls({g.id: tuple(stages) for g in pl.groups})

    def for_group(self, gid: str) -> tuple[StagePolicy, ...]:
        return self.stages[gid]

    def validate_shape(self, pl: Pipeline) -> None:
        if set(self.stages) != set(pl.group_ids):
            raise ShapeMismatch(
                f"policy groups {sorted(self.stages)} != pipeline groups {sorted(pl.group_ids)}"
            )
        for gid, sps in self.stages.items():
            if len(sps) != pl.k:
                raise ShapeMismatch(f"group {gid!r}: policy has {len(sps)} stages, pipeline has {pl.k}")


@dataclass(frozen=True)
class Evaluation:
    """Exact cumulative rates and aggregate scores of a policy on a pipeline.

    ``precision`` is None when no mass at all is promoted to the final round
    (the "empty final round"); objectives treat that as precision zero.
    """

    tpr: Mapping[str, float]
    fpr: Mapping[str, float]
    recall: float
    precision: float | None


def stage_rates(t: TestStats, p: StagePolicy) -> tuple[float, float]:
    """Promotion probabilities (M, N) of a qualified / unqualified candidate at one stage."""
    m = t.tau1 * p.pi1 + (1.0 - t.tau1) * p.pi0
    n = t.tau0 * p.pi1 + (1.0 - t.tau0) * p.pi0
    return m, n


def cumulative_rates(pl: Pipeline, pol: Policy) -> dict[str, list[tuple[float, float]]]:
    """Per group, the cumulative (tpr, fpr) after each stage i = 1..k."""
    pol.validate_shape(pl)
    out: dict[str, list[tuple[float, float]]] = {}
    for g in pl.groups:
        m_acc, n_acc = 1.0, 1.0
        rates = []
        for t, p in zip(g.stages, pol.for_group(g.id)):
            m, n = stage_rates(t, p)
            m_acc *= m
            n_acc *= n
            rates.append((m_acc, n_acc))
        out[g.id] = rates
    return out


def aggregate_rates(
    pl: Pipeline, tpr: Mapping[str, float], fpr: Mapping[str, float]
) -> tuple[float, float | None]:
    """Recall and precision induced by per-group cumulative rates."""
    promoted_q = sum(g.q * tpr[g.id] for g in pl.groups)
    promoted_u = sum(g.u * fpr[g.id] for g in pl.groups)
    recall = promoted_q / pl.total_q
    denom = promoted_q + promoted_u
    precision = promoted_q / denom if denom > 0.0 else None
    return recall, precision


def evaluate(pl: Pipeline, pol: Policy) -> Evaluation:
    """Exact per-group cumulative rates plus recall and precision of a policy."""
    rates = cumulative_rates(pl, pol)
    tpr = {gid: rs[-1][0] for gid, rs in rates.items()}
    fpr = {gid: rs[-1][1] for gid, rs in rates.items()}
    recall, precision = aggregate_rates(pl, tpr, fpr)
    return Evaluation(tpr=tpr, fpr=fpr, recall=recall, precision=precision)
