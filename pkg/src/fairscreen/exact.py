"""Exact solver for precision/recall objectives over Equal Opportunity policies.

Optimal Equal Opportunity policies can be assumed to have a rigid shape: per
group, every stage either fully uses its test (promote exactly the passers),
bypasses it (promote everyone), or — at most one stage per group — uses it
partially, either promoting a fraction of the passers and no failers
("pass fraction") or all passers plus a fraction of the failers
("fail fraction").  Any policy outside this family is weakly Pareto dominated
in (recall, precision) by one inside it.

The solver enumerates every such configuration, reduces each to a
one-dimensional problem in the common true-positive rate t shared by all
groups (Equal Opportunity pins every group to the same t), and optimizes the
objective over the feasible t interval in closed form.
"""

from __future__ import annotations

import enum
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DegenerateInterval, SizeLimit
from .model import BYPASS as BYPASS_POLICY
from .model import FULL_USE as FULL_USE_POLICY
from .model import Pipeline, Policy, StagePolicy, evaluate
from .objectives import (
    LinearObjective,
    Objective,
    PrecisionObjective,
    RecallObjective,
    ReciprocalObjective,
)
from .reports import SolverReport

DEFAULT_CONFIG_BUDGET = 2**26
DEFAULT_T_RESOLUTION = 4097


class PartialType(enum.Enum):
    PASS_FRACTION = "pass_fraction"  # pi1 in (0,1], pi0 = 0
    FAIL_FRACTION = "fail_fraction"  # pi1 = 1, pi0 in [0,1]


class Usage(enum.Enum):
    FULL_USE = "full_use"  # (1, 0)
    BYPASS = "bypass"  # (1, 1)


@dataclass(frozen=True)
class GroupConfig:
    """One group's structural choice: which level is partial, how, and how the rest are used."""

    partial_level: int  # 0-based stage index
    partial_type: PartialType
    usage: tuple  # length k; Usage at non-partial levels, None at the partial one


@dataclass(frozen=True)
class Configuration:
    assignments: tuple[tuple[str, GroupConfig], ...]

    def for_group(self, gid: str) -> GroupConfig:
        for g, cfg in self.assignments:
            if g == gid:
                return cfg
        raise KeyError(gid)

    def describe(self) -> dict:
        out = {}
        for gid, cfg in self.assignments:
            out[gid] = {
                "partial_stage": cfg.partial_level + 1,
                "partial_type": cfg.partial_type.value,
                "usage": [u.value if u is not None else "partial" for u in cfg.usage],
            }
        return out


def config_count(pl: Pipeline) -> int:
    """k^{|X|} * 2^{(k-1)|X|} * 2^{|X|} configurations."""
    per_group = pl.k * 2 ** (pl.k - 1) * 2
    return per_group ** len(pl.groups)


def _group_configs(k: int) -> list[GroupConfig]:
    configs = []
    for level in range(k):
        for ptype in (PartialType.PASS_FRACTION, PartialType.FAIL_FRACTION):
            for rest in itertools.product((Usage.FULL_USE, Usage.BYPASS), repeat=k - 1):
                usage = list(rest)
                usage.insert(level, None)
                configs.append(GroupConfig(level, ptype, tuple(usage)))
    return configs


def enumerate_configs(pl: Pipeline, budget: int = DEFAULT_CONFIG_BUDGET) -> Iterator[Configuration]:
    """All configurations in a fixed deterministic order."""
    total = config_count(pl)
    if total > budget:
        raise SizeLimit(f"{total} configurations exceed the budget of {budget}")
    per_group = _group_configs(pl.k)
    gids = pl.group_ids
    for combo in itertools.product(per_group, repeat=len(gids)):
        yield Configuration(tuple(zip(gids, combo)))


@dataclass(frozen=True)
class GroupInner:
    """One group's reduction: fpr(t) = a*t + b for common tpr t in [lo, hi]."""

    fixed_m: float  # product of tau1 over fully used levels (bypass contributes 1)
    fixed_n: float  # product of tau0 over fully used levels
    a: float
    b: float
    lo: float  # 0.0 marks the open lower end of a pass-fraction range
    hi: float


@dataclass(frozen=True)
class InnerProblem:
    """The 1-D problem in the common tpr t left after fixing a configuration.

    recall(t) = t and precision(t) = Q*t / (C*t + D) on [t_lo, t_hi], where
    C = Q + sum_X u_X a_X and D = sum_X u_X b_X.  ``t_lo == 0.0`` encodes an
    interval open at zero (every group is a pass fraction); the optimum is
    never there because precision is then constant in t.
    """

    groups: tuple[tuple[str, GroupInner], ...]
    t_lo: float
    t_hi: float
    q_total: float
    coef_c: float
    coef_d: float

    def precision(self, t):
        return self.q_total * t / (self.coef_c * t + self.coef_d)

    def fpr(self, gid: str, t: float) -> float:
        for g, inner in self.groups:
            if g == gid:
                return inner.a * t + inner.b
        raise KeyError(gid)


def build_inner(pl: Pipeline, cfg: Configuration) -> InnerProblem | None:
    """Reduce a configuration to its inner problem, or None when infeasible."""
    inners = []
    t_lo, t_hi = 0.0, math.inf
    for g in pl.groups:
        gc = cfg.for_group(g.id)
        fixed_m = fixed_n = 1.0
        for i, usage in enumerate(gc.usage):
            if usage is Usage.FULL_USE:
                fixed_m *= g.stages[i].tau1
                fixed_n *= g.stages[i].tau0
        t = g.stages[gc.partial_level]
        if gc.partial_type is PartialType.PASS_FRACTION:
            lo, hi = 0.0, fixed_m * t.tau1
            a = (fixed_n * t.tau0) / hi if hi > 0.0 else 0.0
            b = 0.0
        elif t.tau1 >= 1.0:
            # Fail fraction degenerates when the partial test never fails a
            # qualified candidate: tpr is pinned at fixed_m and the dominant
            # choice is pi0 = 0, matching full use of that level.
            lo = hi = fixed_m
            a = (fixed_n * t.tau0) / fixed_m if fixed_m > 0.0 else 0.0
            b = 0.0
        else:
            lo, hi = fixed_m * t.tau1, fixed_m
            a = fixed_n * (1.0 - t.tau0) / (fixed_m * (1.0 - t.tau1)) if fixed_m > 0.0 else 0.0
            b = fixed_n * (t.tau0 - t.tau1 * (1.0 - t.tau0) / (1.0 - t.tau1))
        inners.append((g.id, GroupInner(fixed_m, fixed_n, a, b, lo, hi)))
        t_lo, t_hi = max(t_lo, lo), min(t_hi, hi)
    if t_lo > t_hi or t_hi <= 0.0:
        return None
    q = pl.total_q
    coef_c = q + sum(pl.group(gid).u * inner.a for gid, inner in inners)
    coef_d = sum(pl.group(gid).u * inner.b for gid, inner in inners)
    return InnerProblem(tuple(inners), t_lo, t_hi, q, coef_c, coef_d)


def _linear_candidates(ip: InnerProblem, alpha: float) -> list[float]:
    """Endpoints plus interior stationary points of (1-a)t + a*Qt/(Ct+D)."""
    cands = [ip.t_hi]
    if ip.t_lo > 0.0:
        cands.append(ip.t_lo)
    # f'(t) = (1-a) + a*Q*D/(Ct+D)^2 vanishes only when D < 0 and a < 1.
    if ip.coef_d < 0.0 and alpha < 1.0:
        s = math.sqrt(-alpha * ip.q_total * ip.coef_d / (1.0 - alpha))
        for root in ((s - ip.coef_d) / ip.coef_c, (-s - ip.coef_d) / ip.coef_c):
            if ip.t_lo < root < ip.t_hi and ip.coef_c * root + ip.coef_d > 0.0:
                cands.append(root)
    return cands


def optimize_inner(
    ip: InnerProblem, objective: Objective, t_resolution: int = DEFAULT_T_RESOLUTION
) -> tuple[float, float]:
    """Best common tpr t* and score on [t_lo, t_hi]; ties prefer larger t."""
    if ip.t_lo > ip.t_hi:
        raise DegenerateInterval(f"empty interval [{ip.t_lo}, {ip.t_hi}]")

    if isinstance(objective, (LinearObjective, PrecisionObjective, RecallObjective)):
        if isinstance(objective, PrecisionObjective):
            alpha = 1.0
        elif isinstance(objective, RecallObjective):
            alpha = 0.0
        else:
            alpha = objective.alpha
        candidates = _linear_candidates(ip, alpha)
    elif isinstance(objective, ReciprocalObjective):
        # g(t) = alpha*C/Q + B/t with B = (1-alpha) + alpha*D/Q is monotone.
        coef_b = (1.0 - objective.alpha) + objective.alpha * ip.coef_d / ip.q_total
        if coef_b < 0.0:
            candidates = [ip.t_lo] if ip.t_lo > 0.0 else [ip.t_hi]
        else:
            candidates = [ip.t_hi]
    else:
        lo = ip.t_lo if ip.t_lo > 0.0 else ip.t_hi / t_resolution
        grid = np.linspace(lo, ip.t_hi, t_resolution)
        values = objective.value_arrays(grid, ip.precision(grid))
        best = values.argmax() if objective.sense == "max" else values.argmin()
        # Prefer larger t among exact ties.
        ties = np.flatnonzero(values == values[best])
        return float(grid[ties[-1]]), float(values[ties[-1]])

    best_t, best_score = None, objective.worst
    for t in candidates:
        score = objective.value(t, ip.precision(t))
        if best_t is None or objective.better(score, best_score) or (
            score == best_score and t > best_t
        ):
            best_t, best_score = t, score
    return best_t, best_score


def reconstruct_policy(pl: Pipeline, cfg: Configuration, ip: InnerProblem, t_star: float) -> Policy:
    """Back-solve each group's partial parameter so the common tpr is exactly t_star."""
    stages: dict[str, tuple[StagePolicy, ...]] = {}
    for gid, inner in ip.groups:
        gc = cfg.for_group(gid)
        t = pl.group(gid).stages[gc.partial_level]
        if gc.partial_type is PartialType.PASS_FRACTION:
            pi1 = min(1.0, max(0.0, t_star / (inner.fixed_m * t.tau1)))
            partial = StagePolicy(pi1, 0.0)
        elif t.tau1 >= 1.0:
            partial = StagePolicy(1.0, 0.0)
        else:
            m = t_star / inner.fixed_m
            pi0 = min(1.0, max(0.0, (m - t.tau1) / (1.0 - t.tau1)))
            partial = StagePolicy(1.0, pi0)
        level_policies = []
        for i, usage in enumerate(gc.usage):
            if i == gc.partial_level:
                level_policies.append(partial)
            elif usage is Usage.FULL_USE:
                level_policies.append(FULL_USE_POLICY)
            else:
                level_policies.append(BYPASS_POLICY)
        stages[gid] = tuple(level_policies)
    return Policy(stages)


def iter_config_results(
    pl: Pipeline,
    objective: Objective,
    budget: int = DEFAULT_CONFIG_BUDGET,
    t_resolution: int = DEFAULT_T_RESOLUTION,
) -> Iterator[tuple[int, Configuration, InnerProblem, float, float]]:
    """(index, config, inner, t*, score) for every feasible configuration."""
    for idx, cfg in enumerate(enumerate_configs(pl, budget)):
        ip = build_inner(pl, cfg)
        if ip is None:
            continue
        t_star, score = optimize_inner(ip, objective, t_resolution)
        yield idx, cfg, ip, t_star, score


def _better_entry(objective: Objective, a: tuple, b: tuple) -> bool:
    """a, b = (score, t_star, index, ...); higher recall then earlier index on ties."""
    if objective.better(a[0], b[0]):
        return True
    if a[0] != b[0]:
        return False
    if a[1] != b[1]:
        return a[1] > b[1]
    return a[2] < b[2]


def solve_exact(
    pl: Pipeline,
    objective: Objective,
    budget: int = DEFAULT_CONFIG_BUDGET,
    t_resolution: int = DEFAULT_T_RESOLUTION,
    threads: int = 1,
) -> SolverReport:
    """Enumerate the dominant family and return the objective-optimal member.

    Every returned policy satisfies Equal Opportunity exactly and retains the
    dominant structure: (1 - pi1)*pi0 = 0 everywhere, pi1 > 0 everywhere, and
    at most one partially used level per group.
    """
    pl.require_minimally_effective()
    started = time.perf_counter()
    total = config_count(pl)
    if total > budget:
        raise SizeLimit(f"{total} configurations exceed the budget of {budget}")

    def eval_one(item):
        idx, cfg = item
        ip = build_inner(pl, cfg)
        if ip is None:
            return None
        t_star, score = optimize_inner(ip, objective, t_resolution)
        return (score, t_star, idx, cfg, ip)

    def eval_chunk(chunk):
        local_best, local_feasible = None, 0
        for entry in map(eval_one, chunk):
            if entry is None:
                continue
            local_feasible += 1
            if local_best is None or _better_entry(objective, entry, local_best):
                local_best = entry
        return local_best, local_feasible

    def chunks(it, size):
        while True:
            chunk = list(itertools.islice(it, size))
            if not chunk:
                return
            yield chunk

    best = None
    feasible = 0
    items = enumerate(enumerate_configs(pl, budget))
    if threads > 1:
        # Bounded submission window; reducing chunk results in submission
        # order keeps the outcome independent of scheduling.
        from collections import deque

        pending: deque = deque()
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for chunk in chunks(items, 2048):
                pending.append(pool.submit(eval_chunk, chunk))
                if len(pending) > 2 * threads:
                    local_best, local_feasible = pending.popleft().result()
                    feasible += local_feasible
                    if local_best is not None and (
                        best is None or _better_entry(objective, local_best, best)
                    ):
                        best = local_best
            while pending:
                local_best, local_feasible = pending.popleft().result()
                feasible += local_feasible
                if local_best is not None and (
                    best is None or _better_entry(objective, local_best, best)
                ):
                    best = local_best
    else:
        best, feasible = eval_chunk(items)

    # Unreachable in practice: the all-bypass configuration (all levels
    # bypassed, fail-fraction partial reaching pi0 = 1) is always feasible.
    assert best is not None, "no feasible configuration"
    score, t_star, idx, cfg, ip = best
    policy = reconstruct_policy(pl, cfg, ip, t_star)
    ev = evaluate(pl, policy)
    return SolverReport(
        method="exact",
        objective=objective.describe(),
        policy=policy,
        evaluation=ev,
        score=objective.of(ev),
        certificate={
            "configuration": cfg.describe(),
            "config_index": idx,
            "t_star": t_star,
            "inner_score": score,
        },
        diagnostics={
            "configs_enumerated": total,
            "configs_feasible": feasible,
            "wall_time_s": time.perf_counter() - started,
            "threads": threads,
        },
    )
