"""Shared random-instance generators; tests seed their own rngs."""

from __future__ import annotations

import numpy as np

from fairscreen.model import Group, Pipeline, Policy, StagePolicy, TestStats


def random_pipeline(
    rng: np.random.Generator,
    n_groups: int | None = None,
    k: int | None = None,
    max_groups: int = 3,
    max_stages: int = 3,
    tau0_zero_prob: float = 0.25,
) -> Pipeline:
    """Strictly effective random pipeline with masses summing to one."""
    n = n_groups if n_groups is not None else int(rng.integers(1, max_groups + 1))
    k = k if k is not None else int(rng.integers(1, max_stages + 1))
    weights = rng.uniform(0.2, 1.0, size=n)
    weights = weights / weights.sum()
    base_rates = rng.uniform(0.15, 0.9, size=n)
    groups = []
    for i in range(n):
        stages = []
        for _ in range(k):
            tau1 = float(rng.uniform(0.3, 1.0))
            if rng.random() < tau0_zero_prob:
                tau0 = 0.0
            else:
                tau0 = tau1 * float(rng.uniform(0.05, 0.9))
            stages.append(TestStats(tau1, tau0))
        q = float(weights[i] * base_rates[i])
        u = float(weights[i] - q)
        groups.append(Group(chr(ord("A") + i), q, u, tuple(stages)))
    return Pipeline.normalized(groups)


def random_policy(rng: np.random.Generator, pl: Pipeline) -> Policy:
    """Arbitrary (not necessarily fair) random policy."""
    return Policy(
        {
            g.id: tuple(
                StagePolicy(float(rng.uniform()), float(rng.uniform())) for _ in range(pl.k)
            )
            for g in pl.groups
        }
    )


def _realize_stage_rate(rng: np.random.Generator, tau1: float, m: float) -> StagePolicy:
    """Random (pi1, pi0) with tau1*pi1 + (1-tau1)*pi0 == m."""
    if tau1 >= 1.0:
        return StagePolicy(m, float(rng.uniform()))
    lo = max(0.0, (m - tau1) / (1.0 - tau1))
    hi = min(1.0, m / (1.0 - tau1))
    pi0 = float(lo + rng.uniform() * (hi - lo))
    pi1 = (m - (1.0 - tau1) * pi0) / tau1
    return StagePolicy(min(1.0, max(0.0, pi1)), pi0)


def random_eo_policy(rng: np.random.Generator, pl: Pipeline) -> Policy:
    """Random policy with exactly equal cumulative tpr across groups.

    Per group, per-stage tpr factors are drawn and the first stage is rescaled
    onto the smallest group product, then every factor is realized by a random
    (pi1, pi0) pair; the result usually violates the dominant structure, which
    is what the Pareto-domination tests need.
    """
    factors = {
        g.id: [float(rng.uniform(0.3, 1.0)) for _ in range(pl.k)] for g in pl.groups
    }
    target = min(float(np.prod(f)) for f in factors.values())
    stages = {}
    for g in pl.groups:
        f = factors[g.id]
        f[0] *= target / float(np.prod(f))
        stages[g.id] = tuple(
            _realize_stage_rate(rng, t.tau1, m) for t, m in zip(g.stages, f)
        )
    return Policy(stages)


def random_per_stage_eo_policy(rng: np.random.Generator, pl: Pipeline) -> Policy:
    """Random policy equalizing cumulative tpr after every stage."""
    stages = {g.id: [] for g in pl.groups}
    for i in range(pl.k):
        m = float(rng.uniform(0.2, 1.0))
        for g in pl.groups:
            stages[g.id].append(_realize_stage_rate(rng, g.stages[i].tau1, m))
    return Policy({gid: tuple(sps) for gid, sps in stages.items()})
