"""Brute-force and Monte Carlo verifiers.

Nothing here is meant to be fast: :func:`grid_search` enumerates every policy
on a probability lattice, :func:`structured_grid_search` repeats the exact
solver's configuration enumeration but replaces its closed-form inner step
with a dense scan, and :func:`monte_carlo` simulates candidates one cohort at
a time.  The solvers are validated against these.

Equal Opportunity is almost never exact on a lattice, so constrained searches
accept policies whose cross-group rate span is within ``eo_tolerance``.  That
slack means a grid winner may slightly exceed an exact-EO optimum: scaling
every group onto the winner's smallest tpr m yields an exactly fair policy
and shrinks each group's rates by a factor of at least m/(m + band), so a
near-fair winner beats the exact-EO precision optimum by at most the factor
(1 + band/m).  Comparisons against exact optima must allow exactly that.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import exact as exact_mod
from .errors import InvalidParams, SizeLimit
from .model import Group, Pipeline, Policy, StagePolicy, evaluate
from .objectives import Objective
from .reports import SolverReport

DEFAULT_GRID_BUDGET = 2**27
DIRECT_PATH_MAX = 2**21
CHUNK = 2**20

EO = "eo"
EODDS = "eodds"


@dataclass(frozen=True)
class GridSpec:
    """Policy lattice: probabilities take values i/step_count."""

    step_count: int
    eo_tolerance: float = 1e-3

    def __post_init__(self):
        if self.step_count < 2:
            raise InvalidParams(f"step_count must be >= 2, got {self.step_count}")
        if self.eo_tolerance < 0.0:
            raise InvalidParams("eo_tolerance must be >= 0")


def _group_policy_rates(g: Group, step_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative (tpr, fpr) of every lattice policy for one group.

    Flat index digits, most significant first: stage 1 pi1, stage 1 pi0,
    stage 2 pi1, ... in base (step_count + 1).
    """
    vals = np.arange(step_count + 1) / step_count
    pi1, pi0 = np.meshgrid(vals, vals, indexing="ij")
    tpr = np.ones(1)
    fpr = np.ones(1)
    for t in g.stages:
        m = (t.tau1 * pi1 + (1.0 - t.tau1) * pi0).ravel()
        n = (t.tau0 * pi1 + (1.0 - t.tau0) * pi0).ravel()
        tpr = np.multiply.outer(tpr, m).ravel()
        fpr = np.multiply.outer(fpr, n).ravel()
    return tpr, fpr


def _decode_group_policy(idx: int, k: int, step_count: int) -> tuple[StagePolicy, ...]:
    base = step_count + 1
    digits = []
    for _ in range(2 * k):
        digits.append(idx % base)
        idx //= base
    digits.reverse()
    return tuple(
        StagePolicy(digits[2 * i] / step_count, digits[2 * i + 1] / step_count) for i in range(k)
    )


def _decode_policy(pl: Pipeline, indices: tuple[int, ...], step_count: int) -> Policy:
    return Policy(
        {
            g.id: _decode_group_policy(int(idx), pl.k, step_count)
            for g, idx in zip(pl.groups, indices)
        }
    )


def _direct_search(pl, objective, spec, constraint, tables, budget):
    """Chunked scan of the full cartesian lattice; ties keep the earliest flat index."""
    n = len(pl.groups)
    per = len(tables[0][0])
    total = per**n
    qs = np.array([g.q for g in pl.groups])
    us = np.array([g.u for g in pl.groups])
    q_total = pl.total_q

    best_score, best_flat = objective.worst, None
    feasible_count = 0
    for start in range(0, total, CHUNK):
        flat = np.arange(start, min(start + CHUNK, total), dtype=np.int64)
        rem = flat
        group_idx = [None] * n
        for gi in range(n - 1, -1, -1):
            group_idx[gi] = rem % per
            rem = rem // per
        tprs = np.stack([tables[gi][0][group_idx[gi]] for gi in range(n)])
        fprs = np.stack([tables[gi][1][group_idx[gi]] for gi in range(n)])
        if constraint == EO:
            ok = tprs.max(axis=0) - tprs.min(axis=0) <= spec.eo_tolerance
        elif constraint == EODDS:
            ok = (tprs.max(axis=0) - tprs.min(axis=0) <= spec.eo_tolerance) & (
                fprs.max(axis=0) - fprs.min(axis=0) <= spec.eo_tolerance
            )
        else:
            ok = np.ones(flat.shape, dtype=bool)
        feasible_count += int(ok.sum())
        promoted_q = qs @ tprs
        promoted_u = us @ fprs
        recall = promoted_q / q_total
        denom = promoted_q + promoted_u
        with np.errstate(invalid="ignore"):
            precision = np.where(denom > 0.0, promoted_q / np.maximum(denom, 1e-300), np.nan)
        scores = objective.value_arrays(recall, precision)
        scores = np.where(ok, scores, objective.worst)
        pick = int(scores.argmax() if objective.sense == "max" else scores.argmin())
        if ok[pick] and (best_flat is None or objective.better(scores[pick], best_score)):
            best_score, best_flat = float(scores[pick]), int(flat[pick])
    if best_flat is None:
        raise InvalidParams("no feasible grid policy (tolerance too tight?)")
    indices = []
    rem = best_flat
    for _ in range(n):
        indices.append(rem % per)
        rem //= per
    indices.reverse()
    return best_score, tuple(indices), feasible_count


def _ragged_expand(starts, counts):
    total = int(counts.sum())
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    return np.repeat(starts, counts) + np.arange(total) - offsets


def _factored_search(pl, objective, spec, constraint, tables, budget):
    """Join per-group rate lists on near-equal tpr (and, for EOdds, fpr).

    Valid for the EO/EOdds constraints because policies factor per group and
    the constraint couples groups only through their cumulative rates.  When
    the objective weakly improves with precision, policies sharing a tpr
    collapse to the min-fpr representative first.
    """
    band = spec.eo_tolerance
    entries = []
    for tpr, fpr in tables:
        idx = np.arange(len(tpr), dtype=np.int64)
        if constraint == EO and objective.monotone_precision:
            order = np.lexsort((idx, fpr, tpr))
            t_sorted, f_sorted, i_sorted = tpr[order], fpr[order], idx[order]
            first = np.ones(len(t_sorted), dtype=bool)
            first[1:] = t_sorted[1:] != t_sorted[:-1]
            entries.append((t_sorted[first], f_sorted[first], i_sorted[first]))
        else:
            order = np.lexsort((idx, fpr, tpr))
            t_sorted, f_sorted, i_sorted = tpr[order], fpr[order], idx[order]
            first = np.ones(len(t_sorted), dtype=bool)
            first[1:] = (t_sorted[1:] != t_sorted[:-1]) | (f_sorted[1:] != f_sorted[:-1])
            entries.append((t_sorted[first], f_sorted[first], i_sorted[first]))

    t0, f0, i0 = entries[0]
    combo = {
        "t_lo": t0.copy(), "t_hi": t0.copy(),
        "f_lo": f0.copy(), "f_hi": f0.copy(),
        "tprs": [t0], "fprs": [f0], "idxs": [i0],
    }
    for t_next, f_next, i_next in entries[1:]:
        starts = np.searchsorted(t_next, combo["t_hi"] - band, side="left")
        ends = np.searchsorted(t_next, combo["t_lo"] + band, side="right")
        counts = np.maximum(ends - starts, 0)
        total = int(counts.sum())
        if total > budget:
            raise SizeLimit(f"factored join would produce {total} combos, budget is {budget}")
        take = _ragged_expand(starts, counts)
        rep = np.repeat(np.arange(len(counts)), counts)
        combo = {
            "t_lo": np.minimum(combo["t_lo"][rep], t_next[take]),
            "t_hi": np.maximum(combo["t_hi"][rep], t_next[take]),
            "f_lo": np.minimum(combo["f_lo"][rep], f_next[take]),
            "f_hi": np.maximum(combo["f_hi"][rep], f_next[take]),
            "tprs": [c[rep] for c in combo["tprs"]] + [t_next[take]],
            "fprs": [c[rep] for c in combo["fprs"]] + [f_next[take]],
            "idxs": [c[rep] for c in combo["idxs"]] + [i_next[take]],
        }
        if constraint == EODDS:
            keep = combo["f_hi"] - combo["f_lo"] <= band
            combo = {
                key: ([c[keep] for c in val] if isinstance(val, list) else val[keep])
                for key, val in combo.items()
            }
    m = len(combo["t_lo"])
    if m == 0:
        raise InvalidParams("no feasible grid policy (tolerance too tight?)")
    qs = np.array([g.q for g in pl.groups])
    us = np.array([g.u for g in pl.groups])
    promoted_q = sum(q * t for q, t in zip(qs, combo["tprs"]))
    promoted_u = sum(u * f for u, f in zip(us, combo["fprs"]))
    recall = promoted_q / pl.total_q
    denom = promoted_q + promoted_u
    with np.errstate(invalid="ignore"):
        precision = np.where(denom > 0.0, promoted_q / np.maximum(denom, 1e-300), np.nan)
    scores = objective.value_arrays(recall, precision)
    best = float(scores.max() if objective.sense == "max" else scores.min())
    ties = np.flatnonzero(scores == best)
    # Lexicographically smallest per-group index tuple among ties.
    for col in combo["idxs"]:
        ties = ties[col[ties] == col[ties].min()]
    pick = int(ties[0])
    indices = tuple(int(col[pick]) for col in combo["idxs"])
    return best, indices, m


def grid_search(
    pl: Pipeline,
    objective: Objective,
    spec: GridSpec,
    constraint: str | None = None,
    budget: int = DEFAULT_GRID_BUDGET,
) -> SolverReport:
    """Best lattice policy under the constraint, by exhaustive enumeration.

    ``constraint``: "eo", "eodds", or None.  Near-equality uses
    ``spec.eo_tolerance``.  Raises SizeLimit when the lattice holds more than
    ``budget`` policies (a factored equivalent path handles large EO/EOdds
    searches without materializing the product).
    """
    if constraint not in (None, EO, EODDS):
        raise InvalidParams(f"constraint must be None, {EO!r} or {EODDS!r}")
    started = time.perf_counter()
    n = len(pl.groups)
    per = (spec.step_count + 1) ** (2 * pl.k)
    total = per**n
    if total > budget:
        raise SizeLimit(f"{total} grid policies exceed the budget of {budget}")
    tables = [_group_policy_rates(g, spec.step_count) for g in pl.groups]
    if constraint in (EO, EODDS) and total > DIRECT_PATH_MAX:
        score, indices, searched = _factored_search(pl, objective, spec, constraint, tables, budget)
    else:
        score, indices, searched = _direct_search(pl, objective, spec, constraint, tables, budget)
    policy = _decode_policy(pl, indices, spec.step_count)
    ev = evaluate(pl, policy)
    return SolverReport(
        method="oracle_grid",
        objective=objective.describe(),
        policy=policy,
        evaluation=ev,
        score=objective.of(ev),
        certificate={
            "constraint": constraint,
            "step_count": spec.step_count,
            "eo_tolerance": spec.eo_tolerance,
            "group_indices": list(indices),
        },
        diagnostics={
            "grid_policies": total,
            "combos_scored": searched,
            "wall_time_s": time.perf_counter() - started,
        },
    )


def iter_feasible_policies(
    pl: Pipeline,
    spec: GridSpec,
    constraint: str | None = None,
    budget: int = 2**20,
):
    """Yield every constraint-feasible lattice policy; small instances only."""
    n = len(pl.groups)
    per = (spec.step_count + 1) ** (2 * pl.k)
    if per**n > budget:
        raise SizeLimit(f"{per ** n} grid policies exceed the budget of {budget}")
    tables = [_group_policy_rates(g, spec.step_count) for g in pl.groups]
    for flat in range(per**n):
        indices = []
        rem = flat
        for _ in range(n):
            indices.append(rem % per)
            rem //= per
        indices.reverse()
        tprs = [tables[gi][0][indices[gi]] for gi in range(n)]
        fprs = [tables[gi][1][indices[gi]] for gi in range(n)]
        if constraint in (EO, EODDS) and max(tprs) - min(tprs) > spec.eo_tolerance:
            continue
        if constraint == EODDS and max(fprs) - min(fprs) > spec.eo_tolerance:
            continue
        yield _decode_policy(pl, tuple(indices), spec.step_count)


def structured_grid_search(
    pl: Pipeline,
    objective: Objective,
    t_resolution: int = 2001,
    budget: int = exact_mod.DEFAULT_CONFIG_BUDGET,
) -> SolverReport:
    """Exact solver's enumeration with a dense t-scan instead of its closed form.

    An independent check of ``optimize_inner``: shares the configuration
    space and the policy reconstruction, replaces the optimization.
    """
    pl.require_minimally_effective()
    started = time.perf_counter()
    total = exact_mod.config_count(pl)
    if total > budget:
        raise SizeLimit(f"{total} configurations exceed the budget of {budget}")
    best = None
    feasible = 0
    for idx, cfg in enumerate(exact_mod.enumerate_configs(pl, budget)):
        ip = exact_mod.build_inner(pl, cfg)
        if ip is None:
            continue
        feasible += 1
        lo = ip.t_lo if ip.t_lo > 0.0 else ip.t_hi / t_resolution
        grid = np.linspace(lo, ip.t_hi, t_resolution)
        values = objective.value_arrays(grid, ip.precision(grid))
        j = int(values.argmax() if objective.sense == "max" else values.argmin())
        ties = np.flatnonzero(values == values[j])
        t_star, score = float(grid[ties[-1]]), float(values[ties[-1]])
        entry = (score, t_star, idx, cfg, ip)
        if best is None or exact_mod._better_entry(objective, entry, best):
            best = entry
    assert best is not None
    score, t_star, idx, cfg, ip = best
    policy = exact_mod.reconstruct_policy(pl, cfg, ip, t_star)
    ev = evaluate(pl, policy)
    return SolverReport(
        method="oracle_structured",
        objective=objective.describe(),
        policy=policy,
        evaluation=ev,
        score=objective.of(ev),
        certificate={
            "configuration": cfg.describe(),
            "config_index": idx,
            "t_star": t_star,
            "t_resolution": t_resolution,
        },
        diagnostics={
            "configs_enumerated": total,
            "configs_feasible": feasible,
            "wall_time_s": time.perf_counter() - started,
        },
    )


@dataclass(frozen=True)
class MonteCarloResult:
    """Simulation estimates with binomial standard errors."""

    n: int
    seed: int
    tpr: dict[str, float]
    fpr: dict[str, float]
    recall: float
    recall_se: float
    precision: float | None
    precision_se: float


def monte_carlo(pl: Pipeline, pol: Policy, n_candidates: int, seed: int) -> MonteCarloResult:
    """Simulate n candidates through the pipeline under the policy.

    Candidates draw (group, label) from the masses; each stage flips a pass
    coin by the test statistic and a promotion coin by the policy.  Cohorts
    with equal (group, label) are simulated with binomial draws, which is
    distributionally identical to per-candidate simulation.  Deterministic
    for a fixed seed.
    """
    if n_candidates < 1:
        raise InvalidParams("need at least one candidate")
    pol.validate_shape(pl)
    rng = np.random.default_rng(seed)
    probs = np.array([m for g in pl.groups for m in (g.q, g.u)], dtype=float)
    counts = rng.multinomial(n_candidates, probs / probs.sum())

    promoted = {}
    started_counts = {}
    for ci, (g, label) in enumerate((g, lab) for g in pl.groups for lab in (1, 0)):
        surv = int(counts[ci])
        started_counts[(g.id, label)] = surv
        for t, p in zip(g.stages, pol.for_group(g.id)):
            tau = t.tau1 if label == 1 else t.tau0
            passes = rng.binomial(surv, tau)
            surv = int(rng.binomial(passes, p.pi1) + rng.binomial(surv - passes, p.pi0))
        promoted[(g.id, label)] = surv

    tpr = {
        g.id: (
            promoted[(g.id, 1)] / started_counts[(g.id, 1)]
            if started_counts[(g.id, 1)]
            else math.nan
        )
        for g in pl.groups
    }
    fpr = {
        g.id: (
            promoted[(g.id, 0)] / started_counts[(g.id, 0)]
            if started_counts[(g.id, 0)]
            else math.nan
        )
        for g in pl.groups
    }
    n_q = sum(started_counts[(g.id, 1)] for g in pl.groups)
    promoted_q = sum(promoted[(g.id, 1)] for g in pl.groups)
    promoted_all = promoted_q + sum(promoted[(g.id, 0)] for g in pl.groups)
    recall = promoted_q / n_q if n_q else math.nan
    recall_se = math.sqrt(recall * (1.0 - recall) / n_q) if n_q else math.nan
    if promoted_all:
        precision = promoted_q / promoted_all
        precision_se = math.sqrt(precision * (1.0 - precision) / promoted_all)
    else:
        precision, precision_se = None, math.nan
    return MonteCarloResult(
        n=n_candidates,
        seed=seed,
        tpr=tpr,
        fpr=fpr,
        recall=recall,
        recall_se=recall_se,
        precision=precision,
        precision_se=precision_se,
    )
