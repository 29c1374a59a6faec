"""FPTAS for group-blind policies: one shared (pi1, pi0) per stage.

The dynamic program tracks every group's (tpr level, fpr level) jointly,
because a single stage policy must satisfy all groups' rate bounds at once;
stage feasibility becomes a small linear program in two variables solved by
enumerating vertices of the constraint polygon.  Selection keeps only states
whose tpr levels agree across groups, which certifies Equal Opportunity at
grid resolution.

Exact Equal Opportunity repair is impossible here: rescaling stage 1 per
group would differentiate groups and break blindness.  The returned policy is
therefore the raw shared witness; its residual cross-group tpr gap is
reported, and the report's ``score`` is the certified grid-level value, not
the witness's own (possibly unfair) evaluation.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import SizeLimit
from .fptas import Grid, f_rate_bounds, g_rate_bounds
from .model import Pipeline, Policy, StagePolicy, TestStats, aggregate_rates, evaluate
from .objectives import LinearObjective, Objective, ReciprocalObjective
from .reports import SolverReport

DEFAULT_STATE_BUDGET = 10**8
DIRECT_UPDATE_MAX_CELLS = 4096
_TOL = 1e-12


def _constraint_lines(tests, a_vals, b_vals):
    """Half-plane boundaries p*x + q*y = r; r may be an array for vectorized grids."""
    lines = []
    for t, a, b in zip(tests, a_vals, b_vals):
        lines.append((t.tau1, 1.0 - t.tau1, a))  # tpr-rate >= a binds here
        lines.append((t.tau0, 1.0 - t.tau0, b))  # fpr-rate <= b binds here
    lines += [(1.0, 0.0, 0.0), (1.0, 0.0, 1.0), (0.0, 1.0, 0.0), (0.0, 1.0, 1.0)]
    return lines


def _satisfies(tests, a_vals, b_vals, x, y):
    ok = (x >= -_TOL) & (x <= 1.0 + _TOL) & (y >= -_TOL) & (y <= 1.0 + _TOL)
    for t, a, b in zip(tests, a_vals, b_vals):
        ok = ok & (t.tau1 * x + (1.0 - t.tau1) * y >= a - _TOL)
        ok = ok & (t.tau0 * x + (1.0 - t.tau0) * y <= b + _TOL)
    return ok


def joint_stage_feasible(
    tests: tuple[TestStats, ...], a_vals, b_vals
) -> tuple[float, float] | None:
    """One (x, y) meeting every group's stage bounds, or None.

    The feasible region is a convex polygon (2|X| half-planes cut out of the
    unit box), so it is nonempty iff some pairwise intersection of boundary
    lines or box corner is feasible.  Among feasible vertices the one
    maximizing x + y (then x) is returned: promoting more weakly raises every
    group's achieved tpr while the fpr bounds stay certified by the grid.
    """
    lines = _constraint_lines(tests, a_vals, b_vals)
    candidates = []
    for (p1, q1, r1), (p2, q2, r2) in itertools.combinations(lines, 2):
        det = p1 * q2 - p2 * q1
        if abs(det) < 1e-15:
            continue
        candidates.append(((r1 * q2 - r2 * q1) / det, (p1 * r2 - p2 * r1) / det))
    best = None
    for x, y in candidates:
        if _satisfies(tests, a_vals, b_vals, x, y):
            x, y = min(1.0, max(0.0, x)), min(1.0, max(0.0, y))
            if best is None or (x + y, x) > (best[0] + best[1], best[0]):
                best = (x, y)
    return best


def _joint_kernel(tests, grid: Grid, shape: tuple[int, ...]) -> np.ndarray:
    """Vectorized joint feasibility over the full level grid.

    Axes alternate (tpr level, fpr level) per group.  Boundary lines have
    scalar normals; only their right-hand sides vary across the grid, so
    every pairwise vertex is an affine function of the level values and the
    whole kernel evaluates with broadcasting.
    """
    n = len(tests)
    tv, fv = grid.tpr_values(), grid.fpr_values()
    rhs = []
    for g in range(n):
        ax_t, ax_f = 2 * g, 2 * g + 1
        shp_t = [1] * (2 * n)
        shp_t[ax_t] = shape[ax_t]
        shp_f = [1] * (2 * n)
        shp_f[ax_f] = shape[ax_f]
        rhs.append((tv.reshape(shp_t), fv.reshape(shp_f)))
    a_vals = [r[0] for r in rhs]
    b_vals = [r[1] for r in rhs]
    lines = _constraint_lines(tests, a_vals, b_vals)
    feasible = np.zeros(shape, dtype=bool)
    for (p1, q1, r1), (p2, q2, r2) in itertools.combinations(lines, 2):
        det = p1 * q2 - p2 * q1
        if abs(det) < 1e-15:
            continue
        x = (r1 * q2 - np.asarray(r2) * q1) / det
        y = (p1 * np.asarray(r2) - p2 * r1) / det
        feasible |= _satisfies(tests, a_vals, b_vals, x, y)
        if feasible.all():
            break
    return feasible


def _pairs(n: int) -> int:
    return (n + 1) * (n + 2) // 2


@dataclass
class JointTable:
    """Joint reachability over per-group (tpr, fpr) level tuples, one shared policy."""

    grid: Grid
    pipeline: Pipeline
    reach: list[np.ndarray]
    stage_kernels: list[np.ndarray] = field(repr=False)
    cell_updates: int = 0

    def _stage_tests(self, i):
        return tuple(g.stages[i] for g in self.pipeline.groups)

    def witness(self, i: int, state: tuple[int, ...]) -> tuple[float, float]:
        grid = self.grid
        n = len(self.pipeline.groups)
        a_vals = [grid.value(state[2 * g]) for g in range(n)]
        b_vals = [grid.value(state[2 * g + 1]) for g in range(n)]
        xy = joint_stage_feasible(self._stage_tests(i), a_vals, b_vals)
        assert xy is not None, "kernel marked an infeasible increment reachable"
        return xy

    def reconstruct(self, state: tuple[int, ...]) -> tuple[StagePolicy, ...]:
        """Shared stage policies certifying the final-state cell.

        Increments are scanned in row-major order over the level axes, fixed
        for deterministic witnesses.
        """
        stages: list[StagePolicy] = []
        state = tuple(state)
        for i in range(len(self.reach) - 1, 0, -1):
            kernel = self.stage_kernels[i]
            found = None
            for d in np.ndindex(tuple(s + 1 for s in state)):
                if kernel[d] and self.reach[i - 1][tuple(np.subtract(state, d))]:
                    found = d
                    break
            assert found is not None, "true cell without a witness"
            x, y = self.witness(i, found)
            stages.append(StagePolicy(x, y))
            state = tuple(np.subtract(state, found))
        x, y = self.witness(0, state)
        stages.append(StagePolicy(x, y))
        return tuple(reversed(stages))


def build_joint_table(
    pl: Pipeline, grid: Grid, budget: int = DEFAULT_STATE_BUDGET, method: str = "auto"
) -> JointTable:
    n = len(pl.groups)
    shape = ((grid.l_tpr + 1, grid.l_fpr + 1)) * n
    cells = math.prod(shape)
    if pl.k * cells > budget:
        raise SizeLimit(f"joint DP needs {pl.k * cells} cells, budget is {budget}")
    if method == "auto":
        method = "direct" if cells <= DIRECT_UPDATE_MAX_CELLS else "fft"
    kernels = [
        _joint_kernel(tuple(g.stages[i] for g in pl.groups), grid, shape) for i in range(pl.k)
    ]
    reach = [kernels[0]]
    updates = cells
    pair_count = (_pairs(grid.l_tpr) * _pairs(grid.l_fpr)) ** n
    for i in range(1, pl.k):
        kernel = kernels[i]
        if method == "direct":
            out = np.zeros(shape, dtype=bool)
            prev = reach[i - 1]
            for d in np.argwhere(kernel):
                dst = tuple(slice(int(dj), None) for dj in d)
                src = tuple(slice(None, s - int(dj)) for s, dj in zip(shape, d))
                out[dst] |= prev[src]
            reach.append(out)
        else:
            conv = fftconvolve(reach[i - 1].astype(float), kernel.astype(float))
            reach.append(conv[tuple(slice(None, s) for s in shape)] > 0.5)
        updates += pair_count
    return JointTable(grid=grid, pipeline=pl, reach=reach, stage_kernels=kernels, cell_updates=updates)


def _boundary_report(pl: Pipeline, objective: Objective) -> SolverReport:
    policy = Policy.bypass(pl)
    ev = evaluate(pl, policy)
    return SolverReport(
        method="groupblind",
        objective=objective.describe(),
        policy=policy,
        evaluation=ev,
        score=objective.of(ev),
        certificate={"branch": "bypass", "eo_residual_gap": 0.0},
        diagnostics={"dp_cell_updates": 0},
    )


def solve_groupblind(
    pl: Pipeline,
    objective: Objective,
    eps: float,
    budget: int = DEFAULT_STATE_BUDGET,
    table_method: str = "auto",
) -> SolverReport:
    """Best shared-policy Equal Opportunity solution at grid resolution.

    ``score`` is computed from the selected grid levels (common tpr value,
    per-group fpr bounds); the witness policy achieves at least that much.
    The all-bypass policy competes as a candidate since it is shared and
    exactly fair.
    """
    pl.require_minimally_effective()
    if not isinstance(objective, (LinearObjective, ReciprocalObjective)):
        raise ValueError("groupblind solver accepts linear or reciprocal objectives")
    started = time.perf_counter()

    if isinstance(objective, LinearObjective):
        if objective.alpha <= eps:
            return _boundary_report(pl, objective)
        bounds = f_rate_bounds(pl, objective.alpha, eps)
    else:
        if objective.alpha == 0.0:
            return _boundary_report(pl, objective)
        bounds = g_rate_bounds(pl, objective.alpha, eps)

    grid = Grid.from_bounds(eps / (2 * pl.k), *bounds)
    table = build_joint_table(pl, grid, budget, table_method)
    n = len(pl.groups)
    final = table.reach[-1]

    fpr_vals = grid.fpr_values()
    weight = np.zeros((grid.l_fpr + 1,) * n)
    for g_idx, g in enumerate(pl.groups):
        shp = [1] * n
        shp[g_idx] = grid.l_fpr + 1
        weight = weight + g.u * fpr_vals.reshape(shp)

    best = None  # (score, j1, levels tuple)
    for j1 in range(grid.l_tpr + 1):
        idx = tuple(j1 if axis % 2 == 0 else slice(None) for axis in range(2 * n))
        mask = final[idx]
        if not mask.any():
            continue
        masked = np.where(mask, weight, np.inf)
        flat = int(np.argmin(masked))
        levels = np.unravel_index(flat, masked.shape)
        t = grid.value(j1)
        recall, precision = aggregate_rates(
            pl,
            {g.id: t for g in pl.groups},
            {g.id: float(fpr_vals[levels[i]]) for i, g in enumerate(pl.groups)},
        )
        score = objective.value(recall, precision)
        if best is None or objective.better(score, best[0]):
            best = (score, j1, levels)

    candidates = []
    if best is not None:
        score, j1, levels = best
        state = tuple(
            j1 if axis % 2 == 0 else int(levels[axis // 2]) for axis in range(2 * n)
        )
        stages = table.reconstruct(state)
        policy = Policy.shared(pl, stages)
        ev = evaluate(pl, policy)
        tprs = list(ev.tpr.values())
        candidates.append(
            SolverReport(
                method="groupblind",
                objective=objective.describe(),
                policy=policy,
                evaluation=ev,
                score=score,
                certificate={
                    "branch": "dp",
                    "tpr_level": j1,
                    "fpr_levels": [int(v) for v in levels],
                    "grid": {"eps_bar": grid.eps_bar, "l_tpr": grid.l_tpr, "l_fpr": grid.l_fpr},
                    "eo_residual_gap": max(tprs) - min(tprs),
                    "policy_score": objective.of(ev),
                },
                diagnostics={"dp_cell_updates": table.cell_updates},
            )
        )
    candidates.append(_boundary_report(pl, objective))

    report = candidates[0]
    for rep in candidates[1:]:
        if objective.better(rep.score, report.score):
            report = rep
    report.diagnostics.update(
        {
            "dp_cell_updates": table.cell_updates,
            "wall_time_s": time.perf_counter() - started,
        }
    )
    return report
