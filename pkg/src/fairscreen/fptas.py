"""Dynamic-programming FPTAS over discretized rate grids.

Per group, a boolean table answers: is there a policy whose cumulative
true-positive rate is at least (1-eps_bar)^j1 and whose cumulative
false-positive rate is at most (1-eps_bar)^j0 by the end of stage i?  Stage
transitions reduce to a two-variable feasibility question with a closed-form
answer, the tables combine across groups at a common tpr level (that common
level is the Equal Opportunity certificate), and a final per-group rescaling
of stage 1 turns grid-level equality into exact equality.

Grid depth comes from lower bounds on the rates an optimal policy can use;
``solve_fptas_f`` and ``solve_fptas_g`` derive them from the objective,
``solve_fptas_custom`` takes them from the caller.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import InvalidBounds, InvalidEps
from .model import Group, Pipeline, Policy, StagePolicy, TestStats, aggregate_rates, evaluate
from .objectives import LinearObjective, Objective, ReciprocalObjective
from .ratio import opportunity_ratio
from .reports import SolverReport

# Tables at most this many cells use the direct slice-OR update; larger ones
# use an FFT boolean convolution computing the same result.
DIRECT_UPDATE_MAX_CELLS = 4096


@dataclass(frozen=True)
class Grid:
    """Geometric level grid: index j holds the value (1-eps_bar)^j, index 0 is 1."""

    eps_bar: float
    l_tpr: int
    l_fpr: int

    def __post_init__(self):
        if not 0.0 < self.eps_bar < 1.0:
            raise InvalidEps(f"eps_bar must lie in (0,1), got {self.eps_bar}")

    @classmethod
    def from_bounds(cls, eps_bar: float, l_tpr_bound: float, l_fpr_bound: float) -> "Grid":
        """Index bounds covering values down to the given rate lower bounds."""
        if not (0.0 < l_tpr_bound <= 1.0 and 0.0 < l_fpr_bound <= 1.0):
            raise InvalidBounds(
                f"rate lower bounds must lie in (0,1], got {l_tpr_bound}, {l_fpr_bound}"
            )
        log_base = math.log(1.0 - eps_bar)
        l_tpr = max(0, math.ceil(math.log(l_tpr_bound) / log_base))
        l_fpr = max(0, math.ceil(math.log(l_fpr_bound) / log_base))
        return cls(eps_bar, l_tpr, l_fpr)

    def value(self, j) -> float:
        return (1.0 - self.eps_bar) ** j

    def tpr_values(self) -> np.ndarray:
        return (1.0 - self.eps_bar) ** np.arange(self.l_tpr + 1, dtype=float)

    def fpr_values(self) -> np.ndarray:
        return (1.0 - self.eps_bar) ** np.arange(self.l_fpr + 1, dtype=float)


def stage_feasible(t: TestStats, a: float, b: float) -> tuple[float, float] | None:
    """A stage policy (x, y) with tpr-rate >= a and fpr-rate <= b, or None.

    Returns the (x, y) maximizing the tpr expression subject to the fpr
    constraint over the unit box, so feasibility holds iff that maximum
    reaches ``a``.
    """
    if t.tau0 == 0.0:
        x, y = 1.0, min(1.0, b)
    elif b >= t.tau0:
        # tau0 < 1 always since tau0 <= tau1 <= 1 and equality at 1 would
        # put us in the branch below only if b < tau0 = 1, impossible.
        x, y = 1.0, min(1.0, (b - t.tau0) / (1.0 - t.tau0))
    else:
        x, y = b / t.tau0, 0.0
    achieved = t.tau1 * x + (1.0 - t.tau1) * y
    return (x, y) if achieved >= a else None


def _max_tpr_rate(t: TestStats, b: np.ndarray) -> np.ndarray:
    """Vectorized best achievable stage tpr-rate given fpr-rate <= b."""
    b = np.asarray(b, dtype=float)
    if t.tau0 == 0.0:
        y = np.minimum(1.0, b)
        return t.tau1 + (1.0 - t.tau1) * y
    loose = b >= t.tau0
    y = np.minimum(1.0, (b - t.tau0) / (1.0 - t.tau0))
    with_pass = t.tau1 + (1.0 - t.tau1) * np.maximum(y, 0.0)
    tight = t.tau1 * (b / t.tau0)
    return np.where(loose, with_pass, tight)


def _pairs(n: int) -> int:
    return (n + 1) * (n + 2) // 2


@dataclass
class DPTable:
    """Boolean reachability per (stage, tpr level, fpr level) for one group.

    ``reach[i, j1, j0]`` is True when some policy for stages 1..i+1 has
    cumulative tpr >= value(j1) and cumulative fpr <= value(j0).
    ``cell_updates`` counts the (cell, increment) pairs the base and update
    rules quantify over: (l_tpr+1)(l_fpr+1) for the base plus, per later
    stage, the pairs { (cell, increment) : increment <= cell } whose number is
    T(l_tpr) * T(l_fpr) with T(n) = (n+1)(n+2)/2.
    """

    grid: Grid
    group: Group
    reach: np.ndarray
    stage_kernels: list[np.ndarray] = field(repr=False)
    cell_updates: int = 0

    def parent(self, i: int, j1: int, j0: int) -> tuple[int, int, float, float]:
        """First witness (dj1, dj0, x, y) in scan order (dj0 outer, dj1 inner) for a true cell."""
        assert self.reach[i, j1, j0], "parent of an unreachable cell"
        if i == 0:
            x, y = stage_feasible(self.group.stages[0], self.grid.value(j1), self.grid.value(j0))
            return j1, j0, x, y
        kernel = self.stage_kernels[i]
        for dj0 in range(j0 + 1):
            for dj1 in range(j1 + 1):
                if kernel[dj1, dj0] and self.reach[i - 1, j1 - dj1, j0 - dj0]:
                    x, y = stage_feasible(
                        self.group.stages[i], self.grid.value(dj1), self.grid.value(dj0)
                    )
                    return dj1, dj0, x, y
        raise AssertionError("true cell without a witness")

    def reconstruct(self, j1: int, j0: int) -> tuple[StagePolicy, ...]:
        """Stage policies certifying reach[k-1, j1, j0], via parent pointers."""
        stages: list[StagePolicy] = []
        for i in range(self.reach.shape[0] - 1, -1, -1):
            dj1, dj0, x, y = self.parent(i, j1, j0)
            stages.append(StagePolicy(x, y))
            j1, j0 = j1 - dj1, j0 - dj0
        return tuple(reversed(stages))


def _stage_kernel(t: TestStats, grid: Grid) -> np.ndarray:
    """Feasibility of (tpr level dj1, fpr level dj0) increments for one stage."""
    best = _max_tpr_rate(t, grid.fpr_values())  # by fpr level
    return best[None, :] >= grid.tpr_values()[:, None]


def build_table(group: Group, grid: Grid, method: str = "auto") -> DPTable:
    """Fill the reachability table stage by stage.

    ``method``: "direct" ORs shifted slices per admissible increment, "fft"
    computes the identical boolean convolution via FFT, "auto" picks by size.
    """
    k = group.k
    shape = (grid.l_tpr + 1, grid.l_fpr + 1)
    if method == "auto":
        method = "direct" if shape[0] * shape[1] <= DIRECT_UPDATE_MAX_CELLS else "fft"
    reach = np.zeros((k,) + shape, dtype=bool)
    kernels = [_stage_kernel(t, grid) for t in group.stages]
    reach[0] = kernels[0]
    updates = shape[0] * shape[1]
    for i in range(1, k):
        kernel = kernels[i]
        if method == "direct":
            out = np.zeros(shape, dtype=bool)
            for dj1 in range(shape[0]):
                for dj0 in range(shape[1]):
                    updates += (shape[0] - dj1) * (shape[1] - dj0)
                    if kernel[dj1, dj0]:
                        out[dj1:, dj0:] |= reach[i - 1, : shape[0] - dj1, : shape[1] - dj0]
            reach[i] = out
        else:
            conv = fftconvolve(reach[i - 1].astype(float), kernel.astype(float))
            reach[i] = conv[: shape[0], : shape[1]] > 0.5
            updates += _pairs(grid.l_tpr) * _pairs(grid.l_fpr)
    return DPTable(grid=grid, group=group, reach=reach, stage_kernels=kernels, cell_updates=updates)


def expected_cell_updates(k: int, l_tpr: int, l_fpr: int) -> int:
    """Closed form for DPTable.cell_updates: O(k * l_tpr^2 * l_fpr^2)."""
    return (l_tpr + 1) * (l_fpr + 1) + (k - 1) * _pairs(l_tpr) * _pairs(l_fpr)


def f_rate_bounds(pl: Pipeline, alpha: float, eps: float) -> tuple[float, float]:
    """Rate lower bounds for the linear objective's grid."""
    k, q = pl.k, pl.total_q
    eps_bar = eps / (2 * k)
    l_tpr = (eps / (1.0 - eps)) * (1.0 - eps_bar) ** (k - 1)
    if q < 1.0:
        l_fpr = eps * eps * q / ((2.0 - eps) * (1.0 - eps) * (1.0 - q))
    else:
        l_fpr = 1.0  # no unqualified mass: fpr is irrelevant
    return min(1.0, l_tpr), min(1.0, l_fpr)


def g_rate_bounds(pl: Pipeline, alpha: float, eps: float) -> tuple[float, float]:
    """Rate lower bounds for the reciprocal objective's grid."""
    k, q = pl.k, pl.total_q
    eps_bar = eps / (2 * k)
    tau_min = min(t.tau1 for g in pl.groups for t in g.stages)
    l_tpr = tau_min**k * (1.0 - eps_bar) ** (k - 1)
    if q < 1.0:
        l_fpr = eps * q * tau_min**k / ((2.0 - eps) * (1.0 - q))
    else:
        l_fpr = 1.0
    return min(1.0, l_tpr), min(1.0, l_fpr)


def _boundary_report(pl: Pipeline, objective: Objective, branch: str) -> SolverReport:
    policy = Policy.bypass(pl) if branch == "bypass" else opportunity_ratio(pl)
    ev = evaluate(pl, policy)
    return SolverReport(
        method="fptas",
        objective=objective.describe(),
        policy=policy,
        evaluation=ev,
        score=objective.of(ev),
        certificate={"branch": branch},
        diagnostics={"dp_cell_updates": 0},
    )


def _build_tables(pl: Pipeline, grid: Grid, method: str, threads: int) -> dict[str, DPTable]:
    if threads > 1 and len(pl.groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tables = list(pool.map(lambda g: build_table(g, grid, method), pl.groups))
        return {g.id: tb for g, tb in zip(pl.groups, tables)}
    return {g.id: build_table(g, grid, method) for g in pl.groups}


def _repair_exact_eo(
    pl: Pipeline, stages_by_gid: dict[str, tuple[StagePolicy, ...]], target_tpr: float
) -> Policy:
    """Scale each group's stage-1 policy so every cumulative tpr equals target_tpr.

    Reconstruction guarantees each group's tpr is at least the grid value, so
    the factor is at most 1; scaling stage 1 multiplies both the group's tpr
    and fpr by that factor.
    """
    repaired = {}
    for g in pl.groups:
        stages = stages_by_gid[g.id]
        tpr = math.prod(
            t.tau1 * p.pi1 + (1.0 - t.tau1) * p.pi0 for t, p in zip(g.stages, stages)
        )
        c = min(1.0, target_tpr / tpr) if tpr > 0.0 else 1.0
        first = StagePolicy(stages[0].pi1 * c, stages[0].pi0 * c)
        repaired[g.id] = (first,) + stages[1:]
    return Policy(repaired)


def _solve_on_grid(
    pl: Pipeline,
    objective: Objective,
    grid: Grid,
    table_method: str,
    threads: int,
) -> tuple[SolverReport | None, int]:
    """Best common-tpr grid point with per-group minimal fpr levels.

    Scores use the grid values (a lower bound on what the reconstructed
    policy achieves); the returned report evaluates the actual policy.
    """
    tables = _build_tables(pl, grid, table_method, threads)
    updates = sum(tb.cell_updates for tb in tables.values())
    final = {gid: tb.reach[pl.k - 1] for gid, tb in tables.items()}

    best = None  # (score, j1, {gid: j0})
    for j1 in range(grid.l_tpr + 1):
        levels = {}
        for gid, rows in final.items():
            hits = np.flatnonzero(rows[j1])
            if hits.size == 0:
                levels = None
                break
            levels[gid] = int(hits[-1])  # largest level index = smallest fpr bound
        if levels is None:
            continue
        t = grid.value(j1)
        recall, precision = aggregate_rates(
            pl,
            {gid: t for gid in final},
            {gid: grid.value(j0) for gid, j0 in levels.items()},
        )
        score = objective.value(recall, precision)
        if best is None or objective.better(score, best[0]):
            best = (score, j1, levels)
    if best is None:
        return None, updates

    _, j1, levels = best
    stages_by_gid = {gid: tables[gid].reconstruct(j1, j0) for gid, j0 in levels.items()}
    policy = _repair_exact_eo(pl, stages_by_gid, grid.value(j1))
    ev = evaluate(pl, policy)
    report = SolverReport(
        method="fptas",
        objective=objective.describe(),
        policy=policy,
        evaluation=ev,
        score=objective.of(ev),
        certificate={
            "branch": "dp",
            "tpr_level": j1,
            "fpr_levels": levels,
            "grid": {"eps_bar": grid.eps_bar, "l_tpr": grid.l_tpr, "l_fpr": grid.l_fpr},
            "grid_score": best[0],
        },
        diagnostics={"dp_cell_updates": updates},
    )
    return report, updates


def _pick_best(objective: Objective, reports: list[SolverReport]) -> SolverReport:
    best = reports[0]
    for rep in reports[1:]:
        if objective.better(rep.score, best.score):
            best = rep
    return best


def _solve_fptas(
    pl: Pipeline,
    objective: Objective,
    eps: float,
    bounds: tuple[float, float],
    table_method: str,
    threads: int,
    compare_boundaries: bool,
) -> SolverReport:
    started = time.perf_counter()
    grid = Grid.from_bounds(eps / (2 * pl.k), *bounds)
    dp_report, updates = _solve_on_grid(pl, objective, grid, table_method, threads)
    candidates = [] if dp_report is None else [dp_report]
    if compare_boundaries:
        candidates += [
            _boundary_report(pl, objective, "bypass"),
            _boundary_report(pl, objective, "opportunity_ratio"),
        ]
    report = _pick_best(objective, candidates)
    report.diagnostics.update(
        {"dp_cell_updates": updates, "wall_time_s": time.perf_counter() - started}
    )
    return report


def _check_eps(eps: float) -> None:
    if not 0.0 < eps < 1.0:
        raise InvalidEps(f"eps must lie in (0,1), got {eps}")


def solve_fptas_f(
    pl: Pipeline,
    alpha: float,
    eps: float,
    table_method: str = "auto",
    threads: int = 1,
) -> SolverReport:
    """(1-eps)-approximate maximizer of (1-alpha)*recall + alpha*precision over EO policies."""
    _check_eps(eps)
    pl.require_minimally_effective()
    objective = LinearObjective(alpha)
    # At the ends of the alpha range one of the two extreme policies already
    # achieves the guarantee: bypass maximizes recall, the ratio policy
    # maximizes precision.
    if alpha <= eps:
        return _boundary_report(pl, objective, "bypass")
    if alpha >= 1.0 - eps:
        return _boundary_report(pl, objective, "opportunity_ratio")
    bounds = f_rate_bounds(pl, alpha, eps)
    return _solve_fptas(pl, objective, eps, bounds, table_method, threads, compare_boundaries=True)


def solve_fptas_g(
    pl: Pipeline,
    alpha: float,
    eps: float,
    table_method: str = "auto",
    threads: int = 1,
) -> SolverReport:
    """(1+eps)-approximate minimizer of (1-alpha)/recall + alpha/precision over EO policies."""
    _check_eps(eps)
    pl.require_minimally_effective()
    objective = ReciprocalObjective(alpha)
    # alpha = 0 is pure recall (bypass is exactly optimal); alpha = 1 is pure
    # precision (the ratio policy is exactly optimal).  Interior alphas run
    # the DP: an optimal policy's recall is at least tau_min^k because the
    # ratio policy has that much recall and no worse precision.
    if alpha == 0.0:
        return _boundary_report(pl, objective, "bypass")
    if alpha == 1.0:
        return _boundary_report(pl, objective, "opportunity_ratio")
    bounds = g_rate_bounds(pl, alpha, eps)
    return _solve_fptas(pl, objective, eps, bounds, table_method, threads, compare_boundaries=True)


def solve_fptas_custom(
    pl: Pipeline,
    objective: Objective,
    eps: float,
    bounds: tuple[float, float],
    table_method: str = "auto",
    threads: int = 1,
) -> SolverReport:
    """Grid optimizer for a caller-bounded objective.

    The caller asserts the objective is monotone in (recall, precision), that
    a near-optimal policy exists with rates above ``bounds = (L_tpr, L_fpr)``,
    and that the objective is Lipschitz on that region; the grid argmax then
    inherits the FPTAS guarantee.
    """
    _check_eps(eps)
    pl.require_minimally_effective()
    if not (0.0 < bounds[0] <= 1.0 and 0.0 < bounds[1] <= 1.0):
        raise InvalidBounds(f"bounds must lie in (0,1], got {bounds}")
    return _solve_fptas(pl, objective, eps, bounds, table_method, threads, compare_boundaries=False)
