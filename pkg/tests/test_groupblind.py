import math

import numpy as np
import pytest

from conftest import random_pipeline
from fairscreen.errors import SizeLimit
from fairscreen.exact import solve_exact
from fairscreen.fptas import Grid, f_rate_bounds, solve_fptas_f, stage_feasible
from fairscreen.groupblind import (
    build_joint_table,
    joint_stage_feasible,
    solve_groupblind,
)
from fairscreen.model import Group, Pipeline, Policy, StagePolicy, TestStats, evaluate
from fairscreen.objectives import LinearObjective, ReciprocalObjective
from fairscreen.repro import groupblind_instance


def test_joint_feasibility_examples():
    tests = (TestStats(1.0, 0.0), TestStats(0.5, 0.0))
    xy = joint_stage_feasible(tests, (0.9, 0.9), (1.0, 1.0))
    assert xy is not None
    x, y = xy
    assert x >= 0.9 - 1e-9 and (x + y) / 2 >= 0.9 - 1e-9
    assert joint_stage_feasible(tests, (0.9, 0.9), (0.5, 0.5)) is None


def test_joint_feasibility_reduces_to_single_group():
    rng = np.random.default_rng(7)
    for _ in range(300):
        tau1 = float(rng.uniform(0.1, 1.0))
        tau0 = float(rng.uniform(0.0, tau1 * 0.95))
        t = TestStats(tau1, tau0)
        a, b = float(rng.uniform()), float(rng.uniform())
        single = stage_feasible(t, a, b)
        joint = joint_stage_feasible((t, t), (a, a), (b, b))
        assert (single is None) == (joint is None)
        if joint is not None:
            x, y = joint
            assert t.tau1 * x + (1 - t.tau1) * y >= a - 1e-9
            assert t.tau0 * x + (1 - t.tau0) * y <= b + 1e-9


def test_joint_kernel_matches_scalar_calls():
    rng = np.random.default_rng(15)
    pl = random_pipeline(rng, n_groups=2, k=1)
    grid = Grid.from_bounds(0.15, 0.4, 0.2)
    table = build_joint_table(pl, grid)
    kernel = table.stage_kernels[0]
    tests = tuple(g.stages[0] for g in pl.groups)
    for state in np.ndindex(kernel.shape):
        a_vals = [grid.value(state[0]), grid.value(state[2])]
        b_vals = [grid.value(state[1]), grid.value(state[3])]
        scalar = joint_stage_feasible(tests, a_vals, b_vals) is not None
        assert kernel[state] == scalar


def test_forced_bypass_when_blindness_meets_a_perfect_test():
    pl = groupblind_instance()
    rep = solve_groupblind(pl, LinearObjective(0.5), eps=0.25)
    stages = rep.policy.for_group("A")
    assert all(rep.policy.for_group(gid) == stages for gid in pl.group_ids)
    assert math.isclose(stages[0].pi1, stages[0].pi0, abs_tol=1e-9)
    assert math.isclose(rep.evaluation.precision, pl.total_q, abs_tol=1e-9)


def test_identical_groups_make_blindness_free():
    stats = (TestStats(0.8, 0.2),)
    pl = Pipeline((Group("A", 0.25, 0.25, stats), Group("B", 0.25, 0.25, stats)))
    eps = 0.2
    blind = solve_groupblind(pl, LinearObjective(0.5), eps=eps)
    aware = solve_fptas_f(pl, 0.5, eps)
    assert blind.score <= aware.score / (1 - eps) + 1e-9
    assert blind.score >= (1 - eps) * aware.score - 1e-9


def test_price_of_blindness_is_nonnegative():
    rng = np.random.default_rng(29)
    for _ in range(6):
        pl = random_pipeline(rng, n_groups=2, max_stages=2)
        alpha = float(rng.uniform(0.3, 0.7))
        blind = solve_groupblind(pl, LinearObjective(alpha), eps=0.3)
        aware = solve_exact(pl, LinearObjective(alpha))
        assert blind.score <= aware.score + 1e-9


def test_reciprocal_objective_supported():
    rng = np.random.default_rng(41)
    pl = random_pipeline(rng, n_groups=2, k=1)
    rep = solve_groupblind(pl, ReciprocalObjective(0.5), eps=0.3)
    g_star = solve_exact(pl, ReciprocalObjective(0.5)).score
    assert rep.score >= g_star - 1e-9  # blind can't beat group-aware
    stages = rep.policy.for_group(pl.group_ids[0])
    assert all(rep.policy.for_group(gid) == stages for gid in pl.group_ids)


def test_residual_gap_is_reported():
    rng = np.random.default_rng(53)
    pl = random_pipeline(rng, n_groups=2, k=2)
    rep = solve_groupblind(pl, LinearObjective(0.5), eps=0.3)
    gap = rep.certificate["eo_residual_gap"]
    ev = evaluate(pl, rep.policy)
    tprs = list(ev.tpr.values())
    assert math.isclose(gap, max(tprs) - min(tprs), abs_tol=1e-12)


def test_state_budget_guard():
    rng = np.random.default_rng(61)
    pl = random_pipeline(rng, n_groups=2, k=2)
    with pytest.raises(SizeLimit):
        solve_groupblind(pl, LinearObjective(0.5), eps=0.05, budget=1000)


def test_rejects_unsupported_objectives():
    pl = groupblind_instance()
    with pytest.raises(ValueError):
        solve_groupblind(pl, object(), eps=0.2)


def test_bypass_shortcut_for_tiny_alpha():
    pl = groupblind_instance()
    rep = solve_groupblind(pl, LinearObjective(0.05), eps=0.2)
    assert rep.certificate["branch"] == "bypass"
    assert rep.policy == Policy.bypass(pl)
