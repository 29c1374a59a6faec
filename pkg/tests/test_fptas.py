import math

import numpy as np
import pytest

from conftest import random_pipeline, random_policy
from fairscreen.errors import InvalidBounds, InvalidEps
from fairscreen.exact import solve_exact
from fairscreen.fairness import check_eo
from fairscreen.fptas import (
    Grid,
    build_table,
    expected_cell_updates,
    f_rate_bounds,
    g_rate_bounds,
    solve_fptas_custom,
    solve_fptas_f,
    solve_fptas_g,
    stage_feasible,
)
from fairscreen.model import Group, Pipeline, Policy, TestStats, evaluate
from fairscreen.objectives import (
    LinearObjective,
    PrecisionObjective,
    RecallObjective,
    ReciprocalObjective,
)
from fairscreen.oracle import monte_carlo
from fairscreen.ratio import max_precision, opportunity_ratio
from fairscreen.repro import or_suboptimal_instance


def _dense_scan_feasible(t, a, b, slack=0.0, steps=400):
    """Slow unit-box scan; positive slack shrinks the region (conservative)."""
    xs = np.linspace(0.0, 1.0, steps + 1)
    x, y = np.meshgrid(xs, xs, indexing="ij")
    ok = (t.tau0 * x + (1 - t.tau0) * y <= b - slack) & (
        t.tau1 * x + (1 - t.tau1) * y >= a + slack
    )
    return bool(ok.any())


def test_stage_feasible_examples():
    assert stage_feasible(TestStats(1, 0), 1.0, 0.0) == (1.0, 0.0)
    assert stage_feasible(TestStats(0.5, 0.5), 0.9, 0.5) is None
    xy = stage_feasible(TestStats(0.75, 0.25), 0.75, 0.25)
    assert xy == (1.0, 0.0)


def test_stage_feasible_against_dense_scan():
    rng = np.random.default_rng(17)
    for _ in range(300):
        tau1 = float(rng.uniform(0.05, 1.0))
        tau0 = float(rng.uniform(0.0, tau1))
        t = TestStats(tau1, tau0)
        a, b = float(rng.uniform()), float(rng.uniform())
        got = stage_feasible(t, a, b)
        if got is None:
            # infeasibility claims must survive a conservative dense scan
            assert not _dense_scan_feasible(t, a, b, slack=1e-9)
        else:
            x, y = got
            assert 0 <= x <= 1 and 0 <= y <= 1
            assert t.tau1 * x + (1 - t.tau1) * y >= a - 1e-12
            assert t.tau0 * x + (1 - t.tau0) * y <= b + 1e-12


def test_stage_feasible_returns_the_max_tpr_point():
    rng = np.random.default_rng(19)
    for _ in range(200):
        tau1 = float(rng.uniform(0.05, 1.0))
        tau0 = float(rng.uniform(0.0, tau1))
        t = TestStats(tau1, tau0)
        b = float(rng.uniform())
        got = stage_feasible(t, 0.0, b)
        assert got is not None
        x, y = got
        achieved = t.tau1 * x + (1 - t.tau1) * y
        xs = np.linspace(0, 1, 301)
        gx, gy = np.meshgrid(xs, xs, indexing="ij")
        feas = t.tau0 * gx + (1 - t.tau0) * gy <= b + 1e-12
        dense_best = np.where(feas, t.tau1 * gx + (1 - t.tau1) * gy, -1.0).max()
        assert achieved >= dense_best - 1e-6


def test_grid_from_bounds():
    grid = Grid.from_bounds(0.05, 0.1, 0.01)
    assert grid.value(0) == 1.0
    assert grid.value(grid.l_tpr) <= 0.1 + 1e-12
    assert grid.value(grid.l_fpr) <= 0.01 + 1e-12
    with pytest.raises(InvalidBounds):
        Grid.from_bounds(0.05, 0.0, 0.5)
    with pytest.raises(InvalidEps):
        Grid(1.5, 3, 3)


def test_build_table_perfect_test_reaches_everything():
    grid = Grid.from_bounds(0.1, 0.2, 0.2)
    group = Group("A", 0.5, 0.5, (TestStats(1.0, 0.0),))
    table = build_table(group, grid)
    assert table.reach[0].all()


def test_build_table_symmetric_test_reduces_to_index_comparison():
    grid = Grid.from_bounds(0.1, 0.2, 0.2)
    group = Group("A", 0.5, 0.5, (TestStats(0.5, 0.5),))
    table = build_table(group, grid)
    for j1 in range(grid.l_tpr + 1):
        for j0 in range(grid.l_fpr + 1):
            want = stage_feasible(group.stages[0], grid.value(j1), grid.value(j0)) is not None
            assert table.reach[0, j1, j0] == want == (j1 >= j0)


def test_table_monotone_in_both_level_indices():
    rng = np.random.default_rng(3)
    for _ in range(10):
        pl = random_pipeline(rng, n_groups=1)
        grid = Grid.from_bounds(0.05, 0.15, 0.05)
        table = build_table(pl.groups[0], grid)
        reach = table.reach
        assert not (reach[:, :, 1:] & ~reach[:, :, :-1]).any()  # larger fpr allowance keeps truth
        assert not (reach[:, :-1, :] & ~reach[:, 1:, :]).any()  # lower tpr demand keeps truth


def test_direct_and_fft_updates_agree():
    rng = np.random.default_rng(8)
    for _ in range(10):
        pl = random_pipeline(rng, n_groups=1, k=3)
        grid = Grid.from_bounds(0.08, 0.2, 0.1)
        direct = build_table(pl.groups[0], grid, method="direct")
        fft = build_table(pl.groups[0], grid, method="fft")
        assert (direct.reach == fft.reach).all()
        assert direct.cell_updates == fft.cell_updates
        assert direct.cell_updates == expected_cell_updates(3, grid.l_tpr, grid.l_fpr)


def test_reconstruction_certifies_the_cell():
    rng = np.random.default_rng(12)
    for _ in range(10):
        pl = random_pipeline(rng, n_groups=1, k=int(rng.integers(1, 4)))
        g = pl.groups[0]
        grid = Grid.from_bounds(0.07, 0.2, 0.08)
        table = build_table(g, grid)
        true_cells = np.argwhere(table.reach[g.k - 1])
        for j1, j0 in true_cells[:: max(1, len(true_cells) // 8)]:
            stages = table.reconstruct(int(j1), int(j0))
            tpr = math.prod(
                t.tau1 * p.pi1 + (1 - t.tau1) * p.pi0 for t, p in zip(g.stages, stages)
            )
            fpr = math.prod(
                t.tau0 * p.pi1 + (1 - t.tau0) * p.pi0 for t, p in zip(g.stages, stages)
            )
            assert tpr >= grid.value(int(j1)) - 1e-12
            assert fpr <= grid.value(int(j0)) + 1e-12


def test_planted_witnesses_are_covered():
    rng = np.random.default_rng(99)
    for _ in range(6):
        pl = random_pipeline(rng, n_groups=1, k=int(rng.integers(1, 4)))
        g = pl.groups[0]
        eps = float(rng.choice([0.1, 0.2, 0.3]))
        grid = Grid.from_bounds(eps / (2 * g.k), *f_rate_bounds(pl, 0.5, eps))
        table = build_table(g, grid)
        for _ in range(40):
            pol = random_policy(rng, pl).for_group("A")
            assert planted_witness_covered(table, grid, g, pol)


def test_solve_fptas_f_boundary_branches():
    rng = np.random.default_rng(2)
    pl = random_pipeline(rng, n_groups=2)
    low = solve_fptas_f(pl, alpha=0.05, eps=0.1)
    assert low.certificate["branch"] == "bypass"
    assert math.isclose(low.score, 0.95 + 0.05 * pl.total_q, abs_tol=1e-12)
    high = solve_fptas_f(pl, alpha=0.97, eps=0.1)
    assert high.certificate["branch"] == "opportunity_ratio"
    with pytest.raises(InvalidEps):
        solve_fptas_f(pl, alpha=0.5, eps=1.5)


def test_fptas_f_guarantee_on_the_mirrored_instance():
    pl = or_suboptimal_instance()
    rep = solve_fptas_f(pl, alpha=0.5, eps=0.05)
    assert rep.score >= (1 - 0.05) * (7 / 8) - 1e-12
    assert check_eo(pl, rep.policy, tolerance=1e-9).satisfied


def test_fptas_guarantees_on_random_instances():
    rng = np.random.default_rng(10)
    for _ in range(6):
        pl = random_pipeline(rng, n_groups=int(rng.integers(1, 3)), max_stages=2)
        alpha = float(rng.uniform(0.25, 0.75))
        eps = 0.1
        f_rep = solve_fptas_f(pl, alpha, eps)
        f_star = solve_exact(pl, LinearObjective(alpha)).score
        assert f_rep.score >= (1 - eps) * f_star - 1e-12
        g_rep = solve_fptas_g(pl, alpha, eps)
        g_star = solve_exact(pl, ReciprocalObjective(alpha)).score
        assert g_rep.score <= (1 + eps) * g_star + 1e-12


def test_repair_makes_eo_exact_without_losing_the_grid_score():
    rng = np.random.default_rng(20)
    for _ in range(8):
        pl = random_pipeline(rng, n_groups=2, max_stages=3)
        rep = solve_fptas_f(pl, alpha=0.5, eps=0.15)
        assert check_eo(pl, rep.policy, tolerance=1e-9).satisfied
        if rep.certificate.get("branch") == "dp":
            assert rep.score >= rep.certificate["grid_score"] - 1e-12


def test_fptas_g_exact_alpha_ends():
    rng = np.random.default_rng(44)
    pl = random_pipeline(rng, n_groups=2, max_stages=2)
    rep0 = solve_fptas_g(pl, alpha=0.0, eps=0.1)
    assert rep0.policy == Policy.bypass(pl)
    assert math.isclose(rep0.score, 1.0, abs_tol=1e-12)
    rep1 = solve_fptas_g(pl, alpha=1.0, eps=0.1)
    assert math.isclose(rep1.score, 1.0 / max_precision(pl), rel_tol=1e-12)


def test_perfect_test_g_is_one():
    pl = Pipeline((Group("A", 0.5, 0.5, (TestStats(1.0, 0.0),)),))
    rep = solve_fptas_g(pl, alpha=0.5, eps=0.1)
    assert math.isclose(rep.score, 1.0, abs_tol=1e-9)


def test_custom_matches_linear_solver_when_dp_wins():
    pl = or_suboptimal_instance()
    eps = 0.05
    rep_f = solve_fptas_f(pl, alpha=0.5, eps=eps)
    rep_c = solve_fptas_custom(
        pl, LinearObjective(0.5), eps, bounds=f_rate_bounds(pl, 0.5, eps)
    )
    assert rep_f.certificate["branch"] == "dp"
    assert math.isclose(rep_c.score, rep_f.score, abs_tol=1e-12)


def test_custom_recall_objective_picks_bypass():
    rng = np.random.default_rng(31)
    pl = random_pipeline(rng, n_groups=2, max_stages=2)
    rep = solve_fptas_custom(pl, RecallObjective(), 0.2, bounds=(0.5, 0.5))
    assert math.isclose(rep.score, 1.0, abs_tol=1e-12)
    assert rep.policy == Policy.bypass(pl)


def test_custom_precision_objective_close_to_max():
    rng = np.random.default_rng(47)
    for _ in range(5):
        pl = random_pipeline(rng, n_groups=2, max_stages=2)
        eps = 0.1
        or_recall = evaluate(pl, opportunity_ratio(pl)).recall
        l_tpr = or_recall * (1 - eps / (2 * pl.k)) ** (pl.k - 1)
        l_fpr = max(1e-6, eps * pl.total_q * or_recall / 2.0)
        rep = solve_fptas_custom(pl, PrecisionObjective(), eps, bounds=(l_tpr, min(1.0, l_fpr)))
        assert rep.score >= (1 - eps) * max_precision(pl) - 1e-12
    with pytest.raises(InvalidBounds):
        solve_fptas_custom(pl, PrecisionObjective(), 0.1, bounds=(0.0, 0.5))


def test_analytic_evaluation_matches_monte_carlo_here():
    pl = or_suboptimal_instance()
    rep = solve_fptas_f(pl, alpha=0.5, eps=0.1)
    mc = monte_carlo(pl, rep.policy, 10**5, seed=5)
    ev = rep.evaluation
    assert abs(mc.recall - ev.recall) <= 4 * max(mc.recall_se, 1e-4)
