import math

import numpy as np
import pytest

from conftest import random_per_stage_eo_policy, random_pipeline, random_policy
from fairscreen.errors import InvalidParams
from fairscreen.fairness import FINAL, PER_STAGE, check_eo, check_eodds
from fairscreen.model import Group, Pipeline, Policy, StagePolicy, TestStats
from fairscreen.repro import nonconvex_instance, nonconvex_policies, one_stage_instance


def test_one_stage_full_use_violates_eo():
    pl = one_stage_instance()
    rep = check_eo(pl, Policy.full_use(pl), tolerance=1e-9)
    assert not rep.satisfied
    assert math.isclose(rep.max_gap, 0.2, abs_tol=1e-12)
    assert rep.witness == ("A", "B")


def test_one_stage_promote_all_of_b_satisfies_eo():
    pl = one_stage_instance()
    pol = Policy({"A": (StagePolicy(1, 0),), "B": (StagePolicy(1, 1),)})
    assert check_eo(pl, pol, tolerance=1e-12).satisfied


def test_bypass_satisfies_everything():
    rng = np.random.default_rng(11)
    pl = random_pipeline(rng)
    pol = Policy.bypass(pl)
    for scope in (FINAL, PER_STAGE):
        assert check_eo(pl, pol, 0.0, scope).satisfied
        assert check_eodds(pl, pol, 0.0, scope).satisfied
        assert check_eo(pl, pol, 0.0, scope).max_gap == 0.0


def test_policy_p_satisfies_eodds_only_at_the_end():
    pl = nonconvex_instance()
    p, _, _ = nonconvex_policies()
    final = check_eodds(pl, p, tolerance=1e-12, scope=FINAL)
    assert final.satisfied
    per = check_eodds(pl, p, tolerance=1e-9, scope=PER_STAGE)
    assert not per.satisfied
    assert per.stage == 1
    # stage-1 fprs are 0 (full use of a zero-fpr test) vs 1 (bypass)
    assert math.isclose(per.max_gap, 1.0, abs_tol=1e-12)


def test_per_stage_eo_implies_final_eo():
    rng = np.random.default_rng(23)
    for _ in range(25):
        pl = random_pipeline(rng, n_groups=int(rng.integers(2, 4)))
        pol = random_per_stage_eo_policy(rng, pl)
        per = check_eo(pl, pol, tolerance=1e-9, scope=PER_STAGE)
        fin = check_eo(pl, pol, tolerance=1e-9, scope=FINAL)
        assert per.satisfied
        assert fin.satisfied
        assert fin.max_gap <= per.max_gap + 1e-15


def test_per_stage_gap_dominates_final_gap():
    rng = np.random.default_rng(5)
    for _ in range(25):
        pl = random_pipeline(rng, n_groups=2)
        pol = random_policy(rng, pl)
        per = check_eo(pl, pol, 1e-6, PER_STAGE)
        fin = check_eo(pl, pol, 1e-6, FINAL)
        assert per.max_gap >= fin.max_gap - 1e-15


def test_reports_invariant_under_group_order():
    rng = np.random.default_rng(31)
    pl = random_pipeline(rng, n_groups=3)
    pol = random_policy(rng, pl)
    flipped = Pipeline(tuple(reversed(pl.groups)))
    for check in (check_eo, check_eodds):
        a = check(pl, pol, 1e-6, FINAL)
        b = check(flipped, pol, 1e-6, FINAL)
        assert a.max_gap == b.max_gap
        assert a.witness == b.witness


def test_satisfied_iff_gap_within_tolerance():
    pl = one_stage_instance()
    pol = Policy.full_use(pl)
    assert check_eo(pl, pol, tolerance=0.2).satisfied
    assert not check_eo(pl, pol, tolerance=0.199).satisfied


def test_bad_arguments():
    pl = one_stage_instance()
    pol = Policy.full_use(pl)
    with pytest.raises(InvalidParams):
        check_eo(pl, pol, tolerance=-1.0)
    with pytest.raises(InvalidParams):
        check_eo(pl, pol, scope="middle")


def test_single_group_is_always_fair():
    pl = Pipeline((Group("A", 0.5, 0.5, (TestStats(0.7, 0.2),)),))
    rep = check_eodds(pl, Policy.full_use(pl), 0.0)
    assert rep.satisfied and rep.max_gap == 0.0
