"""Built-in showcase instances and their expected behavior.

Each case packages a small pipeline exhibiting one phenomenon the solvers
must get right (non-convexity of the fair set, sub-optimality of the ratio
policy for mixed objectives, non-local value of a test, the Equalized-Odds
precision gap, forced bypass under group-blindness) together with assertions
at fixed tolerances.  The CLI ``repro`` command prints one PASS/FAIL line per
assertion; the acceptance tests reuse the same builders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .eodds import eodds_precision_bound, gap_instance
from .errors import UnknownExample
from .exact import Usage, iter_config_results, solve_exact
from .fairness import FINAL, PER_STAGE, check_eo, check_eodds
from .groupblind import solve_groupblind
from .model import Group, Pipeline, Policy, StagePolicy, TestStats, evaluate
from .objectives import LinearObjective
from .oracle import structured_grid_search
from .ratio import RatioPolicyKind, max_precision, opportunity_ratio


@dataclass(frozen=True)
class CheckResult:
    label: str
    passed: bool
    detail: str


def _check(label: str, passed: bool, detail: str) -> CheckResult:
    return CheckResult(label, bool(passed), detail)


def one_stage_instance() -> Pipeline:
    """One test, two groups: qualified members of A pass more easily than B's."""
    return Pipeline(
        (
            Group("A", 0.25, 0.25, (TestStats(1.0, 0.5),)),
            Group("B", 0.25, 0.25, (TestStats(0.8, 0.5),)),
        )
    )


def nonconvex_instance() -> Pipeline:
    """Two stages, mirrored tests; the set of EO policies is not convex here."""
    return Pipeline(
        (
            Group("A", 0.25, 0.25, (TestStats(0.75, 0.0), TestStats(0.5, 0.5))),
            Group("B", 0.25, 0.25, (TestStats(0.5, 0.5), TestStats(0.75, 0.0))),
        )
    )


def nonconvex_policies() -> tuple[Policy, Policy, Policy]:
    """Two EO policies and their (non-EO) midpoint."""
    p = Policy(
        {
            "A": (StagePolicy(1, 0), StagePolicy(1, 1)),
            "B": (StagePolicy(1, 1), StagePolicy(1, 0)),
        }
    )
    q = Policy(
        {
            "A": (StagePolicy(1, 0), StagePolicy(1, 1)),
            "B": (StagePolicy(1, 0.5), StagePolicy(1, 1)),
        }
    )
    mid = Policy(
        {
            gid: tuple(
                StagePolicy((a.pi1 + b.pi1) / 2, (a.pi0 + b.pi0) / 2)
                for a, b in zip(p.for_group(gid), q.for_group(gid))
            )
            for gid in ("A", "B")
        }
    )
    return p, q, mid


def or_suboptimal_instance() -> Pipeline:
    """Mirrored two-stage tests where the ratio policy wastes recall."""
    return Pipeline(
        (
            Group("A", 0.25, 0.25, (TestStats(0.75, 0.0), TestStats(0.5, 0.25))),
            Group("B", 0.25, 0.25, (TestStats(0.5, 0.25), TestStats(0.75, 0.0))),
        )
    )


def nonlocal_instance(k: int) -> Pipeline:
    """One group; a cheap clean test vs. near-perfect noisy ones (k = 2 or 3)."""
    stats = (TestStats(0.5, 0.0),) + (TestStats(0.99, 0.5),) * (k - 1)
    return Pipeline((Group("A", 0.5, 0.5, stats),))


NONLOCAL_OBJECTIVE = LinearObjective(alpha=2.0 / 3.0)
NONLOCAL_SCALE = 3.0  # recall + 2*precision == 3 * f_{2/3}


def groupblind_instance() -> Pipeline:
    """A perfect test for A, a weaker one for B; blindness forces a bypass."""
    return Pipeline(
        (
            Group("A", 0.25, 0.25, (TestStats(1.0, 0.0),)),
            Group("B", 0.25, 0.25, (TestStats(0.5, 0.0),)),
        )
    )


def _case_one_stage() -> list[CheckResult]:
    pl = one_stage_instance()
    out = []
    full = Policy.full_use(pl)
    rep = check_eo(pl, full, tolerance=1e-9)
    out.append(
        _check(
            "promote-iff-pass violates EO with tpr gap 0.2",
            not rep.satisfied and abs(rep.max_gap - 0.2) < 1e-12,
            f"gap={rep.max_gap}",
        )
    )
    q_pol = Policy({"A": (StagePolicy(1, 0),), "B": (StagePolicy(1, 1),)})
    out.append(
        _check(
            "promoting all of B restores EO",
            check_eo(pl, q_pol, tolerance=1e-12).satisfied,
            "both tprs are 1",
        )
    )
    orp = opportunity_ratio(pl)
    expected = Policy({"A": (StagePolicy(0.8, 0),), "B": (StagePolicy(1, 0),)})
    out.append(_check("ratio policy promotes 80% of A's passers", orp == expected, str(orp.stages)))
    prec = evaluate(pl, orp).precision
    out.append(
        _check(
            "ratio policy precision equals the closed form 0.64",
            abs(prec - 0.64) < 1e-12 and abs(max_precision(pl) - 0.64) < 1e-12,
            f"precision={prec}",
        )
    )
    return out


def _case_nonconvex() -> list[CheckResult]:
    pl = nonconvex_instance()
    p, q, mid = nonconvex_policies()
    out = []
    out.append(
        _check(
            "both endpoint policies satisfy EO",
            check_eo(pl, p, 1e-12).satisfied and check_eo(pl, q, 1e-12).satisfied,
            "tpr 3/4 each",
        )
    )
    ev = evaluate(pl, mid)
    out.append(
        _check(
            "midpoint tpr_A = 3/4 and tpr_B = 49/64 exactly",
            abs(ev.tpr["A"] - 0.75) < 1e-12 and abs(ev.tpr["B"] - 49 / 64) < 1e-12,
            f"tpr={ev.tpr}",
        )
    )
    rep = check_eo(pl, mid, tolerance=1e-9)
    out.append(
        _check(
            "midpoint EO gap is 49/64 - 3/4",
            not rep.satisfied and abs(rep.max_gap - (49 / 64 - 0.75)) < 1e-12,
            f"gap={rep.max_gap}",
        )
    )
    out.append(
        _check(
            "P satisfies Equalized Odds at the end of the pipeline",
            check_eodds(pl, p, 1e-12, FINAL).satisfied,
            "equal tpr and fpr",
        )
    )
    per = check_eodds(pl, p, 1e-9, PER_STAGE)
    out.append(
        _check(
            "P violates Equalized Odds at stage 1",
            not per.satisfied and per.stage == 1,
            f"gap={per.max_gap} at stage {per.stage}",
        )
    )
    return out


def _case_or_suboptimal() -> list[CheckResult]:
    pl = or_suboptimal_instance()
    objective = LinearObjective(alpha=0.5)
    out = []
    rep = solve_exact(pl, objective)
    out.append(
        _check(
            "exact optimum of the even mix scores 7/8",
            abs(rep.score - 7 / 8) < 1e-9,
            f"score={rep.score}",
        )
    )
    out.append(
        _check(
            "optimal policy keeps recall 3/4 at precision 1",
            abs(rep.evaluation.recall - 0.75) < 1e-9 and abs(rep.evaluation.precision - 1.0) < 1e-9,
            f"recall={rep.evaluation.recall}, precision={rep.evaluation.precision}",
        )
    )
    or_score = objective.of(evaluate(pl, opportunity_ratio(pl)))
    out.append(
        _check(
            "ratio policy only scores 11/16",
            abs(or_score - 11 / 16) < 1e-9,
            f"score={or_score}",
        )
    )
    ev_first = evaluate(pl, opportunity_ratio(pl, RatioPolicyKind.FIRST_STAGE))
    out.append(
        _check(
            "first-stage ratio policy has common tpr 3/8",
            all(abs(t - 3 / 8) < 1e-12 for t in ev_first.tpr.values()),
            f"tpr={ev_first.tpr}",
        )
    )
    ev_per = evaluate(pl, opportunity_ratio(pl, RatioPolicyKind.PER_STAGE))
    out.append(
        _check(
            "per-stage correction costs recall (1/4) but no precision",
            all(abs(t - 1 / 4) < 1e-12 for t in ev_per.tpr.values())
            and abs(ev_per.precision - ev_first.precision) < 1e-12,
            f"tpr={ev_per.tpr}, precision={ev_per.precision}",
        )
    )
    return out


def _stage1_bypassed(pl: Pipeline) -> float:
    """Best score over configurations that bypass the first test."""
    best = -float("inf")
    for _, cfg, _, _, score in iter_config_results(pl, NONLOCAL_OBJECTIVE):
        gc = cfg.for_group("A")
        if gc.partial_level != 0 and gc.usage[0] is Usage.BYPASS:
            best = max(best, score)
    return best


def _case_nonlocal() -> list[CheckResult]:
    out = []
    pl2 = nonlocal_instance(2)
    rep2 = solve_exact(pl2, NONLOCAL_OBJECTIVE)
    sgs2 = structured_grid_search(pl2, NONLOCAL_OBJECTIVE, t_resolution=100001)
    pol2 = rep2.policy.for_group("A")
    out.append(
        _check(
            "with two tests the optimum scores 2.5 using only the first test",
            abs(rep2.score * NONLOCAL_SCALE - 2.5) < 1e-12
            and pol2[0] == StagePolicy(1, 0)
            and pol2[1] == StagePolicy(1, 1),
            f"score={rep2.score * NONLOCAL_SCALE}, policy={pol2}",
        )
    )
    out.append(
        _check(
            "dense-scan oracle agrees at k=2",
            abs(sgs2.score - rep2.score) < 1e-6,
            f"oracle={sgs2.score * NONLOCAL_SCALE}",
        )
    )
    bypassed = _stage1_bypassed(pl2) * NONLOCAL_SCALE
    out.append(
        _check(
            "every k=2 policy that bypasses the first test scores below 2.32",
            bypassed < 2.32,
            f"best={bypassed}",
        )
    )
    pl3 = nonlocal_instance(3)
    rep3 = solve_exact(pl3, NONLOCAL_OBJECTIVE)
    sgs3 = structured_grid_search(pl3, NONLOCAL_OBJECTIVE, t_resolution=100001)
    pol3 = rep3.policy.for_group("A")
    out.append(
        _check(
            "with three tests the optimum exceeds 2.57 and bypasses the first test",
            rep3.score * NONLOCAL_SCALE > 2.57 and pol3[0] == StagePolicy(1, 1),
            f"score={rep3.score * NONLOCAL_SCALE}, policy={pol3}",
        )
    )
    out.append(
        _check(
            "dense-scan oracle agrees at k=3",
            abs(sgs3.score - rep3.score) < 1e-6,
            f"oracle={sgs3.score * NONLOCAL_SCALE}",
        )
    )
    return out


def _case_eodds_gap() -> list[CheckResult]:
    pl = gap_instance(gamma=0.2, mu=1e-4, delta=1e-3, k=2, n_groups=2)
    ratio = max_precision(pl) / eodds_precision_bound(pl).value
    return [
        _check(
            "precision ratio of EO over EOdds optima lies in [4.95, 5.0]",
            4.95 <= ratio <= 5.0,
            f"ratio={ratio}",
        ),
        _check(
            "the EOdds ceiling never exceeds the EO optimum",
            eodds_precision_bound(pl).value <= max_precision(pl) + 1e-15,
            f"bound={eodds_precision_bound(pl).value}, max={max_precision(pl)}",
        ),
    ]


def _case_groupblind_bypass() -> list[CheckResult]:
    pl = groupblind_instance()
    rep = solve_groupblind(pl, LinearObjective(alpha=0.5), eps=0.25)
    stages = rep.policy.for_group("A")
    shared = all(rep.policy.for_group(gid) == stages for gid in pl.group_ids)
    sp = stages[0]
    prec = rep.evaluation.precision
    return [
        _check("returned policy is literally shared", shared, str(rep.policy.stages)),
        _check(
            "the single stage is a bypass: pi1 equals pi0",
            abs(sp.pi1 - sp.pi0) < 1e-9,
            f"stage={sp}",
        ),
        _check(
            "precision collapses to the qualified mass 0.5",
            prec is not None and abs(prec - pl.total_q) < 1e-9,
            f"precision={prec}",
        ),
    ]


CASES: dict[str, Callable[[], list[CheckResult]]] = {
    "one-stage": _case_one_stage,
    "nonconvex": _case_nonconvex,
    "or-suboptimal": _case_or_suboptimal,
    "nonlocal": _case_nonlocal,
    "eodds-gap": _case_eodds_gap,
    "groupblind-bypass": _case_groupblind_bypass,
}


def run_case(case_id: str) -> list[CheckResult]:
    if case_id not in CASES:
        raise UnknownExample(f"unknown example {case_id!r}; known: {', '.join(sorted(CASES))}")
    return CASES[case_id]()
