"""Command-line front end.

Commands: ``evaluate`` a policy file against a pipeline file, ``solve`` with a
chosen engine, ``verify`` fairness of a policy, ``bounds`` for the closed-form
precision ceilings, and ``repro`` for the built-in showcase suite.

Exit codes: 0 success, 2 usage or input error, 3 resource limit exceeded.
``verify`` and ``repro`` exit 1 when they ran fine but a check failed.
Reports go to stdout; diagnostics and errors go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Any

from . import repro as repro_mod
from .eodds import eodds_precision_bound
from .errors import FairScreenError, ParseError, SizeLimit
from .fairness import FINAL, PER_STAGE, FairnessReport, check_eo, check_eodds
from .fptas import solve_fptas_f, solve_fptas_g
from .groupblind import solve_groupblind
from .exact import solve_exact
from .model import Evaluation, Group, Pipeline, Policy, StagePolicy, TestStats, evaluate
from .objectives import LinearObjective, PrecisionObjective, ReciprocalObjective
from .oracle import GridSpec, grid_search
from .ratio import max_precision, opportunity_ratio
from .reports import SolverReport

DEFAULT_TOLERANCE = 1e-6


# ---------------------------------------------------------------- input files


def _want(obj: Any, key: str, kind, path: str, required: bool = True):
    if key not in obj:
        if required:
            raise ParseError("missing required field", f"{path}.{key}")
        return None
    val = obj[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind):
        raise ParseError(f"expected {kind.__name__}, got {type(val).__name__}", f"{path}.{key}")
    return val


def _load_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ParseError(str(exc), path)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path)


def load_pipeline(path: str) -> tuple[Pipeline, float]:
    """Read a pipeline spec file; returns the pipeline and its fairness tolerance.

    Groups carry either raw masses ``q``/``u`` or a population ``weight`` with
    a within-group ``base_rate``; masses are normalized to sum to one.
    """
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", path)
    raw_groups = _want(doc, "groups", list, "$")
    if not raw_groups:
        raise ParseError("needs at least one group", "$.groups")
    groups = []
    for gi, entry in enumerate(raw_groups):
        gpath = f"$.groups[{gi}]"
        if not isinstance(entry, dict):
            raise ParseError("group must be an object", gpath)
        gid = _want(entry, "id", str, gpath)
        if "q" in entry or "u" in entry:
            q = _want(entry, "q", float, gpath)
            u = _want(entry, "u", float, gpath)
        else:
            weight = _want(entry, "weight", float, gpath)
            rate = _want(entry, "base_rate", float, gpath)
            if not 0.0 < rate <= 1.0:
                raise ParseError("base_rate must lie in (0, 1]", f"{gpath}.base_rate")
            q, u = weight * rate, weight * (1.0 - rate)
        stages = []
        raw_stages = _want(entry, "stages", list, gpath)
        for si, stage in enumerate(raw_stages):
            spath = f"{gpath}.stages[{si}]"
            if not isinstance(stage, dict):
                raise ParseError("stage must be an object", spath)
            tau1 = _want(stage, "tau1", float, spath)
            tau0 = _want(stage, "tau0", float, spath)
            try:
                stages.append(TestStats(tau1, tau0))
            except FairScreenError as exc:
                raise ParseError(str(exc), spath)
        try:
            groups.append(Group(gid, q, u, tuple(stages)))
        except FairScreenError as exc:
            raise ParseError(str(exc), gpath)
    tolerance = doc.get("tolerance", DEFAULT_TOLERANCE)
    if not isinstance(tolerance, (int, float)) or tolerance < 0:
        raise ParseError("tolerance must be a nonnegative number", "$.tolerance")
    try:
        return Pipeline.normalized(groups), float(tolerance)
    except FairScreenError as exc:
        raise ParseError(str(exc), "$.groups")


def load_policy(path: str) -> Policy:
    """Read a policy file with the same per-group/per-stage shape as specs."""
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", path)
    raw_groups = _want(doc, "groups", list, "$")
    stages_by_gid = {}
    for gi, entry in enumerate(raw_groups):
        gpath = f"$.groups[{gi}]"
        if not isinstance(entry, dict):
            raise ParseError("group must be an object", gpath)
        gid = _want(entry, "id", str, gpath)
        stage_policies = []
        for si, stage in enumerate(_want(entry, "stages", list, gpath)):
            spath = f"{gpath}.stages[{si}]"
            if not isinstance(stage, dict):
                raise ParseError("stage must be an object", spath)
            pi1 = _want(stage, "pi1", float, spath)
            pi0 = _want(stage, "pi0", float, spath)
            try:
                stage_policies.append(StagePolicy(pi1, pi0))
            except FairScreenError as exc:
                raise ParseError(str(exc), spath)
        stages_by_gid[gid] = tuple(stage_policies)
    return Policy(stages_by_gid)


# ------------------------------------------------------------------ rendering


def _plain(value: Any) -> Any:
    """Json-serializable copy: numpy scalars to floats/ints, tuples to lists."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    return value


def policy_to_dict(pol: Policy) -> dict:
    return {gid: [[sp.pi1, sp.pi0] for sp in stages] for gid, stages in sorted(pol.stages.items())}


def evaluation_to_dict(ev: Evaluation) -> dict:
    return {
        "recall": ev.recall,
        "precision": ev.precision,
        "tpr": dict(sorted(ev.tpr.items())),
        "fpr": dict(sorted(ev.fpr.items())),
    }


def fairness_to_dict(rep: FairnessReport) -> dict:
    return {
        "criterion": rep.criterion,
        "scope": rep.scope,
        "satisfied": rep.satisfied,
        "max_gap": rep.max_gap,
        "witness": list(rep.witness),
        "stage": rep.stage,
        "tolerance": rep.tolerance,
    }


def fairness_block(pl: Pipeline, pol: Policy, tolerance: float) -> dict:
    return {
        "eo_final": fairness_to_dict(check_eo(pl, pol, tolerance, FINAL)),
        "eo_per_stage": fairness_to_dict(check_eo(pl, pol, tolerance, PER_STAGE)),
        "eodds_final": fairness_to_dict(check_eodds(pl, pol, tolerance, FINAL)),
        "eodds_per_stage": fairness_to_dict(check_eodds(pl, pol, tolerance, PER_STAGE)),
    }


def report_to_dict(pl: Pipeline, rep: SolverReport, tolerance: float) -> dict:
    return _plain(
        {
            "method": rep.method,
            "objective": rep.objective,
            "policy": policy_to_dict(rep.policy),
            "metrics": evaluation_to_dict(rep.evaluation),
            "score": rep.score,
            "fairness": fairness_block(pl, rep.policy, tolerance),
            "certificate": rep.certificate,
            "diagnostics": rep.diagnostics,
        }
    )


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    if value is None:
        return "undefined"
    return str(value)


def _render_table(doc: dict, indent: str = "") -> list[str]:
    lines = []
    width = max((len(str(k)) for k in doc), default=0)
    for key, value in doc.items():
        if isinstance(value, dict):
            lines.append(f"{indent}{key}:")
            lines.extend(_render_table(value, indent + "  "))
        elif isinstance(value, list) and value and isinstance(value[0], list):
            lines.append(f"{indent}{key}: " + "  ".join("(" + ", ".join(_fmt(x) for x in row) + ")" for row in value))
        else:
            lines.append(f"{indent}{str(key).ljust(width)}  {_fmt(value)}")
    return lines


def emit(doc: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(_plain(doc), sort_keys=True, allow_nan=True))
    else:
        print("\n".join(_render_table(doc)))


# ------------------------------------------------------------------- commands


def _threads(args: argparse.Namespace) -> int:
    env = os.environ.get("FAIR_SCREEN_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ParseError("FAIR_SCREEN_THREADS must be an integer", "env")
    if args.threads is not None:
        return max(1, args.threads)
    return os.cpu_count() or 1


def cmd_evaluate(args) -> int:
    pl, tolerance = load_pipeline(args.spec)
    pol = load_policy(args.policy)
    ev = evaluate(pl, pol)
    doc = {
        "method": "evaluate",
        "policy": policy_to_dict(pol),
        "metrics": evaluation_to_dict(ev),
        "fairness": fairness_block(pl, pol, tolerance),
    }
    emit(doc, args.format)
    return 0


def _objective_for(args) -> object:
    if args.objective == "linear":
        return LinearObjective(args.alpha)
    if args.objective == "reciprocal":
        return ReciprocalObjective(args.alpha)
    return PrecisionObjective()


def cmd_solve(args) -> int:
    pl, tolerance = load_pipeline(args.spec)
    threads = _threads(args)
    method, objective = args.method, args.objective
    if method == "ratio" and objective not in (None, "precision"):
        raise ParseError("method 'ratio' maximizes precision only", "--objective")
    if method == "two-approx" and objective not in (None, "linear"):
        raise ParseError("method 'two-approx' takes the linear objective", "--objective")
    if method in ("exact", "fptas", "groupblind") and objective not in ("linear", "reciprocal"):
        raise ParseError(f"method {method!r} takes --objective linear or reciprocal", "--objective")

    if method == "ratio":
        policy = opportunity_ratio(pl)
        ev = evaluate(pl, policy)
        rep = SolverReport(
            method="ratio",
            objective=PrecisionObjective().describe(),
            policy=policy,
            evaluation=ev,
            score=ev.precision if ev.precision is not None else 0.0,
            certificate={"max_precision": max_precision(pl)},
        )
    elif method == "two-approx":
        from .ratio import two_approx

        rep = two_approx(pl, LinearObjective(args.alpha))
    elif method == "exact":
        rep = solve_exact(pl, _objective_for(args), threads=threads)
    elif method == "fptas":
        if args.objective == "linear":
            rep = solve_fptas_f(pl, args.alpha, args.eps, threads=threads)
        else:
            rep = solve_fptas_g(pl, args.alpha, args.eps, threads=threads)
    elif method == "groupblind":
        rep = solve_groupblind(pl, _objective_for(args), args.eps)
    else:  # oracle
        spec = GridSpec(step_count=args.grid_step, eo_tolerance=1e-3)
        rep = grid_search(pl, _objective_for(args), spec, constraint="eo")
    emit(report_to_dict(pl, rep, tolerance), args.format)
    return 0


def cmd_verify(args) -> int:
    pl, tolerance = load_pipeline(args.spec)
    pol = load_policy(args.policy)
    if args.tolerance is not None:
        tolerance = args.tolerance
    scopes = [FINAL, PER_STAGE] if args.scope == "both" else [
        FINAL if args.scope == "final" else PER_STAGE
    ]
    checks = []
    for scope in scopes:
        if args.criterion in ("eo", "both"):
            checks.append(check_eo(pl, pol, tolerance, scope))
        if args.criterion in ("eodds", "both"):
            checks.append(check_eodds(pl, pol, tolerance, scope))
    doc = {"method": "verify", "checks": [fairness_to_dict(c) for c in checks]}
    emit(doc, args.format)
    return 0 if all(c.satisfied for c in checks) else 1


def cmd_bounds(args) -> int:
    pl, _ = load_pipeline(args.spec)
    bound = eodds_precision_bound(pl)
    doc = {
        "method": "bounds",
        "max_precision_eo": max_precision(pl),
        "eodds_precision_bound": bound.value,
        "eodds_rho": bound.rho,
    }
    emit(doc, args.format)
    return 0


def cmd_repro(args) -> int:
    ids = sorted(repro_mod.CASES) if args.example == "all" else [args.example]
    ok = True
    for case_id in ids:
        started = time.perf_counter()
        results = repro_mod.run_case(case_id)
        for res in results:
            status = "PASS" if res.passed else "FAIL"
            print(f"{status}  [{case_id}] {res.label}  ({res.detail})")
            ok = ok and res.passed
        print(
            f"{'PASS' if all(r.passed for r in results) else 'FAIL'}  [{case_id}] "
            f"{len(results)} checks in {time.perf_counter() - started:.2f}s",
            file=sys.stderr,
        )
    return 0 if ok else 1


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fair-screen",
        description="Fairness-constrained screening pipelines: evaluate, verify, and solve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, policy_file=False):
        p.add_argument("spec", help="pipeline spec JSON file")
        if policy_file:
            p.add_argument("policy", help="policy JSON file")
        p.add_argument("--format", choices=("table", "json"), default="table")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (FAIR_SCREEN_THREADS overrides)")

    p_eval = sub.add_parser("evaluate", help="evaluate a policy and run every fairness check")
    common(p_eval, policy_file=True)
    p_eval.set_defaults(fn=cmd_evaluate)

    p_solve = sub.add_parser("solve", help="compute an optimal or near-optimal fair policy")
    common(p_solve)
    p_solve.add_argument(
        "--method",
        choices=("ratio", "two-approx", "exact", "fptas", "groupblind", "oracle"),
        required=True,
    )
    p_solve.add_argument("--objective", choices=("precision", "linear", "reciprocal"), default=None)
    p_solve.add_argument("--alpha", type=float, default=0.5)
    p_solve.add_argument("--eps", type=float, default=0.1)
    p_solve.add_argument("--grid-step", type=int, default=6, help="oracle lattice steps per unit")
    p_solve.set_defaults(fn=cmd_solve)

    p_verify = sub.add_parser("verify", help="check Equal Opportunity / Equalized Odds")
    common(p_verify, policy_file=True)
    p_verify.add_argument("--criterion", choices=("eo", "eodds", "both"), default="both")
    p_verify.add_argument("--scope", choices=("final", "per-stage", "both"), default="final")
    p_verify.add_argument("--tolerance", type=float, default=None)
    p_verify.set_defaults(fn=cmd_verify)

    p_bounds = sub.add_parser("bounds", help="closed-form precision ceilings")
    common(p_bounds)
    p_bounds.set_defaults(fn=cmd_bounds)

    p_repro = sub.add_parser("repro", help="run a built-in showcase case (or 'all')")
    p_repro.add_argument("example", help="case id, or 'all'; known ids: "
                         + ", ".join(sorted(repro_mod.CASES)))
    p_repro.set_defaults(fn=cmd_repro)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "scope", None) == "per-stage":
        args.scope = PER_STAGE
    try:
        return args.fn(args)
    except SizeLimit as exc:
        print(f"fair-screen: resource limit: {exc}", file=sys.stderr)
        return 3
    except FairScreenError as exc:
        print(f"fair-screen: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
