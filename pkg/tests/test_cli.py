import json
import math

import pytest

from fairscreen.cli import main
from fairscreen.model import Policy, StagePolicy, evaluate
from fairscreen.cli import load_pipeline

MIRRORED_SPEC = {
    "groups": [
        {"id": "A", "q": 0.25, "u": 0.25,
         "stages": [{"tau1": 0.75, "tau0": 0.0}, {"tau1": 0.5, "tau0": 0.25}]},
        {"id": "B", "q": 0.25, "u": 0.25,
         "stages": [{"tau1": 0.5, "tau0": 0.25}, {"tau1": 0.75, "tau0": 0.0}]},
    ]
}

NONCONVEX_SPEC = {
    "groups": [
        {"id": "A", "weight": 0.5, "base_rate": 0.5,
         "stages": [{"tau1": 0.75, "tau0": 0.0}, {"tau1": 0.5, "tau0": 0.5}]},
        {"id": "B", "weight": 0.5, "base_rate": 0.5,
         "stages": [{"tau1": 0.5, "tau0": 0.5}, {"tau1": 0.75, "tau0": 0.0}]},
    ]
}

MIDPOINT_POLICY = {
    "groups": [
        {"id": "A", "stages": [{"pi1": 1, "pi0": 0}, {"pi1": 1, "pi0": 1}]},
        {"id": "B", "stages": [{"pi1": 1, "pi0": 0.75}, {"pi1": 1, "pi0": 0.5}]},
    ]
}


@pytest.fixture
def files(tmp_path):
    def write(name, doc):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return write


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip().startswith("{") else out


def test_evaluate_reports_midpoint_rates(files, capsys):
    spec = files("spec.json", NONCONVEX_SPEC)
    pol = files("pol.json", MIDPOINT_POLICY)
    code, doc = run_json(capsys, ["evaluate", spec, pol, "--format", "json"])
    assert code == 0
    assert math.isclose(doc["metrics"]["tpr"]["B"], 49 / 64, abs_tol=1e-12)
    assert not doc["fairness"]["eo_final"]["satisfied"]


def test_evaluate_bypass_policy(files, capsys):
    spec = files("spec.json", MIRRORED_SPEC)
    pol = files(
        "pol.json",
        {"groups": [
            {"id": "A", "stages": [{"pi1": 1, "pi0": 1}] * 2},
            {"id": "B", "stages": [{"pi1": 1, "pi0": 1}] * 2},
        ]},
    )
    code, doc = run_json(capsys, ["evaluate", spec, pol, "--format", "json"])
    assert code == 0
    assert doc["metrics"]["recall"] == 1.0


def test_malformed_json_exits_2(files, capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    spec = files("spec.json", MIRRORED_SPEC)
    assert main(["evaluate", str(bad), spec]) == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_missing_field_path_in_error(files, capsys):
    doc = {"groups": [{"id": "A", "q": 0.5, "u": 0.5, "stages": [{"tau1": 0.5}]}]}
    spec = files("spec.json", doc)
    pol = files("pol.json", MIDPOINT_POLICY)
    assert main(["evaluate", spec, pol]) == 2
    assert "$.groups[0].stages[0].tau0" in capsys.readouterr().err


def test_solve_exact_linear(files, capsys):
    spec = files("spec.json", MIRRORED_SPEC)
    code, doc = run_json(
        capsys,
        ["solve", spec, "--method", "exact", "--objective", "linear", "--alpha", "0.5",
         "--format", "json"],
    )
    assert code == 0
    assert math.isclose(doc["score"], 7 / 8, abs_tol=1e-9)
    assert doc["fairness"]["eo_final"]["satisfied"]


def test_solve_ratio_hits_max_precision(files, capsys):
    spec = files("spec.json", MIRRORED_SPEC)
    code, doc = run_json(capsys, ["solve", spec, "--method", "ratio", "--format", "json"])
    assert code == 0
    assert math.isclose(doc["score"], doc["certificate"]["max_precision"], rel_tol=1e-12)


def test_solve_fptas_tracks_exact(files, capsys):
    spec = files("spec.json", MIRRORED_SPEC)
    code, doc = run_json(
        capsys,
        ["solve", spec, "--method", "fptas", "--objective", "linear", "--alpha", "0.5",
         "--eps", "0.05", "--format", "json"],
    )
    assert code == 0
    assert doc["score"] >= 0.95 * (7 / 8) - 1e-12


def test_solve_report_round_trips_through_evaluate(files, capsys):
    spec = files("spec.json", MIRRORED_SPEC)
    code, doc = run_json(
        capsys,
        ["solve", spec, "--method", "exact", "--objective", "linear", "--alpha", "0.3",
         "--format", "json"],
    )
    assert code == 0
    pl, _ = load_pipeline(spec)
    policy = Policy(
        {gid: tuple(StagePolicy(*pair) for pair in rows) for gid, rows in doc["policy"].items()}
    )
    ev = evaluate(pl, policy)
    assert math.isclose(ev.recall, doc["metrics"]["recall"], abs_tol=1e-9)
    assert math.isclose(ev.precision, doc["metrics"]["precision"], abs_tol=1e-9)
    for gid in ("A", "B"):
        assert math.isclose(ev.tpr[gid], doc["metrics"]["tpr"][gid], abs_tol=1e-9)


def test_json_output_is_stable_under_reserialization(files, capsys):
    spec = files("spec.json", MIRRORED_SPEC)
    main(["solve", spec, "--method", "exact", "--objective", "linear", "--format", "json"])
    out = capsys.readouterr().out
    assert json.dumps(json.loads(out), sort_keys=True) == out.strip()


def test_incompatible_flags(files, capsys):
    spec = files("spec.json", MIRRORED_SPEC)
    assert main(["solve", spec, "--method", "ratio", "--objective", "linear"]) == 2
    assert main(["solve", spec, "--method", "exact", "--objective", "precision"]) == 2


def test_size_limit_exit_code(files, capsys, monkeypatch):
    big = {
        "groups": [
            {"id": gid, "q": 1 / 6, "u": 1 / 6,
             "stages": [{"tau1": 0.8, "tau0": 0.1}] * 3}
            for gid in ("A", "B", "C")
        ]
    }
    spec = files("spec.json", big)
    code = main(["solve", spec, "--method", "oracle", "--objective", "precision",
                 "--grid-step", "40"])
    assert code == 3


def test_verify_exit_codes(files, capsys):
    spec = files("spec.json", NONCONVEX_SPEC)
    pol = files("pol.json", MIDPOINT_POLICY)
    assert main(["verify", spec, pol, "--criterion", "eo"]) == 1
    fair = files(
        "fair.json",
        {"groups": [
            {"id": "A", "stages": [{"pi1": 1, "pi0": 1}] * 2},
            {"id": "B", "stages": [{"pi1": 1, "pi0": 1}] * 2},
        ]},
    )
    assert main(["verify", spec, fair, "--criterion", "both", "--scope", "both"]) == 0


def test_bounds_command(files, capsys):
    spec = files("spec.json", MIRRORED_SPEC)
    code, doc = run_json(capsys, ["bounds", spec, "--format", "json"])
    assert code == 0
    assert math.isclose(doc["max_precision_eo"], 1.0, abs_tol=1e-12)
    assert 0 < doc["eodds_precision_bound"] <= 1


def test_repro_known_and_unknown(capsys):
    assert main(["repro", "nonconvex"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    assert main(["repro", "nope"]) == 2


def test_weight_base_rate_normalization(files):
    doc = {
        "groups": [
            {"id": "A", "weight": 2.0, "base_rate": 0.5,
             "stages": [{"tau1": 0.8, "tau0": 0.1}]},
            {"id": "B", "weight": 2.0, "base_rate": 0.25,
             "stages": [{"tau1": 0.8, "tau0": 0.1}]},
        ]
    }
    pl, tol = load_pipeline(files("spec.json", doc))
    assert math.isclose(pl.total_q + pl.total_u, 1.0, abs_tol=1e-12)
    assert math.isclose(pl.group("A").q, 0.25, abs_tol=1e-12)
    assert math.isclose(pl.group("B").q, 0.125, abs_tol=1e-12)
    assert tol == 1e-6


def test_threads_env_override(files, capsys, monkeypatch):
    spec = files("spec.json", MIRRORED_SPEC)
    monkeypatch.setenv("FAIR_SCREEN_THREADS", "2")
    code, doc = run_json(
        capsys,
        ["solve", spec, "--method", "exact", "--objective", "linear", "--threads", "7",
         "--format", "json"],
    )
    assert code == 0
    assert doc["diagnostics"]["threads"] == 2


def test_table_format_renders(files, capsys):
    spec = files("spec.json", MIRRORED_SPEC)
    pol = files("pol.json", MIDPOINT_POLICY)
    assert main(["evaluate", spec, pol]) == 0
    out = capsys.readouterr().out
    assert "recall" in out and "0.765625" in out
