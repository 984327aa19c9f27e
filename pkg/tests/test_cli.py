import json
from pathlib import Path

import pytest

from adaptkit.cli import main
from tests.conftest import scripted_medqa_replies

DATA = Path(__file__).parent / "data"


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def refine_config(tmp_path, budget=10, seed=7, objective=None):
    cfg = {
        "objective": objective or {"builtin": "quad_bowl", "params": {"center": [0.6]}},
        "space": {"x0": {"type": "float", "low": 0.0, "high": 1.0}},
        "refine": {"budget_b": budget, "n_init": 3},
        "seed": seed,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


# ---------------------------------------------------------------------------
# refine
# ---------------------------------------------------------------------------

def test_refine_quad_bowl_success(tmp_path, capsys):
    cfg = refine_config(tmp_path)
    out = tmp_path / "out"
    code, stdout, _ = run(capsys, "refine", "--config", str(cfg), "--out", str(out))
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["actual_evals"] == 10
    assert abs(report["best"]["x0"] - 0.6) < 0.2
    assert (out / "trace.jsonl").exists()
    assert (out / "regret.csv").read_text().startswith("t,value")


def test_refine_reports_best_near_center_in_most_seeds(tmp_path, capsys):
    cfg = refine_config(tmp_path)
    out = tmp_path / "out"
    code, stdout, _ = run(
        capsys, "refine", "--config", str(cfg), "--out", str(out), "--seed", "0", "--seeds", "20"
    )
    assert code == 0
    reports = json.loads(stdout)
    hits = sum(1 for r in reports if abs(r["best"]["x0"] - 0.6) <= 0.05)
    assert hits >= 18


def test_refine_missing_space_file_is_exit_2(tmp_path, capsys):
    cfg = {
        "objective": {"builtin": "quad_bowl"},
        "space_path": str(tmp_path / "nope.json"),
        "refine": {"budget_b": 8},
        "seed": 1,
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    code, _, err = run(capsys, "refine", "--config", str(path), "--out", str(tmp_path / "o"))
    assert code == 2


def test_refine_unknown_builtin_is_exit_2_with_name(tmp_path, capsys):
    cfg = refine_config(tmp_path, objective={"builtin": "warp_drive"})
    code, _, err = run(capsys, "refine", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2
    assert "warp_drive" in err


def test_refine_requires_seed(tmp_path, capsys):
    cfg = json.loads(refine_config(tmp_path).read_text())
    del cfg["seed"]
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    code, _, err = run(capsys, "refine", "--config", str(path), "--out", str(tmp_path / "o"))
    assert code == 2
    assert "seed" in err


def test_refine_rerun_is_byte_identical_modulo_wall_time(tmp_path, capsys):
    cfg = refine_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "refine", "--config", str(cfg), "--out", str(out_a))[0] == 0
    assert run(capsys, "refine", "--config", str(cfg), "--out", str(out_b))[0] == 0
    assert (out_a / "report.json").read_text() == (out_b / "report.json").read_text()
    assert (out_a / "regret.csv").read_text() == (out_b / "regret.csv").read_text()

    def strip_wall(text):
        rows = [json.loads(line) for line in text.splitlines()]
        for row in rows:
            row.pop("wall_time")
        return rows

    assert strip_wall((out_a / "trace.jsonl").read_text()) == strip_wall(
        (out_b / "trace.jsonl").read_text()
    )


def test_refine_negate_minimizes(tmp_path, capsys):
    # minimizing (x - 0.3)^2 via an external child process
    import sys

    script = tmp_path / "obj.py"
    script.write_text(
        "import json, sys\n"
        "a = json.load(sys.stdin)['assignment']\n"
        "print(json.dumps({'value': (a['x0'] - 0.3) ** 2}))\n"
    )
    cfg = refine_config(
        tmp_path, objective={"command": [sys.executable, str(script)]}
    )
    out = tmp_path / "out"
    code, stdout, _ = run(
        capsys, "refine", "--config", str(cfg), "--out", str(out), "--negate"
    )
    assert code == 0
    report = json.loads(stdout)
    assert abs(report["best"]["x0"] - 0.3) < 0.2


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------

def write_task(tmp_path):
    path = tmp_path / "task.json"
    path.write_text(
        json.dumps(
            {
                "description": "medical question answering",
                "dataset": [["what is the dose", "10 mg"], ["name the pathogen", "e coli"]],
            }
        )
    )
    return path


def test_plan_rule_client_default_graph(tmp_path, capsys):
    out = tmp_path / "out"
    code, stdout, _ = run(
        capsys, "plan", "--task", str(write_task(tmp_path)), "--out", str(out),
        "--kb", str(DATA / "example_card.jsonl"),
    )
    assert code == 0
    plan = json.loads((out / "plan.json").read_text())
    assert plan["stages"][0]["path"] == ["sft", "peft", "lora"]
    transcripts = sorted(p.name for p in (out / "plan").glob("*.json"))
    assert transcripts == ["adapt.json", "lora_params.json", "peft.json", "sft.json", "sft_train.json"]


def test_plan_byte_identical_across_runs(tmp_path, capsys):
    task = write_task(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "plan", "--task", str(task), "--out", str(out_a))[0] == 0
    assert run(capsys, "plan", "--task", str(task), "--out", str(out_b))[0] == 0
    assert (out_a / "plan.json").read_bytes() == (out_b / "plan.json").read_bytes()
    for name in ("adapt", "sft", "sft_train", "peft", "lora_params"):
        assert (out_a / "plan" / f"{name}.json").read_bytes() == (
            out_b / "plan" / f"{name}.json"
        ).read_bytes()


def test_plan_scripted_client(tmp_path, capsys):
    script = tmp_path / "script.json"
    script.write_text(json.dumps(scripted_medqa_replies()))
    out = tmp_path / "out"
    code, stdout, _ = run(
        capsys, "plan", "--task", str(write_task(tmp_path)), "--out", str(out),
        "--client", f"mock:{script}",
    )
    assert code == 0
    plan = json.loads(stdout)
    assert plan["stages"][0]["path"] == ["sft", "peft", "lora"]


def test_plan_exhausted_script_is_exit_3(tmp_path, capsys):
    script = tmp_path / "script.json"
    script.write_text(json.dumps(["next_nodes=['sft']"] * 4))
    code, _, err = run(
        capsys, "plan", "--task", str(write_task(tmp_path)), "--out", str(tmp_path / "o"),
        "--client", f"mock:{script}",
    )
    assert code == 3
    assert "exhausted" in err


def test_plan_all_candidates_forbidden_is_exit_3(tmp_path, capsys):
    constraints = tmp_path / "constraints.json"
    constraints.write_text(json.dumps({"forbidden_techniques": ["sft", "rag", "dpo"]}))
    code, _, err = run(
        capsys, "plan", "--task", str(write_task(tmp_path)), "--out", str(tmp_path / "o"),
        "--constraints", str(constraints),
    )
    assert code == 3
    assert "forbidden" in err or "failed" in err


def test_plan_constraints_require_rag(tmp_path, capsys):
    constraints = tmp_path / "constraints.json"
    constraints.write_text(json.dumps({"required_techniques": ["rag"]}))
    out = tmp_path / "out"
    code, stdout, _ = run(
        capsys, "plan", "--task", str(write_task(tmp_path)), "--out", str(out),
        "--constraints", str(constraints),
    )
    assert code == 0
    plan = json.loads(stdout)
    assert plan["stages"][0]["path"] == ["rag"]


def test_plan_accepts_custom_graph_file(tmp_path, capsys):
    from adaptkit import acg

    graph_path = tmp_path / "graph.json"
    graph_path.write_text(acg.graph_to_json(acg.default_graph()))
    out = tmp_path / "out"
    code, stdout, _ = run(
        capsys, "plan", "--graph", str(graph_path), "--task", str(write_task(tmp_path)),
        "--out", str(out),
    )
    assert code == 0
    assert json.loads(stdout)["stages"][0]["path"] == ["sft", "peft", "lora"]


# ---------------------------------------------------------------------------
# kb
# ---------------------------------------------------------------------------

def test_kb_ingest_prints_count(capsys):
    code, stdout, _ = run(capsys, "kb", "ingest", "--records", str(DATA / "example_card.jsonl"))
    assert code == 0
    assert stdout.strip() == "accepted: 1"


def test_kb_query_returns_results(tmp_path, capsys):
    records = tmp_path / "kb.jsonl"
    records.write_text(
        "\n".join(
            json.dumps(r)
            for r in [
                {"base_model": "m1", "training_technique": "sft", "domain": "medical"},
                {"base_model": "m2", "training_technique": "sft", "domain": "legal"},
            ]
        )
    )
    code, stdout, _ = run(
        capsys, "kb", "query", "--records", str(records), "--descriptor", "medical", "--top-k", "3"
    )
    assert code == 0
    results = json.loads(stdout)
    assert len(results) == 2
    assert results[0]["record"]["domain"] == "medical"


def test_kb_di_single_config_is_zero(tmp_path, capsys):
    spaces = tmp_path / "spaces.jsonl"
    spaces.write_text('{"lr": {"type": "float", "low": 1e-5, "high": 1e-4}}\n')
    code, stdout, _ = run(capsys, "kb", "di", "--spaces", str(spaces), "--alpha", "0.5")
    assert code == 0
    payload = json.loads(stdout)
    assert payload == {"dispersion_index": 0.0, "alpha": 0.5, "n": 1}


def test_kb_missing_file_is_exit_2(tmp_path, capsys):
    code, _, _ = run(capsys, "kb", "ingest", "--records", str(tmp_path / "missing.jsonl"))
    assert code == 2


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def test_metrics_score_medqa_row(capsys):
    code, stdout, _ = run(
        capsys, "metrics", "score", "--iterations", "0", "--raw", "63.55", "--scale", "100"
    )
    assert code == 0
    card = json.loads(stdout)
    assert card["cs"] == pytest.approx(0.82, abs=0.005)


def test_metrics_bounds(capsys):
    code, stdout, _ = run(
        capsys, "metrics", "bounds", "--epsilon", "0.05", "--f-a", "100"
    )
    assert code == 0
    payload = json.loads(stdout)
    assert payload["min_iterations"] == pytest.approx(35.90, abs=0.01)


def test_metrics_regret_from_trace(tmp_path, capsys):
    cfg = refine_config(tmp_path, budget=8)
    out = tmp_path / "out"
    assert run(capsys, "refine", "--config", str(cfg), "--out", str(out))[0] == 0
    code, stdout, _ = run(
        capsys, "metrics", "regret", "--trace", str(out / "trace.jsonl"), "--f-opt", "0.0"
    )
    assert code == 0
    lines = stdout.strip().splitlines()
    assert lines[0] == "t,value,incumbent,simple_regret,cumulative_regret"
    cums = [float(line.split(",")[4]) for line in lines[1:]]
    assert cums == sorted(cums)


def test_metrics_malformed_trace_is_exit_2(tmp_path, capsys):
    bad = tmp_path / "trace.jsonl"
    bad.write_text("not json\n")
    code, _, _ = run(capsys, "metrics", "regret", "--trace", str(bad), "--f-opt", "1.0")
    assert code == 2
