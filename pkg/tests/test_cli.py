from __future__ import annotations

import json
import subprocess
import sys

import pytest

from graphsca.cli import main


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    code = main(["train", "--episodes", "40", "--agent", "fault:protocol_skip_payload:0.5", "--out", str(out)])
    assert code == 0
    return out


def _json_out(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


def test_train_writes_artifacts(run_dir):
    names = {p.name for p in run_dir.iterdir()}
    assert {"episodes.jsonl", "timings.jsonl", "toolbox.json", "genomes.json", "frontier.json", "pair.json", "summary.json", "config.json"} <= names
    assert len((run_dir / "episodes.jsonl").read_text().splitlines()) == 40
    assert json.loads((run_dir / "config.json").read_text())["agent"] == "fault:protocol_skip_payload:0.5"


def test_rollup_matches_summary(run_dir, capsys):
    assert main(["rollup", str(run_dir / "episodes.jsonl")]) == 0
    assert _json_out(capsys) == json.loads((run_dir / "summary.json").read_text())


def test_rollup_corrupt_log(tmp_path, capsys):
    p = tmp_path / "bad.jsonl"
    p.write_text("not json\n")
    assert main(["rollup", str(p)]) == 2
    assert "bad.jsonl:1:" in capsys.readouterr().err


def test_inspect_toolbox(run_dir, capsys):
    assert main(["inspect-toolbox", str(run_dir / "toolbox.json")]) == 0
    text = capsys.readouterr().out
    assert text.startswith("tool") and "packaged" in text
    assert main(["inspect-toolbox", str(run_dir / "toolbox.json"), "--json"]) == 0
    tools = _json_out(capsys)
    assert tools and all("niche" in t for t in tools)


def test_diff_genome(run_dir, capsys):
    data = json.loads((run_dir / "genomes.json").read_text())
    first, last = data["genomes"][0]["id"], data["current"]
    assert first != last
    assert main(["diff-genome", first, last, "--manifest", str(run_dir / "genomes.json")]) == 0
    out = _json_out(capsys)
    assert out["from"] == first and out["to"] == last
    assert "execute.require_task_input_payload" in out["sections"]["execute"]["added"]


def test_diff_genome_unknown_id(run_dir):
    with pytest.raises(SystemExit):
        main(["diff-genome", "pi_nope", "pi_nada", "--manifest", str(run_dir / "genomes.json")])


def test_make_benchmark_and_evaluate(run_dir, tmp_path, capsys):
    bench = tmp_path / "bench.jsonl"
    assert main(["make-benchmark", "--out", str(bench), "--families", "mst,tsp", "--tiers", "D1,D2", "--per-family", "3"]) == 0
    assert "wrote 12 cases" in capsys.readouterr().out
    report_path = tmp_path / "report.json"
    code = main([
        "evaluate", "--pair", str(run_dir / "pair.json"), "--toolbox", str(run_dir / "toolbox.json"),
        "--benchmark", str(bench), "--out", str(report_path),
    ])
    assert code == 0
    report = _json_out(capsys)
    assert report["cases"] == 12 and report["pass_rate"] == 1.0
    assert json.loads(report_path.read_text()) == report


def test_evaluate_missing_file(run_dir, tmp_path, capsys):
    code = main(["evaluate", "--pair", str(tmp_path / "none.json"), "--toolbox", str(run_dir / "toolbox.json"), "--benchmark", "x"])
    assert code == 2 and "error" in capsys.readouterr().err


def test_train_from_toolbox_manifest(run_dir, tmp_path, capsys):
    out = tmp_path / "again"
    args = ["train", "--episodes", "5", "--toolbox", str(run_dir / "toolbox.json"), "--no-propose-tool", "--out", str(out)]
    assert main(args) == 0
    assert _json_out(capsys)["summary"]["run_tool_calls"] > 0


def test_bad_agent_spec_exit_code(tmp_path, capsys):
    assert main(["train", "--episodes", "1", "--agent", "wizard", "--out", str(tmp_path / "x")]) == 2
    assert "unknown agent spec" in capsys.readouterr().err


def test_console_module_entry():
    out = subprocess.run([sys.executable, "-m", "graphsca.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "make-benchmark" in out.stdout
