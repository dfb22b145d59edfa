"""Command-line surface: simulate, replay, cost, evaluate wiring."""

import json

from paza.cli import main
from paza.simulate import truth_path_for


def write_mock_script(tmp_path):
    script = {
        "rules": [
            {"match": "conceal", "respond": "CONFIRMED\nConfidence: 90\nConceals."},
            {"match": "default", "respond": "NORMAL\nConfidence: 10\nBrowsing."},
        ]
    }
    path = tmp_path / "script.json"
    path.write_text(json.dumps(script))
    return str(path)


def test_simulate_writes_trace_and_sidecar(tmp_path, capsys):
    out = tmp_path / "trace.jsonl"
    rc = main(
        [
            "simulate", "--cameras", "2", "--fps", "10", "--duration", "20",
            "--seed", "3", "--arrival-rate", "12", "-o", str(out),
        ]
    )
    assert rc == 0
    assert out.exists()
    assert truth_path_for(out).exists()
    assert sum(1 for _ in open(out)) == 2 * 10 * 20


def test_replay_with_mock_script(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    main(
        [
            "simulate", "--cameras", "1", "--duration", "20", "--seed", "8",
            "--arrival-rate", "10", "--browse-frac", "0.5", "--conceal-frac", "0.2",
            "-o", str(trace),
        ]
    )
    capsys.readouterr()
    report_path = tmp_path / "report.json"
    rc = main(
        [
            "replay", str(trace),
            "--mock-script", write_mock_script(tmp_path),
            "--report", str(report_path),
            "--alert-dir", str(tmp_path / "alerts"),
        ]
    )
    assert rc == 0
    stdout = capsys.readouterr().out
    report = json.loads(report_path.read_text())
    assert json.loads(stdout) == report
    assert report["stats"]["frames_processed"] == 200
    assert "trigger_eval" in report  # sidecar picked up automatically


def test_replay_rejects_bad_trace(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("this is not an event\n")
    rc = main(["replay", str(bad), "--no-vlm"])
    assert rc == 2
    assert "parse failure" in capsys.readouterr().err


def test_replay_no_vlm_dry_run(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    main(["simulate", "--cameras", "1", "--duration", "10", "--seed", "2", "-o", str(trace)])
    capsys.readouterr()
    rc = main(["replay", str(trace), "--no-vlm"])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["stats"]["vlm_calls"] == 0


def test_cost_prints_gpu_share(capsys):
    rc = main(["cost", "--gpu-hr", "0.40", "--hours", "12", "--days", "30", "--stores", "10"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "$14.40/month" in out
    assert "$30-85/month" in out
    assert "3600-21600" in out


def test_config_flag_overrides_rate_limit(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    main(
        [
            "simulate", "--cameras", "1", "--duration", "30", "--seed", "6",
            "--arrival-rate", "20", "--browse-frac", "0.6", "-o", str(trace),
        ]
    )
    capsys.readouterr()
    rc = main(
        [
            "replay", str(trace),
            "--mock-script", write_mock_script(tmp_path),
            "--rate-limit", "2",
        ]
    )
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["config"]["rate_limit_per_min"] == 2
    assert report["stats"]["vlm_calls"] <= 2
