import json
from dataclasses import replace

import pytest

from rescon.acceptance import AcceptanceSuite
from rescon.cli import main
from rescon.dynamics import GainDesign
from rescon.scenario import PRESETS, preset_document


def test_missing_file_exits_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.json"), "--out-dir", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_schema_error_exits_2(tmp_path):
    doc = preset_document("fig2")
    doc["surprise"] = 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["run", str(path), "--out-dir", str(tmp_path)]) == 2


def test_config_error_exits_3(tmp_path):
    doc = preset_document("fig2")
    doc["graph"]["edges"].append([1, 1])
    path = tmp_path / "loop.json"
    path.write_text(json.dumps(doc))
    assert main(["run", str(path), "--out-dir", str(tmp_path)]) == 3


def test_calibrate_refuses_attack_scenario(tmp_path):
    assert main(["calibrate", "fig4", "--runs", "1", "--out-dir", str(tmp_path)]) == 3


def test_calibrate_zero_runs(tmp_path):
    assert main(["calibrate", "fig2", "--runs", "0", "--out-dir", str(tmp_path)]) == 3


def test_missing_thresholds_file_exits_2(tmp_path):
    assert main(["run", "fig2", "--thresholds", str(tmp_path / "t.json"), "--out-dir", str(tmp_path)]) == 2


def test_run_fig2_writes_artifacts(tmp_path):
    assert main(["run", "fig2", "--out-dir", str(tmp_path)]) == 0
    for name in ("trace.csv", "summary.json", "states.csv", "kl.csv", "trust.csv", "states.svg", "kl.svg",
                 "trust.svg"):
        assert (tmp_path / name).exists(), name
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["consensus_tail_average"] < 1e-3
    assert (tmp_path / "states.svg").read_text().startswith("<svg")


def test_run_fig3_reports_divergence(tmp_path):
    assert main(["run", "fig3", "--no-svg", "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["diverged"] is True


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RESCON_OUT_DIR", str(tmp_path / "env"))
    assert main(["run", "fig2", "--t-end", "1", "--no-svg"]) == 0
    assert (tmp_path / "env" / "trace.csv").exists()


def test_calibrate_then_mitigated_run(tmp_path):
    th = tmp_path / "th.json"
    assert main(["calibrate", "fig2", "--runs", "2", "--t-end", "20", "--out", str(th)]) == 0
    data = json.loads(th.read_text())
    assert len(data["gamma_imp"]) == 5 and min(data["gamma_imp"] + data["gamma_nonimp"]) > 0
    out = tmp_path / "run"
    assert main(["run", "fig2", "--t-end", "20", "--mitigate", "on", "--thresholds", str(th), "--no-svg",
                 "--out-dir", str(out)]) == 0
    assert min(json.loads((out / "summary.json").read_text())["final_self_belief"]) > 0.8


def test_reproduce_list(capsys):
    assert main(["reproduce", "--list"]) == 0
    assert capsys.readouterr().out.split() == list(PRESETS)


def test_reproduce_subset_writes_report(tmp_path, capsys):
    assert main(["reproduce", "--only", "7,8", "--out-dir", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert [c["number"] for c in report["criteria"]] == [7, 8] and report["all_passed"]
    assert "[PASS] 7." in capsys.readouterr().out


def test_unknown_suite(tmp_path):
    assert main(["reproduce", "--suite", "other", "--out-dir", str(tmp_path)]) == 2


def test_sweep(tmp_path):
    assert main(["sweep", "fig4", "--param", "detector.warmup", "--values", "15,16", "--seeds", "0,1",
                 "--t-end", "21", "--workers", "2", "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(rows) == 5 and rows[0].startswith("value,seed,diverged")


def test_tampered_gain_fails_consensus_check():
    def zero_coupling(s):
        g = s.resolved_gains()
        return replace(s, gains=GainDesign(g.K, 0.0))

    (result,) = AcceptanceSuite(transform=zero_coupling).run(only={1})
    assert not result.passed


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 2
