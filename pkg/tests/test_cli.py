import json

import pytest

from app import main as cli
from app.constants.app_constants import ExitCode
from app.core.config_manager import DEFAULT_CONFIG_PATH
from app.core.exceptions import ConfigError, SynthesisInfeasibleError
from app.core.metrics import RunMetrics


@pytest.fixture
def small_config(tmp_path):
    raw = json.loads(DEFAULT_CONFIG_PATH.read_text(encoding="utf-8"))
    raw["clf_problems"]["ch4-load"].update({"subgrad_iters": 50, "max_outer": 3})
    raw["cbscd_problems"]["ch5-a1"]["subgrad_iters"] = 50
    path = tmp_path / "small.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    return str(path)


def test_parse_cp_range():
    cp = cli.parse_cp_range("bwc=3,cc=3-3")
    assert cp.bwc == [3, 3] and cp.cc == [3, 3]
    assert cp.cnc == [0, 3] and cp.prc == [1, 4]
    for bad in ("bwc", "xyz=1-2", "bwc=4-2"):
        with pytest.raises(ConfigError):
            cli.parse_cp_range(bad)


def test_usage_error_exit_code(clean_env):
    assert cli.main(["sim-dc"]) == ExitCode.CONFIG_ERROR
    assert cli.main(["no-such-command"]) == ExitCode.CONFIG_ERROR


def test_missing_config_file(clean_env, tmp_path):
    code = cli.main(["--config", str(tmp_path / "absent.json"), "verify-paper", "--quick"])
    assert code == ExitCode.CONFIG_ERROR


def test_invalid_config_file(clean_env, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"version\": 1,", encoding="utf-8")
    assert cli.main(["--config", str(path), "verify-paper", "--quick"]) == ExitCode.CONFIG_ERROR


def test_neural_controller_on_hess_rejected(clean_env, tmp_path):
    code = cli.main(["--output-dir", str(tmp_path), "sim-dc", "--case", "ch2-load", "--controller", "anc"])
    assert code == ExitCode.CONFIG_ERROR


def test_sim_dc_writes_artifacts(clean_env, tmp_path):
    code = cli.main(["--output-dir", str(tmp_path), "sim-dc", "--case", "ch3-load",
                     "--controller", "baseline-bs", "--duration", "0.01"])
    assert code == ExitCode.OK
    trace_csv = tmp_path / "ch3-load_baseline-bs_trace.csv"
    lines = trace_csv.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# case=ch3-load"
    assert lines[1] == "# controller=baseline-bs"
    assert (tmp_path / "ch3-load_baseline-bs_metrics.csv").exists()
    report = json.loads((tmp_path / "ch3-load_baseline-bs_report.json").read_text(encoding="utf-8"))
    assert report["plant"] == "pvbat"
    assert report["metrics"]
    assert (tmp_path / "metrics.prom").exists()


def test_env_output_dir(monkeypatch, clean_env, tmp_path):
    monkeypatch.setenv("WORKBENCH_OUTPUT_DIR", str(tmp_path / "from_env"))
    code = cli.main(["sim-dc", "--case", "ch3-load", "--controller", "aob", "--duration", "0.002"])
    assert code == ExitCode.OK
    assert (tmp_path / "from_env" / "ch3-load_aob_report.json").exists()


@pytest.mark.slow
def test_design_clf_writes_solution(clean_env, small_config, tmp_path):
    code = cli.main(["--config", small_config, "--output-dir", str(tmp_path), "design-clf",
                     "--problem", "ch4-load", "--plot"])
    assert code == ExitCode.OK
    record = json.loads((tmp_path / "ch4-load_solution.json").read_text(encoding="utf-8"))
    assert len(record["k"]) == 4
    assert record["certificate"]["hurwitz"]
    assert (tmp_path / "ch4-load_gamma.svg").exists()


@pytest.mark.slow
def test_design_cbscd_writes_report(clean_env, small_config, tmp_path):
    code = cli.main(["--config", small_config, "--output-dir", str(tmp_path), "design-cbscd",
                     "--feeder", "ch5-a1", "--cp-range", "bwc=3-3,cc=3-3,cnc=0-0,prc=3-3"])
    assert code == ExitCode.OK
    report = json.loads((tmp_path / "ch5-a1_cbscd.json").read_text(encoding="utf-8"))
    assert report["chosen_cp"] == "3303"


@pytest.mark.slow
def test_verify_quick_json(clean_env, tmp_path):
    code = cli.main(["--output-dir", str(tmp_path), "verify-paper", "--quick", "--json"])
    assert code == ExitCode.OK
    report = json.loads((tmp_path / "verify_report.json").read_text(encoding="utf-8"))
    assert report["hard_failed"] == 0


def test_global_options_after_subcommand(clean_env, small_config, tmp_path):
    code = cli.main(["sim-dc", "--case", "ch3-load", "--controller", "aob", "--duration", "0.002",
                     "--config", small_config, "--output-dir", str(tmp_path)])
    assert code == ExitCode.OK
    assert (tmp_path / "ch3-load_aob_report.json").exists()


def test_sim_dc_plots_land_per_controller(clean_env, tmp_path):
    code = cli.main(["--output-dir", str(tmp_path), "sim-dc", "--case", "ch3-load",
                     "--controller", "aob,baseline-bs", "--duration", "0.002", "--plot"])
    assert code == ExitCode.OK
    for controller in ("aob", "baseline-bs"):
        assert (tmp_path / controller / "ch3-load_x1.svg").exists()
        assert (tmp_path / controller / "ch3-load_duties.svg").exists()


def test_metrics_write_failure_is_logged(clean_env, tmp_path, monkeypatch, caplog, capsys):
    def refuse(self, output_dir):
        raise OSError("read-only file system")

    monkeypatch.setattr(RunMetrics, "write", refuse)
    code = cli.main(["--output-dir", str(tmp_path), "sim-dc", "--case", "ch3-load",
                     "--controller", "aob", "--duration", "0.002"])
    assert code == ExitCode.OK
    assert "Metrics write error" in caplog.text
    assert "metrics not written" in capsys.readouterr().err


def test_failed_certificate_exits_infeasible(clean_env, tmp_path, monkeypatch):
    def reject(problem, on_iterate=None):
        raise SynthesisInfeasibleError(f"{problem.name}: certificate fails on lmi1")

    monkeypatch.setattr(cli.clf_bcd, "bcd_no_delay", reject)
    code = cli.main(["--output-dir", str(tmp_path), "design-clf", "--problem", "ch4-load"])
    assert code == ExitCode.SYNTHESIS_INFEASIBLE
    assert not (tmp_path / "ch4-load_solution.json").exists()
