import json

import pytest

from relenlab.cli import RunConfig, _bind, main
from relenlab.errors import ConfigError
from relenlab.experiments import run_identity_study

SIM = {
    "grid": {"dim": 1, "N": 64},
    "system": {"system": "EulerKorteweg", "dt": 1e-3, "t_end": 0.02},
    "model": {"type": "Korteweg", "h": {"kind": "gamma_law", "params": {"k": 1, "gamma": 2}},
              "kappa": {"kind": "constant", "params": {"C": 0.01}}},
    "experiment": {"name": "simulate", "params": {"delta": 0.01}},
    "output": {"snapshot_every": 10},
    "seed": 3,
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestConfigValidation:
    @pytest.mark.parametrize("raw", [
        {"grid": {"N": 64, "resolution": 2}},
        {"colour": "red"},
        {"grid": {"N": 63}},
        {"grid": {"dim": 4}},
        {"grid": {"L": -1.0}},
        {"system": {"system": "Boussinesq"}},
        {"system": {"dt": 0}},
        {"system": {"zeta": -1}},
        {"model": {"type": "Korteweg"}},
        {"model": {"type": "QHD", "h": {"kind": "gamma_law"}, "band": [2.0, 1.0]}},
        {"output": {"snapshot_every": -1}},
        {"experiment": {"params": [1, 2]}},
        {"seed": 1.5},
    ])
    def test_rejects(self, raw):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(raw)

    def test_accepts_full_config(self):
        cfg = RunConfig.from_dict(SIM)
        assert cfg.build_grid().n == 64
        assert cfg.build_spec(cfg.build_model(), cfg.build_grid()).system == "EulerKorteweg"

    def test_experiment_parameters_are_checked(self):
        with pytest.raises(ConfigError, match="unknown experiment parameter"):
            _bind(run_identity_study, {"levls": 3})
        resolved = _bind(run_identity_study, {"levels": 3})
        assert resolved["levels"] == 3 and "t_end" in resolved


class TestExitCodes:
    def test_config_error_exits_two(self, tmp_path, capsys):
        path = write(tmp_path, {"grid": {"bogus": 1}})
        assert main(["verify-noether", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_missing_and_malformed_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "none.json")]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["simulate", "--config", str(bad)]) == 2

    def test_wrong_command_for_config(self, tmp_path):
        assert main(["verify-noether", "--config", str(write(tmp_path, SIM)), "--out", str(tmp_path)]) == 2

    def test_passing_run_exits_zero(self, tmp_path, capsys):
        assert main(["check-convexity", "--out", str(tmp_path / "c")]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_tolerance_failure_exits_one(self, tmp_path, capsys):
        cfg = {"grid": {"N": 32}, "experiment": {"name": "verify-noether", "params": {"tol": 1e-30}}}
        assert main(["verify-noether", "--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / "n")]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_vacuum_exits_two(self, tmp_path):
        cfg = json.loads(json.dumps(SIM))
        cfg["experiment"]["params"] = {"rho_mean": 0.1}
        assert main(["simulate", "--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / "v")]) == 2


class TestOutputs:
    def test_simulate_writes_echo_csv_and_snapshots(self, tmp_path):
        out = tmp_path / "sim"
        assert main(["simulate", "--config", str(write(tmp_path, SIM)), "--out", str(out)]) == 0
        echo = json.loads((out / "config.json").read_text())
        assert echo["seed"] == 3 and echo["experiment"]["params"]["delta"] == 0.01
        assert echo["experiment"]["params"]["rho_mean"] == 1.0
        assert (out / "diagnostics.csv").read_text().startswith("t,")
        assert len(list((out / "snapshots").glob("*.json"))) == 3

    def test_csv_is_byte_reproducible(self, tmp_path):
        path = write(tmp_path, SIM)
        for name in ("a", "b"):
            assert main(["simulate", "--config", str(path), "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()

    def test_summary_json(self, tmp_path):
        out = tmp_path / "n"
        assert main(["verify-noether", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["passed"] and summary["experiments"][0]["checks"]

    def test_output_directory_precedence(self, tmp_path, monkeypatch):
        cfg = {"output": {"directory": str(tmp_path / "from_config")}}
        path = write(tmp_path, cfg)
        monkeypatch.setenv("RELENLAB_OUT", str(tmp_path / "from_env"))
        assert main(["check-convexity", "--config", str(path)]) == 0
        assert (tmp_path / "from_env" / "summary.json").exists()
        assert main(["check-convexity", "--config", str(path), "--out", str(tmp_path / "from_flag")]) == 0
        assert (tmp_path / "from_flag" / "summary.json").exists()
        monkeypatch.delenv("RELENLAB_OUT")
        assert main(["check-convexity", "--config", str(path)]) == 0
        assert (tmp_path / "from_config" / "summary.json").exists()

    def test_thread_override_does_not_change_results(self, tmp_path, monkeypatch):
        cfg = {"grid": {"N": 128}, "experiment": {"name": "verify-noether", "params": {"samples": 2}}}
        path = write(tmp_path, cfg)
        monkeypatch.setenv("RELENLAB_THREADS", "1")
        assert main(["verify-noether", "--config", str(path), "--out", str(tmp_path / "t1")]) == 0
        monkeypatch.setenv("RELENLAB_THREADS", "3")
        assert main(["verify-noether", "--config", str(path), "--out", str(tmp_path / "t3")]) == 0
        assert (tmp_path / "t1" / "verify-noether.csv").read_bytes() == (tmp_path / "t3" / "verify-noether.csv").read_bytes()
