"""Tests for scenario configuration, orchestration, reports, and the CLI."""

import json

import numpy as np
import pytest

from gyrolab.cli import main as cli_main
from gyrolab.harness import (
    ConfigError,
    ScenarioConfig,
    default_config,
    resolve_geometry,
    run_scenario,
    sweep,
)


def tiny_free_config(**over):
    d = {
        "b_list": [4.0],
        "horizon": 0.25,
        "potential": {"bumps": [], "w_amplitude": 0.0, "w_width": 1.0},
        "numerics": {"n_checkpoints": 4, "marker_count": 2000},
        "w1": {"times": [0.0, 0.25]},
        "density_export_times": [0.0],
        "husimi_export_times": [0.25],
        "test_functions": [
            {"amplitude": 1.0, "center": [0.1, 0.0], "width": 0.4}],
    }
    d.update(over)
    return ScenarioConfig.from_dict(d)


class TestConfig:
    def test_defaults_materialized(self):
        cfg = ScenarioConfig.from_dict({})
        assert cfg.raw == {**default_config(), **{}}
        assert cfg.raw["b_list"] == [4.0, 8.0, 16.0]

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"bogus_knob": 3})

    def test_nested_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"numerics": {"n_max": 8, "typo": 1}})

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"numerics": {"n_max": 4}})  # below spec floor
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"b_list": []})

    def test_pauli_feasibility(self):
        cfg = ScenarioConfig.from_dict({})
        assert [cfg.k_for(b) for b in (4.0, 8.0, 16.0)] == [3, 11, 41]
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict(
                {"b_list": [4.0], "initial": {"k_override": {"4.0": 1}}})

    def test_w1_times_range(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"horizon": 1.0, "w1": {"times": [2.0]}})


class TestGeometry:
    def test_sizing_rules(self):
        cfg = ScenarioConfig.from_dict({})
        geo = resolve_geometry(cfg, 8.0)
        s_lb = geo["l_b"]
        lam = (geo["r_sys"] / s_lb) ** 2 / 2
        assert geo["truncation"].m_ang >= lam + 8 * np.sqrt(lam) - 1
        assert geo["truncation"].n_max >= 8
        assert geo["box"].n_cells >= 256
        expect_L = geo["r_sys"] + 8 * s_lb * np.sqrt(geo["truncation"].n_max + 1)
        assert abs(geo["box"].half_width - expect_L) < 1e-12
        # dt divides the checkpoint interval exactly
        T_seg = cfg.raw["horizon"] / geo["n_checkpoints"]
        assert abs(geo["dt"] * geo["steps_per_checkpoint"] - T_seg) < 1e-15


class TestRunScenario:
    def test_free_lll_stationary(self, tmp_path):
        # V = w = 0 with a LLL state: both dynamics stationary, W1 <= 2 cells
        cfg = tiny_free_config()
        rep = run_scenario(cfg, 4.0, out_dir=tmp_path / "b4")
        cell = rep.geometry["box"].spacing
        for row in rep.metric_rows:
            assert row["w1_quantum_vs_drift"] <= 2.0 * cell
        assert abs(rep.observable_log[-1]["trace"] - 1.0) <= 1e-10
        e = [o["energy"] for o in rep.observable_log]
        assert abs(e[-1] - e[0]) <= 1e-10
        assert (tmp_path / "b4" / "report.json").exists()
        assert (tmp_path / "b4" / "metrics.csv").exists()
        assert (tmp_path / "b4" / "density_t0.0000.csv").exists()
        assert (tmp_path / "b4" / "husimi_t0.2500.csv").exists()

    def test_radial_scenario_stationary(self, tmp_path):
        # radial V, radial single-state data, w = 0: densities stationary
        cfg = ScenarioConfig.from_dict({
            "b_list": [2.0],
            "horizon": 0.25,
            "potential": {"bumps": [{"amplitude": 0.15, "center": [0.0, 0.0],
                                     "width": 1.0}],
                          "w_amplitude": 0.0},
            "initial": {"k_override": {"2.0": 1}},
            "numerics": {"n_checkpoints": 4, "marker_count": 4000},
            "w1": {"times": [0.25]},
            "density_export_times": [],
            "husimi_export_times": [],
            "test_functions": [
                {"amplitude": 1.0, "center": [0.2, 0.0], "width": 0.5}],
        })
        rep = run_scenario(cfg, 2.0, out_dir=None)
        cell = rep.geometry["box"].spacing
        assert rep.metric_rows[0]["w1_quantum_vs_drift"] <= 2.0 * cell
        # the quantum density only breathes radially (level mixing at this
        # coarse b); the weak residual stays well below a moving scenario's
        assert abs(rep.residuals["phi_0"]) <= 0.02

    def test_report_embeds_resolved_config(self, tmp_path):
        cfg = tiny_free_config()
        run_scenario(cfg, 4.0, out_dir=tmp_path / "r")
        payload = json.loads((tmp_path / "r" / "report.json").read_text())
        assert payload["config"]["numerics"]["n_max"] == 8
        assert payload["config"]["seed"] == default_config()["seed"]
        assert payload["run"]["complete"] is True


def _read_csv_without_wallclock(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    keep = [i for i, h in enumerate(header) if h != "wallclock"]
    return [",".join(line.split(",")[i] for i in keep) for line in lines]


class TestDeterminism:
    def test_identical_outputs(self, tmp_path):
        cfg = tiny_free_config()
        run_scenario(cfg, 4.0, out_dir=tmp_path / "one")
        run_scenario(cfg, 4.0, out_dir=tmp_path / "two")
        for name in ("density_t0.0000.csv", "husimi_t0.2500.csv"):
            a = (tmp_path / "one" / name).read_bytes()
            b = (tmp_path / "two" / name).read_bytes()
            assert a == b
        # metrics rows are identical apart from the wallclock column
        a = _read_csv_without_wallclock(tmp_path / "one" / "metrics.csv")
        b = _read_csv_without_wallclock(tmp_path / "two" / "metrics.csv")
        assert a == b


class TestSweep:
    def test_synthetic_injection_recovers_rate(self, tmp_path):
        cfg = ScenarioConfig.from_dict({
            "synthetic_injection": {"prefactor": 3.0, "exponent": 2.0 / 7.0,
                                    "noise": 0.01},
        })
        result = sweep(cfg, out_dir=tmp_path)
        for key in ("residual", "w1_final"):
            assert abs(result["fits"][key]["exponent"] - 2.0 / 7.0) <= 0.05
        assert (tmp_path / "sweep.json").exists()
        assert (tmp_path / "sweep.csv").exists()

    def test_failed_b_recorded(self, tmp_path):
        cfg = tiny_free_config(b_list=[4.0],
                               initial={"k_override": {"4.0": 3},
                                        "spacing_in_lb": 2.6, "tail_tol": 1e-30})
        result = sweep(cfg, out_dir=tmp_path)
        assert 4.0 in result["failures"]
        assert result["rows"] == []


class TestCli:
    def test_validate_ok(self, tmp_path, capsys):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"b_list": [4.0]}))
        assert cli_main(["validate-config", "--config", str(p)]) == 0
        out = capsys.readouterr().out
        assert json.loads(out)["b_list"] == [4.0]

    def test_validate_bad_exit_2(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"nope": 1}))
        assert cli_main(["validate-config", "--config", str(p)]) == 2

    def test_broken_json_exit_2(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        assert cli_main(["validate-config", "--config", str(p)]) == 2

    def test_sweep_synthetic(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({
            "synthetic_injection": {"prefactor": 1.0, "exponent": 0.3,
                                    "noise": 0.0},
            "output_dir": str(tmp_path / "out"),
        }))
        assert cli_main(["sweep", "--config", str(p)]) == 0
        assert (tmp_path / "out" / "sweep.json").exists()

    def test_b_override(self, tmp_path, capsys):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({}))
        assert cli_main(["validate-config", "--config", str(p), "--b", "8"]) == 0
        assert json.loads(capsys.readouterr().out)["b_list"] == [8.0]
