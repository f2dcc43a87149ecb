from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from routegame import ConfigurationError, LuenbergerSpec, Scenario
from routegame.cli import (config_digest, config_to_dict, load_config, main)

REPO = Path(__file__).resolve().parent.parent
PAPER_CONFIG = REPO / "configs" / "paper_affine.yaml"
PAPER_CONFIG_NU1 = REPO / "configs" / "paper_affine_nu1.yaml"


def write_config(path: Path, **overrides) -> Path:
    raw = yaml.safe_load(PAPER_CONFIG.read_text())
    raw.update(overrides)
    for key, val in list(raw.items()):
        if val is None:
            del raw[key]
    target = path / "config.yaml"
    target.write_text(yaml.safe_dump(raw))
    return target


class TestLoadConfig:
    def test_shipped_benchmark_config(self):
        cfg = load_config(PAPER_CONFIG)
        assert cfg.m_max == pytest.approx(51.0)
        assert cfg.signal.nu == 0.5
        assert cfg.prior.mu0 == pytest.approx([0.6, 0.4])
        assert cfg.m_init == 25.5
        assert cfg.theta_hat_init == 0.25
        assert cfg.rounds == 5000
        assert np.array_equal(cfg.disobedience.matrix, [[0, 1], [1, 0]])
        assert cfg.solver_tol == 1e-8
        assert cfg.scenario == Scenario.baseline()

    def test_negative_constant_coefficient_rejected(self, tmp_path):
        path = write_config(tmp_path, coeffs=[[[-5, 25], [20, 15]], [[4, 2], [1, 2]]])
        with pytest.raises(ConfigurationError, match="nonnegative"):
            load_config(path)

    def test_default_disobedience_is_swap(self, tmp_path):
        path = write_config(tmp_path)
        cfg = load_config(path)
        assert np.array_equal(cfg.disobedience.matrix, [[0, 1], [1, 0]])

    def test_signal_row_sum_named_by_state(self, tmp_path):
        path = write_config(tmp_path, signal=[[0.48, 0.0], [0.0, 0.5]])
        with pytest.raises(ConfigurationError, match="signal row omega1 sums to 0.48"):
            load_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, bogus=1)
        with pytest.raises(ConfigurationError, match="bogus"):
            load_config(path)

    def test_missing_required_key(self, tmp_path):
        raw = yaml.safe_load(PAPER_CONFIG.read_text())
        del raw["prior"]
        target = tmp_path / "config.yaml"
        target.write_text(yaml.safe_dump(raw))
        with pytest.raises(ConfigurationError, match="prior"):
            load_config(target)

    def test_parse_error_carries_location(self, tmp_path):
        target = tmp_path / "broken.yaml"
        target.write_text("states: [omega1\ncoeffs: 3\n")
        with pytest.raises(ConfigurationError, match="line"):
            load_config(target)

    def test_cross_checks(self, tmp_path):
        path = write_config(tmp_path, links=3)
        with pytest.raises(ConfigurationError, match="links"):
            load_config(path)
        path = write_config(tmp_path, degree=2)
        with pytest.raises(ConfigurationError, match="degree"):
            load_config(path)

    def test_scenario_and_estimator_forms(self, tmp_path):
        path = write_config(tmp_path, scenario={"discounted": 0.9},
                            estimator={"luenberger": 0.0})
        cfg = load_config(path)
        assert cfg.scenario == Scenario.discounted(0.9)
        assert cfg.estimator == LuenbergerSpec(gain=(0.0, 0.0))

    def test_beta_schedule_exclusive(self, tmp_path):
        path = write_config(tmp_path, beta=0.5, beta_schedule=[0.4, 0.5])
        with pytest.raises(ConfigurationError, match="beta"):
            load_config(path)

    def test_flag_style_scenario_strings(self):
        from routegame.cli import _parse_scenario
        assert _parse_scenario("baseline") == Scenario.baseline()
        assert _parse_scenario("dynamic-nu") == Scenario.dynamic_nu()
        assert _parse_scenario("dynamic_nu") == Scenario.dynamic_nu()
        assert _parse_scenario("discounted=0.9") == Scenario.discounted(0.9)
        with pytest.raises(ConfigurationError):
            _parse_scenario("weekly")

    def test_flag_style_estimator_strings(self):
        from routegame.cli import _parse_estimator
        from routegame import SmoothingSpec
        assert isinstance(_parse_estimator("smoothing", 2), SmoothingSpec)
        assert _parse_estimator("luenberger", 2) == LuenbergerSpec(gain=(0.0, 0.0))
        assert _parse_estimator("luenberger=0.5", 3) == LuenbergerSpec(gain=(0.5, 0.5, 0.5))
        with pytest.raises(ConfigurationError):
            _parse_estimator("kalman", 2)

    def test_beta_schedule_must_cover_rounds(self, tmp_path):
        path = write_config(tmp_path, beta=None, beta_schedule=[0.4, 0.5, 0.6], rounds=10)
        with pytest.raises(ConfigurationError, match="beta schedule has 3 entries"):
            load_config(path)
        path = write_config(tmp_path, beta=None, beta_schedule=[0.4, 0.5, 0.6], rounds=3)
        cfg = load_config(path)
        assert cfg.estimator.schedule.values == (0.4, 0.5, 0.6)


class TestDigest:
    def test_round_trip_reproduces_digest(self, tmp_path):
        cfg = load_config(PAPER_CONFIG)
        dump = tmp_path / "resolved.yaml"
        dump.write_text(yaml.safe_dump(config_to_dict(cfg)))
        again = load_config(dump)
        assert config_digest(again) == config_digest(cfg)

    def test_digest_changes_with_any_field(self, tmp_path):
        base = config_digest(load_config(write_config(tmp_path)))
        variants = [
            dict(seed=1),
            dict(rounds=10),
            dict(theta_hat_init=0.3),
            dict(m_init=25.0),
            dict(solver_tol=1e-7),
            dict(scenario="dynamic_nu"),
            dict(prior=[0.7, 0.3]),
        ]
        for overrides in variants:
            digest = config_digest(load_config(write_config(tmp_path, **overrides)))
            assert digest != base, overrides
        assert config_digest(load_config(write_config(tmp_path))) == base


class TestSimulateCommand:
    def test_outputs_and_schema(self, tmp_path, capsys):
        out = tmp_path / "out"
        rc = main(["simulate", "--config", str(PAPER_CONFIG), "--rounds", "40",
                   "--seed", "3", "--out", str(out)])
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"] == [3]
        assert manifest["config_digest"]
        assert manifest["artifact_version"]
        run = manifest["runs"][0]
        assert run["seed"] == 3 and run["wall_clock_s"] > 0
        with open(out / run["path"]) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["k", "omega", "theta", "theta_hat", "e_theta", "u", "m",
                           "x_1", "x_2", "xhat_1", "xhat_2", "y_1", "y_2",
                           "ell_1", "ell_2", "flow_gap"]
        assert len(rows) == 41
        assert rows[1][0] == "1"
        assert rows[1][1] in ("omega1", "omega2")
        # resolved dump must itself be a loadable config with the same digest
        resolved = load_config(out / manifest["resolved_config"])
        assert config_digest(resolved) == manifest["config_digest"]

    def test_three_link_schema(self, tmp_path):
        import numpy as np
        from dataclasses import replace
        from routegame.dynamics import simulate as run, write_trajectory_csv
        from conftest import random_affine_config
        cfg = replace(random_affine_config(np.random.default_rng(0), 3), rounds=5)
        target = tmp_path / "n3.csv"
        write_trajectory_csv(target, run(cfg), cfg)
        with open(target) as fh:
            header = next(csv.reader(fh))
        assert header == ["k", "omega", "theta", "theta_hat", "e_theta", "u", "m",
                          "x_1", "x_2", "x_3", "xhat_1", "xhat_2", "xhat_3",
                          "y_1", "y_2", "y_3", "ell_1", "ell_2", "ell_3", "flow_gap"]

    def test_repeated_seed_writes_identical_files(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["simulate", "--config", str(PAPER_CONFIG), "--rounds", "60",
                   "--seed", "1", "--seed", "1", "--out", str(out)])
        assert rc == 0
        a = (out / "run000_seed1.csv").read_bytes()
        b = (out / "run001_seed1.csv").read_bytes()
        assert a == b

    def test_zero_rounds_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--config", str(PAPER_CONFIG), "--rounds", "0",
                  "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_scenario_flag_overrides_file(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["simulate", "--config", str(PAPER_CONFIG), "--rounds", "30",
                   "--scenario", "discounted=0.9", "--out", str(out)])
        assert rc == 0
        resolved = yaml.safe_load((out / "resolved_config.yaml").read_text())
        assert resolved["scenario"] == {"discounted": 0.9}

    def test_estimator_flag_overrides_file(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["simulate", "--config", str(PAPER_CONFIG), "--rounds", "30",
                   "--estimator", "luenberger=0.0", "--out", str(out)])
        assert rc == 0
        resolved = yaml.safe_load((out / "resolved_config.yaml").read_text())
        assert resolved["estimator"] == {"luenberger": [0.0, 0.0]}

    def test_envelope_columns(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["simulate", "--config", str(PAPER_CONFIG), "--rounds", "30",
                   "--seed", "5", "--out", str(out), "--emit-envelope"])
        assert rc == 0
        with open(out / "run000_seed5.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][-2:] == ["e_lower", "e_upper"]
        e_theta = float(rows[1][4])
        assert float(rows[1][-2]) == e_theta and float(rows[1][-1]) == e_theta
        for row in rows[2:]:
            assert float(row[-2]) <= float(row[4]) <= float(row[-1])

    def test_envelope_needs_smoothing_estimator(self, tmp_path, capsys):
        rc = main(["simulate", "--config", str(PAPER_CONFIG), "--rounds", "10",
                   "--estimator", "luenberger=0.0", "--emit-envelope",
                   "--out", str(tmp_path / "out")])
        assert rc == 1
        assert "smoothing" in capsys.readouterr().err

    def test_env_var_overrides_out_dir(self, tmp_path, monkeypatch):
        flagged = tmp_path / "flagged"
        forced = tmp_path / "forced"
        monkeypatch.setenv("ROUTEGAME_OUT", str(forced))
        rc = main(["simulate", "--config", str(PAPER_CONFIG), "--rounds", "10",
                   "--out", str(flagged)])
        assert rc == 0
        assert forced.exists() and not flagged.exists()

    def test_missing_config_is_error_exit(self, tmp_path, capsys):
        rc = main(["simulate", "--config", str(tmp_path / "nope.yaml"),
                   "--out", str(tmp_path)])
        assert rc == 1
        assert "error" in capsys.readouterr().err


class TestCheckObedienceCommand:
    def test_benchmark_signal_obedient(self, capsys):
        rc = main(["check-obedience", "--config", str(PAPER_CONFIG)])
        assert rc == 0
        assert "obedient" in capsys.readouterr().out

    def test_full_participation_obedient(self):
        assert main(["check-obedience", "--config", str(PAPER_CONFIG_NU1)]) == 0

    def test_worse_link_signal_exit_two(self, tmp_path, capsys):
        path = write_config(
            tmp_path,
            coeffs=[[[1.0, 2.0], [1.0, 2.0]]],
            signal=[[0.0, 0.5], [0.0, 0.5]],
            m_init=0.0,
            degree=None,
        )
        rc = main(["check-obedience", "--config", str(path)])
        assert rc == 2
        assert "NOT obedient" in capsys.readouterr().out

    def test_json_report(self, capsys):
        rc = main(["check-obedience", "--config", str(PAPER_CONFIG), "--json"])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["obedient"] is True
        assert report["y0"]["y"] == pytest.approx([0.5, 0.0], abs=1e-8)
        assert len(report["obedience_slacks"]) == 2

    def test_malformed_config_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("not: [valid\n")
        rc = main(["check-obedience", "--config", str(bad)])
        assert rc == 1
        assert "error" in capsys.readouterr().err
