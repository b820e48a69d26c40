import json
import math
import os

import numpy as np
import pytest

from spinphonon import cli
from spinphonon.config import ConfigError, build_config, emit_toml, parse_config_text


class TestConfig:
    def test_defaults_match_reference_tables(self):
        cfg = build_config({}, kind="odro")
        assert cfg.system["omega_m"] == 5.6
        assert cfg.system["g"] == 0.257
        assert cfg.system["delta"] == 0.23
        assert cfg.system["omega1"] == 0.5
        assert cfg.system["omega2"] == 0.023
        assert cfg.decoherence.gamma_m1 == 1e-6
        assert cfg.decoherence.gamma_e1 == 0.01
        assert cfg.decoherence.gamma_e_phi == 0.02
        assert cfg.decoherence.gamma_s1 == 1e-9
        assert cfg.decoherence.gamma_s_phi == 1e-6
        assert cfg.integrator.rel_tol == 1e-8
        spec = cfg.system_spec()
        assert spec.n_defects == 1

    def test_resonant_kinds_drop_excited_dephasing(self):
        cfg = build_config({}, kind="cz")
        assert cfg.decoherence.gamma_e_phi == 0.0
        assert cfg.system["n_defects"] == 2
        cfg2 = build_config({"decoherence": {"gamma_e_phi": 0.005}}, kind="cz")
        assert cfg2.decoherence.gamma_e_phi == 0.005

    def test_negative_rate_rejected_with_path(self):
        with pytest.raises(ConfigError, match=r"decoherence\.gamma_m1"):
            build_config({"decoherence": {"gamma_m1": -1e-6}}, kind="odro")

    def test_unknown_key_rejected_with_path(self):
        with pytest.raises(ConfigError, match=r"run\.bogus"):
            build_config({"run": {"bogus": 1}}, kind="odro")
        with pytest.raises(ConfigError, match="lasersauce"):
            build_config({"lasersauce": True}, kind="odro")

    def test_kind_constraints(self):
        with pytest.raises(ConfigError, match="n_defects"):
            build_config({"system": {"n_defects": 2}}, kind="odro")
        with pytest.raises(ConfigError, match="n_defects"):
            build_config({"system": {"n_defects": 1}}, kind="dicke")

    def test_desk_scale_warning(self):
        with pytest.warns(UserWarning, match="desk-scale"):
            build_config({"system": {"n_defects": 4}}, kind="dicke")

    def test_bounds_checks(self):
        with pytest.raises(ConfigError, match=r"system\.omega_m"):
            build_config({"system": {"omega_m": -5.6}}, kind="odro")
        with pytest.raises(ConfigError, match=r"system\.phonon_levels"):
            build_config({"system": {"phonon_levels": 1}}, kind="odro")
        with pytest.raises(ConfigError, match=r"integrator\.rel_tol"):
            build_config({"integrator": {"rel_tol": 0.0}}, kind="odro")

    def test_roundtrip_effective_config(self):
        cfg = build_config({"seed": 7, "run": {"n_samples": 64}}, kind="odro")
        text = emit_toml(cfg.effective_dict())
        cfg2 = parse_config_text(text)
        assert cfg2.effective_dict() == cfg.effective_dict()

    def test_toml_parse_error(self):
        with pytest.raises(ConfigError, match="TOML"):
            parse_config_text("kind = [unclosed")

    def test_convention_choices(self):
        with pytest.raises(ConfigError, match=r"decoherence\.convention"):
            build_config({"decoherence": {"convention": "weird"}}, kind="odro")


class TestSummarySchema:
    def test_schema_is_valid_jsonschema(self):
        import jsonschema

        schema = cli.summary_schema()
        jsonschema.Draft7Validator.check_schema(schema)

    def test_validate_summary_rejects_missing(self):
        with pytest.raises(ValueError, match="missing required"):
            cli.validate_summary({"schema": cli.SUMMARY_SCHEMA_NAME})


class TestCliRuns:
    def test_pulse_design_run(self, tmp_path):
        rc = cli.main(["pulse-design", "--out", str(tmp_path), "--plot"])
        assert rc == 0
        out = tmp_path / "pulse-design"
        summary = json.loads((out / "summary.json").read_text())
        assert summary["results"]["T0_ns"] == pytest.approx(5833.333, abs=0.01)
        assert summary["results"]["delta_gamma_rad"] == pytest.approx(math.pi, abs=1e-6)
        assert (out / "schedule.csv").exists()
        assert (out / "schedule.svg").exists()
        assert (out / "effective_config.toml").exists()
        import jsonschema

        jsonschema.validate(summary, cli.summary_schema())

    def test_darkstate_run_equal_amplitudes(self, tmp_path, capsys):
        rc = cli.main(["darkstate", "--out", str(tmp_path)])
        assert rc == 0
        summary = json.loads((tmp_path / "darkstate" / "summary.json").read_text())
        amps = summary["results"]["amplitudes"]
        assert amps[0]["re"] == pytest.approx(1 / math.sqrt(2))
        assert amps[1]["re"] == pytest.approx(1 / math.sqrt(2))

    def test_validate_only(self, tmp_path, capsys):
        rc = cli.main(["odro", "--validate-only"])
        assert rc == 0
        text = capsys.readouterr().out
        assert 'kind = "odro"' in text
        parse_config_text(text)

    def test_bad_config_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[decoherence]\ngamma_m1 = -1.0\n")
        rc = cli.main(["odro", "--config", str(bad)])
        assert rc == cli.EXIT_CONFIG
        assert "gamma_m1" in capsys.readouterr().err

    def test_missing_config_file(self, capsys):
        rc = cli.main(["odro", "--config", "/nonexistent/x.toml"])
        assert rc == cli.EXIT_CONFIG

    def test_byte_identical_reruns(self, tmp_path):
        conf = tmp_path / "run.toml"
        conf.write_text('seed = 3\n[run]\nduration = 60.0\nn_samples = 16\n')
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert cli.main(["odro", "--config", str(conf), "--out", str(out_a)]) == 0
        assert cli.main(["odro", "--config", str(conf), "--out", str(out_b)]) == 0
        csv_a = (out_a / "odro" / "trace.csv").read_bytes()
        csv_b = (out_b / "odro" / "trace.csv").read_bytes()
        assert csv_a == csv_b
        cfg_a = (out_a / "odro" / "effective_config.toml").read_bytes()
        cfg_b = (out_b / "odro" / "effective_config.toml").read_bytes()
        assert cfg_a == cfg_b

    def test_env_var_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_OUTDIR, str(tmp_path / "envroot"))
        rc = cli.main(["darkstate"])
        assert rc == 0
        assert (tmp_path / "envroot" / "darkstate" / "summary.json").exists()

    def test_leakage_run_small(self, tmp_path):
        conf = tmp_path / "leak.toml"
        conf.write_text("[run]\nn_samples = 61\n")
        rc = cli.main(["leakage", "--config", str(conf), "--out", str(tmp_path)])
        assert rc == 0
        summary = json.loads((tmp_path / "leakage" / "summary.json").read_text())
        assert summary["results"]["below_bound"] is True
        assert summary["results"]["max_leakage"] < 32 / 637

    def test_seed_flag_overrides(self, tmp_path):
        conf = tmp_path / "run.toml"
        conf.write_text("seed = 1\n")
        rc = cli.main(["darkstate", "--config", str(conf), "--out", str(tmp_path), "--seed", "42"])
        assert rc == 0
        summary = json.loads((tmp_path / "darkstate" / "summary.json").read_text())
        assert summary["seed"] == 42
