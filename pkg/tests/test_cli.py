"""End-to-end tests of the command line driver and run configuration.

Each case drives main() in process with a throwaway output directory and
checks the three externally visible contracts: exit codes (0 all
certificates pass, 2 certificate failure, 1 operational error), the file
set written per run, and byte determinism of report.json modulo timing.
"""

import json
import math

import numpy as np
import pytest

from robinslab.cli import main, run
from robinslab.domain import Discretization, SpectralField3
from robinslab.errors import ConfigError
from robinslab.report import (
    ToleranceSettings,
    load_config,
    parse_config,
    read_norms_csv,
    read_report,
    read_snapshot,
    write_norms_csv,
    write_snapshot,
)

A = math.pi

BASE = {
    "params": {"a": A, "nu": 1.0, "gamma": 2.0, "beta": 1.0, "s": 2},
    "disc": {"k_max": 2, "n_z": 128, "l_z": 20.0, "n_t": 5},
    "seed": 3,
    "constants": {"growth_constant": 1.5},
    "initial_data": {"w": {"family": "eigenmode", "mode": [1, 1], "amplitude": 1.0}},
}


def write_config(tmp_path, name="cfg.json", **overrides):
    cfg = json.loads(json.dumps(BASE))
    for key, value in overrides.items():
        if isinstance(value, dict) and key in cfg:
            cfg[key].update(value)
        else:
            cfg[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestConfigParsing:
    def test_unknown_top_level_key_rejected(self, tmp_path):
        path = write_config(tmp_path, plotting=True)
        with pytest.raises(ConfigError, match="plotting"):
            load_config(path)

    def test_unknown_nested_key_rejected(self, tmp_path):
        path = write_config(tmp_path, params={"viscosity": 2.0})
        with pytest.raises(ConfigError, match="viscosity"):
            load_config(path)

    def test_missing_required_key_rejected(self, tmp_path):
        cfg = json.loads(json.dumps(BASE))
        del cfg["params"]["nu"]
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        with pytest.raises(ConfigError, match="nu"):
            load_config(path)

    def test_range_violations_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="params"):
            load_config(write_config(tmp_path, params={"nu": -1.0}))
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, disc={"n_z": 2}))
        with pytest.raises(ConfigError, match="growth_constant"):
            load_config(write_config(tmp_path, constants={"growth_constant": 0.5}))
        with pytest.raises(ConfigError, match="seed"):
            load_config(write_config(tmp_path, seed=-1))

    def test_truncation_tail_checked_at_parse_time(self, tmp_path):
        # e^{-2*3} = 2.5e-3 >> tail_tol: the grid cannot support the decay
        path = write_config(tmp_path, disc={"l_z": 3.0})
        with pytest.raises(ConfigError):
            load_config(path)

    def test_bad_json_is_a_config_error(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(path)

    def test_unknown_family_and_kind_rejected(self, tmp_path):
        path = write_config(
            tmp_path, initial_data={"w": {"family": "vortex-sheet"}}
        )
        with pytest.raises(ConfigError, match="family"):
            load_config(path)
        path = write_config(
            tmp_path, initial_data={"w": {"family": "random", "kind": "wavelet"}}
        )
        with pytest.raises(ConfigError, match="kind"):
            load_config(path)

    def test_boolean_is_not_a_number(self, tmp_path):
        path = write_config(tmp_path, params={"nu": True})
        with pytest.raises(ConfigError, match="number"):
            load_config(path)

    def test_seed_override(self, tmp_path):
        cfg = load_config(write_config(tmp_path), seed_override=99)
        assert cfg.seed == 99
        assert load_config(write_config(tmp_path)).seed == 3

    def test_tolerance_ranges(self):
        with pytest.raises(ConfigError):
            ToleranceSettings(picard_tol=0.0)
        with pytest.raises(ConfigError):
            ToleranceSettings(tail_tol=2.0)

    def test_parse_rejects_non_record_root(self):
        with pytest.raises(ConfigError):
            parse_config([1, 2, 3])


class TestExitCodes:
    def test_picard_zero_data_exits_clean(self, tmp_path):
        path = write_config(
            tmp_path,
            initial_data={"v": {"family": "zero"}, "w": {"family": "zero"}},
        )
        assert main(
            ["--command", "picard", "--config", str(path), "--out", str(tmp_path / "run")]
        ) == 0

    def test_resonant_beta_exits_one_naming_mode(self, tmp_path, capsys):
        path = write_config(tmp_path, params={"beta": math.sqrt(2.0)})
        code = main(
            ["--command", "elliptic", "--config", str(path), "--out", str(tmp_path / "run")]
        )
        captured = capsys.readouterr()
        assert code == 1
        assert "resonance error" in captured.err
        assert "(1, 1)" in captured.err

    def test_nearby_admissible_beta_succeeds(self, tmp_path):
        path = write_config(tmp_path, params={"beta": math.sqrt(2.0) + 1e-3})
        assert main(
            ["--command", "elliptic", "--config", str(path), "--out", str(tmp_path / "run")]
        ) == 0

    def test_config_error_exits_one(self, tmp_path, capsys):
        path = write_config(tmp_path, params={"nu": -1.0})
        code = main(
            ["--command", "heat", "--config", str(path), "--out", str(tmp_path / "run")]
        )
        assert code == 1
        assert "config error" in capsys.readouterr().err

    def test_certificate_failure_exits_two(self, tmp_path, capsys):
        # the two heat routes agree to 5e-3 only from n_z ~ 512 up; this
        # coarse random-data run must fail the route certificate honestly
        path = write_config(
            tmp_path,
            disc={"k_max": 2, "n_z": 129, "l_z": 20.0, "n_t": 5},
            initial_data={"w": {"family": "random", "kind": "robin", "amplitude": 1.0}},
        )
        code = main(
            ["--command", "heat", "--config", str(path), "--out", str(tmp_path / "run")]
        )
        assert code == 2
        assert "FAIL heat-route-agreement" in capsys.readouterr().out

    def test_missing_config_flag_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="--config"):
            run("picard", None, tmp_path / "run")

    def test_eigenmode_outside_band_is_config_error(self, tmp_path, capsys):
        path = write_config(
            tmp_path, initial_data={"w": {"family": "eigenmode", "mode": [9, 9]}}
        )
        code = main(
            ["--command", "elliptic", "--config", str(path), "--out", str(tmp_path / "run")]
        )
        assert code == 1
        assert "config error" in capsys.readouterr().err


class TestRunArtifacts:
    def test_elliptic_writes_report_norms_snapshot(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "run"
        assert main(["--command", "elliptic", "--config", str(path), "--out", str(out)]) == 0
        report = read_report(out / "report.json")
        assert report["command"] == "elliptic"
        assert report["config"]["seed"] == 3
        assert {"certificates", "error_budget", "measured_constants",
                "norm_timeseries", "timing"} <= set(report)
        series = read_norms_csv(out / "norms.csv")
        assert list(series) == ["t", "v_norm_hs1", "w_norm_hs", "energy"]
        assert series["t"].shape == (1,)
        assert (out / "snapshots" / "solution.csv").exists()

    def test_heat_norm_rows_match_time_grid(self, tmp_path):
        path = write_config(tmp_path, disc={"n_z": 513, "n_t": 5})
        out = tmp_path / "run"
        assert main(["--command", "heat", "--config", str(path), "--out", str(out)]) == 0
        series = read_norms_csv(out / "norms.csv")
        assert series["t"].shape == (5,)
        np.testing.assert_allclose(series["t"], np.linspace(0.0, 1.0, 5))
        np.testing.assert_allclose(series["energy"], series["w_norm_hs"] ** 2, rtol=1e-15)

    def test_seed_flag_overrides_and_is_echoed(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "run"
        main(["--command", "elliptic", "--config", str(path), "--out", str(out),
              "--seed", "42"])
        assert read_report(out / "report.json")["config"]["seed"] == 42

    def test_convergence_table_written(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "run"
        assert main(["--command", "convergence", "--config", str(path), "--out", str(out)]) == 0
        lines = (out / "convergence.csv").read_text().strip().splitlines()
        assert lines[0] == "sweep,n_z,error"
        assert sum(1 for l in lines if l.startswith("elliptic-eigenfunction")) == 4

    def test_calibrate_reports_both_constants(self, tmp_path):
        path = write_config(tmp_path, disc={"k_max": 2, "n_z": 129})
        out = tmp_path / "run"
        assert main(["--command", "calibrate", "--config", str(path), "--out", str(out)]) == 0
        constants = read_report(out / "report.json")["measured_constants"]
        assert constants["elliptic_constant"] > 0
        assert constants["growth_constant"] >= 1.0

    def test_file_family_roundtrip(self, tmp_path):
        disc = Discretization(k_max=2, n_z=128, l_z=20.0, n_t=5)
        coeffs = np.zeros((2, 2, 128))
        coeffs[0, 0] = np.exp(-2.0 * disc.z)
        field = SpectralField3(coeffs, disc)
        write_snapshot(tmp_path / "w0.csv", field)
        again = read_snapshot(tmp_path / "w0.csv", disc)
        np.testing.assert_array_equal(again.coeffs, field.coeffs)
        path = write_config(
            tmp_path, initial_data={"w": {"family": "file", "path": "w0.csv"}}
        )
        assert main(
            ["--command", "elliptic", "--config", str(path), "--out", str(tmp_path / "run")]
        ) == 0

    def test_norms_csv_roundtrip_full_precision(self, tmp_path):
        t = [0.0, 1.0 / 3.0]
        v = [math.pi, math.e]
        w = [1.0 / 7.0, 2.0 / 7.0]
        e = [x * x for x in w]
        write_norms_csv(tmp_path / "norms.csv", t, v, w, e)
        series = read_norms_csv(tmp_path / "norms.csv")
        np.testing.assert_array_equal(series["t"], t)
        np.testing.assert_array_equal(series["v_norm_hs1"], v)
        np.testing.assert_array_equal(series["w_norm_hs"], w)
        np.testing.assert_array_equal(series["energy"], e)


class TestVerifyCommand:
    def test_verify_agrees_with_fresh_run(self, tmp_path):
        path = write_config(tmp_path, disc={"n_z": 513, "n_t": 5})
        out = tmp_path / "run"
        assert main(["--command", "heat", "--config", str(path), "--out", str(out)]) == 0
        assert main(["--command", "verify", "--out", str(out)]) == 0
        verify = read_report(out / "verify_report.json")
        names = [c["name"] for c in verify["certificates"]]
        assert "stored-flags-consistent" in names
        assert "gronwall-recheck" in names
        assert all(c["passed"] for c in verify["certificates"])

    def test_verify_detects_tampered_flags(self, tmp_path):
        path = write_config(tmp_path, disc={"n_z": 513, "n_t": 5})
        out = tmp_path / "run"
        main(["--command", "heat", "--config", str(path), "--out", str(out)])
        report = read_report(out / "report.json")
        report["certificates"][0]["passed"] = False
        (out / "report.json").write_text(json.dumps(report))
        assert main(["--command", "verify", "--out", str(out)]) == 2

    def test_verify_without_report_is_config_error(self, tmp_path, capsys):
        assert main(["--command", "verify", "--out", str(tmp_path / "empty")]) == 1
        assert "config error" in capsys.readouterr().err


class TestDeterminism:
    @staticmethod
    def stripped_bytes(path):
        report = read_report(path)
        report.pop("timing")
        return json.dumps(report, sort_keys=True, indent=2).encode()

    @pytest.mark.parametrize("command", ["elliptic", "heat", "picard", "calibrate"])
    def test_same_config_same_seed_same_report(self, tmp_path, command):
        path = write_config(
            tmp_path,
            disc={"k_max": 2, "n_z": 513, "n_t": 5},
            initial_data={
                "v": {"family": "random", "kind": "vspace", "amplitude": 0.1},
                "w": {"family": "random", "kind": "robin", "amplitude": 0.05},
            },
        )
        outs = []
        for stem in ("first", "second"):
            out = tmp_path / stem
            assert main(["--command", command, "--config", str(path), "--out", str(out)]) == 0
            outs.append(out / "report.json")
        assert self.stripped_bytes(outs[0]) == self.stripped_bytes(outs[1])

    def test_different_seed_changes_random_run(self, tmp_path):
        path = write_config(
            tmp_path,
            disc={"n_z": 513, "n_t": 5},
            initial_data={"w": {"family": "random", "kind": "robin", "amplitude": 1.0}},
        )
        first, second = tmp_path / "a", tmp_path / "b"
        main(["--command", "heat", "--config", str(path), "--out", str(first)])
        main(["--command", "heat", "--config", str(path), "--out", str(second),
              "--seed", "77"])
        assert self.stripped_bytes(first / "report.json") != self.stripped_bytes(
            second / "report.json"
        )
