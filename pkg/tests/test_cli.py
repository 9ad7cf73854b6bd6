import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from fmm_lab.cli import main

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, body: str) -> str:
    p = tmp_path / "exp.toml"
    p.write_text(body)
    return str(p)


MODEL = """
[model]
u = [1.0]
density = { kind = "uniform", R = 10.0 }
seed = 11
"""


class TestExitTaxonomy:
    def test_unknown_subcommand_is_operational(self, capsys):
        assert main(["definitely-not-a-command"]) == 1
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file(self, capsys):
        assert main(["constants", "--config", "/nonexistent.toml"]) == 1

    def test_missing_field_names_path(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MODEL)  # no run.s
        assert main(["constants", "--config", cfg, "--out", str(tmp_path)]) == 1
        assert "run.s" in capsys.readouterr().err

    def test_invalid_density_kind(self, tmp_path, capsys):
        cfg = write_config(tmp_path, """
[model]
u = [1.0]
density = { kind = "gaussian", R = 1.0 }
[run]
s = 0.5
""")
        assert main(["constants", "--config", cfg, "--out", str(tmp_path)]) == 1
        assert "model.density.kind" in capsys.readouterr().err


class TestConstantsCommand:
    def test_threshold_in_json(self, tmp_path):
        cfg = write_config(tmp_path, MODEL + "\n[run]\ns = 0.5\n")
        out = tmp_path / "o"
        assert main(["constants", "--config", cfg, "--out", str(out)]) == 0
        payload = json.loads((out / "constants.json").read_text())
        assert payload["constants"]["disorder_threshold"] == 0.0625
        assert "config_hash" in payload and "version" in payload
        meta = json.loads((out / "constants.meta.json").read_text())
        assert meta["config_hash"] == payload["config_hash"]
        assert "timestamp" in meta and "wall_time_s" in meta

    def test_seed_override_changes_hash(self, tmp_path):
        cfg = write_config(tmp_path, MODEL + "\n[run]\ns = 0.5\n")
        o1, o2 = tmp_path / "a", tmp_path / "b"
        main(["constants", "--config", cfg, "--out", str(o1)])
        main(["constants", "--config", cfg, "--out", str(o2), "--seed", "99"])
        h1 = json.loads((o1 / "constants.json").read_text())["config_hash"]
        h2 = json.loads((o2 / "constants.json").read_text())["config_hash"]
        assert h1 != h2


class TestDecayCommand:
    CFG = MODEL + """
[run]
s = 0.5
z = [0.0, 0.001]
distances = [5, 10, 15]
box_halfwidth = 50
n_samples = 1200
"""

    def test_csv_contract_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path, self.CFG)
        o1, o2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["fm-decay", "--config", cfg, "--out", str(o1)]) == 0
        assert main(["fm-decay", "--config", cfg, "--out", str(o2)]) == 0
        b1 = (o1 / "fm-decay.csv").read_bytes()
        b2 = (o2 / "fm-decay.csv").read_bytes()
        assert b1 == b2  # byte-identical rerun
        rows = list(csv.DictReader((o1 / "fm-decay.csv").read_text().splitlines()))
        assert [r["distance"] for r in rows] == ["5", "10", "15"]
        for r in rows:
            assert set(r) == {"distance", "mean", "std_error", "bound",
                              "margin_sigmas", "config_hash"}
            float(r["mean"]), float(r["std_error"])  # parse as numbers

    def test_threads_do_not_change_results(self, tmp_path):
        cfg = write_config(tmp_path, self.CFG)
        o1, o2 = tmp_path / "t1", tmp_path / "t4"
        assert main(["fm-decay", "--config", cfg, "--out", str(o1), "--threads", "1"]) == 0
        assert main(["fm-decay", "--config", cfg, "--out", str(o2), "--threads", "4"]) == 0
        assert (o1 / "fm-decay.csv").read_bytes() == (o2 / "fm-decay.csv").read_bytes()


class TestIdentitiesCommand:
    def test_small_run_green(self, tmp_path):
        cfg = write_config(tmp_path, """
[model]
u = [1.0]
density = { kind = "uniform", R = 1.0 }
seed = 3
[run]
n_instances = 40
""")
        out = tmp_path / "o"
        assert main(["verify-identities", "--config", cfg, "--out", str(out)]) == 0
        payload = json.loads((out / "verify-identities.json").read_text())
        assert payload["worst_residual"] <= 1e-9


class TestWegnerCommand:
    def test_calibrated_run(self, tmp_path):
        cfg = write_config(tmp_path, """
[model]
u = [1.0]
density = { kind = "uniform", R = 2.0 }
seed = 5
[run]
s = 0.5
widths = [0.1, 0.2]
L_values = [8]
n_samples = 150
calibration_samples = 300
calibration_halfwidth = 8
""")
        out = tmp_path / "o"
        assert main(["wegner", "--config", cfg, "--out", str(out)]) == 0
        payload = json.loads((out / "wegner.json").read_text())
        assert payload["violations"] == 0
        assert payload["calibration"]["sup_estimate"] == payload["Cprime"]

    def test_absurd_cprime_trips_violation(self, tmp_path):
        cfg = write_config(tmp_path, """
[model]
u = [1.0]
density = { kind = "uniform", R = 2.0 }
seed = 5
[run]
s = 0.5
widths = [3.9]
L_values = [8]
n_samples = 60
Cprime = 1e-9
""")
        out = tmp_path / "o"
        assert main(["wegner", "--config", cfg, "--out", str(out)]) == 2
        assert (out / "wegner.violation.json").exists()


class TestMonotoneCommand:
    def test_witness_flag(self, tmp_path, capsys):
        assert main(["monotone", "--u", "1,-1,1", "--out", str(tmp_path)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["extractable"] and payload["M"] == 3
        assert payload["gamma"] == [1.0, 3.0, 3.0, 1.0]
        assert payload["v"] == [1.0, 2.0, 1.0, 1.0, 2.0, 1.0]

    def test_not_extractable_flag(self, tmp_path, capsys):
        assert main(["monotone", "--u", "1,-1", "--out", str(tmp_path)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["extractable"] is False


class TestConsoleEntryPoint:
    def test_installed_script(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "fmm_lab.cli", "monotone", "--u", "1,1",
             "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["M"] == 0


class TestShippedConfigs:
    @pytest.mark.parametrize("name,command", [
        ("constants.toml", "constants"),
    ])
    def test_shipped_config_runs(self, tmp_path, name, command):
        assert main([command, "--config", str(CONFIG_DIR / name),
                     "--out", str(tmp_path)]) == 0


class TestRemainingSubcommands:
    """Small-budget smoke runs: every subcommand exits 0 and writes its files."""

    @pytest.mark.parametrize("command,run_block", [
        ("det-average", "n_instances = 25\nn_lambda = 3"),
        ("apriori", 's = 0.4\nz_grid = [[0.0, 0.01], [30.0, 0.0]]\n'
                    "box_halfwidth = 8\nn_samples = 200"),
        ("conditional-check", "s = 0.5\nz = [0.7, 0.05]\nbox_halfwidth = 6\n"
                              "n_outer = 20"),
        ("regularity", "L = 5\nm = 0.1\nn_samples = 30\ninterval = [0.0, 0.0]"),
        ("eigen-decay", "box_halfwidth = 40\nn_samples = 5"),
    ])
    def test_runs_green(self, tmp_path, command, run_block):
        cfg = tmp_path / "exp.toml"
        cfg.write_text(MODEL + "\n[run]\n" + run_block + "\n")
        out = tmp_path / "o"
        assert main([command, "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / f"{command}.csv").exists()
        assert (out / f"{command}.json").exists()
        assert (out / f"{command}.meta.json").exists()
