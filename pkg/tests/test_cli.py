import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from gridlyap.cli import EXIT_ERROR, EXIT_OK, EXIT_UNDECIDED, main
from gridlyap.model import builtin_case, serialize_network


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    return code, json.loads(out)


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "two_bus.json"
    path.write_text(serialize_network(builtin_case("two_bus")))
    return path


class TestCommands:
    def test_validate(self, capsys, model_file):
        code, doc = run_json(capsys, "validate", str(model_file))
        assert code == EXIT_OK and doc["valid"] and doc["n_edges"] == 1

    def test_equilibrium(self, capsys):
        code, doc = run_json(capsys, "equilibrium", "--case", "two_bus")
        assert code == EXIT_OK
        assert doc["angles"][0] == pytest.approx(np.pi / 6)

    def test_certify_and_reuse(self, capsys, tmp_path):
        out = tmp_path / "cert.json"
        assert main(["certify", "--case", "two_bus", "-o", str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["block_size"] == 3
        assert doc["margin"] == pytest.approx(8 / 7, abs=1e-6)
        code, vmin = run_json(capsys, "vmin", "--case", "two_bus", "--certificate", str(out))
        assert code == EXIT_OK and vmin["value"] == pytest.approx(2.2710, abs=1e-4)

    @pytest.mark.parametrize("method,value", [("exact", 2.2710), ("convex", 0.52628), ("approx", 1.40069)])
    def test_vmin_methods(self, capsys, method, value):
        code, doc = run_json(capsys, "vmin", "--case", "two_bus", "--method", method)
        assert code == EXIT_OK and doc["value"] == pytest.approx(value, abs=1e-4)

    def test_vmin_energy_member(self, capsys):
        _, doc = run_json(capsys, "vmin", "--case", "two_bus", "--energy")
        assert doc["value"] == pytest.approx(0.5478826, abs=1e-6)

    def test_screen_exit_codes(self, capsys):
        ok = json.dumps({"delta": [0.6], "omega": [0.0], "label": "ok"})
        code, doc = run_json(capsys, "screen", "--case", "two_bus", "--contingency", ok)
        assert code == EXIT_OK and doc["verdicts"][0]["outcome"] == "certified"
        bad = json.dumps([{"delta": [0.6], "omega": [0.0]}, {"delta": [0.6], "omega": [10.0]}])
        code, doc = run_json(capsys, "screen", "--case", "two_bus", "--contingency", bad)
        assert code == EXIT_UNDECIDED
        assert [v["outcome"] for v in doc["verdicts"]] == ["certified", "undecided"]

    def test_adapt(self, capsys):
        item = json.dumps({"delta": [np.pi / 6], "omega": [2.0]})
        code, doc = run_json(capsys, "adapt", "--case", "two_bus", "--contingency", item)
        assert code == EXIT_OK
        verdict = doc["verdicts"][0]
        assert verdict["outcome"] == "certified" and len(verdict["history"]) == 2
        assert "certificate" in verdict

    def test_simulate_csv(self, capsys, tmp_path):
        path = tmp_path / "traj.csv"
        item = json.dumps({"delta": [1.0], "omega": [0.0]})
        code, doc = run_json(capsys, "simulate", "--case", "two_bus", "--contingency", item, "--csv", str(path))
        assert code == EXIT_OK and doc["status"] == "converged" and doc["vbar_nonincreasing"]
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["t", "delta_1", "omega_1", "vbar", "energy"]
        assert float(rows[1][1]) == pytest.approx(1.0)

    def test_simulate_rk4_stdout(self, capsys):
        item = json.dumps({"delta": [1.0], "omega": [0.0]})
        code, out = run(capsys, "simulate", "--case", "two_bus", "--contingency", item, "--rk4-step", "0.01", "--horizon", "1")
        assert code == EXIT_OK
        assert len(out.strip().splitlines()) == 102

    def test_compare_energy(self, capsys):
        item = json.dumps({"delta": [np.pi / 6], "omega": [1.0]})
        code, doc = run_json(capsys, "compare-energy", "--case", "two_bus", "--contingency", item)
        assert code == EXIT_OK
        assert doc["critical_energy"] == pytest.approx(0.5478826, abs=1e-6)
        assert doc["contingencies"][0]["energy"] == pytest.approx(0.5)

    def test_energy_landscape(self, capsys):
        code, out = run(capsys, "energy-landscape", "--case", "nine_bus", "--grid", "5")
        assert code == EXIT_OK
        lines = out.strip().splitlines()
        assert lines[0] == "delta_1,delta_2,energy" and len(lines) == 26

    def test_builtin_contingency(self, capsys):
        code, doc = run_json(capsys, "compare-energy", "--case", "nine_bus", "--contingency", "paper_9bus")
        assert code == EXIT_OK and doc["contingencies"][0]["label"] == "paper_9bus"


class TestErrors:
    def test_missing_model(self, capsys):
        code, doc = run_json(capsys, "equilibrium")
        assert code == EXIT_ERROR and doc["error"] == "CliError"

    def test_invalid_document(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"generators": []}))
        code, doc = run_json(capsys, "validate", str(path))
        assert code == EXIT_ERROR and doc["error"] == "NetworkError"

    def test_usage_error_is_not_undecided(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["vmin", "--case", "two_bus", "--method", "bogus"])
        assert info.value.code == EXIT_ERROR
        assert json.loads(capsys.readouterr().out)["error"] == "UsageError"


class TestDeterminism:
    def test_identical_output(self, capsys):
        first = run(capsys, "vmin", "--case", "nine_bus", "--seed", "4")[1]
        second = run(capsys, "vmin", "--case", "nine_bus", "--seed", "4")[1]
        assert first == second


@pytest.mark.skipif(shutil.which("gridlyap") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["gridlyap", "equilibrium", "--case", "two_bus"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == "ok"
