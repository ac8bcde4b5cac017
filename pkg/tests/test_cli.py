import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from asymflow.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


QUADRATIC_FINE = """
seed = 0
[space]
kind = "euclidean"
dim = 2
[potential]
name = "quadratic"
[flow]
x0 = [1.0, 0.5]
T = 1.0
tau_sweep = [0.01, 0.001, 0.0005]
[output]
prefix = "q"
"""


@pytest.fixture(scope="module")
def quadratic_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("quad")
    cfg = _write(tmp, QUADRATIC_FINE)
    code = main(["run", "--config", cfg, "--out", str(tmp / "out")])
    return code, tmp / "out"


class TestRun:
    def test_quadratic_matches_closed_form(self, quadratic_run):
        code, out = quadratic_run
        assert code == 0
        rows = _rows(out / "q_trajectory.csv")
        assert list(rows[0]) == ["t", "coord_0", "coord_1", "phi", "slope", "speed"]
        err = max(abs(float(r["phi"]) - 0.625 * math.exp(-2 * float(r["t"]))) for r in rows)
        assert err <= 1e-4

    def test_quadratic_oracle_csv(self, quadratic_run):
        _, out = quadratic_run
        rows = _rows(out / "q_ode.csv")
        err = max(abs(float(r["coord_0"]) - math.exp(-float(r["t"]))) for r in rows)
        assert err <= 1e-8

    def test_summary(self, quadratic_run):
        _, out = quadratic_run
        summary = json.loads((out / "q_summary.json").read_text())
        assert summary["pass"] and summary["schema"] == 1
        assert summary["sweep"]["monotone"]
        assert summary["energy_residual"] < 1e-4

    def test_minimizer_start_is_constant(self, tmp_path):
        assert main(["run", "--config", str(CONFIGS / "minimizer_start.toml"), "--out", str(tmp_path)]) == 0
        rows = _rows(tmp_path / "minimizer_trajectory.csv")
        for col in ("coord_0", "coord_1", "phi"):
            assert len({r[col] for r in rows}) == 1
        assert all(float(r["slope"]) <= 1e-8 and float(r["speed"]) <= 1e-8 for r in rows)

    def test_funk(self, tmp_path):
        code = main(["run", "--config", str(CONFIGS / "funk_squared_distance.toml"), "--out", str(tmp_path)])
        assert code == 0
        summary = json.loads(next(tmp_path.glob("*_summary.json")).read_text())
        assert summary["pass"] and summary["certificate"]["lambda"] == 0.5

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = str(CONFIGS / "randers_quadratic.toml")
        outs = []
        for sub in ("a", "b"):
            assert main(["run", "--config", cfg, "--out", str(tmp_path / sub)]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / sub).iterdir())})
        assert outs[0] == outs[1]


class TestVerify:
    def test_broken_metric_exits_2(self, tmp_path, capsys):
        code = main(["verify", "--config", str(CONFIGS / "broken_metric.toml"), "--out", str(tmp_path)])
        assert code == 2
        report = json.loads(next(tmp_path.glob("*_verify.json")).read_text())
        axioms = report["checks"][0]
        assert not axioms["pass"] and "FAIL" in capsys.readouterr().out

    def test_sweep_only(self, tmp_path):
        assert main(["verify", "--config", str(CONFIGS / "sweep_only.toml"), "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "sweep_only_verify.json").read_text())
        assert [c["check_name"] for c in report["checks"]] == ["sweep_cauchy", "energy_identity"]

    @pytest.mark.parametrize("name", ["quadratic_euclidean", "randers_quadratic", "funk_squared_distance",
                                      "minimizer_start", "l1_split_randers"])
    def test_shipped_configs_pass(self, name, tmp_path):
        assert main(["verify", "--config", str(CONFIGS / f"{name}.toml"), "--out", str(tmp_path)]) == 0


class TestSweep:
    def test_quadratic_errors_decrease(self, tmp_path):
        assert main(["sweep", "--config", str(CONFIGS / "quadratic_euclidean.toml"), "--out", str(tmp_path)]) == 0
        rows = _rows(tmp_path / "quadratic_sweep.csv")
        assert list(rows[0]) == ["tau", "sup_error", "energy_residual", "runtime_ms"]
        errs = [float(r["sup_error"]) for r in rows]
        assert errs == sorted(errs, reverse=True)

    def test_parallel_matches_serial(self, tmp_path):
        cfg = str(CONFIGS / "randers_quadratic.toml")
        tables = []
        for jobs, sub in ((1, "serial"), (2, "parallel")):
            assert main(["sweep", "--config", cfg, "--jobs", str(jobs), "--out", str(tmp_path / sub)]) == 0
            # runtime_ms is wall-clock time, the one column allowed to differ
            tables.append([{k: v for k, v in r.items() if k != "runtime_ms"}
                           for r in _rows(tmp_path / sub / "randers_sweep.csv")])
        assert tables[0] == tables[1]

    def test_single_entry_is_an_error(self, tmp_path, capsys):
        cfg = _write(tmp_path, QUADRATIC_FINE.replace("[0.01, 0.001, 0.0005]", "[0.1]"))
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 1
        assert "tau_sweep" in capsys.readouterr().err


class TestErrors:
    @pytest.mark.parametrize("mutation, needle", [
        (("[0.01, 0.001, 0.0005]", "[0.001, 0.01]"), "tau_sweep"),
        (('kind = "euclidean"', 'kind = "hyperbolic"'), "hyperbolic"),
        (("x0 = [1.0, 0.5]", "x0 = [1.0, 0.5, 0.0]"), "x0"),
        (('name = "quadratic"', 'name = "banana"'), "banana"),
    ])
    def test_bad_config(self, tmp_path, capsys, mutation, needle):
        cfg = _write(tmp_path, QUADRATIC_FINE.replace(*mutation))
        assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 1
        assert needle in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 1
        assert "config error" in capsys.readouterr().err

    def test_unknown_command(self):
        assert main(["fly", "--config", "x.toml"]) == 1

    def test_console_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "asymflow", "verify", "--config",
                               str(CONFIGS / "broken_metric.toml"), "--out", str(tmp_path)],
                              capture_output=True, text=True)
        assert proc.returncode == 2
