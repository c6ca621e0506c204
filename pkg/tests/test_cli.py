import csv
import io
import json
import subprocess
import sys

import pytest

from gradcode.cli import main, parse_s_values
from gradcode.codes import EncodingMatrix
from gradcode.errors import ConfigError

FRC6 = '{"type":"frc","n":6,"k":6,"l":2,"r":2}'
KFF = '{"type":"kron","left":"fano","right":"fano"}'


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestConstruct:
    def test_fano(self, tmp_path):
        out = tmp_path / "fano.txt"
        assert main(["construct", "fano", "-o", str(out)]) == 0
        g = EncodingMatrix.from_text(out.read_text())
        assert g.shape == (7, 7)
        rep = json.loads((tmp_path / "fano.txt.report.json").read_text())
        assert rep["params"] == {"n": 7, "k": 7, "l": 3, "r": 3, "lambda": 1}

    def test_kron(self, tmp_path):
        out = tmp_path / "k.txt"
        assert main(["construct", KFF, "-o", str(out)]) == 0
        assert out.read_text().splitlines()[0] == "49 49"

    def test_descriptor_file(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(FRC6)
        assert main(["construct", str(path), "-o", str(tmp_path / "m.txt")]) == 0

    def test_malformed(self, capsys):
        assert main(["construct", '{"type":']) == 2
        assert "malformed" in capsys.readouterr().err

    def test_unknown_catalog(self):
        assert main(["construct", '{"type":"bibd","name":"nope"}']) == 2


class TestValidate:
    def test_matrix_file(self, tmp_path, capsys):
        path = tmp_path / "m.txt"
        path.write_text("2 2\n11\n11\n")
        assert main(["validate", str(path)]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["intersections"] == {"2": 1}


class TestErrorCurve:
    def test_fano(self, capsys):
        assert main(["error-curve", "fano", "--s", "0-7"]) == 0
        rows = _rows(capsys.readouterr().out)
        assert len(rows) == 8
        for r in rows:
            assert abs(float(r["measured_error"]) - float(r["formula_or_bound"])) <= 1e-9

    def test_frc_exact(self, capsys):
        assert main(["error-curve", FRC6, "--exact"]) == 0
        for r in _rows(capsys.readouterr().out):
            assert r["measured_error"] == r["formula_or_bound"]

    def test_fano_square_sampled(self, capsys):
        assert main(["error-curve", KFF, "--method", "sampled", "--trials", "300", "--s", "0-12"]) == 0
        for r in _rows(capsys.readouterr().out):
            assert float(r["measured_error"]) <= float(r["formula_or_bound"]) + 1e-12
            assert r["bound_name"] == "bibd_bibd_bound"

    def test_json(self, capsys):
        assert main(["error-curve", "fano", "--s", "1", "--format", "json"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data[0]["s"] == 1

    def test_downgrade_flag(self, capsys):
        assert main(["error-curve", "fano", "--s", "3", "--method", "exhaustive", "--cap", "5", "--trials", "50"]) == 0
        captured = capsys.readouterr()
        assert _rows(captured.out)[0]["downgraded"] == "1"
        assert "warning" in captured.err

    def test_strict_exit_code(self):
        assert main(["error-curve", "fano", "--s", "3", "--cap", "5", "--strict"]) == 4

    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv("GRADCODE_CAP", "5")
        assert main(["error-curve", "fano", "--s", "3", "--strict"]) == 4

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            main(["error-curve", KFF, "--s", "5-7", "--trials", "200", "--seed", "3", "-o", str(out)])
        assert a.read_bytes() == b.read_bytes()

    def test_bad_range(self):
        assert main(["error-curve", "fano", "--s", "9"]) == 2


class TestCompare:
    def test_mismatch_flag(self, capsys):
        assert main(["compare", "fano", '{"type":"frc","n":4,"k":4,"l":2,"r":2}']) == 0
        captured = capsys.readouterr()
        rows = _rows(captured.out)
        assert rows and all(r["redundancy_mismatch"] == "1" for r in rows)
        assert "warning" in captured.err

    def test_matched(self, capsys):
        assert main(["compare", "fano", "biplane11", "--s", "0.0,0.5"]) == 0
        rows = _rows(capsys.readouterr().out)
        assert all(r["redundancy_mismatch"] == "0" for r in rows)
        fracs = [float(r["fraction_straggled"]) for r in rows]
        assert fracs == sorted(fracs)

    def test_single_descriptor(self):
        with pytest.raises(SystemExit) as exc:
            main(["compare", "fano"])
        assert exc.value.code == 2

    def test_kron_beats_frc_beyond_block_size(self, capsys):
        frc = '{"type":"frc","n":49,"k":49,"l":7,"r":7}'
        assert main(["compare", KFF, frc, "--s", "7-20", "--trials", "500"]) == 0
        by = {}
        for r in _rows(capsys.readouterr().out):
            by.setdefault(r["s"], {})[r["code"]] = float(r["measured_error"])
        for s, vals in by.items():
            assert vals["(fano x fano)"] <= vals["FRC(49,49,7,7)"] + 1e-12, s


class TestMonteCarlo:
    def test_rows(self, capsys):
        assert main(["mc-expected", "--n", "7", "--k", "7", "--l", "3", "--lambda", "2", "--s", "2",
                     "--trials", "2000", "--decoder", "bibd_constant"]) == 0
        row = _rows(capsys.readouterr().out)[0]
        assert abs(float(row["mean"]) - float(row["bound"])) <= 3 * float(row["stderr"])

    def test_infeasible(self, capsys):
        assert main(["mc-expected", "--n", "4", "--k", "4", "--l", "3", "--lambda", "1", "--s", "1"]) == 3
        assert "2*lambda >= l" in capsys.readouterr().err


class TestSimulate:
    def test_outputs(self, tmp_path):
        cfg = {"codes": ["fano", {"type": "frc", "n": 6, "k": 6, "l": 2, "r": 2}],
               "policy": {"type": "random", "s": 1, "seed": 0}, "iterations": 4}
        assert main(["simulate", json.dumps(cfg), "-o", str(tmp_path / "run")]) == 0
        rep = json.loads((tmp_path / "run.json").read_text())
        assert rep["redundancy_mismatch"] is True
        assert len(_rows((tmp_path / "run.csv").read_text())) == 2 * 5

    def test_bad_config(self):
        assert main(["simulate", "{not json"]) == 2
        assert main(["simulate", '{"iterations": 2}']) == 2


def test_parse_s_values():
    assert parse_s_values("0-3", 7) == [0, 1, 2, 3]
    assert parse_s_values("1,1,2", 7) == [1, 2]
    assert parse_s_values("0.5", 8) == [4]
    assert parse_s_values(None, 2) == [0, 1, 2]
    with pytest.raises(ConfigError):
        parse_s_values("x", 7)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gradcode", "error-curve", "fano", "--s", "1"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.splitlines()[0].startswith("s,fraction_straggled,measured_error")
