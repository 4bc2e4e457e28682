import csv
import json
import os

import pytest

from equiheat.cli import main
from equiheat.reports import KEYS, ExperimentConfig, ExperimentReport, ValidationError, emit_report, run_experiment


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def strip_time(text):
    d = json.loads(text)
    d.pop("timestamp")
    return json.dumps(d, sort_keys=True)


class TestConfig:
    def test_parse(self):
        cfg = ExperimentConfig.from_text("# comment\nkind = trace\nmodel = s2  # inline\nsigma = 1\nt_grid = 0.1, 0.05\n")
        assert cfg.model == "s2" and cfg.sigma == 1.0 and cfg.t_grid == [0.1, 0.05]

    def test_kind_from_command_line(self):
        assert ExperimentConfig.from_text("lattice = z3", kind="selberg").lattice == "z3"

    @pytest.mark.parametrize(
        "text,key",
        [
            ("kind = trace\nmodel = s2\nsigma = 0\nt_grid =", "t_grid"),
            ("kind = oscillatory\nmodel = t1\nmu_grid = , ,", "mu_grid"),
            ("kind = trace\nmodel = s2\nsigma = 0\nt_grid = 0.1, -1", "t_grid"),
            ("kind = trace\nmodel = s2\nsigma = 0\ncolour = red", "colour"),
            ("kind = trace\nmodel = mobius\nsigma = 0", "model"),
            ("kind = trace\nsigma = 0", "model"),
            ("kind = trace\nmodel = s2", "sigma"),
            ("kind = selberg\nlattice = d4", "lattice"),
            ("kind = selberg\nt = -1", "t"),
            ("kind = selberg\nseed = one", "seed"),
            ("kind = selberg\nseed = 1\nseed = 2", "seed"),
            ("kind = nothing", "kind"),
            ("model = s2", "kind"),
            ("kind = oscillatory\nmodel = s2\ncenter = 0.1", "center"),
            ("kind = selberg\nformat = xml", "format"),
        ],
    )
    def test_validation_names_key(self, text, key):
        with pytest.raises(ValidationError) as err:
            ExperimentConfig.from_text(text)
        assert err.value.key == key and key in str(err.value)

    def test_kind_mismatch(self):
        with pytest.raises(ValidationError) as err:
            ExperimentConfig.from_text("kind = trace", kind="selberg")
        assert err.value.key == "kind"

    def test_every_key_documented(self):
        assert all(len(doc) > 5 for _, _, doc in KEYS.values())


@pytest.fixture(scope="module")
def selberg_report():
    return run_experiment(ExperimentConfig.from_text("kind = selberg\nlattice = z2\nt = 0.5"))


class TestRunExperiment:
    def test_trace_exponent(self):
        rep = run_experiment(ExperimentConfig.from_text("kind = trace\nmodel = s2\nsigma = 0"))
        assert rep.outputs["alpha"]["value"] == pytest.approx(0.5, abs=0.02)
        assert rep.series["columns"] == ["t", "value", "bound"]
        assert rep.passed

    def test_selberg_residual(self, selberg_report):
        assert selberg_report.outputs["residual"]["value"] < 1e-8
        assert selberg_report.passed

    def test_every_output_has_error(self, selberg_report):
        assert all(set(v) == {"value", "error"} for v in selberg_report.outputs.values())

    def test_oscillatory_columns(self):
        rep = run_experiment(ExperimentConfig.from_text("kind = oscillatory\nmodel = t1\nmu_grid = 1e-3, 1e-2, 1e-1"))
        assert rep.series["columns"] == ["mu", "re", "im", "ratio", "err"]
        assert rep.outputs["slope"]["value"] == pytest.approx(1.0, abs=0.01)

    def test_declared_tolerance_decides(self):
        rep = run_experiment(ExperimentConfig.from_text("kind = selberg\nexpect = 5.0"))
        assert not rep.passed
        assert [c["passed"] for c in rep.checks] == [True, False]

    def test_error_context(self):
        cfg = ExperimentConfig.from_text("kind = trace\nmodel = s2\nsigma = 0\nt_grid = 0.1, 0.05")
        with pytest.raises(RuntimeError, match="trace experiment failed"):
            run_experiment(cfg)


class TestEmit:
    def test_json_round_trip_is_exact(self, selberg_report):
        back = ExperimentReport.from_json(selberg_report.to_json())
        assert back.to_dict() == selberg_report.to_dict()
        assert back.outputs["spectral"]["value"] == selberg_report.outputs["spectral"]["value"]

    def test_files(self, selberg_report, tmp_path):
        paths = emit_report(selberg_report, tmp_path / "sub")
        assert [p.suffix for p in paths] == [".json", ".csv"]
        rows = list(csv.reader(open(paths[1])))
        assert rows[0] == ["j", "multiplicity", "term"] and len(rows) > 10
        assert not [p for p in os.listdir(tmp_path / "sub") if p.startswith(".")]

    def test_deterministic(self, tmp_path):
        cfg = "kind = gaussian-volume\nmodel = t1\nseed = 3"
        a = run_experiment(ExperimentConfig.from_text(cfg)).to_json()
        b = run_experiment(ExperimentConfig.from_text(cfg)).to_json()
        assert strip_time(a) == strip_time(b)

    def test_unwritable(self, selberg_report, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            emit_report(selberg_report, blocker / "x")

    def test_unknown_format(self, selberg_report, tmp_path):
        with pytest.raises(ValueError):
            emit_report(selberg_report, tmp_path, "xml")


class TestCli:
    def test_pass(self, tmp_path, capsys):
        cfg = write(tmp_path, "lattice = z3\nt = 0.3\n")
        assert main(["selberg", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        assert "PASS residual" in capsys.readouterr().out
        assert json.loads((tmp_path / "o" / "selberg.json").read_text())["passed"]

    def test_tolerance_failure(self, tmp_path):
        cfg = write(tmp_path, "lattice = z2\nexpect = 1.0\n")
        assert main(["selberg", "--config", str(cfg), "--out", str(tmp_path)]) == 1

    def test_validation_error(self, tmp_path, capsys):
        cfg = write(tmp_path, "model = s2\nsigma = 0\nt_grid =\n")
        assert main(["trace", "--config", str(cfg)]) == 2
        assert "t_grid" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["trace", "--config", str(tmp_path / "none.cfg")]) == 2

    def test_numeric_error(self, tmp_path):
        cfg = write(tmp_path, "model = s2\nsigma = 0\nt_grid = 0.1, 0.05\n")
        assert main(["trace", "--config", str(cfg), "--out", str(tmp_path)]) == 3

    def test_seed_override_and_byte_identity(self, tmp_path):
        cfg = write(tmp_path, "model = t1\nformat = json\n")
        outs = []
        for d in ("a", "b"):
            assert main(["gaussian-volume", "--config", str(cfg), "--out", str(tmp_path / d), "--seed", "7"]) == 0
            outs.append((tmp_path / d / "gaussian-volume.json").read_text())
        assert strip_time(outs[0]) == strip_time(outs[1])
        assert json.loads(outs[0])["inputs"]["seed"] == 7
        assert not (tmp_path / "a" / "gaussian-volume.csv").exists()

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["other", "--config", "x"])
