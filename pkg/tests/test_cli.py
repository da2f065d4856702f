import csv

import pytest

from hermite_hjb import cli


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("lambda = 1e-3, 1, 1e3   # three values\nlevels = 0\nomega = 0.2\n"
                   "rhs-mode = delta\nfull = yes\n")
    values = cli.read_config(cfg)
    assert values == {"lambdas": [1e-3, 1.0, 1e3], "levels": [0], "omega": 0.2,
                      "rhs_mode": "delta", "full": True}
    (tmp_path / "bad.cfg").write_text("colour = blue\n")
    with pytest.raises(ValueError, match="colour"):
        cli.read_config(tmp_path / "bad.cfg")


def test_flags_override_the_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("omega = 0.2\nlevels = 0, 1\n")
    args = cli.build_parser().parse_args(["linear", "--config", str(cfg), "--omega", "0.5"])
    out = cli.build_config("linear", args)
    assert out.omega == 0.5 and out.levels == [0, 1] and out.tol == 1e-6


def test_config_validation():
    with pytest.raises(ValueError):
        cli.ExperimentConfig("linear", levels=[3])
    assert cli.ExperimentConfig("linear", levels=[3], full=True).levels == [3]
    with pytest.raises(ValueError):
        cli.ExperimentConfig("cond", lambdas=[0.0])
    with pytest.raises(ValueError):
        cli.ExperimentConfig("cond", tol=2.0)
    with pytest.raises(ValueError):
        cli.ExperimentConfig("plot")
    assert cli.ExperimentConfig("cond", precond="mul").variants == ["mul"]


def test_bad_flags_exit_with_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["linear", "--levels", "5", "--out", str(tmp_path)])
    assert info.value.code == 2


def test_mesh_verb(tmp_path, capsys):
    code = cli.main(["mesh", "--levels", "3,5", "--out", str(tmp_path)])
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "mesh.csv").open()))
    assert [int(r["dof"]) for r in rows] == [2387, 4467]
    assert (tmp_path / "graded_level3_dof2387.vtk").exists()
    md = (tmp_path / "mesh.md").read_text()
    assert "## Configuration" in md and "levels = [3, 5]" in md
    assert "2/2 cells completed" in capsys.readouterr().out


def test_cond_verb_small_grid(tmp_path):
    code = cli.main(["cond", "--levels", "0", "--lambda", "1", "--out", str(tmp_path)])
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "cond.csv").open()))
    assert {r["variant"] for r in rows} == {"add", "mul"}
    assert all(float(r["kappa"]) > 1 for r in rows)
    md = (tmp_path / "cond.md").read_text()
    assert "## kappa (additive, omega=0.1)" in md and "| 1,247 |" in md


def test_hjb_verb_and_failure_exit_code(tmp_path, monkeypatch):
    assert cli.main(["hjb", "--levels", "0", "--out", str(tmp_path)]) == 0
    row = next(csv.DictReader((tmp_path / "hjb.csv").open()))
    assert row["dof"] == "71" and row["cordes_ok"] == "True"

    def broken(*args, **kwargs):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(cli, "newton_solve", broken)
    assert cli.main(["hjb", "--levels", "0", "--out", str(tmp_path / "b")]) == 1
    row = next(csv.DictReader((tmp_path / "b" / "hjb.csv").open()))
    assert row["status"].startswith("failed")
