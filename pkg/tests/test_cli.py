import numpy as np
import pytest

from supgcontrol import cli, solver

STUDY_1D = ["study", "--example", "1", "--degree", "1", "--approach",
            "dto", "--levels", "2", "--coarsest", "0.1"]


def run(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    return cli.main(argv)


def test_study_writes_default_csv(tmp_path, monkeypatch, capsys):
    assert run(tmp_path, monkeypatch, STUDY_1D) == 0
    out = tmp_path / "study-example1-dto.csv"
    assert out.exists()
    lines = out.read_text().splitlines()
    assert lines[0].startswith("h,l2_y,order_l2_y")
    assert len([l for l in lines if not l.startswith("#")]) == 3
    stdout = capsys.readouterr().out
    assert "wrote study-example1-dto.csv" in stdout


def test_study_both_writes_two_files(tmp_path, monkeypatch):
    argv = ["study", "--example", "1", "--degree", "1", "--approach",
            "both", "--levels", "1", "--coarsest", "0.1"]
    assert run(tmp_path, monkeypatch, argv) == 0
    assert (tmp_path / "study-example1-dto.csv").exists()
    assert (tmp_path / "study-example1-otd.csv").exists()


def test_out_flag_forks_per_approach(tmp_path, monkeypatch):
    argv = ["study", "--example", "1", "--degree", "1", "--approach",
            "both", "--levels", "1", "--coarsest", "0.1",
            "--out", "mytable.csv"]
    assert run(tmp_path, monkeypatch, argv) == 0
    assert (tmp_path / "mytable-dto.csv").exists()
    assert (tmp_path / "mytable-otd.csv").exists()


def test_markdown_format(tmp_path, monkeypatch):
    argv = ["study", "--example", "1", "--degree", "1", "--approach",
            "dto", "--levels", "1", "--coarsest", "0.1",
            "--format", "markdown"]
    assert run(tmp_path, monkeypatch, argv) == 0
    text = (tmp_path / "study-example1-dto.md").read_text()
    assert text.startswith("| h | l2_y |")


def test_reruns_are_byte_identical(tmp_path, monkeypatch):
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir()
    b.mkdir()
    monkeypatch.chdir(a)
    assert cli.main(STUDY_1D) == 0
    monkeypatch.chdir(b)
    assert cli.main(STUDY_1D) == 0
    fa = (a / "study-example1-dto.csv").read_bytes()
    fb = (b / "study-example1-dto.csv").read_bytes()
    assert fa == fb


def test_usage_errors_exit_2(tmp_path, monkeypatch, capsys):
    cases = [
        ["study"],
        ["study", "--example", "1", "--tau", "bogus"],
        ["study", "--example", "1", "--approach", "dto",
         "--degree", "1", "--adjoint-degree", "2"],
        ["study", "--example", "1", "--degree", "3"],
        ["study", "--example", "1", "--levels", "0"],
        ["study", "--example", "1", "--format", "csv", "--coarsest", "-1"],
        ["compare", "--example", "1", "--approach", "dto"],
    ]
    for argv in cases:
        assert run(tmp_path, monkeypatch, argv) == 2, argv
        assert "error" in capsys.readouterr().err


def test_unknown_example_exits_2(tmp_path, monkeypatch):
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, monkeypatch, ["study", "--example", "7"])
    assert exc.value.code == 2


def test_numerical_failure_exits_1(tmp_path, monkeypatch, capsys):
    def boom(system):
        raise solver.SolverError("synthetic breakdown")

    monkeypatch.setattr(cli.solver, "solve_direct", boom)
    monkeypatch.setattr(cli.analysis.solver, "solve_direct", boom)
    assert run(tmp_path, monkeypatch, STUDY_1D) == 1
    err = capsys.readouterr().err
    assert "numerical failure" in err
    assert "at level h=0.1" in err


def test_config_file_with_cli_override(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# study configuration\n"
        "example = 1\n"
        "degree = 1\n"
        "approach = otd\n"
        "levels = 3   # overridden below\n"
        "coarsest = 0.1\n")
    argv = ["study", "--config", str(cfg), "--levels", "1"]
    assert run(tmp_path, monkeypatch, argv) == 0
    out = tmp_path / "study-example1-otd.csv"
    rows = [l for l in out.read_text().splitlines()
            if not l.startswith(("h,", "#"))]
    assert len(rows) == 1


def test_config_rejects_unknown_key(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("example = 1\nupwinding = full\n")
    assert run(tmp_path, monkeypatch,
               ["study", "--config", str(cfg)]) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_config_rejects_bad_value(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("example = one\n")
    assert run(tmp_path, monkeypatch,
               ["study", "--config", str(cfg)]) == 2
    assert "bad value" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path, monkeypatch):
    assert run(tmp_path, monkeypatch,
               ["study", "--config", "nope.cfg"]) == 2


def test_ci_mode_drops_fine_2d_levels(tmp_path, monkeypatch, capsys):
    argv = ["study", "--example", "3", "--degree", "1", "--approach",
            "dto", "--levels", "6", "--coarsest", "0.2", "--ci"]
    assert run(tmp_path, monkeypatch, argv) == 0
    assert "dropping 1 level(s)" in capsys.readouterr().err
    out = tmp_path / "study-example3-dto.csv"
    rows = [l for l in out.read_text().splitlines()
            if not l.startswith(("h,", "#"))]
    assert len(rows) == 5


def test_ci_mode_keeps_1d_levels(tmp_path, monkeypatch, capsys):
    argv = ["study", "--example", "1", "--degree", "1", "--approach",
            "dto", "--levels", "5", "--coarsest", "0.1", "--ci"]
    assert run(tmp_path, monkeypatch, argv) == 0
    assert "dropping" not in capsys.readouterr().err


def test_compare_reports_order_gap(tmp_path, monkeypatch, capsys):
    argv = ["compare", "--example", "1", "--degree", "2", "--approach",
            "both", "--levels", "2", "--coarsest", "0.1"]
    assert run(tmp_path, monkeypatch, argv) == 0
    stdout = capsys.readouterr().out
    assert "final SD(lam) orders" in stdout
    assert "gap" in stdout
    out = tmp_path / "compare-example1.csv"
    header = out.read_text().splitlines()[0]
    assert header.split(",")[:3] == ["h", "dto_sd_lam", "order"]


def test_profile_emits_vertex_table(tmp_path, monkeypatch, capsys):
    argv = ["profile", "--example", "3", "--degree", "2", "--approach",
            "dto", "--coarsest", "0.2"]
    assert run(tmp_path, monkeypatch, argv) == 0
    out = tmp_path / "profile-example3-dto.csv"
    lines = out.read_text().splitlines()
    assert lines[0] == "x1,x2,y,u,lam"
    assert len(lines) == 1 + 36
    first = np.array(lines[1].split(","), dtype=float)
    np.testing.assert_allclose(first[:2], [0.0, 0.0])
    assert "oscillation count (dto):" in capsys.readouterr().out


def test_profile_1d_pads_x2(tmp_path, monkeypatch):
    argv = ["profile", "--example", "1", "--degree", "1", "--approach",
            "otd", "--coarsest", "0.25"]
    assert run(tmp_path, monkeypatch, argv) == 0
    lines = (tmp_path / "profile-example1-otd.csv").read_text().splitlines()
    assert len(lines) == 1 + 5
    assert all(l.split(",")[1] == "0" for l in lines[1:])


def test_dump_system_sidecar(tmp_path, monkeypatch):
    argv = STUDY_1D + ["--dump-system", "--levels", "1"]
    assert run(tmp_path, monkeypatch, argv) == 0
    mat = tmp_path / "study-example1-dto-system-L0.txt"
    head = tmp_path / "study-example1-dto-system-L0-header.txt"
    assert mat.exists() and head.exists()
    head_text = head.read_text()
    assert "approach dto" in head_text
    assert "h 0.1" in head_text
    rows, cols, nnz = (int(v) for v in
                       mat.read_text().splitlines()[0].split())
    assert rows == cols == 33
