import json

import numpy as np
import pytest

from batchlp.cli import EXIT_INPUT, EXIT_ITERATION_LIMIT, EXIT_OK, EXIT_USAGE, main
from batchlp.formats.mps import read_mps, save_mps
from batchlp.formats.report import read_csv

from .factories import dense_problem


@pytest.fixture
def tiny_path(fixtures_dir):
    return str(fixtures_dir / "tiny.mps")


def _write(tmp_path, name, lines):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_solve_json(tiny_path, capsys):
    assert main(["solve", tiny_path, "--eps", "1e-6", "--json", "-"]) == EXIT_OK

    report = json.loads(capsys.readouterr().out)
    assert report["command"] == "solve"
    assert report["problem"] == "TINY"
    (record,) = report["problems"]
    assert record["status"] == "optimal"
    assert record["objective"] == pytest.approx(-1.0, abs=1e-4)
    assert report["config"]["eps_opt"] == 1e-6


def test_solve_summary_line(tiny_path, capsys):
    assert main(["solve", tiny_path]) == EXIT_OK
    assert capsys.readouterr().out.startswith("optimal objective=")


def test_iteration_limit_exit_code(tiny_path, capsys):
    assert main(["solve", tiny_path, "--max-iter", "1"]) == EXIT_ITERATION_LIMIT
    assert "iteration_limit" in capsys.readouterr().out


def test_input_errors(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.mps")]) == EXIT_INPUT

    bad = _write(tmp_path, "bad.mps", ["BOGUS"])
    assert main(["solve", bad]) == EXIT_INPUT
    assert "line=1" in capsys.readouterr().err

    inverted = _write(
        tmp_path,
        "inverted.mps",
        ["NAME INV", "ROWS", " N COST", " L CAP", "COLUMNS", " X COST 1 CAP 1", "RHS", " RHS CAP 1",
         "BOUNDS", " LO BND X 5", " UP BND X 1", "ENDATA"],
    )
    assert main(["solve", inverted]) == EXIT_INPUT
    assert "inverted interval, column 0" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["solve"],
        ["solve", "x.mps", "--eps", "tight"],
        ["--log-level", "loud", "solve", "x.mps"],
        ["fsb", "x.mps"],
        ["gen", "--family", "knapsack"],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_tune(tiny_path, tmp_path):
    out = tmp_path / "tune.csv"
    assert main(["tune", tiny_path, "--widths", "1,2,4", "--repetitions", "3", "--csv", str(out)]) == EXIT_OK

    with out.open() as f:
        rows = read_csv(f)
    assert [row["width"] for row in rows] == ["1", "2", "4"]
    assert sum(row["chosen"] == "1" for row in rows) == 1

    assert main(["tune", tiny_path, "--widths", "a,b"]) == EXIT_USAGE


def test_gen_writes_readable_mps(tmp_path):
    out = tmp_path / "sc.mps"
    argv = ["gen", "--family", "set-cover", "--sizes", "n_rows=5", "n_cols=8", "density=0.3", "--out", str(out)]
    assert main(argv) == EXIT_OK

    problem = read_mps(out)
    assert problem.m == 5 and problem.n == 8
    assert problem.integer_columns == tuple(range(8))


def test_bench(tmp_path):
    out = tmp_path / "bench.csv"
    argv = [
        "bench",
        "--family",
        "set-cover",
        "--sizes",
        "n_rows=5",
        "n_cols=8",
        "density=0.3",
        "--max-iter",
        "2000",
        "--csv",
        str(out),
    ]
    assert main(argv) == EXIT_OK

    with out.open() as f:
        (row,) = read_csv(f)
    assert row["family"] == "set-cover"
    assert (row["m"], row["n"]) == ("5", "8")
    assert int(row["S"]) % 2 == 0


def test_fsb_from_the_root_oracle(tiny_path, capsys):
    # The oracle returns the integral vertex (0, 1), nothing is fractional.
    assert main(["fsb", tiny_path, "--from-root-oracle", "--json", "-"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["driver"]["ranking"] == []
    assert report["driver"]["root_objective"] == -1.0


def test_fsb_from_a_point(knapsack, tmp_path, capsys):
    path = tmp_path / "knapsack.mps"
    save_mps(knapsack, path)
    xrel = _write(tmp_path, "xrel.txt", ["1.0, 0.6666666666666666, 1.0"])

    assert main(["fsb", str(path), "--xrel", xrel, "--eps", "1e-6"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0].startswith("x1 score=")

    short = _write(tmp_path, "short.txt", ["0.5"])
    assert main(["fsb", str(path), "--xrel", short]) == EXIT_INPUT


def test_obbt_json(tmp_path, capsys):
    problem = dense_problem([[1.0, 1.0]], [0.0, 0.0], [-np.inf], [1.0], [0.0, 0.0], [10.0, 10.0], name="simplex")
    path = tmp_path / "simplex.mps"
    save_mps(problem, path)

    assert main(["obbt", str(path), "--json", "-"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    driver = report["driver"]
    assert driver["variables_changed"] == 2
    assert driver["subproblems"] == 4
    assert {change["side"] for change in driver["changed"]} == {"upper"}
    assert len(report["problems"]) == 4
