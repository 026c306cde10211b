import json

import numpy as np
import pytest

from causalglm.cli import SCHEMA, RunReport, main
from causalglm.data import read_csv


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def fig1_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "fig1.csv"
    assert _run("simulate", "--model", "fig1", "--n", 100_000, "--seed", 7, "--out", path) == 0
    return path


def test_simulate_fig1_shape(tmp_path, capsys):
    out = tmp_path / "a.csv"
    assert _run("simulate", "--model", "fig1", "--n", 100, "--seed", 7, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "X1,X2,Y"
    assert len(lines) == 101
    meta = json.loads(capsys.readouterr().out)
    assert meta["generator"] == "fig1" and meta["seed"] == 7


def test_simulate_fig3_columns(tmp_path):
    out = tmp_path / "b.csv"
    assert _run("simulate", "--model", "fig3", "--n", 1000, "--seed", 1, "--out", out) == 0
    assert out.read_text().splitlines()[0].split(",") == [f"X{j}" for j in range(1, 8)] + ["Y"]


def test_simulate_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        _run("simulate", "--model", "fig4", "--n", 300, "--seed", 2, "--pi", 0.2, "--out", path)
    assert a.read_bytes() == b.read_bytes()


def test_simulate_shift_and_spec(tmp_path):
    from causalglm.simulate import fig1_spec
    spec = tmp_path / "m.json"
    fig1_spec().to_json(spec)
    out = tmp_path / "s.csv"
    code = _run("simulate", "--model", f"spec:{spec}", "--n", 50, "--seed", 1,
                "--shift-sigma2", 5, "--shift-vars", "X1", "--out", out)
    assert code == 0
    assert read_csv(out, "Y").n == 50


@pytest.mark.parametrize("argv", [
    ("simulate", "--model", "fig9", "--n", 10, "--out", "x.csv"),
    ("simulate", "--model", "fig1", "--n", 10, "--shift-sigma2", 1, "--out", "x.csv"),
    ("simulate", "--model", "fig1", "--out", "x.csv"),
    ("bench", "--experiment", "fig8"),
])
def test_config_errors(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert _run(*argv) == 2


def test_disptest_causal_and_child(fig1_csv, tmp_path):
    out = tmp_path / "r.json"
    assert _run("disptest", "--data", fig1_csv, "--subset", "X1", "--out", out) == 0
    rec = RunReport.from_json(out.read_text()).records[0]
    assert rec["subset"] == ["X1"] and rec["accepted"]
    assert _run("disptest", "--data", fig1_csv, "--subset", "X2", "--out", out) == 0
    assert not RunReport.from_json(out.read_text()).records[0]["accepted"]
    assert _run("disptest", "--data", fig1_csv, "--out", out) == 0
    rec = RunReport.from_json(out.read_text()).records[0]
    assert rec["subset"] == [] and rec["edf"] == 1.0


def test_disptest_unknown_subset(fig1_csv):
    assert _run("disptest", "--data", fig1_csv, "--subset", "X9", "--out", "-") == 2


def test_discover_fig3_report(tmp_path):
    data = tmp_path / "f3.csv"
    _run("simulate", "--model", "fig3", "--n", 1000, "--seed", 1, "--out", data)
    out = tmp_path / "r.json"
    code = _run("discover", "--data", data, "--search", "full", "--test", "chisq", "--alpha", 0.05,
                "--basis", "spline", "--out", out)
    text = out.read_text()
    report = RunReport.from_json(text)
    assert code == 0
    assert report.schema == SCHEMA
    assert report.selected == ["X2", "X3"]
    assert len(report.records) == 128
    assert RunReport.from_json(report.to_json()) == report
    assert json.loads(report.to_json()) == json.loads(text)


def test_discover_no_candidate_exit_3(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=400)
    # strongly overdispersed counts: no subset passes
    y = rng.negative_binomial(1, 1 / (1 + np.exp(1 + x)))
    path = tmp_path / "od.csv"
    path.write_text("X1,Y\n" + "\n".join(f"{float(a)!r},{int(b)}" for a, b in zip(x, y)) + "\n")
    out = tmp_path / "r.json"
    assert _run("discover", "--data", path, "--out", out) == 3
    assert RunReport.from_json(out.read_text()).selected is None


def test_binomial_constant_target_exit_2(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("X1,Y\n" + "\n".join(f"{i},1" for i in range(30)) + "\n")
    assert _run("discover", "--data", path, "--family", "binomial", "--test", "bootstrap", "--out", "-") == 2


def test_binomial_chisq_needs_force(tmp_path):
    path = tmp_path / "f4.csv"
    _run("simulate", "--model", "fig4", "--n", 200, "--seed", 0, "--out", path)
    assert _run("discover", "--data", path, "--family", "binomial", "--out", "-") == 2
    assert _run("discover", "--data", path, "--family", "binomial", "--force", "--max-size", 1,
                "--out", tmp_path / "r.json") in (0, 3)


@pytest.mark.parametrize("text, target", [("X1,Y\n1,2\n3\n", "Y"), ("X1,Y\n1,a\n", "Y"), ("X1,Y\n1,2\n", "Z"),
                                          ("X1,Y\n1,2.5\n", "Y")])
def test_data_errors_exit_1(tmp_path, text, target):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    assert _run("discover", "--data", path, "--target", target, "--out", "-") == 1


def test_missing_file_exit_1(tmp_path):
    assert _run("discover", "--data", tmp_path / "nope.csv", "--out", "-") == 1


def test_report_round_trip_preserves_fields():
    rep = RunReport(command="discover", config={"alpha": 0.05, "basis": "linear"},
                    records=[{"subset": ["X1"], "statistic": 1.2345678901234567, "edf": 2.0,
                              "p_value": None, "bic": -3.5, "converged": True, "accepted": False}],
                    selected=["X1"], timing={"seconds": 0.1}, seed=4)
    assert RunReport.from_json(rep.to_json()) == rep


def test_report_schema_checked():
    with pytest.raises(ValueError):
        RunReport.from_json(json.dumps({"schema": "other/2"}))


def test_bench_fig1_population(tmp_path):
    out = tmp_path / "b.csv"
    assert _run("bench", "--experiment", "fig1-population", "--reps", 1, "--seed", 1,
                "--n-list", 20_000, "--out", out) == 0
    header = out.read_text().splitlines()[0].split(",")
    assert header[:3] == ["environment", "sigma2", "model"]


def test_bench_fig3_table_small(tmp_path):
    out = tmp_path / "t.csv"
    assert _run("bench", "--experiment", "fig3-table", "--reps", 2, "--seed", 11, "--n-list", "100,150",
                "--threads", 1, "--out", out) == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("n,reps,full_detect_pct,step_detect_pct")
    assert len(rows) == 3
