import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from covnet.cli import main
from covnet.config import Config
from covnet.interface.config import InputModel, OutputModel, RunConfigModel
from covnet.version import __version__
from covnet.workflows.simgen import gen_example2
from covnet.workflows.utils import read_numeric_csv


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def simulated(runner, tmp_path):
    out = tmp_path / "sim"
    result = runner.invoke(
        main,
        ["--quiet", "simulate", "--example", "2", "--seed", "7", "--replicates", "2",
         "--out-dir", str(out)],
    )
    assert result.exit_code == 0, result.output
    return out


def _learn(runner, simulated, out, *extra):
    args = [
        "--quiet", "learn",
        "--data", str(simulated / "data_1.csv"),
        "--covariates", str(simulated / "covariates.csv"),
        "--metric", "bgecm",
        "--restarts", "2",
        "--out-dir", str(out),
        *extra,
    ]
    return runner.invoke(main, args)


def test_version(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_simulate_writes_tables(simulated):
    for name in ["data_1.csv", "data_2.csv", "covariates.csv", "truth.csv", "true_params.csv"]:
        assert (simulated / name).is_file()
    truth = pd.read_csv(simulated / "truth.csv", dtype=str)
    assert truth.values.tolist() == [["1", "19"], ["2", "19"], ["19", "20"]]


def test_simulated_csv_keeps_full_precision(simulated):
    expected = gen_example2(seed=7, replicates=2)
    for r, out in enumerate(expected):
        df = read_numeric_csv(simulated / f"data_{r + 1}.csv")
        assert list(df.columns) == out.data.names
        np.testing.assert_array_equal(df.to_numpy(), out.data.values)
    cov = read_numeric_csv(simulated / "covariates.csv", "covariates")
    np.testing.assert_array_equal(cov.to_numpy(), expected[0].covariates.values)


def test_learn_smoke(runner, simulated, tmp_path):
    out = tmp_path / "learn"
    result = _learn(runner, simulated, out, "--posterior")
    assert result.exit_code == 0, result.output
    for name in ["edges.csv", "dag.dot", "moral.dot", "report.json", "posterior.csv", "settings.toml"]:
        assert (out / name).is_file()

    report = json.loads((out / "report.json").read_text())
    assert report["metric"] == "bgecm"
    assert np.isfinite(report["total_log_score"])
    families = sum(f["log_ml"] for f in report["families"])
    assert abs(families + report["log_prior"] - report["total_log_score"]) < 1e-9
    assert len(report["families"]) == 20

    dag = (out / "dag.dot").read_text()
    assert dag.startswith("digraph ")
    assert (out / "moral.dot").read_text().startswith("graph ")
    assert len(pd.read_csv(out / "posterior.csv")) == 20


def test_learn_is_deterministic(runner, simulated, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _learn(runner, simulated, a).exit_code == 0
    assert _learn(runner, simulated, b).exit_code == 0
    for name in ["edges.csv", "dag.dot", "moral.dot"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ra, rb = (json.loads((d / "report.json").read_text()) for d in (a, b))
    for key in ["total_log_score", "edges", "families", "log_det_J"]:
        assert ra[key] == rb[key]


def test_score_and_posterior_of_true_graph(runner, simulated, tmp_path):
    common = [
        "--data", str(simulated / "data_1.csv"),
        "--covariates", str(simulated / "covariates.csv"),
        "--metric", "residual",
        "--graph", str(simulated / "truth.csv"),
    ]
    out = tmp_path / "score"
    result = runner.invoke(main, ["--quiet", "score", *common, "--out-dir", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads((out / "report.json").read_text())
    assert report["edges"] == [["1", "19"], ["2", "19"], ["19", "20"]]
    assert report["log_det_J"] is None

    out = tmp_path / "posterior"
    result = runner.invoke(main, ["--quiet", "posterior", *common, "--out-dir", str(out)])
    assert result.exit_code == 0, result.output
    table = pd.read_csv(out / "posterior.csv", keep_default_na=False, dtype={"parents": str})
    assert table.loc[18, "parents"] == "1;2"
    assert (table["psi_rate"] > 0).all()


def test_moralize_without_data(runner, simulated, tmp_path):
    out = tmp_path / "moral"
    result = runner.invoke(
        main,
        ["--quiet", "moralize", "--graph", str(simulated / "truth.csv"), "--out-dir", str(out)],
    )
    assert result.exit_code == 0, result.output
    lines = [line for line in (out / "moral.dot").read_text().splitlines() if "--" in line]
    assert lines == ["  1 -- 2;", "  1 -- 19;", "  2 -- 19;", "  19 -- 20;"]


def test_run_settings_file(runner, simulated, tmp_path):
    out = tmp_path / "run"
    config = RunConfigModel(
        command="learn",
        input=InputModel(
            data=str(simulated / "data_2.csv"),
            covariates=str(simulated / "covariates.csv"),
        ),
        output=OutputModel(dir=str(out), report="result.json"),
        metric="residual",
        search={"restarts": 1},
    )
    fn = tmp_path / "settings.toml"
    Config().save(config, fn)
    result = runner.invoke(main, ["--quiet", "run", str(fn)])
    assert result.exit_code == 0, result.output
    assert (out / "result.json").is_file()
    assert Config().load_file(out / "settings.toml") == config


_error_cases = {
    "non_numeric": {"cells": "a,b\n1,x\n2,3\n", "cov": False, "code": 2},
    "ragged": {"cells": "a,b\n1,2,3\n2,3\n", "cov": False, "code": 2},
    "covariates_for_bge": {"cells": "a,b\n1,2\n2,3\n4,1\n", "cov": True, "code": 3},
}


@pytest.mark.parametrize("case", list(_error_cases.keys()))
def test_exit_codes(runner, tmp_path, case):
    c = _error_cases[case]
    data = tmp_path / "data.csv"
    data.write_text(c["cells"])
    args = ["--quiet", "learn", "--data", str(data), "--out-dir", str(tmp_path / "out")]
    if c["cov"]:
        cov = tmp_path / "cov.csv"
        cov.write_text("q1\n1\n1\n1\n")
        args += ["--covariates", str(cov)]
    result = runner.invoke(main, args)
    assert result.exit_code == c["code"]
    assert "error:" in result.output
    assert len(result.output.strip().splitlines()) == 1


_graph_cases = {
    "id_out_of_range": {"command": "score", "edges": "from,to\n1,5\n"},
    "fractional_id": {"command": "score", "edges": "from,to\n1.7,2\n"},
    "zero_id": {"command": "moralize", "edges": "from,to\n0,1\n"},
}


@pytest.mark.parametrize("case", list(_graph_cases.keys()))
def test_bad_edge_list_exit_code(runner, tmp_path, case):
    c = _graph_cases[case]
    graph = tmp_path / "edges.csv"
    graph.write_text(c["edges"])
    args = ["--quiet", c["command"], "--graph", str(graph), "--out-dir", str(tmp_path / "out")]
    if c["command"] == "score":
        data = tmp_path / "data.csv"
        data.write_text("a,b,c\n1,2,0\n2,3,1\n4,1,1\n3,3,2\n")
        args += ["--data", str(data)]
    result = runner.invoke(main, args)
    assert result.exit_code == 2
    assert "error:" in result.output
    assert len(result.output.strip().splitlines()) == 1


_intercept_cases = {"example2_covariates": True, "with_intercept": False}


@pytest.mark.parametrize("case", list(_intercept_cases.keys()))
def test_warns_when_covariates_miss_intercept(runner, simulated, tmp_path, case):
    cov = simulated / "covariates.csv"
    if case == "with_intercept":
        df = read_numeric_csv(cov, "covariates")
        df.insert(0, "one", 1.0)
        cov = tmp_path / "covariates.csv"
        df.to_csv(cov, index=False, float_format="%.17g")
    log = tmp_path / "covnet.log"
    result = runner.invoke(
        main,
        ["--quiet", "--log-file", str(log), "score",
         "--data", str(simulated / "data_1.csv"), "--covariates", str(cov),
         "--metric", "bgecm", "--graph", str(simulated / "truth.csv"),
         "--out-dir", str(tmp_path / "out")],
    )
    assert result.exit_code == 0, result.output
    warned = "do not span the constant vector" in log.read_text()
    assert warned == _intercept_cases[case]


def test_missing_file_exit_code(runner, tmp_path):
    result = runner.invoke(
        main, ["--quiet", "learn", "--data", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path)]
    )
    assert result.exit_code == 4


def test_rank_deficient_covariates_exit_code(runner, tmp_path):
    data = tmp_path / "data.csv"
    data.write_text("a,b\n1,2\n2,3\n4,1\n3,3\n")
    cov = tmp_path / "cov.csv"
    cov.write_text("q1,q2\n1,2\n1,2\n1,2\n1,2\n")
    result = runner.invoke(
        main,
        ["--quiet", "learn", "--data", str(data), "--covariates", str(cov),
         "--metric", "bgecm", "--out-dir", str(tmp_path / "out")],
    )
    assert result.exit_code == 3


def test_spread(runner, simulated, tmp_path):
    out = tmp_path / "spread"
    result = runner.invoke(
        main,
        ["--quiet", "spread", "--data", str(simulated / "data_1.csv"),
         "--covariates", str(simulated / "covariates.csv"), "--out-dir", str(out)],
    )
    assert result.exit_code == 0, result.output
    spread = pd.read_csv(out / "spread.csv")
    assert list(spread.columns) == ["name", "std", "residual_se"]
    assert len(spread) == 20


def test_study_writes_summary(runner, tmp_path):
    out = tmp_path / "study"
    result = runner.invoke(
        main,
        ["--quiet", "study", "--example", "2", "--replicates", "1", "--metrics", "bgecm,residual",
         "--restarts", "0", "--out-dir", str(out)],
    )
    assert result.exit_code == 0, result.output
    summary = pd.read_csv(out / "study_summary.csv")
    assert summary["metric"].tolist() == ["bgecm", "residual"]
    assert Path(out / "study.csv").is_file()
