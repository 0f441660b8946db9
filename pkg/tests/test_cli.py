import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from rsrrr.cli import main
from rsrrr.io import read_matrix_csv, write_matrix_csv


@pytest.fixture()
def runner():
    return CliRunner()


def _write_toy(tmp_path, n=6, p=2, q=1, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    x /= np.abs(x).max()
    a = np.array([[1.5], [-0.5]])[:p, :q]
    y = x @ a
    xp = tmp_path / "x.csv"
    yp = tmp_path / "y.csv"
    write_matrix_csv(xp, x)
    write_matrix_csv(yp, y)
    return str(xp), str(yp), x, y


def test_matrix_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    m = rng.normal(size=(7, 3)) * 10.0 ** rng.integers(-8, 8, size=(7, 3))
    path = tmp_path / "m.csv"
    write_matrix_csv(path, m)
    assert np.array_equal(read_matrix_csv(path), m)


def test_matrix_csv_header_autodetect(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("a,b\n1.5,2.5\n-3,4e-2\n")
    m = read_matrix_csv(path)
    assert np.array_equal(m, [[1.5, 2.5], [-3.0, 0.04]])


def test_fit_recovers_least_squares(tmp_path, runner):
    xp, yp, x, y = _write_toy(tmp_path)
    out = tmp_path / "out"
    res = runner.invoke(main, [
        "fit", "--x", xp, "--y", yp, "--out-dir", str(out),
        "--lambda", "0", "--gamma", "0", "--tau", "1e9",
        "--eps", "1e-12", "--max-iter", "50000",
    ])
    assert res.exit_code == 0, res.output
    coef = read_matrix_csv(out / "coefficients.csv")
    ls = np.linalg.lstsq(x, y, rcond=None)[0]
    assert np.max(np.abs(coef - ls)) < 1e-4
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is True
    assert set(summary["primal_residuals"]) == {
        "loss_block", "l1_block", "nuclear_block"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "fit"
    assert (out / "support.csv").exists()


def test_fit_dimension_mismatch_exits_2(tmp_path, runner):
    xp, yp, _, _ = _write_toy(tmp_path)
    bad = tmp_path / "bad.csv"
    write_matrix_csv(bad, np.zeros((4, 1)))
    res = runner.invoke(main, ["fit", "--x", xp, "--y", str(bad),
                               "--out-dir", str(tmp_path / "o"),
                               "--lambda", "0.1", "--tau", "1"])
    assert res.exit_code == 2
    assert "rows" in res.output


def test_fit_missing_file_exits_2(tmp_path, runner):
    xp, yp, _, _ = _write_toy(tmp_path)
    res = runner.invoke(main, ["fit", "--x", str(tmp_path / "nope.csv"),
                               "--y", yp, "--out-dir", str(tmp_path / "o"),
                               "--lambda", "0.1", "--tau", "1"])
    assert res.exit_code == 2


def test_fit_requires_exactly_one_tau(tmp_path, runner):
    xp, yp, _, _ = _write_toy(tmp_path)
    res = runner.invoke(main, ["fit", "--x", xp, "--y", yp,
                               "--out-dir", str(tmp_path / "o"),
                               "--lambda", "0.1"])
    assert res.exit_code == 2
    res = runner.invoke(main, ["fit", "--x", xp, "--y", yp,
                               "--out-dir", str(tmp_path / "o"),
                               "--lambda", "0.1", "--tau", "1",
                               "--tau-c", "1.0"])
    assert res.exit_code == 2


def test_fit_rerun_reproduces_outputs_bitwise(tmp_path, runner):
    xp, yp, _, _ = _write_toy(tmp_path, seed=3)
    args = lambda d: ["fit", "--x", xp, "--y", yp, "--out-dir", d,
                      "--lambda", "0.05", "--gamma", "2.5", "--tau-c", "1.0",
                      "--rho", "0.3"]
    d1, d2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert runner.invoke(main, args(d1)).exit_code == 0
    assert runner.invoke(main, args(d2)).exit_code == 0
    for name in ("coefficients.csv", "support.csv", "summary.json"):
        assert (tmp_path / "r1" / name).read_bytes() == \
               (tmp_path / "r2" / name).read_bytes()
    # manifests differ only in out_dir strings
    m1 = json.loads((tmp_path / "r1" / "manifest.json").read_text())
    m2 = json.loads((tmp_path / "r2" / "manifest.json").read_text())
    m1["config"].pop("out_dir")
    m2["config"].pop("out_dir")
    assert m1["config"] == m2["config"]


def _write_noisy(tmp_path, n=40, p=6, q=3, seed=5):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    x /= np.abs(x).max()
    a = np.zeros((p, q))
    a[:2, :2] = 1.0
    y = x @ a + 0.4 * rng.normal(size=(n, q))
    xp, yp = tmp_path / "xn.csv", tmp_path / "yn.csv"
    write_matrix_csv(xp, x)
    write_matrix_csv(yp, y)
    return str(xp), str(yp)


def test_cv_single_point_grid_matches_fit(tmp_path, runner):
    xp, yp = _write_noisy(tmp_path)
    cv_dir = str(tmp_path / "cv")
    res = runner.invoke(main, [
        "cv", "--x", xp, "--y", yp, "--out-dir", cv_dir,
        "--lambda-grid", "0.03", "--gamma-grid", "2.5",
        "--tau-c-grid", "0.8", "--folds", "4", "--rho", "0.3",
    ])
    assert res.exit_code == 0, res.output
    selected = json.loads((tmp_path / "cv" / "selected.json").read_text())
    assert selected["lambda"] == 0.03
    fit_dir = str(tmp_path / "fitref")
    res = runner.invoke(main, [
        "fit", "--x", xp, "--y", yp, "--out-dir", fit_dir,
        "--lambda", "0.03", "--gamma", "2.5", "--tau-c", "0.8",
        "--rho", "0.3",
    ])
    assert res.exit_code == 0
    assert (tmp_path / "cv" / "coefficients.csv").read_bytes() == \
           (tmp_path / "fitref" / "coefficients.csv").read_bytes()
    rows = (tmp_path / "cv" / "cv_table.csv").read_text().splitlines()
    assert rows[0].startswith("tau_c,tau,gamma,lambda,mean_score")
    assert len(rows) == 2


def test_cv_selected_gamma_in_grid(tmp_path, runner):
    xp, yp = _write_noisy(tmp_path, seed=6)
    res = runner.invoke(main, [
        "cv", "--x", xp, "--y", yp, "--out-dir", str(tmp_path / "cv2"),
        "--gamma-grid", "2.5,3.0", "--tau-c-grid", "0.6,1.2",
        "--n-lambda", "5", "--lambda-min-ratio", "1e-2", "--folds", "4",
        "--rho", "0.3",
    ])
    assert res.exit_code == 0, res.output
    selected = json.loads((tmp_path / "cv2" / "selected.json").read_text())
    assert selected["gamma"] in (2.5, 3.0)
    assert selected["tau_c"] in (0.6, 1.2)


def test_cv_unparseable_grid_exits_2(tmp_path, runner):
    xp, yp = _write_noisy(tmp_path)
    res = runner.invoke(main, [
        "cv", "--x", xp, "--y", yp, "--out-dir", str(tmp_path / "cv3"),
        "--gamma-grid", "two,three",
    ])
    assert res.exit_code == 2


def test_simulate_deterministic_and_layout(tmp_path, runner):
    args = lambda d: [
        "simulate", "--scenario", "table2-rank1", "--noise", "normal",
        "--method", "both", "--replicates", "2", "--seed", "7",
        "--threads", "1", "--out-dir", d,
        "--gamma-grid", "2.5", "--tau-c-grid", "0.7", "--n-lambda", "4",
        "--lambda-min-ratio", "1e-2", "--folds", "3", "--rho", "0.1",
    ]
    d1, d2 = str(tmp_path / "s1"), str(tmp_path / "s2")
    r1 = runner.invoke(main, args(d1))
    assert r1.exit_code == 0, r1.output
    assert runner.invoke(main, args(d2)).exit_code == 0
    s1 = (tmp_path / "s1" / "summary.csv").read_bytes()
    assert s1 == (tmp_path / "s2" / "summary.csv").read_bytes()
    lines = s1.decode().splitlines()
    assert lines[0] == ("method,noise,contamination,mean_frob,se_frob,"
                        "mean_tpr,se_tpr,mean_fpr,se_fpr,replicates,failures")
    assert len(lines) == 3  # one row per method
    assert lines[1].startswith("huber,") and lines[2].startswith("squared,")
    reps = (tmp_path / "s1" / "replicates.csv").read_text().splitlines()
    assert len(reps) == 5


def test_simulate_unknown_scenario_exits_2(tmp_path, runner):
    res = runner.invoke(main, ["simulate", "--scenario", "table9-rank9",
                               "--out-dir", str(tmp_path / "s")])
    assert res.exit_code == 2


def test_diagnose_grad_check_passes(tmp_path, runner):
    res = runner.invoke(main, ["diagnose", "grad-check", "--instances", "5",
                               "--seed", "1", "--out-dir",
                               str(tmp_path / "g")])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "g" / "grad_check.csv").exists()


def test_diagnose_hessian_check_passes(tmp_path, runner):
    res = runner.invoke(main, ["diagnose", "hessian-check", "--instances",
                               "2", "--seed", "1", "--out-dir",
                               str(tmp_path / "h")])
    assert res.exit_code == 0, res.output


def test_diagnose_truncation_writes_report(tmp_path, runner):
    res = runner.invoke(main, ["diagnose", "truncation", "--replicates",
                               "2000", "--seed", "3", "--out-dir",
                               str(tmp_path / "t")])
    assert res.exit_code == 0, res.output
    rows = (tmp_path / "t" / "truncation.csv").read_text().splitlines()
    assert rows[0] == "t,bound,violation_freq,prob_bound"
    assert len(rows) == 4


def test_diagnose_supnorm_writes_table(tmp_path, runner):
    res = runner.invoke(main, ["diagnose", "supnorm", "--n-grid", "50,100",
                               "--p", "6", "--q", "3", "--replicates", "30",
                               "--seed", "2", "--out-dir",
                               str(tmp_path / "sn")])
    assert res.exit_code == 0, res.output
    rows = (tmp_path / "sn" / "supnorm.csv").read_text().splitlines()
    assert len(rows) == 3


def test_diagnose_grubbs_flags_outlier_column(tmp_path, runner):
    rng = np.random.default_rng(8)
    y = rng.normal(size=(60, 4))
    y[11, 3] = 30.0
    yp = tmp_path / "yg.csv"
    write_matrix_csv(yp, y)
    res = runner.invoke(main, ["diagnose", "grubbs", "--y", str(yp),
                               "--alpha", "0.05", "--out-dir",
                               str(tmp_path / "gr")])
    assert res.exit_code == 0, res.output
    summary = json.loads((tmp_path / "gr" / "grubbs_summary.json").read_text())
    assert summary["flagged_columns"] == [3]
    table = (tmp_path / "gr" / "grubbs.csv").read_text().splitlines()
    assert table[0] == "column,statistic,critical,flagged"
    assert table[4].endswith("True")


def test_diagnose_grubbs_null_reports_no_flags(tmp_path, runner):
    rng = np.random.default_rng(9)
    yp = tmp_path / "ynull.csv"
    write_matrix_csv(yp, rng.normal(size=(80, 6)))
    res = runner.invoke(main, ["diagnose", "grubbs", "--y", str(yp),
                               "--alpha", "0.05", "--out-dir",
                               str(tmp_path / "gn")])
    assert res.exit_code == 0
    summary = json.loads((tmp_path / "gn" / "grubbs_summary.json").read_text())
    assert summary["n_flagged"] == 0
