"""Command-line interface.

Subcommands: fit (single penalized solve), cv (cross-validated tuning
plus refit), simulate (replicated benchmark scenarios) and diagnose
(gradient / Hessian / concentration checks and Grubbs outlier
screening).  Every command writes its outputs plus a manifest.json that
records the exact configuration; re-running with the same configuration
reproduces all files byte for byte.

Exit codes: 0 success, 1 tolerance/check failure, 2 usage or I/O error.
"""

import os
import sys

import click
import numpy as np

from . import __version__
from .diagnostics import (NoiseSpec, gradient_supnorm_experiment,
                          grubbs_screen, loss_gradient, loss_hessian,
                          student_t_abs_moment, student_t_sampler,
                          truncation_bound_experiment)
from .io import (ensure_dir, read_matrix_csv, write_json, write_matrix_csv,
                 write_rows_csv)
from .prox import NumericalError, huber_total
from .simulate import (METHODS, SCENARIOS, ScenarioSpec, gen_design,
                       run_scenario)
from .solver import Hyperparams, Problem, fit
from .tuning import (CvPlan, DEFAULT_GAMMA_GRID, DEFAULT_TAU_C_GRID,
                     cross_validate, tau_from_c)


class InputError(click.ClickException):
    """I/O or dimension problem; exits with status 2."""

    exit_code = 2


def _load_problem(x_path, y_path):
    try:
        x = read_matrix_csv(x_path)
        y = read_matrix_csv(y_path)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc))
    if x.shape[0] != y.shape[0]:
        raise InputError(
            "X has %d rows but Y has %d (files %s, %s)"
            % (x.shape[0], y.shape[0], x_path, y_path)
        )
    try:
        return Problem(x, y)
    except (ValueError, NumericalError) as exc:
        raise InputError(str(exc))


def _floats(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise InputError("cannot parse %r as a comma-separated float list" % text)


def _resolve_tau(tau, tau_c, problem):
    if (tau is None) == (tau_c is None):
        raise InputError("exactly one of --tau / --tau-c is required")
    if tau is not None:
        return float(tau)
    return tau_from_c(tau_c, problem.n, problem.p, problem.q)


def _write_fit_outputs(out_dir, problem, result, hp):
    write_matrix_csv(os.path.join(out_dir, "coefficients.csv"), result.A_hat)
    write_rows_csv(
        os.path.join(out_dir, "support.csv"), ["row", "col"],
        [{"row": i, "col": j} for i, j in sorted(result.support)],
    )
    write_json(os.path.join(out_dir, "summary.json"), {
        "objective": result.objective,
        "iterations": result.iterations,
        "converged": result.converged,
        "rank_estimate": result.rank_estimate,
        "support_size": len(result.support),
        "primal_residuals": {
            "loss_block": result.primal_residuals[0],
            "l1_block": result.primal_residuals[1],
            "nuclear_block": result.primal_residuals[2],
        },
        "hyperparams": {"lambda": hp.lam, "gamma": hp.gamma, "tau": hp.tau,
                        "rho": hp.rho, "eps": hp.eps, "max_iter": hp.max_iter},
        "n": problem.n, "p": problem.p, "q": problem.q,
    })


def _write_manifest(out_dir, command, config, outputs):
    write_json(os.path.join(out_dir, "manifest.json"), {
        "command": command,
        "config": config,
        "outputs": sorted(outputs),
        "version": __version__,
    })


@click.group()
@click.version_option(__version__)
def main():
    """Robust sparse reduced-rank regression toolkit."""


@main.command("fit")
@click.option("--x", "x_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--y", "y_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--lambda", "lam", type=float, required=True,
              help="penalty level (nonnegative)")
@click.option("--gamma", type=float, default=0.0, show_default=True,
              help="entrywise-l1 weight relative to the nuclear norm")
@click.option("--tau", type=float, default=None,
              help="Huber scale; 'inf' selects squared loss")
@click.option("--tau-c", type=float, default=None,
              help="set tau = c*sqrt(n/log(pq)) instead of --tau")
@click.option("--rho", type=float, default=1.0, show_default=True)
@click.option("--eps", type=float, default=1e-6, show_default=True)
@click.option("--max-iter", type=int, default=10000, show_default=True)
def cmd_fit(x_path, y_path, out_dir, lam, gamma, tau, tau_c, rho, eps,
            max_iter):
    """Solve one penalized regression and write the estimate."""
    problem = _load_problem(x_path, y_path)
    tau_val = _resolve_tau(tau, tau_c, problem)
    try:
        hp = Hyperparams(lam=lam, gamma=gamma, tau=tau_val, rho=rho, eps=eps,
                         max_iter=max_iter)
    except ValueError as exc:
        raise InputError(str(exc))
    ensure_dir(out_dir)
    result = fit(problem, hp)
    _write_fit_outputs(out_dir, problem, result, hp)
    _write_manifest(out_dir, "fit", {
        "x": x_path, "y": y_path, "out_dir": out_dir, "lambda": lam,
        "gamma": gamma, "tau": tau, "tau_c": tau_c, "rho": rho, "eps": eps,
        "max_iter": max_iter,
    }, ["coefficients.csv", "support.csv", "summary.json"])


@main.command("cv")
@click.option("--x", "x_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--y", "y_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--folds", type=int, default=5, show_default=True)
@click.option("--lambda-grid", default=None,
              help="explicit comma-separated lambda values")
@click.option("--gamma-grid", default=None,
              help="comma-separated gammas [default: 2.5,3,3.5,4]")
@click.option("--tau-c-grid", default=None,
              help="comma-separated tau constants; 'inf' means squared loss "
                   "[default: 0.4..1.5 step 0.05]")
@click.option("--n-lambda", type=int, default=50, show_default=True)
@click.option("--lambda-min-ratio", type=float, default=1e-4,
              show_default=True)
@click.option("--score-tau-c", type=float, default=1.0, show_default=True,
              help="fixed Huber scale constant for held-out scoring")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rho", type=float, default=1.0, show_default=True)
@click.option("--eps", type=float, default=1e-6, show_default=True)
@click.option("--max-iter", type=int, default=10000, show_default=True)
def cmd_cv(x_path, y_path, out_dir, folds, lambda_grid, gamma_grid,
           tau_c_grid, n_lambda, lambda_min_ratio, score_tau_c, seed, rho,
           eps, max_iter):
    """Tune (lambda, gamma, tau) by K-fold cross-validation and refit."""
    problem = _load_problem(x_path, y_path)
    try:
        plan = CvPlan(
            folds=folds,
            lambda_grid=_floats(lambda_grid) if lambda_grid else None,
            gamma_grid=_floats(gamma_grid) if gamma_grid else DEFAULT_GAMMA_GRID,
            tau_c_grid=_floats(tau_c_grid) if tau_c_grid else DEFAULT_TAU_C_GRID,
            seed=seed, n_lambda=n_lambda, lambda_min_ratio=lambda_min_ratio,
            score_tau_c=score_tau_c, rho=rho, eps=eps, max_iter=max_iter,
        )
    except ValueError as exc:
        raise InputError(str(exc))
    ensure_dir(out_dir)
    cv = cross_validate(problem, plan)
    write_rows_csv(
        os.path.join(out_dir, "cv_table.csv"),
        ["tau_c", "tau", "gamma", "lambda", "mean_score", "se_score",
         "n_nonconverged", "n_failed"],
        [{"tau_c": r.tau_c, "tau": r.tau, "gamma": r.gamma, "lambda": r.lam,
          "mean_score": r.mean, "se_score": r.se,
          "n_nonconverged": r.n_nonconverged, "n_failed": r.n_failed}
         for r in cv.cv_table],
    )
    write_json(os.path.join(out_dir, "selected.json"), {
        "lambda": cv.best.lam, "gamma": cv.best.gamma, "tau": cv.best.tau,
        "tau_c": cv.best_row.tau_c, "mean_score": cv.best_row.mean,
        "se_score": cv.best_row.se,
    })
    _write_fit_outputs(out_dir, problem, cv.refit, cv.best)
    _write_manifest(out_dir, "cv", {
        "x": x_path, "y": y_path, "out_dir": out_dir, "folds": folds,
        "lambda_grid": lambda_grid, "gamma_grid": gamma_grid,
        "tau_c_grid": tau_c_grid, "n_lambda": n_lambda,
        "lambda_min_ratio": lambda_min_ratio, "score_tau_c": score_tau_c,
        "seed": seed, "rho": rho, "eps": eps, "max_iter": max_iter,
    }, ["cv_table.csv", "selected.json", "coefficients.csv", "support.csv",
        "summary.json"])


@main.command("simulate")
@click.option("--scenario", required=True,
              type=click.Choice(sorted(SCENARIOS)))
@click.option("--noise", default=None,
              type=click.Choice(["normal", "student_t", "lognormal"]))
@click.option("--contamination", type=float, default=None,
              help="fraction of response entries overwritten with U[10,20]")
@click.option("--method", default="both",
              type=click.Choice(["huber", "squared", "both"]))
@click.option("--replicates", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=None,
              help="worker processes [default: all cores]")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--folds", type=int, default=5, show_default=True)
@click.option("--gamma-grid", default=None)
@click.option("--tau-c-grid", default=None)
@click.option("--n-lambda", type=int, default=50, show_default=True)
@click.option("--lambda-min-ratio", type=float, default=1e-4,
              show_default=True)
@click.option("--score-tau-c", type=float, default=1.0, show_default=True)
@click.option("--rho", type=float, default=1.0, show_default=True)
@click.option("--eps", type=float, default=1e-6, show_default=True)
@click.option("--max-iter", type=int, default=10000, show_default=True)
def cmd_simulate(scenario, noise, contamination, method, replicates, seed,
                 threads, out_dir, folds, gamma_grid, tau_c_grid, n_lambda,
                 lambda_min_ratio, score_tau_c, rho, eps, max_iter):
    """Run a named benchmark scenario over independent replicates."""
    base = dict(SCENARIOS[scenario])
    if noise is not None:
        base["noise"] = noise
    if contamination is not None:
        base["contamination_frac"] = contamination
    try:
        spec = ScenarioSpec(**base)
    except ValueError as exc:
        raise InputError(str(exc))
    plan = CvPlan(
        folds=folds,
        gamma_grid=_floats(gamma_grid) if gamma_grid else DEFAULT_GAMMA_GRID,
        tau_c_grid=_floats(tau_c_grid) if tau_c_grid else DEFAULT_TAU_C_GRID,
        seed=seed, n_lambda=n_lambda, lambda_min_ratio=lambda_min_ratio,
        score_tau_c=score_tau_c, rho=rho, eps=eps, max_iter=max_iter,
    )
    methods = list(METHODS) if method == "both" else [method]
    n_jobs = threads if threads is not None else (os.cpu_count() or 1)
    ensure_dir(out_dir)
    rep_rows = []
    sum_rows = []
    for m in methods:
        out = run_scenario(spec, m, replicates, seed, plan=plan,
                           n_jobs=n_jobs)
        for rec in out.records:
            rep_rows.append({
                "method": m, "replicate": rec.replicate, "seed": rec.seed,
                "frob": rec.metrics.frob_error, "tpr": rec.metrics.tpr,
                "fpr": rec.metrics.fpr, "lambda": rec.lam,
                "gamma": rec.gamma, "tau": rec.tau, "tau_c": rec.tau_c,
                "iterations": rec.iterations, "converged": rec.converged,
                "support_size": rec.support_size, "error": None,
            })
        for r, err in out.failures:
            rep_rows.append({"method": m, "replicate": r,
                             "error": err.replace(",", ";")})
        s = out.summary
        sum_rows.append({
            "method": m, "noise": spec.noise,
            "contamination": spec.contamination_frac,
            "mean_frob": s.mean_frob, "se_frob": s.se_frob,
            "mean_tpr": s.mean_tpr, "se_tpr": s.se_tpr,
            "mean_fpr": s.mean_fpr, "se_fpr": s.se_fpr,
            "replicates": s.replicates, "failures": s.failures,
        })
    write_rows_csv(
        os.path.join(out_dir, "replicates.csv"),
        ["method", "replicate", "seed", "frob", "tpr", "fpr", "lambda",
         "gamma", "tau", "tau_c", "iterations", "converged", "support_size",
         "error"],
        rep_rows,
    )
    write_rows_csv(
        os.path.join(out_dir, "summary.csv"),
        ["method", "noise", "contamination", "mean_frob", "se_frob",
         "mean_tpr", "se_tpr", "mean_fpr", "se_fpr", "replicates",
         "failures"],
        sum_rows,
    )
    _write_manifest(out_dir, "simulate", {
        "scenario": scenario, "n": spec.n, "p": spec.p, "q": spec.q,
        "coef_pattern": spec.coef_pattern, "noise": spec.noise,
        "contamination": spec.contamination_frac,
        "contamination_range": list(spec.contamination_range),
        "method": method, "replicates": replicates, "seed": seed,
        "threads": threads, "out_dir": out_dir, "folds": folds,
        "gamma_grid": gamma_grid, "tau_c_grid": tau_c_grid,
        "n_lambda": n_lambda, "lambda_min_ratio": lambda_min_ratio,
        "score_tau_c": score_tau_c, "rho": rho, "eps": eps,
        "max_iter": max_iter,
    }, ["replicates.csv", "summary.csv"])


@main.group("diagnose")
def diagnose():
    """Numerical checks and screening reports."""


def _random_smooth_instance(rng, n, p, q):
    x = gen_design(n, p, rng.integers(2 ** 31))
    a = rng.normal(size=(p, q))
    y = x @ a + rng.normal(size=(n, q))
    prob = Problem(x, y)
    resid = np.abs(y - x @ a).ravel()
    # pick tau in the widest gap of |residuals| so no entry is near the kink
    rs = np.sort(resid)
    inner = rs[(rs > np.quantile(rs, 0.2)) & (rs < np.quantile(rs, 0.9))]
    gaps = np.diff(inner)
    k = int(np.argmax(gaps))
    tau = 0.5 * (inner[k] + inner[k + 1])
    return prob, a, float(tau)


@diagnose.command("grad-check")
@click.option("--instances", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def cmd_grad_check(instances, seed, out_dir):
    """Compare the loss gradient against central finite differences."""
    rng = np.random.default_rng(seed)
    rows = []
    worst = 0.0
    for k in range(instances):
        prob, a, tau = _random_smooth_instance(rng, 14, 4, 3)
        g = loss_gradient(prob, a, tau)
        fd = np.empty_like(g)
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                h = 1e-6 * (1 + abs(a[i, j]))
                ap = a.copy()
                am = a.copy()
                ap[i, j] += h
                am[i, j] -= h
                lp = huber_total(prob.Y - prob.X @ ap, tau) / prob.n
                lm = huber_total(prob.Y - prob.X @ am, tau) / prob.n
                fd[i, j] = (lp - lm) / (2 * h)
        err = float(np.max(np.abs(g - fd)) / (1 + np.max(np.abs(fd))))
        worst = max(worst, err)
        rows.append({"instance": k, "tau": tau, "max_rel_err": err})
    ensure_dir(out_dir)
    write_rows_csv(os.path.join(out_dir, "grad_check.csv"),
                   ["instance", "tau", "max_rel_err"], rows)
    _write_manifest(out_dir, "diagnose grad-check",
                    {"instances": instances, "seed": seed,
                     "out_dir": out_dir}, ["grad_check.csv"])
    click.echo("grad-check worst relative error: %.3g" % worst)
    if worst > 1e-6:
        sys.exit(1)


@diagnose.command("hessian-check")
@click.option("--instances", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def cmd_hessian_check(instances, seed, out_dir):
    """Compare the loss Hessian against finite differences; verify PSD."""
    rng = np.random.default_rng(seed)
    rows = []
    worst = 0.0
    psd_ok = True
    for k in range(instances):
        prob, a, tau = _random_smooth_instance(rng, 12, 3, 2)
        h_mat = loss_hessian(prob, a, tau)
        psd_ok &= bool(np.min(np.linalg.eigvalsh(h_mat)) >= -1e-10)
        fd = _fd_hessian(prob, a, tau)
        err = float(np.max(np.abs(h_mat - fd)))
        worst = max(worst, err)
        rows.append({"instance": k, "tau": tau, "max_abs_err": err})
    ensure_dir(out_dir)
    write_rows_csv(os.path.join(out_dir, "hessian_check.csv"),
                   ["instance", "tau", "max_abs_err"], rows)
    _write_manifest(out_dir, "diagnose hessian-check",
                    {"instances": instances, "seed": seed,
                     "out_dir": out_dir}, ["hessian_check.csv"])
    click.echo("hessian-check worst entry error: %.3g (psd: %s)"
               % (worst, psd_ok))
    if worst > 1e-5 or not psd_ok:
        sys.exit(1)


def _fd_hessian(prob, a, tau, h=1e-4):
    p, q = a.shape
    dim = p * q
    out = np.empty((dim, dim))

    def loss_at(vec):
        m = vec.reshape((q, p)).T  # column-stacked vec convention
        return huber_total(prob.Y - prob.X @ m, tau) / prob.n

    v0 = a.T.ravel()
    f0 = loss_at(v0)
    for r in range(dim):
        vp = v0.copy(); vm = v0.copy()
        vp[r] += h; vm[r] -= h
        out[r, r] = (loss_at(vp) - 2 * f0 + loss_at(vm)) / (h * h)
        for c in range(r + 1, dim):
            vpp = v0.copy(); vpm = v0.copy(); vmp = v0.copy(); vmm = v0.copy()
            vpp[r] += h; vpp[c] += h
            vpm[r] += h; vpm[c] -= h
            vmp[r] -= h; vmp[c] += h
            vmm[r] -= h; vmm[c] -= h
            val = (loss_at(vpp) - loss_at(vpm) - loss_at(vmp) + loss_at(vmm))
            out[r, c] = out[c, r] = val / (4 * h * h)
    return out


@diagnose.command("supnorm")
@click.option("--n-grid", default="100,200,400,800", show_default=True)
@click.option("--p", type=int, default=20, show_default=True)
@click.option("--q", type=int, default=5, show_default=True)
@click.option("--noise", default="normal", show_default=True,
              type=click.Choice(["normal", "student_t", "lognormal", "zero"]))
@click.option("--tau-c", type=float, default=1.0, show_default=True)
@click.option("--replicates", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def cmd_supnorm(n_grid, p, q, noise, tau_c, replicates, seed, out_dir):
    """Tabulate high quantiles of the gradient sup-norm against n."""
    ns = [int(v) for v in _floats(n_grid)]
    rows = gradient_supnorm_experiment(ns, p, q, noise, tau_c, replicates,
                                       seed)
    ensure_dir(out_dir)
    write_rows_csv(os.path.join(out_dir, "supnorm.csv"),
                   ["n", "tau", "quantile"],
                   [{"n": r.n, "tau": r.tau, "quantile": r.quantile}
                    for r in rows])
    _write_manifest(out_dir, "diagnose supnorm", {
        "n_grid": n_grid, "p": p, "q": q, "noise": noise, "tau_c": tau_c,
        "replicates": replicates, "seed": seed, "out_dir": out_dir,
    }, ["supnorm.csv"])
    if len(rows) >= 2:
        slope = np.polyfit(np.log([r.n for r in rows]),
                           np.log([max(r.quantile, 1e-300) for r in rows]),
                           1)[0]
        click.echo("fitted log-log slope: %.3f" % slope)


@diagnose.command("truncation")
@click.option("--df", type=float, default=3.0, show_default=True)
@click.option("--delta", type=float, default=1.0, show_default=True)
@click.option("--n", type=int, default=100, show_default=True)
@click.option("--tau", type=float, default=5.0, show_default=True)
@click.option("--t-values", default="0.5,1,2", show_default=True)
@click.option("--replicates", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def cmd_truncation(df, delta, n, tau, t_values, replicates, seed, out_dir):
    """Empirical check of the tail-count concentration bound."""
    noise = NoiseSpec(delta=delta,
                      v_delta=student_t_abs_moment(df, 1.0 + delta))
    rows = truncation_bound_experiment(noise, student_t_sampler(df), n, tau,
                                       _floats(t_values), replicates, seed)
    ensure_dir(out_dir)
    write_rows_csv(os.path.join(out_dir, "truncation.csv"),
                   ["t", "bound", "violation_freq", "prob_bound"],
                   [{"t": r.t, "bound": r.bound,
                     "violation_freq": r.violation_freq,
                     "prob_bound": r.prob_bound} for r in rows])
    _write_manifest(out_dir, "diagnose truncation", {
        "df": df, "delta": delta, "n": n, "tau": tau, "t_values": t_values,
        "replicates": replicates, "seed": seed, "out_dir": out_dir,
    }, ["truncation.csv"])
    for r in rows:
        click.echo("t=%g violation_freq=%.5f <= exp(-2t)=%.5f"
                   % (r.t, r.violation_freq, r.prob_bound))


@diagnose.command("grubbs")
@click.option("--y", "y_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def cmd_grubbs(y_path, alpha, out_dir):
    """Column-wise maximum normalized residual test with Bonferroni."""
    try:
        y = read_matrix_csv(y_path)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc))
    try:
        report = grubbs_screen(y, alpha)
    except ValueError as exc:
        raise InputError(str(exc))
    ensure_dir(out_dir)
    write_rows_csv(os.path.join(out_dir, "grubbs.csv"),
                   ["column", "statistic", "critical", "flagged"],
                   [{"column": c.index, "statistic": c.statistic,
                     "critical": c.critical, "flagged": c.flagged}
                    for c in report.columns])
    write_json(os.path.join(out_dir, "grubbs_summary.json"), {
        "alpha": report.alpha, "bonferroni_factor": report.bonferroni_factor,
        "n_rows": report.n_rows, "n_columns": len(report.columns),
        "n_flagged": report.n_flagged,
        "flagged_columns": report.flagged_columns,
        "skipped": [{"column": j, "reason": r} for j, r in report.skipped],
    })
    _write_manifest(out_dir, "diagnose grubbs",
                    {"y": y_path, "alpha": alpha, "out_dir": out_dir},
                    ["grubbs.csv", "grubbs_summary.json"])
    click.echo("flagged %d of %d columns"
               % (report.n_flagged, len(report.columns)))


if __name__ == "__main__":
    main()
