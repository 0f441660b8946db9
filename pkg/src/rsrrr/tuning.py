"""Cross-validation tuning of (lambda, gamma, tau).

The sweep is organized tau-outer, gamma-middle, lambda-inner-descending.
Held-out candidates of the robust method are scored with the Huber loss
at one fixed scale, tau_score = score_tau_c * sqrt(n / log(pq)); the
squared-error method (tau = inf) is scored with its own squared loss.
Scoring every robust candidate at its own tau would make scores
incomparable across the tau grid (a smaller tau shrinks the loss of
every prediction), so the smallest tau would always win and tuning tau
would be vacuous; a single robust scale keeps outliers from dominating
selection while leaving the tau grid meaningful.  Each candidate whose
inner fits all converged is preferred over flagged ones; within a pool
the mean held-out loss decides, with ties broken toward larger lambda
and then larger tau.

tau candidates are specified through the constant c of the rule
tau = c * sqrt(n / log(p*q)); c = inf selects the squared-error loss.
When no explicit lambda grid is given, one is built per (tau, gamma)
from lambda_max, the smallest tested lambda whose full-data fit is the
zero matrix, located by a halving search that starts from an analytic
upper bound.
"""

import math
from dataclasses import dataclass

import numpy as np

from .prox import NumericalError, huber_total, psi
from .solver import Hyperparams, NormalEquations, Problem, fit

DEFAULT_GAMMA_GRID = (2.5, 3.0, 3.5, 4.0)
DEFAULT_TAU_C_GRID = tuple(round(0.4 + 0.05 * i, 2) for i in range(23))


@dataclass(frozen=True)
class CvPlan:
    """Grid and bookkeeping for one cross-validation run.

    lambda_grid, when given, is used verbatim (sorted descending);
    otherwise n_lambda log-spaced values from lambda_max down to
    lambda_max * lambda_min_ratio are generated per (tau, gamma).
    Fold assignment is a deterministic function of (seed, n).
    """

    folds: int = 5
    lambda_grid: tuple = None
    gamma_grid: tuple = DEFAULT_GAMMA_GRID
    tau_c_grid: tuple = DEFAULT_TAU_C_GRID
    seed: int = 0
    n_lambda: int = 50
    lambda_min_ratio: float = 1e-4
    score_tau_c: float = 1.0
    rho: float = 1.0
    eps: float = 1e-6
    max_iter: int = 10000

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.lambda_grid is not None and len(self.lambda_grid) == 0:
            raise ValueError("lambda_grid must be nonempty when given")
        if len(self.gamma_grid) == 0 or len(self.tau_c_grid) == 0:
            raise ValueError("gamma_grid and tau_c_grid must be nonempty")
        if self.n_lambda < 1 or not 0 < self.lambda_min_ratio <= 1:
            raise ValueError("bad lambda path parameters")


@dataclass
class CvRow:
    """Score record for one (lambda, gamma, tau) combination."""

    lam: float
    gamma: float
    tau: float
    tau_c: float
    mean: float
    se: float
    n_nonconverged: int
    n_failed: int


@dataclass
class CvResult:
    best: Hyperparams
    cv_table: list
    refit: object
    best_row: CvRow = None


def tau_from_c(c, n, p, q):
    """Map a grid constant c to tau = c * sqrt(n / log(p*q))."""
    if math.isinf(c):
        return math.inf
    if p * q < 2:
        raise ValueError("tau rule needs p*q >= 2")
    return float(c) * math.sqrt(n / math.log(p * q))


def make_folds(n, k, seed):
    """Assign n rows to k folds of size differing by at most one.

    Deterministic in (n, k, seed): a seeded permutation is dealt
    round-robin.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    if n < k:
        raise ValueError("cannot split %d rows into %d folds" % (n, k))
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[perm] = np.arange(n) % k
    return labels


class _FoldCache:
    """Per-fold training problems with factorizations, plus held rows."""

    def __init__(self, problem, folds):
        self.entries = []
        for f in range(int(np.max(folds)) + 1):
            tr = folds != f
            te = ~tr
            sub = Problem(problem.X[tr], problem.Y[tr], check_scaling=False)
            self.entries.append(
                (sub, NormalEquations(sub.X), problem.X[te], problem.Y[te])
            )


def _score_folds(hp, cache, score_tau=None):
    """Held-out loss per fold; returns (mean, se, n_nonconverged, n_failed)."""
    if score_tau is None:
        score_tau = hp.tau
    scores = []
    n_nonconverged = 0
    n_failed = 0
    for sub, solver, x_te, y_te in cache.entries:
        try:
            res = fit(sub, hp, solver=solver)
        except NumericalError:
            n_failed += 1
            continue
        if not res.converged:
            n_nonconverged += 1
        r = y_te - x_te @ res.A_hat
        scores.append(huber_total(r, score_tau) / x_te.shape[0])
    if not scores:
        return math.nan, math.nan, n_nonconverged, n_failed
    mean = math.fsum(scores) / len(scores)
    if len(scores) > 1:
        var = math.fsum((s - mean) ** 2 for s in scores) / (len(scores) - 1)
        se = math.sqrt(var / len(scores))
    else:
        se = math.nan
    return mean, se, n_nonconverged, n_failed


def cv_score(problem, hp, folds):
    """Mean and standard error of the held-out loss across folds.

    Scores with the loss of hp itself (Huber at hp.tau, squared error
    when hp.tau is infinite); see cross_validate for how the grid sweep
    fixes the scoring scale instead.
    """
    mean, se, _, _ = _score_folds(hp, _FoldCache(problem, folds))
    return mean, se


def _gradient_at_zero(problem, tau):
    if math.isinf(tau):
        r = problem.Y
    else:
        r = psi(problem.Y, tau)
    return -(problem.X.T @ r) / problem.n


def lambda_zero_bound(problem, gamma, tau):
    """A lambda at which the zero matrix is certified optimal.

    The zero matrix minimizes the penalized objective as soon as the
    loss gradient at zero lies in lam * (spectral ball + gamma * sup
    ball); placing the whole gradient in either ball gives the bound
    min(sigma_max, max_abs / gamma).  For gamma = 0 the spectral bound
    is exact.
    """
    g = _gradient_at_zero(problem, tau)
    op = float(np.linalg.svd(g, compute_uv=False)[0]) if g.size else 0.0
    if gamma == 0:
        return op
    return min(op, float(np.max(np.abs(g))) / gamma)


def lambda_path(problem, gamma, tau, plan, solver=None):
    """Descending lambda grid anchored at the zero-fit boundary.

    The anchor is the smallest tested lambda whose fit at loss scale
    ``tau`` has empty support, found by halving from an analytic
    certificate.  A single fine grid then spans down to
    lambda_max * lambda_min_ratio.
    """
    if solver is None:
        solver = NormalEquations(problem.X)
    lam_max = lambda_zero_bound(problem, gamma, tau)
    if not lam_max > 0:
        lam_max = 1.0
    elif gamma > 0:
        # halve toward the smallest lambda still yielding an empty support
        for _ in range(60):
            hp = Hyperparams(lam_max / 2, gamma, tau, plan.rho, plan.eps,
                             plan.max_iter)
            if fit(problem, hp, solver=solver).support:
                break
            lam_max /= 2
    if plan.n_lambda == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, lam_max * plan.lambda_min_ratio, plan.n_lambda)


def cross_validate(problem, plan):
    """Score the full grid, select, and refit on all rows.

    Returns a CvResult whose cv_table lists one CvRow per combination in
    sweep order.  Raises RuntimeError only if every combination failed.
    """
    folds = make_folds(problem.n, plan.folds, plan.seed)
    cache = _FoldCache(problem, folds)
    full_solver = NormalEquations(problem.X)
    score_tau = tau_from_c(plan.score_tau_c, problem.n, problem.p, problem.q)
    explicit = None
    if plan.lambda_grid is not None:
        explicit = np.sort(np.asarray(plan.lambda_grid, dtype=float))[::-1]
    paths = {}
    rows = []
    for c in plan.tau_c_grid:
        tau = tau_from_c(c, problem.n, problem.p, problem.q)
        for gamma in plan.gamma_grid:
            if explicit is not None:
                lams = explicit
            else:
                if (tau, gamma) not in paths:
                    paths[tau, gamma] = lambda_path(problem, gamma, tau, plan,
                                                    solver=full_solver)
                lams = paths[tau, gamma]
            for lam in lams:
                hp = Hyperparams(float(lam), float(gamma), tau, plan.rho,
                                 plan.eps, plan.max_iter)
                mean, se, n_nonconverged, n_failed = _score_folds(
                    hp, cache,
                    score_tau=math.inf if math.isinf(tau) else score_tau)
                rows.append(CvRow(hp.lam, hp.gamma, hp.tau, float(c), mean,
                                  se, n_nonconverged, n_failed))
    scored = [r for r in rows if math.isfinite(r.mean)]
    if not scored:
        raise RuntimeError("every cross-validation combination failed")
    clean = [r for r in scored if r.n_nonconverged == 0] or scored
    best_row = min(clean, key=lambda r: (r.mean, -r.lam, -r.tau))
    best = Hyperparams(best_row.lam, best_row.gamma, best_row.tau, plan.rho,
                       plan.eps, plan.max_iter)
    refit = fit(problem, best, solver=full_solver)
    return CvResult(best=best, cv_table=rows, refit=refit, best_row=best_row)
