"""Numerical companions to the estimator: loss derivatives, outlier
screening, and Monte-Carlo checks of the concentration behavior the
tuning rules rely on.

The loss here is L(A) = (1/n) * sum of Huber terms over the residual
matrix Y - XA.  Its gradient is -(1/n) X' psi(Y - XA) with psi the
clamped-identity derivative, and its Hessian with respect to the
column-stacked vec(A) is block diagonal: block k equals
(1/n) X' diag(1(|residual column k| <= tau)) X.

Only the full Hessian and its unrestricted spectrum are exposed.
Extremal Rayleigh quotients restricted to sparsity cones (the
identifiability quantities of the supporting theory) are intractable to
certify in general and are not computed here.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.special
import scipy.stats

from .prox import check_finite, psi
from .simulate import gen_design, gen_noise

HESSIAN_SIZE_LIMIT = 2000


@dataclass(frozen=True)
class NoiseSpec:
    """Declared moment bound of a noise law: E|X|^(1+delta) <= v_delta."""

    delta: float
    v_delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not (self.v_delta > 0 and math.isfinite(self.v_delta)):
            raise ValueError("v_delta must be positive and finite")


def loss_gradient(problem, a, tau):
    """Gradient of the averaged Huber loss at coefficient matrix a."""
    tau = float(tau)
    if math.isinf(tau):
        raise ValueError("gradient requires finite tau")
    a = check_finite(a, "A")
    r = problem.Y - problem.X @ a
    return -(problem.X.T @ psi(r, tau)) / problem.n


def loss_hessian(problem, a, tau):
    """Hessian of the averaged Huber loss w.r.t. column-stacked vec(A).

    Equals (1/n) sum_i T_i kron x_i x_i', with T_i the q x q diagonal
    indicator of residual entries within tau; materialized as a dense
    (p*q) x (p*q) block-diagonal matrix, so p*q is capped at
    HESSIAN_SIZE_LIMIT.
    """
    tau = float(tau)
    if math.isinf(tau):
        raise ValueError("hessian requires finite tau")
    a = check_finite(a, "A")
    p, q = problem.p, problem.q
    if p * q > HESSIAN_SIZE_LIMIT:
        raise ValueError(
            "refusing to materialize a %d x %d Hessian (limit %d)"
            % (p * q, p * q, HESSIAN_SIZE_LIMIT)
        )
    r = problem.Y - problem.X @ a
    inside = (np.abs(r) <= tau).astype(float)
    blocks = []
    for k in range(q):
        xw = problem.X * inside[:, k:k + 1]
        blocks.append((xw.T @ problem.X) / problem.n)
    return scipy.linalg.block_diag(*blocks)


@dataclass
class SupnormRow:
    n: int
    tau: float
    quantile: float


def gradient_supnorm_experiment(n_grid, p, q, noise, tau_c, replicates, seed,
                                delta=1.0, v_delta=1.0):
    """Estimate high quantiles of the gradient sup-norm at the truth.

    At the true coefficients the residuals are the raw noise, so the
    statistic per replicate is max|X' psi(E, tau)| / n over fresh draws
    of the design and of the noise.  For each n the robustification
    parameter follows tau = tau_c * (n * v_delta / log(pq)) ** e with
    e = min(1/2, 1/(1+delta)), and the (1 - 1/(pq)) quantile across
    replicates is reported.  noise can be any generator kind or "zero".
    """
    if p * q < 2:
        raise ValueError("need p*q >= 2")
    exponent = min(0.5, 1.0 / (1.0 + delta))
    level = 1.0 - 1.0 / (p * q)
    rows = []
    for i, n in enumerate(n_grid):
        tau = tau_c * (n * v_delta / math.log(p * q)) ** exponent
        sups = np.empty(replicates)
        for r in range(replicates):
            ss = np.random.SeedSequence(seed, spawn_key=(i, r))
            kids = ss.spawn(2)
            x = gen_design(n, p, kids[0])
            if noise == "zero":
                e = np.zeros((n, q))
            else:
                e = gen_noise(noise, n, q, kids[1])
            g = (x.T @ psi(e, tau)) / n
            sups[r] = np.max(np.abs(g))
        rows.append(SupnormRow(n=int(n), tau=float(tau),
                               quantile=float(np.quantile(sups, level))))
    return rows


def student_t_sampler(df):
    """Sampler factory for Student-t draws with the given df."""
    def sample(rng, size):
        return rng.standard_t(df, size=size)
    return sample


def student_t_abs_moment(df, order):
    """E|T|^order for T ~ t(df); finite only for 0 < order < df."""
    if not 0 < order < df:
        raise ValueError("absolute moment of t(%g) requires 0 < order < %g"
                         % (df, df))
    log_m = (0.5 * order * math.log(df)
             + scipy.special.gammaln((order + 1) / 2)
             + scipy.special.gammaln((df - order) / 2)
             - scipy.special.gammaln(0.5)
             - scipy.special.gammaln(df / 2))
    return math.exp(log_m)


@dataclass
class TruncationRow:
    t: float
    bound: float
    violation_freq: float
    prob_bound: float


def truncation_bound_experiment(noise, sampler, n, tau, t_values, replicates,
                                seed):
    """Empirical violation frequency of the tail-count concentration bound.

    For mean-zero draws with E|X|^(1+delta) <= v_delta, the event

        (1/n) sum 1(|X_i| > tau/2)  >  (2/tau)^(1+delta) v_delta + sqrt(t/n)

    has probability at most exp(-2t).  Each replicate draws n values
    through `sampler`; the same draws are scored against every t.
    """
    rng = np.random.default_rng(seed)
    draws = sampler(rng, (replicates, n))
    frac = np.mean(np.abs(draws) > tau / 2.0, axis=1)
    rows = []
    for t in t_values:
        bound = (2.0 / tau) ** (1.0 + noise.delta) * noise.v_delta + math.sqrt(
            t / n)
        rows.append(TruncationRow(
            t=float(t), bound=float(bound),
            violation_freq=float(np.mean(frac > bound)),
            prob_bound=math.exp(-2.0 * t),
        ))
    return rows


@dataclass
class GrubbsColumn:
    index: int
    statistic: float
    critical: float
    flagged: bool


@dataclass
class GrubbsReport:
    """Two-sided maximum-normalized-residual screening, per column."""

    alpha: float
    bonferroni_factor: int
    n_rows: int
    columns: list
    skipped: list

    @property
    def n_flagged(self):
        return sum(c.flagged for c in self.columns)

    @property
    def flagged_columns(self):
        return [c.index for c in self.columns if c.flagged]


def grubbs_screen(y, alpha):
    """Run the two-sided Grubbs test on every column of a matrix.

    The per-column statistic is G = max_i |y_ij - mean_j| / sd_j (sample
    sd).  With N rows, the critical value is
    (N-1)/sqrt(N) * sqrt(t^2 / (N-2+t^2)) where t is the upper
    alpha'/(2N) quantile of Student-t with N-2 degrees of freedom and
    alpha' = alpha / n_columns is the Bonferroni-corrected level.
    Constant columns cannot be scored and are reported as skipped.
    """
    y = check_finite(y, "Y")
    if y.ndim != 2:
        raise ValueError("expected a 2-d array")
    n, q = y.shape
    if n < 3:
        raise ValueError("Grubbs test needs at least 3 rows per column")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    alpha_col = alpha / q
    t_crit = scipy.stats.t.ppf(1.0 - alpha_col / (2.0 * n), n - 2)
    critical = (n - 1) / math.sqrt(n) * math.sqrt(
        t_crit ** 2 / (n - 2 + t_crit ** 2))
    means = y.mean(axis=0)
    sds = y.std(axis=0, ddof=1)
    dev = np.max(np.abs(y - means), axis=0)
    columns = []
    skipped = []
    for j in range(q):
        if sds[j] == 0.0:
            skipped.append((j, "zero variance"))
            continue
        g = float(dev[j] / sds[j])
        columns.append(GrubbsColumn(index=j, statistic=g, critical=critical,
                                    flagged=g > critical))
    return GrubbsReport(alpha=alpha, bonferroni_factor=q, n_rows=n,
                        columns=columns, skipped=skipped)
