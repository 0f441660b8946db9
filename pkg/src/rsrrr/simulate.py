"""Data generators, evaluation metrics and replicated benchmark runs.

Designs are multivariate normal with AR(1) Toeplitz covariance
0.5^|i-j|, globally rescaled so max|X_ij| = 1 exactly.  Coefficient
matrices come in four patterns (dense/sparse crossed with rank 1/2),
noise in three laws (normal sd 2, t with 1.5 degrees of freedom,
centered log-normal), and an optional contamination step overwrites an
exact count of response entries with Uniform[10, 20] draws.

All randomness flows through numpy SeedSequences.  A generated data set
is a pure function of its integer seed; replicate r of a benchmark run
uses the positional child seed (base_seed, spawn_key=(r,)), so results
do not depend on the number of replicates requested or on the degree of
parallelism.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .solver import Problem
from .tuning import CvPlan, cross_validate

NOISE_KINDS = ("normal", "student_t", "lognormal")
COEF_PATTERNS = ("dense-rank1", "dense-rank2", "sparse-rank1", "sparse-rank2")

# Named (n, p, q, pattern) layouts of the benchmark tables; noise and
# contamination are free knobs on top of these.
SCENARIOS = {
    "table1-rank1": dict(n=200, p=50, q=10, coef_pattern="dense-rank1"),
    "table1-rank2": dict(n=200, p=50, q=10, coef_pattern="dense-rank2"),
    "table2-rank1": dict(n=200, p=50, q=10, coef_pattern="sparse-rank1"),
    "table2-rank2": dict(n=200, p=50, q=10, coef_pattern="sparse-rank2"),
    "table3-rank1": dict(n=150, p=200, q=10, coef_pattern="sparse-rank1"),
    "table3-rank2": dict(n=150, p=200, q=10, coef_pattern="sparse-rank2"),
    "table4-rank1": dict(n=150, p=200, q=10, coef_pattern="sparse-rank1",
                         contamination_frac=0.1),
    "table4-rank2": dict(n=150, p=200, q=10, coef_pattern="sparse-rank2",
                         contamination_frac=0.1),
}

METHODS = ("huber", "squared")


@dataclass(frozen=True)
class ScenarioSpec:
    """Generative description of one benchmark experiment."""

    n: int
    p: int
    q: int
    coef_pattern: str
    noise: str = "normal"
    contamination_frac: float = 0.0
    contamination_range: tuple = (10.0, 20.0)
    seed: int = 0

    def __post_init__(self):
        if min(self.n, self.p, self.q) < 1:
            raise ValueError("dimensions must be positive")
        if self.coef_pattern not in COEF_PATTERNS:
            raise ValueError("unknown coefficient pattern %r" % self.coef_pattern)
        if self.noise not in NOISE_KINDS:
            raise ValueError("unknown noise kind %r" % self.noise)
        if not 0 <= self.contamination_frac < 1:
            raise ValueError("contamination_frac must be in [0, 1)")
        if self.coef_pattern.startswith("sparse") and (self.p < 6 or self.q < 6):
            raise ValueError("sparse patterns need p >= 6 and q >= 6")


@dataclass
class GeneratedData:
    """One draw from a ScenarioSpec, with the ground truth kept around."""

    problem: Problem
    A_star: np.ndarray
    support_star: frozenset
    E: np.ndarray
    contaminated_mask: frozenset


@dataclass
class Metrics:
    """Estimation error and support recovery rates against the truth.

    tpr is None when the true support is empty, fpr when its complement
    is (dense patterns fill the whole matrix almost surely).
    """

    frob_error: float
    tpr: float = None
    fpr: float = None


def _subseed(seed, k):
    return np.random.SeedSequence(seed, spawn_key=(k,))


def replicate_seed(base_seed, replicate):
    """Integer seed for one replicate of a run, positional in replicate."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(int(replicate),))
    return int(ss.generate_state(1, np.uint64)[0])


def gen_design(n, p, seed):
    """Draw n rows from N(0, Sigma), Sigma_ij = 0.5^|i-j|, then rescale.

    The whole matrix is divided by max|X_ij|, which therefore equals one
    exactly afterwards.
    """
    rng = np.random.default_rng(seed)
    cov = 0.5 ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    chol = np.linalg.cholesky(cov)
    x = rng.standard_normal((n, p)) @ chol.T
    return x / np.max(np.abs(x))


def _two_sided_uniform(rng, size):
    # uniform on [-1, -0.5] union [0.5, 1]
    mag = rng.uniform(0.5, 1.0, size=size)
    sign = rng.integers(0, 2, size=size) * 2 - 1
    return mag * sign


def gen_coef(pattern, p, q, seed):
    """Build a coefficient matrix and its exact support for a pattern.

    Sparse patterns use fixed 0/1 factors: rank 1 is the outer product
    of indicators on the first four rows and columns; rank 2 adds a
    second block shifted down and right by two.  Dense patterns draw
    every factor entry from the two-sided uniform on
    [-1, -0.5] union [0.5, 1].
    """
    if pattern not in COEF_PATTERNS:
        raise ValueError("unknown coefficient pattern %r" % pattern)
    rng = np.random.default_rng(seed)
    rank = 1 if pattern.endswith("rank1") else 2
    if pattern.startswith("sparse"):
        if p < 6 or q < 6:
            raise ValueError("sparse patterns need p >= 6 and q >= 6")
        u1 = np.zeros(p)
        u1[:4] = 1.0
        v1 = np.zeros(q)
        v1[:4] = 1.0
        a = np.outer(u1, v1)
        if rank == 2:
            u2 = np.zeros(p)
            u2[2:6] = 1.0
            v2 = np.zeros(q)
            v2[2:6] = 1.0
            a = a + np.outer(u2, v2)
    else:
        a = np.outer(_two_sided_uniform(rng, p), _two_sided_uniform(rng, q))
        if rank == 2:
            a = a + np.outer(_two_sided_uniform(rng, p),
                             _two_sided_uniform(rng, q))
    support = frozenset((int(i), int(j)) for i, j in np.argwhere(a != 0.0))
    return a, support


def gen_noise(kind, n, q, seed):
    """i.i.d. noise matrix: normal sd 2, t(1.5), or centered log-normal.

    The t draw uses the normal / chi-square ratio construction; the
    log-normal is exp(N(0, 1.2^2)) minus its theoretical mean
    exp(1.2^2 / 2), so every kind has mean-zero entries.
    """
    rng = np.random.default_rng(seed)
    if kind == "normal":
        return 2.0 * rng.standard_normal((n, q))
    if kind == "student_t":
        df = 1.5
        z = rng.standard_normal((n, q))
        v = rng.chisquare(df, size=(n, q))
        return z / np.sqrt(v / df)
    if kind == "lognormal":
        sigma = 1.2
        return np.exp(sigma * rng.standard_normal((n, q))) - math.exp(
            sigma ** 2 / 2)
    raise ValueError("unknown noise kind %r" % kind)


def contaminate(y, frac, value_range, seed):
    """Overwrite exactly round(frac * y.size) entries with uniform draws.

    The count uses round-half-up; positions are a uniformly random
    subset of entry positions.  Returns the contaminated copy and the
    frozenset of (row, col) positions touched.
    """
    if not 0 <= frac < 1:
        raise ValueError("frac must be in [0, 1)")
    lo, hi = value_range
    out = np.array(y, dtype=float, copy=True)
    count = int(math.floor(frac * y.size + 0.5))
    if count == 0:
        return out, frozenset()
    rng = np.random.default_rng(seed)
    flat = rng.choice(y.size, size=count, replace=False)
    out.flat[flat] = rng.uniform(lo, hi, size=count)
    mask = frozenset((int(k // y.shape[1]), int(k % y.shape[1])) for k in flat)
    return out, mask


def generate_data(spec):
    """Materialize one data set: Y = X A* + E, then contamination."""
    x = gen_design(spec.n, spec.p, _subseed(spec.seed, 0))
    a_star, support = gen_coef(spec.coef_pattern, spec.p, spec.q,
                               _subseed(spec.seed, 1))
    e = gen_noise(spec.noise, spec.n, spec.q, _subseed(spec.seed, 2))
    y = x @ a_star + e
    y, mask = contaminate(y, spec.contamination_frac,
                          spec.contamination_range, _subseed(spec.seed, 3))
    return GeneratedData(
        problem=Problem(x, y),
        A_star=a_star,
        support_star=support,
        E=e,
        contaminated_mask=mask,
    )


def evaluate(a_hat, support_hat, truth):
    """Frobenius error plus true/false positive rates of the support."""
    a_hat = np.asarray(a_hat, dtype=float)
    if a_hat.shape != truth.A_star.shape:
        raise ValueError("estimate has shape %s, truth %s"
                         % (a_hat.shape, truth.A_star.shape))
    frob = float(np.linalg.norm(a_hat - truth.A_star))
    star = truth.support_star
    total = truth.A_star.size
    tpr = len(support_hat & star) / len(star) if star else None
    n_zero = total - len(star)
    fpr = len(support_hat - star) / n_zero if n_zero else None
    return Metrics(frob_error=frob, tpr=tpr, fpr=fpr)


@dataclass
class ReplicateRecord:
    """Outcome of one tuned fit on one generated data set."""

    replicate: int
    seed: int
    metrics: Metrics
    lam: float
    gamma: float
    tau: float
    tau_c: float
    iterations: int
    converged: bool
    support_size: int


@dataclass
class ScenarioSummary:
    replicates: int
    failures: int
    mean_frob: float
    se_frob: float
    mean_tpr: float
    se_tpr: float
    mean_fpr: float
    se_fpr: float


@dataclass
class ScenarioResult:
    records: list
    failures: list
    summary: ScenarioSummary


def method_plan(plan, spec, method):
    """Specialize a CvPlan to a scenario and a loss choice.

    The squared method collapses the tau grid to {inf}; dense patterns
    use the gamma grid {0} (no sparsity penalty).
    """
    if method not in METHODS:
        raise ValueError("unknown method %r" % method)
    updates = {}
    if method == "squared":
        updates["tau_c_grid"] = (math.inf,)
    if spec.coef_pattern.startswith("dense"):
        updates["gamma_grid"] = (0.0,)
    return replace(plan, **updates) if updates else plan


def _mean_se(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    mean = math.fsum(values) / len(values)
    if len(values) == 1:
        return mean, None
    var = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var / len(values))


def _summarize(records, failures):
    frob = [r.metrics.frob_error for r in records]
    tpr = [r.metrics.tpr for r in records]
    fpr = [r.metrics.fpr for r in records]
    mf, sf = _mean_se(frob)
    mt, st = _mean_se(tpr)
    mp, sp = _mean_se(fpr)
    return ScenarioSummary(
        replicates=len(records), failures=len(failures),
        mean_frob=mf, se_frob=sf, mean_tpr=mt, se_tpr=st,
        mean_fpr=mp, se_fpr=sp,
    )


def _run_replicate(spec, method, plan, base_seed, r):
    seed = replicate_seed(base_seed, r)
    data = generate_data(replace(spec, seed=seed))
    cv = cross_validate(data.problem, replace(method_plan(plan, spec, method),
                                              seed=seed))
    refit = cv.refit
    metrics = evaluate(refit.A_hat, refit.support, data)
    return ReplicateRecord(
        replicate=r, seed=seed, metrics=metrics,
        lam=cv.best.lam, gamma=cv.best.gamma, tau=cv.best.tau,
        tau_c=cv.best_row.tau_c, iterations=refit.iterations,
        converged=refit.converged, support_size=len(refit.support),
    )


def _run_replicate_safe(args):
    spec, method, plan, base_seed, r = args
    try:
        return r, _run_replicate(spec, method, plan, base_seed, r), None
    except Exception as exc:  # recorded, not fatal to the sweep
        return r, None, "%s: %s" % (type(exc).__name__, exc)


def run_scenario(spec, method, replicates, base_seed, plan=None, n_jobs=1):
    """Generate, tune and evaluate `replicates` independent data sets.

    Each replicate regenerates data under its positional seed and
    re-tunes hyperparameters by cross-validation before the final fit.
    Failed replicates are recorded with their error and excluded from
    the summary.  With n_jobs > 1 replicates run in worker processes;
    results are identical to a serial run.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if plan is None:
        plan = CvPlan()
    jobs = [(spec, method, plan, base_seed, r) for r in range(replicates)]
    if n_jobs and n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(_run_replicate_safe, jobs))
    else:
        outcomes = [_run_replicate_safe(j) for j in jobs]
    outcomes.sort(key=lambda t: t[0])
    records = [rec for _, rec, err in outcomes if err is None]
    failures = [(r, err) for r, rec, err in outcomes if err is not None]
    return ScenarioResult(records=records, failures=failures,
                          summary=_summarize(records, failures))
