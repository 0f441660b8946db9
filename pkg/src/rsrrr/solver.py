"""Consensus ADMM solver for Huber-loss reduced-rank regression.

Solves

    min_A (1/n) * huber(Y - X A, tau) + lam * (||A||_* + gamma * ||A||_11)

through the consensus splitting (D; Z; W) = (X; I; I) A, where D carries
the loss, Z the entrywise l1 penalty and W the nuclear penalty.  Each
iteration updates A, Z, W, D in that order and then advances the scaled
dual blocks by the primal residuals.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .prox import (NumericalError, check_finite, huber_residual_prox,
                   huber_total, soft_threshold, svd_soft_threshold)

# Singular values of the final W block below RANK_RTOL times the largest
# are treated as zero when reporting the rank estimate.
RANK_RTOL = 1e-8

# Below this Frobenius norm of the previous iterate the relative stopping
# criterion would divide by (near) zero, so the absolute form is used.
_ZERO_NORM_GUARD = 1e-12


class ScalingWarning(UserWarning):
    """The design matrix does not look standardized to max|X_ij| = 1."""


class Problem:
    """An observed design/response pair.

    Parameters
    ----------
    X : ndarray, shape (n, p)
        Design matrix.  Expected (warned, not rejected) to be globally
        standardized so that max|X_ij| = 1.
    Y : ndarray, shape (n, q)
        Response matrix with the same row count as X.
    check_scaling : bool
        Emit a ScalingWarning when max|X_ij| is far from 1.  Internal
        callers fitting row subsets of an already-checked problem turn
        this off.
    """

    def __init__(self, X, Y, check_scaling=True):
        X = check_finite(X, "X")
        Y = check_finite(Y, "Y")
        if X.ndim != 2 or Y.ndim != 2:
            raise ValueError("X and Y must be 2-d arrays")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(
                "X and Y must share their row count; got %d and %d"
                % (X.shape[0], Y.shape[0])
            )
        if X.shape[0] < 1:
            raise ValueError("need at least one observation")
        self.X = X
        self.Y = Y
        if check_scaling:
            scale = np.max(np.abs(X)) if X.size else 0.0
            if not 0.5 <= scale <= 2.0:
                warnings.warn(
                    "max|X_ij| = %.3g; the solver expects X standardized "
                    "so that max|X_ij| = 1" % scale,
                    ScalingWarning,
                    stacklevel=2,
                )

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def q(self):
        return self.Y.shape[1]


@dataclass(frozen=True)
class Hyperparams:
    """Tuning and solver constants for one fit.

    lam and gamma are the nonnegative penalty levels, tau the Huber
    robustification parameter (np.inf for squared loss), rho the ADMM
    penalty, eps the stopping tolerance on the squared relative change
    of A, and max_iter the iteration cap.
    """

    lam: float
    gamma: float
    tau: float
    rho: float = 1.0
    eps: float = 1e-6
    max_iter: int = 10000

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("lam and gamma must be nonnegative")
        if not self.tau > 0:
            raise ValueError("tau must be positive (np.inf for squared loss)")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class AdmmState:
    """Primal blocks A, Z, W (p x q), D (n x q) and scaled duals."""

    A: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    D: np.ndarray
    B_D: np.ndarray
    B_Z: np.ndarray
    B_W: np.ndarray
    iter: int = 0

    @classmethod
    def zeros(cls, n, p, q):
        return cls(
            A=np.zeros((p, q)),
            Z=np.zeros((p, q)),
            W=np.zeros((p, q)),
            D=np.zeros((n, q)),
            B_D=np.zeros((n, q)),
            B_Z=np.zeros((p, q)),
            B_W=np.zeros((p, q)),
        )


@dataclass
class FitResult:
    """Solution summary of one ADMM run.

    A_hat is the consensus block A at termination; support is the set of
    (row, col) indices where the Z block is exactly nonzero (soft
    thresholding produces exact zeros, so no epsilon test is involved);
    rank_estimate counts singular values of the W block above RANK_RTOL
    times the largest.  primal_residuals holds the Frobenius norms of
    (D - XA, Z - A, W - A) at termination.
    """

    A_hat: np.ndarray
    support: frozenset
    rank_estimate: int
    objective: float
    iterations: int
    converged: bool
    primal_residuals: tuple


class NormalEquations:
    """Reusable Cholesky factorization of X'X + 2I.

    This matrix is Xt~Xt for the stacked design (X; I; I), has all
    eigenvalues >= 2 and is therefore always positive definite.  One
    instance may be shared by every fit on the same X, including across
    threads (it is immutable after construction).
    """

    def __init__(self, X):
        X = check_finite(X, "X")
        gram = X.T @ X
        gram[np.diag_indices_from(gram)] += 2.0
        chol = scipy.linalg.cho_factor(gram, lower=True)
        # eigenvalues lie in [2, sigma_max(X)^2 + 2], so the explicit
        # inverse is well conditioned and one matmul beats a backsolve
        # in the iteration loop
        self._inv = scipy.linalg.cho_solve(chol, np.eye(gram.shape[0]))
        self.X = X
        self.Xt = np.ascontiguousarray(X.T)

    def solve(self, rhs):
        """Solve (X'X + 2I) out = rhs."""
        return self._inv @ rhs


def objective(problem, A, hp):
    """Penalized Huber objective at coefficient matrix A."""
    A = check_finite(A, "A")
    if A.shape != (problem.p, problem.q):
        raise ValueError("A must be %dx%d" % (problem.p, problem.q))
    loss = huber_total(problem.Y - problem.X @ A, hp.tau) / problem.n
    if hp.lam == 0:
        return loss
    nuclear = float(np.sum(np.linalg.svd(A, compute_uv=False)))
    l1 = float(np.sum(np.abs(A)))
    return loss + hp.lam * (nuclear + hp.gamma * l1)


def update_a(state, problem, solver):
    """Consensus update: least-squares solve of the stacked system."""
    xt = getattr(solver, "Xt", problem.X.T)
    rhs = xt @ (state.D + state.B_D)
    rhs += state.Z
    rhs += state.B_Z
    rhs += state.W
    rhs += state.B_W
    return solver.solve(rhs)


def update_z(state, hp):
    """Entrywise soft-thresholding of A - B_Z at lam*gamma/rho."""
    return soft_threshold(state.A - state.B_Z, hp.lam * hp.gamma / hp.rho)


def update_w(state, hp):
    """Singular-value soft-thresholding of A - B_W at lam/rho."""
    return svd_soft_threshold(state.A - state.B_W, hp.lam / hp.rho)


def update_d(state, problem, hp, xa=None):
    """Elementwise Huber proximal update of the loss-carrying block."""
    if xa is None:
        xa = problem.X @ state.A
    return huber_residual_prox(problem.Y, xa - state.B_D, hp.tau, problem.n, hp.rho)


def update_duals(state, problem, xa=None):
    """Scaled dual ascent; returns new (B_D, B_Z, B_W)."""
    if xa is None:
        xa = problem.X @ state.A
    return (
        state.B_D + state.D - xa,
        state.B_Z + state.Z - state.A,
        state.B_W + state.W - state.A,
    )


def _require_finite(block, name, iteration):
    # fast path: a finite sum certifies an all-finite block
    if not np.isfinite(block.sum()) and not np.all(np.isfinite(block)):
        raise NumericalError(
            "non-finite values in block %s at iteration %d" % (name, iteration)
        )


def admm_step(state, problem, hp, solver):
    """Run one full update cycle (A, Z, W, D, duals) in place."""
    t = state.iter + 1
    state.A = update_a(state, problem, solver)
    _require_finite(state.A, "A", t)
    state.Z = update_z(state, hp)
    _require_finite(state.Z, "Z", t)
    state.W = update_w(state, hp)
    _require_finite(state.W, "W", t)
    xa = problem.X @ state.A
    state.D = update_d(state, problem, hp, xa=xa)
    _require_finite(state.D, "D", t)
    state.B_D, state.B_Z, state.B_W = update_duals(state, problem, xa=xa)
    _require_finite(state.B_D, "B_D", t)
    state.iter = t
    return state


def fit(problem, hp, solver=None):
    """Solve the penalized problem by ADMM from the all-zero start.

    Parameters
    ----------
    problem : Problem
    hp : Hyperparams
    solver : NormalEquations, optional
        Prefactorized X'X + 2I; built here when absent.  Pass one in to
        amortize the factorization over many fits on the same X.

    Returns
    -------
    FitResult
        Coefficient estimate read from the A block, support from Z and
        rank from W.  The three blocks differ by the primal residuals
        reported alongside.

    Notes
    -----
    Iteration stops when ||A_t - A_{t-1}||_F^2 / ||A_{t-1}||_F^2 <= eps,
    falling back to the absolute form ||A_t - A_{t-1}||_F^2 <= eps while
    ||A_{t-1}||_F is below 1e-12 (as at the all-zero start, and for fits
    whose solution is the zero matrix).  The first cycle never
    terminates: A is still identically zero there because all blocks
    start at zero, which would otherwise satisfy the criterion vacuously.
    """
    if solver is None:
        solver = NormalEquations(problem.X)
    state = AdmmState.zeros(problem.n, problem.p, problem.q)
    a_prev = state.A.copy()
    converged = False
    for _ in range(hp.max_iter):
        admm_step(state, problem, hp, solver)
        diff2 = float(np.sum((state.A - a_prev) ** 2))
        denom2 = float(np.sum(a_prev ** 2))
        if state.iter >= 2:
            if denom2 >= _ZERO_NORM_GUARD ** 2:
                converged = diff2 <= hp.eps * denom2
            else:
                converged = diff2 <= hp.eps
            if converged:
                break
        np.copyto(a_prev, state.A)
    return _finalize(state, problem, hp, converged)


def _finalize(state, problem, hp, converged):
    xa = problem.X @ state.A
    residuals = (
        float(np.linalg.norm(state.D - xa)),
        float(np.linalg.norm(state.Z - state.A)),
        float(np.linalg.norm(state.W - state.A)),
    )
    support = frozenset(
        (int(i), int(j)) for i, j in np.argwhere(state.Z != 0.0)
    )
    sing = np.linalg.svd(state.W, compute_uv=False)
    if sing.size and sing[0] > 0:
        rank = int(np.sum(sing > RANK_RTOL * sing[0]))
    else:
        rank = 0
    return FitResult(
        A_hat=state.A.copy(),
        support=support,
        rank_estimate=rank,
        objective=objective(problem, state.A, hp),
        iterations=state.iter,
        converged=converged,
        primal_residuals=residuals,
    )
