"""Independent reference solvers used only by the test suite.

Everything here is deliberately self-contained (its own soft
thresholding, SVD shrinkage, Huber gradient and objective) so that
agreement with the package's ADMM path is a genuine two-implementation
check.  The main reference is a Davis-Yin three-operator splitting:
the smooth Huber term enters through its gradient, the entrywise l1
term and the nuclear term through their separate proximal maps.  A
second, slower reference formulates the same objective in cvxpy.
"""

import numpy as np


def _soft(a, b):
    return np.sign(a) * np.maximum(np.abs(a) - b, 0.0)


def _svt(m, b):
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return (u * np.maximum(s - b, 0.0)) @ vt


def _huber_vals(r, tau):
    if np.isinf(tau):
        return 0.5 * r ** 2
    a = np.abs(r)
    return np.where(a <= tau, 0.5 * r ** 2, tau * a - 0.5 * tau ** 2)


def ref_objective(X, Y, A, lam, gamma, tau):
    n = X.shape[0]
    loss = np.sum(_huber_vals(Y - X @ A, tau)) / n
    s = np.linalg.svd(A, compute_uv=False)
    return loss + lam * (np.sum(s) + gamma * np.sum(np.abs(A)))


def _loss_grad(X, Y, A, tau):
    r = Y - X @ A
    if not np.isinf(tau):
        r = np.clip(r, -tau, tau)
    return -(X.T @ r) / X.shape[0]


def davis_yin_solve(X, Y, lam, gamma, tau, iters=60000, tol=1e-13):
    """Minimize the penalized Huber objective by three-operator splitting.

    Returns (A, objective).  Step size is 1/L with L the Lipschitz
    constant of the smooth part; iterates stop early once the objective
    is numerically stationary over a 200-iteration window.
    """
    n, p = X.shape
    q = Y.shape[1]
    L = np.linalg.norm(X, 2) ** 2 / n
    alpha = 1.0 / L
    z = np.zeros((p, q))
    best = np.inf
    last_check = np.inf
    for k in range(iters):
        xg = _soft(z, alpha * lam * gamma)
        xh = _svt(2 * xg - z - alpha * _loss_grad(X, Y, xg, tau), alpha * lam)
        z = z + (xh - xg)
        if k % 200 == 199:
            obj = ref_objective(X, Y, xg, lam, gamma, tau)
            best = min(best, obj)
            if abs(last_check - obj) <= tol * max(1.0, abs(obj)):
                break
            last_check = obj
    a = _soft(z, alpha * lam * gamma)
    return a, min(best, ref_objective(X, Y, a, lam, gamma, tau))


def cvxpy_solve(X, Y, lam, gamma, tau):
    """High-accuracy conic reformulation of the same objective."""
    import cvxpy as cp

    n, p = X.shape
    q = Y.shape[1]
    A = cp.Variable((p, q))
    resid = Y - X @ A
    if np.isinf(tau):
        loss = cp.sum_squares(resid) / (2 * n)
    else:
        # cvxpy's huber(r, M) equals twice the loss used here
        loss = cp.sum(cp.huber(resid, tau)) / (2 * n)
    pen = lam * (cp.normNuc(A) + gamma * cp.sum(cp.abs(A)))
    prob = cp.Problem(cp.Minimize(loss + pen))
    prob.solve(solver=cp.CLARABEL)
    return np.asarray(A.value), float(prob.value)
