"""Finite-difference oracles for the loss derivatives, shared by tests.

Self-contained on purpose: the loss is re-evaluated through huber_total
only, so gradient and Hessian checks are independent of the analytic
derivative code they validate.
"""

import numpy as np

from rsrrr.prox import huber_total
from rsrrr.solver import Problem


def smooth_instance(seed, n=15, p=4, q=3):
    """Random problem with tau placed in a wide gap of |residuals|."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    x /= np.abs(x).max()
    a = rng.normal(size=(p, q))
    y = x @ a + rng.normal(size=(n, q))
    resid = np.sort(np.abs(y - x @ a).ravel())
    inner = resid[(resid > np.quantile(resid, 0.2))
                  & (resid < np.quantile(resid, 0.9))]
    gaps = np.diff(inner)
    k = int(np.argmax(gaps))
    tau = 0.5 * (inner[k] + inner[k + 1])
    assert gaps[k] > 2e-2  # both sides clear of the kink
    return Problem(x, y, check_scaling=False), a, float(tau)


def loss_value(problem, a, tau):
    return huber_total(problem.Y - problem.X @ a, tau) / problem.n


def fd_gradient(problem, a, tau):
    g = np.empty_like(a)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            h = 1e-6 * (1 + abs(a[i, j]))
            ap, am = a.copy(), a.copy()
            ap[i, j] += h
            am[i, j] -= h
            g[i, j] = (loss_value(problem, ap, tau)
                       - loss_value(problem, am, tau)) / (2 * h)
    return g


def fd_hessian(problem, a, tau, h=1e-4):
    p, q = a.shape
    dim = p * q

    def loss_vec(vec):
        return loss_value(problem, vec.reshape((q, p)).T, tau)

    v0 = a.T.ravel()  # column-stacked vec
    f0 = loss_vec(v0)
    out = np.empty((dim, dim))
    for r in range(dim):
        vp, vm = v0.copy(), v0.copy()
        vp[r] += h
        vm[r] -= h
        out[r, r] = (loss_vec(vp) - 2 * f0 + loss_vec(vm)) / (h * h)
        for c in range(r + 1, dim):
            vpp, vpm, vmp, vmm = (v0.copy() for _ in range(4))
            vpp[r] += h
            vpp[c] += h
            vpm[r] += h
            vpm[c] -= h
            vmp[r] -= h
            vmp[c] += h
            vmm[r] -= h
            vmm[c] -= h
            out[r, c] = out[c, r] = (
                loss_vec(vpp) - loss_vec(vpm) - loss_vec(vmp) + loss_vec(vmm)
            ) / (4 * h * h)
    return out
