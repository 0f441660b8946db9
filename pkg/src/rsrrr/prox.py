"""Huber-loss primitives and proximal maps.

All functions accept scalars or ndarrays and operate elementwise unless
stated otherwise.  The robustification parameter ``tau`` is a positive
float; ``numpy.inf`` is the sentinel for squared-error loss, in which
case every operation degenerates exactly (not approximately) to its
squared-error counterpart.
"""

import numpy as np
import scipy.linalg


class NumericalError(RuntimeError):
    """A matrix computation received or produced non-finite values."""


def check_finite(m, name="matrix"):
    """Return ``m`` as a float ndarray, raising NumericalError on NaN/Inf.

    The common all-finite case is detected by a single reduction: the sum
    of a float array is finite iff no entry is NaN/Inf (finite values can
    only overflow at magnitudes ~1e308, which these computations never
    reach).
    """
    m = np.asarray(m, dtype=float)
    with np.errstate(over="ignore"):
        total = m.sum()
    if not np.isfinite(total) and not np.all(np.isfinite(m)):
        raise NumericalError("%s contains non-finite entries" % name)
    return m


def _check_tau(tau):
    tau = float(tau)
    if not tau > 0:
        raise ValueError("tau must be positive (np.inf selects squared loss)")
    return tau


def huber(z, tau):
    """Huber loss, elementwise.

    Equals z**2/2 for |z| <= tau and tau*|z| - tau**2/2 beyond; tau=inf
    gives z**2/2 everywhere.
    """
    tau = _check_tau(tau)
    z = np.asarray(z, dtype=float)
    if np.isinf(tau):
        return 0.5 * z ** 2
    a = np.abs(z)
    return np.where(a <= tau, 0.5 * z ** 2, tau * a - 0.5 * tau ** 2)


def huber_total(m, tau):
    """Sum of the Huber loss over all entries of a matrix."""
    m = check_finite(m, "huber_total input")
    return float(np.sum(huber(m, tau)))


def psi(u, tau):
    """Derivative of the Huber loss: u clamped to [-tau, tau].

    At the kinks |u| = tau the clamped value tau*sign(u) is returned.
    Rejects tau=inf; the squared-loss gradient is the identity and is
    the caller's responsibility.
    """
    tau = _check_tau(tau)
    if np.isinf(tau):
        raise ValueError("psi is undefined for tau=inf")
    return np.clip(u, -tau, tau)


def soft_threshold(a, b):
    """Soft-thresholding sign(a) * max(|a| - b, 0); b must be >= 0."""
    if np.any(np.asarray(b) < 0):
        raise ValueError("threshold must be nonnegative")
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.maximum(np.abs(a) - b, 0.0)


def svd_soft_threshold(m, b):
    """Soft-threshold the singular values of a matrix by ``b``.

    Returns sum_j max(w_j - b, 0) u_j v_j' from the thin SVD
    m = sum_j w_j u_j v_j'.  Triples with w_j <= b are dropped from the
    reconstruction, so the output rank never exceeds the number of
    singular values strictly above the threshold.
    """
    m = check_finite(m, "svd_soft_threshold input")
    if m.ndim != 2:
        raise ValueError("expected a 2-d array")
    b = float(b)
    if b < 0:
        raise ValueError("threshold must be nonnegative")
    try:
        u, s, vt = scipy.linalg.svd(m, full_matrices=False, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(
            "SVD failed for %dx%d matrix: %s" % (m.shape[0], m.shape[1], exc)
        ) from exc
    keep = s > b
    if not np.any(keep):
        return np.zeros_like(m)
    return (u[:, keep] * (s[keep] - b)) @ vt[keep]


def huber_residual_prox(y, c, tau, n, rho):
    """Minimizer over d of (1/n) * huber(y - d, tau) + (rho/2) * (d - c)**2.

    This is the elementwise residual-block update of the ADMM solver.
    With w = n*rho the solution is (y + w*c)/(1 + w) while the implied
    residual |w*(y - c)/(1 + w)| stays within tau (ties go to this
    branch; both branches agree there), and y - soft_threshold(y - c,
    tau/w) otherwise.  tau=inf always takes the first branch.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rho = float(rho)
    if not rho > 0:
        raise ValueError("rho must be positive")
    tau = _check_tau(tau)
    y = np.asarray(y, dtype=float)
    c = np.asarray(c, dtype=float)
    w = n * rho
    first = (y + w * c) / (1.0 + w)
    if np.isinf(tau):
        out = first
    else:
        small = np.abs(w * (y - c) / (1.0 + w)) <= tau
        out = np.where(small, first, y - soft_threshold(y - c, tau / w))
    if np.ndim(out) == 0:
        return float(out)
    return out
