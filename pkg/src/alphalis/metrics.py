"""Distances between a posterior and its approximation."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from ._linalg import check_spd, psd_sqrt, symmetrize


@dataclass(frozen=True)
class DistanceReport:
    """A distance value with the estimator that produced it.

    ``ess`` is the effective sample size of the importance weights (SNIS only).
    """

    value: float
    estimator: str
    n_samples: int = 0
    ess: Optional[float] = None
    std_error: Optional[float] = None

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("distance must be non-negative")
        if self.estimator not in ("closed-form", "snis"):
            raise ValueError(f"unknown estimator {self.estimator!r}")


def _moments(p):
    return np.asarray(p.mean, dtype=float).reshape(-1), check_spd(p.cov, "covariance")


def w2_gaussian_sq(p1, p2):
    """Squared Bures-Wasserstein distance between two Gaussians.

    ``||mu1 - mu2||^2 + Tr[S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}]``; the
    inner square roots clamp negative eigenvalues at zero. Both argument orders
    are averaged so the result is symmetric to rounding.
    """
    m1, s1 = _moments(p1)
    m2, s2 = _moments(p2)

    def cross(a, b):
        ra = psd_sqrt(a)
        return np.trace(psd_sqrt(symmetrize(ra @ b @ ra)))

    ct = 0.5 * (cross(s1, s2) + cross(s2, s1))
    val = float(np.sum((m1 - m2) ** 2) + np.trace(s1) + np.trace(s2) - 2.0 * ct)
    return max(val, 0.0)


def hellinger2_gaussian(p1, p2):
    """Closed-form squared Hellinger distance between two Gaussians."""
    m1, s1 = _moments(p1)
    m2, s2 = _moments(p2)
    avg = 0.5 * (s1 + s2)
    _, ld1 = np.linalg.slogdet(s1)
    _, ld2 = np.linalg.slogdet(s2)
    _, lda = np.linalg.slogdet(avg)
    d = m1 - m2
    log_bc = 0.25 * (ld1 + ld2) - 0.5 * lda - 0.125 * d @ np.linalg.solve(avg, d)
    return float(min(max(1.0 - np.exp(log_bc), 0.0), 1.0))


def hellinger2_snis(log_tilde_pi, log_tilde_pi_star, samples_from_pi_star):
    """Squared Hellinger distance estimated from draws of the approximation.

    With ``w_i = pi(x_i) / pi*(x_i)`` (both unnormalised) the estimate is
    ``1 - mean(sqrt(w)) / sqrt(mean(w))``. Log-densities are callables or
    precomputed arrays; samples are rows of ``samples_from_pi_star``.
    """
    xs = np.asarray(samples_from_pi_star, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    lp = _log_values(log_tilde_pi, xs)
    lq = _log_values(log_tilde_pi_star, xs)
    lw = lp - lq
    n = lw.size
    finite = np.isfinite(lw) | (lw == -np.inf)
    if not np.all(finite) or np.all(lw == -np.inf):
        raise ValueError("importance weights are all zero or not finite")
    lw = lw - lw.max()
    log_num = logsumexp(0.5 * lw) - np.log(n)
    log_den = 0.5 * (logsumexp(lw) - np.log(n))
    bc = np.exp(log_num - log_den)
    value = float(min(max(1.0 - bc, 0.0), 1.0))
    w = np.exp(lw)
    ess = float(w.sum() ** 2 / np.sum(w * w))
    # delta-method standard error of the ratio estimator
    a, b = np.exp(0.5 * lw), w
    ma, mb = a.mean(), b.mean()
    grad = np.array([-1.0 / np.sqrt(mb), 0.5 * ma / mb**1.5])
    cov = np.cov(np.vstack([a, b])) / n if n > 1 else np.zeros((2, 2))
    se = float(np.sqrt(max(grad @ cov @ grad, 0.0)))
    return DistanceReport(value, "snis", n, ess, se)


def _log_values(f, xs):
    if callable(f):
        return np.array([f(x) for x in xs], dtype=float)
    v = np.asarray(f, dtype=float).reshape(-1)
    if v.size != xs.shape[0]:
        raise ValueError("precomputed log-density values do not match the sample count")
    return v
