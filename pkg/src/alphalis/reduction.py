"""Input-space diagnostics: tempered LIS matrices, their accumulation over a
temperature sequence, PCA baselines and gradient surrogates."""

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.linalg as la

from ._linalg import sorted_eigh, symmetrize


@dataclass(frozen=True)
class DiagnosticMatrix:
    """Symmetric PSD diagnostic with its descending, sign-fixed eigenpairs.

    ``alpha_tag`` is a float for a single temperature or a ``(lo, hi)`` tuple
    for an accumulated matrix.
    """

    h: np.ndarray
    alpha_tag: Union[float, tuple]
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @classmethod
    def from_matrix(cls, h, alpha_tag):
        h = symmetrize(np.asarray(h, dtype=float))
        w, q = sorted_eigh(h)
        if w.size and w[-1] < -1e-10 * max(abs(w[0]), 1e-300):
            raise ValueError("diagnostic matrix is not positive semidefinite")
        return cls(h, alpha_tag, w, q)

    def save(self, path):
        """Write to ``.npz`` (binary) or ``.csv`` (matrix only) depending on suffix."""
        path = str(path)
        if path.endswith(".csv"):
            np.savetxt(path, self.h, delimiter=",", fmt="%.17g",
                       header=f"alpha_tag={_tag_str(self.alpha_tag)}")
        else:
            tag = np.atleast_1d(np.asarray(self.alpha_tag, dtype=float))
            np.savez(path, h=self.h, alpha_tag=tag)

    @classmethod
    def load(cls, path):
        path = str(path)
        if path.endswith(".csv"):
            with open(path) as fh:
                header = fh.readline().lstrip("# ").strip()
            tag = _parse_tag(header.split("=", 1)[1])
            return cls.from_matrix(np.loadtxt(path, delimiter=",", ndmin=2), tag)
        with np.load(path) as data:
            t = data["alpha_tag"]
            tag = float(t[0]) if t.size == 1 else tuple(float(v) for v in t)
            return cls.from_matrix(data["h"], tag)


def _tag_str(tag):
    return ":".join(repr(float(t)) for t in np.atleast_1d(tag))


def _parse_tag(s):
    parts = [float(v) for v in s.split(":")]
    return parts[0] if len(parts) == 1 else tuple(parts)


@dataclass(frozen=True)
class GradientProvider:
    """Forward-map derivatives at the sample points.

    mode ``"exact"``: ``value`` is a callable ``x -> (d_y, d_x)``, or one
    matrix when the forward map is linear.
    mode ``"sl"``: ``value`` is one ``(d_y, d_x)`` matrix shared by all samples.
    """

    mode: str
    value: Union[np.ndarray, Callable]

    def __post_init__(self):
        if self.mode not in ("exact", "sl"):
            raise ValueError(f"unknown gradient mode {self.mode!r}")
        if self.mode == "sl" and not np.all(np.isfinite(self.value)):
            raise ValueError("statistical linearisation produced non-finite entries")

    @classmethod
    def exact(cls, jacobian):
        return cls("exact", jacobian)

    @classmethod
    def from_samples(cls, xs, gs, nugget=0.0):
        return cls("sl", statistical_linearization(xs, gs, nugget))

    def stack(self, xs):
        """Gradients as an ``(n_g, d_y, d_x)`` array with ``n_g`` = 1 (shared) or J."""
        if not callable(self.value):
            return np.asarray(self.value, dtype=float)[None]
        return np.stack([np.asarray(self.value(xs[:, j]), dtype=float) for j in range(xs.shape[1])])


def statistical_linearization(xs, gs, nugget=0.0):
    """Global linear fit ``[(C^xx + nugget I)^{-1} C^xG]^T`` of a forward map.

    ``xs`` is ``(d_x, J)``, ``gs`` is ``(d_y, J)``. Without a nugget the
    pseudo-inverse is used, truncating singular values below ``1e-12 sigma_max``.
    """
    xs = np.asarray(xs, dtype=float)
    gs = np.asarray(gs, dtype=float)
    n = xs.shape[1]
    if n < 2:
        raise ValueError("statistical linearisation needs at least 2 samples")
    if gs.shape[1] != n:
        raise ValueError("xs and gs have different sample counts")
    dx = xs - xs.mean(axis=1, keepdims=True)
    dg = gs - gs.mean(axis=1, keepdims=True)
    if nugget == 0:
        # min-norm least squares on the centred data equals pinv(C^xx) C^xG
        sol, *_ = la.lstsq(dx.T, dg.T, cond=1e-12)
        return sol.T
    if nugget < 0:
        raise ValueError("nugget must be non-negative")
    cxx = dx @ dx.T / n + nugget * np.eye(xs.shape[0])
    cxg = dx @ dg.T / n
    return la.solve(cxx, cxg, assume_a="pos").T


def default_nugget(gamma, n_samples, noisy):
    """``Tr(gamma) / J`` for noisy evaluations, otherwise 0."""
    return float(np.trace(gamma)) / n_samples if noisy else 0.0


def _whitened_grads_and_residuals(grads, samples, p, evaluations):
    chol = la.cholesky(p.gamma, lower=True)
    g = grads.stack(samples)
    gw = np.stack([la.solve_triangular(chol, gi, lower=True) for gi in g])
    if evaluations is None:
        from .bip_core import evaluate

        evaluations = evaluate(p.replace(noisy_forward=False), samples)
    resid = p.y_dagger[:, None] - evaluations
    rw = la.solve_triangular(chol, resid, lower=True)
    return gw, rw


def estimate_h_alpha(samples, grads, p, alpha, evaluations=None):
    """Monte Carlo estimate of the alpha-tempered input diagnostic matrix.

    Averages ``dG^T gamma^{-1} [(1-alpha) gamma + alpha^2 r r^T] gamma^{-1} dG``
    over the columns of ``samples`` with ``r = y_dagger - G(x)``. Cached
    ``evaluations`` are used for the residuals when given.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[1]
    gw, rw = _whitened_grads_and_residuals(grads, samples, p, evaluations)
    if gw.shape[0] == 1:
        g0 = gw[0]
        h = (1.0 - alpha) * (g0.T @ g0)
        if alpha:
            q = g0.T @ rw
            h = h + alpha**2 * (q @ q.T) / n
    else:
        h = (1.0 - alpha) * np.einsum("jia,jib->ab", gw, gw) / n
        if alpha:
            q = np.einsum("jia,ij->aj", gw, rw)
            h = h + alpha**2 * (q @ q.T) / n
    return DiagnosticMatrix.from_matrix(h, float(alpha))


def df_lis_matrix(p, samples, jacobian):
    """Data-free LIS matrix ``mean gamma0^{1/2} dG^T gamma^{-1} dG gamma0^{1/2}``.

    Written directly from its definition (explicit inverse and square root),
    as an independent check of :func:`estimate_h_alpha` at ``alpha = 0``.
    """
    w, q = np.linalg.eigh(p.gamma0)
    g0_half = (q * np.sqrt(w)) @ q.T
    gamma_inv = np.linalg.inv(p.gamma)
    acc = np.zeros((p.d_x, p.d_x))
    for j in range(samples.shape[1]):
        dg = jacobian(samples[:, j])
        acc += g0_half @ dg.T @ gamma_inv @ dg @ g0_half
    return acc / samples.shape[1]


def quadrature_weights(alphas, rule="equal"):
    a = np.asarray(alphas, dtype=float)
    if rule == "equal":
        return np.full(a.size, 1.0 / a.size)
    if rule == "trapezoid":
        if a.size == 1:
            return np.ones(1)
        w = np.zeros(a.size)
        d = np.diff(a)
        w[:-1] += d / 2
        w[1:] += d / 2
        return w / w.sum()
    raise ValueError(f"unknown quadrature rule {rule!r}")


def accumulate_h(pairs, weights=None, rule="equal"):
    """Quadrature of diagnostic matrices over a temperature sequence.

    ``pairs`` is a sequence of ``(alpha, DiagnosticMatrix)``. Weights default to
    the ``rule`` ("equal" or "trapezoid") and are used as given otherwise.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one diagnostic matrix")
    order = np.argsort([a for a, _ in pairs], kind="stable")
    alphas = [pairs[i][0] for i in order]
    mats = [pairs[i][1] for i in order]
    if weights is None:
        w = quadrature_weights(alphas, rule)
    else:
        w = np.asarray(weights, dtype=float)[order]
        if w.size != len(mats):
            raise ValueError("one weight per pair required")
    h = sum(wi * m.h for wi, m in zip(w, mats))
    return DiagnosticMatrix.from_matrix(h, (float(alphas[0]), float(alphas[-1])))


def pca_basis(cov_or_samples, r, samples=False, noise_cov=None):
    """Leading ``r`` principal directions.

    With ``samples=True`` the input is a ``(d, n)`` sample matrix and its
    empirical covariance is used. ``noise_cov`` is added before the
    eigendecomposition (output-side PCA uses ``Cov(G(X)) + gamma``).
    """
    a = np.asarray(cov_or_samples, dtype=float)
    cov = np.atleast_2d(np.cov(a, bias=True)) if samples else a
    if noise_cov is not None:
        cov = cov + noise_cov
    if r > cov.shape[0] or r < 0:
        raise ValueError(f"r={r} exceeds the dimension {cov.shape[0]}")
    _, q = sorted_eigh(cov)
    return q[:, :r]


def input_basis(h, r):
    """Leading ``r`` eigenvectors of a diagnostic matrix."""
    if r > h.eigvecs.shape[1] or r < 0:
        raise ValueError(f"r={r} exceeds the dimension {h.eigvecs.shape[1]}")
    return h.eigvecs[:, :r]
