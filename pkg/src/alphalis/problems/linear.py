"""Linear and linear-exponential benchmark problems with closed-form posteriors."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .._linalg import check_spd, qr_positive, symmetrize
from ..bip_core import InverseProblem, gaussian_conditional


@dataclass(frozen=True)
class LinearProblemSpec:
    """Random linear map ``A = U diag(100 / i) V^T`` with a decaying prior.

    ``U`` is ``d_y x d_y`` and ``V`` is ``d_x x d_y``, both orthonormal from
    seeded QR factorisations. The prior is ``N(0, gamma0_scale diag(i^-2))`` and
    the noise is ``N(0, I)``.
    """

    d_x: int = 100
    d_y: int = 100
    seed: int = 0
    gamma0_scale: float = 4.0
    ood: bool = False

    def __post_init__(self):
        if self.d_x < self.d_y:
            raise ValueError(f"need d_x >= d_y, got d_x={self.d_x}, d_y={self.d_y}")
        if self.d_y < 1:
            raise ValueError("d_y must be positive")
        if self.gamma0_scale <= 0:
            raise ValueError("gamma0_scale must be positive")

    def spectrum(self):
        return 100.0 / np.arange(1, self.d_y + 1)

    def operator(self):
        """``(A, U, Lambda, V)`` generated from the seed."""
        rng_a, _ = _streams(self.seed)
        u = qr_positive(rng_a.standard_normal((self.d_y, self.d_y)))
        v = qr_positive(rng_a.standard_normal((self.d_x, self.d_y)))
        lam = self.spectrum()
        return (u * lam) @ v.T, u, lam, v

    def gamma0(self):
        return self.gamma0_scale * np.diag(1.0 / np.arange(1, self.d_x + 1) ** 2)


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(-1))
        object.__setattr__(self, "cov", check_spd(self.cov, "posterior covariance"))

    @property
    def dim(self):
        return self.mean.size


def _streams(seed):
    """Independent streams for the operator and for the observation draws."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]


def _observation(spec, forward, gamma0, rng_obs):
    if spec.ood:
        return forward(np.full(spec.d_x, 10.0)) + 10.0 * rng_obs.standard_normal(spec.d_y), None
    x_true = la.cholesky(gamma0, lower=True) @ rng_obs.standard_normal(spec.d_x)
    return forward(x_true) + rng_obs.standard_normal(spec.d_y), x_true


def make_linear_problem(spec):
    """Linear problem ``y = A x + eta``.

    With ``spec.ood`` the observation is ``A (10, ..., 10) + 10 eta`` instead of
    a draw from the prior predictive.
    """
    a, *_ = spec.operator()
    gamma0 = spec.gamma0()
    _, rng_obs = _streams(spec.seed)
    y, _ = _observation(spec, lambda x: a @ x, gamma0, rng_obs)
    return InverseProblem(
        forward=lambda x: a @ x,
        gamma=np.eye(spec.d_y),
        prior_mean=np.zeros(spec.d_x),
        gamma0=gamma0,
        y_dagger=y,
        jacobian=lambda x: a,
        matrix=a,
        name=f"linear-{spec.d_x}x{spec.d_y}-seed{spec.seed}",
    )


def linexp_forward(a, x):
    """``A exp(x)`` with the exponential applied elementwise; ``x`` may be ``(d_x, n)``."""
    with np.errstate(over="ignore"):
        return a @ np.exp(x)


def linexp_jacobian(a, x):
    """``A diag(exp(x))``."""
    with np.errstate(over="ignore"):
        return a * np.exp(np.asarray(x, dtype=float))[None, :]


def make_linexp_problem(spec):
    """Linear-exponential problem ``y = A exp(x) + eta`` sharing ``A``, prior and noise with the linear one."""
    a, *_ = spec.operator()
    gamma0 = spec.gamma0()
    _, rng_obs = _streams(spec.seed)
    y, _ = _observation(spec, lambda x: linexp_forward(a, x), gamma0, rng_obs)
    return InverseProblem(
        forward=lambda x: linexp_forward(a, x),
        gamma=np.eye(spec.d_y),
        prior_mean=np.zeros(spec.d_x),
        gamma0=gamma0,
        y_dagger=y,
        jacobian=lambda x: linexp_jacobian(a, x),
        forward_batch=lambda xs, rng=None: linexp_forward(a, xs),
        name=f"linexp-{spec.d_x}x{spec.d_y}-seed{spec.seed}",
    )


def _require_matrix(p):
    if p.matrix is None:
        raise ValueError("closed-form posteriors need a linear problem (p.matrix is None)")
    return p.matrix


def linear_tempered_posterior(p, alpha):
    """Exact ``alpha``-tempered posterior of a linear-Gaussian problem.

    Precision ``gamma0^{-1} + alpha A^T gamma^{-1} A``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    a = _require_matrix(p)
    g0 = la.cho_factor(p.gamma0, lower=True)
    g = la.cho_factor(p.gamma, lower=True)
    prec = la.cho_solve(g0, np.eye(p.d_x)) + alpha * a.T @ la.cho_solve(g, a)
    rhs = la.cho_solve(g0, p.prior_mean) + alpha * a.T @ la.cho_solve(g, p.y_dagger)
    cf = la.cho_factor(symmetrize(prec), lower=True)
    return GaussianPosterior(la.cho_solve(cf, rhs), symmetrize(la.cho_solve(cf, np.eye(p.d_x))))


def linear_posterior(p):
    """Exact posterior ``Sigma = (gamma0^{-1} + A^T gamma^{-1} A)^{-1}``."""
    return linear_tempered_posterior(p, 1.0)


def linear_reduced_posterior(p, space):
    """Closed-form full-space law of the reduced posterior of a linear problem.

    With ``x_perp | x_r ~ N(o + K x_r, S)`` under the prior, the projected data
    satisfy ``V_s^T y = B x_r + c0 + e`` with ``B = V_s^T A (U_r + U_perp K)``,
    ``c0 = V_s^T A U_perp o`` and ``e ~ N(0, C)``,
    ``C = V_s^T gamma V_s + V_s^T A U_perp S U_perp^T A^T V_s``. The reduced
    likelihood tilts the prior only along ``U_r``.
    """
    a = _require_matrix(p)
    u_r, u_perp, v_s = space.u_r, space.u_perp, space.v_s
    cond = gaussian_conditional(p.gamma0, u_r, u_perp, p.prior_mean)
    g0inv = la.cho_solve(la.cho_factor(p.gamma0, lower=True), np.eye(p.d_x))
    rhs = g0inv @ p.prior_mean
    prec = g0inv
    if u_r.shape[1] and v_s.shape[1]:
        vta = v_s.T @ a
        b = vta @ (u_r + u_perp @ cond.mean_map)
        au = vta @ u_perp
        c = symmetrize(v_s.T @ p.gamma @ v_s + au @ cond.cov @ au.T)
        try:
            cf = la.cho_factor(c, lower=True)
        except la.LinAlgError as exc:
            raise ValueError("projected noise covariance C is singular") from exc
        bu = b @ u_r.T
        prec = prec + bu.T @ la.cho_solve(cf, bu)
        rhs = rhs + bu.T @ la.cho_solve(cf, v_s.T @ p.y_dagger - au @ cond.offset)
    pf = la.cho_factor(symmetrize(prec), lower=True)
    return GaussianPosterior(la.cho_solve(pf, rhs), symmetrize(la.cho_solve(pf, np.eye(p.d_x))))
