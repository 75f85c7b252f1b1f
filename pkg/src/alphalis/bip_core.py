"""Bayesian inverse problems with Gaussian prior and noise.

The problem is ``y = G(x) + eta`` with ``eta ~ N(0, gamma)`` and prior
``x ~ N(prior_mean, gamma0)``. Reduced problems are described by an input
split ``x = U_r x_r + U_perp x_perp`` and an output projection ``y_s = V_s^T y``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as la

from ._linalg import check_spd, complement, psd_sqrt, qr_positive, sym_inv_sqrt, sym_sqrt, symmetrize


@dataclass(frozen=True)
class InverseProblem:
    """Forward map with Gaussian prior and Gaussian additive noise.

    Attributes
    ----------
    forward : callable
        ``forward(x) -> y`` for a single parameter vector of length ``d_x``.
    gamma : (d_y, d_y) ndarray
        Noise covariance.
    prior_mean : (d_x,) ndarray
    gamma0 : (d_x, d_x) ndarray
        Prior covariance.
    y_dagger : (d_y,) ndarray
        Observed data.
    noisy_forward : bool
        If set, evaluations through :func:`evaluate` carry additive
        ``N(0, gamma)`` noise.
    jacobian : callable, optional
        ``jacobian(x) -> (d_y, d_x)`` exact derivative of ``forward``.
    forward_batch : callable, optional
        ``forward_batch(xs, rng) -> (d_y, n)`` for a ``(d_x, n)`` batch. Used by
        stochastic maps whose randomness is drawn from ``rng``.
    matrix : ndarray, optional
        Set when ``forward`` is the linear map ``x -> matrix @ x``.
    """

    forward: Callable
    gamma: np.ndarray
    prior_mean: np.ndarray
    gamma0: np.ndarray
    y_dagger: np.ndarray
    noisy_forward: bool = False
    jacobian: Optional[Callable] = None
    forward_batch: Optional[Callable] = None
    matrix: Optional[np.ndarray] = None
    name: str = "problem"

    def __post_init__(self):
        object.__setattr__(self, "gamma", check_spd(self.gamma, "gamma"))
        object.__setattr__(self, "gamma0", check_spd(self.gamma0, "gamma0"))
        object.__setattr__(self, "prior_mean", np.asarray(self.prior_mean, dtype=float).reshape(-1))
        object.__setattr__(self, "y_dagger", np.asarray(self.y_dagger, dtype=float).reshape(-1))
        if self.prior_mean.size != self.gamma0.shape[0]:
            raise ValueError("prior_mean and gamma0 dimensions differ")
        if self.y_dagger.size != self.gamma.shape[0]:
            raise ValueError("y_dagger and gamma dimensions differ")

    @property
    def d_x(self):
        return self.gamma0.shape[0]

    @property
    def d_y(self):
        return self.gamma.shape[0]

    def replace(self, **changes):
        import dataclasses

        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class WhitenTransform:
    """Linear maps between original and whitened coordinates.

    ``x_bar = input_fwd @ (x - prior_mean)`` and ``y_bar = output_fwd @ y``.
    """

    input_fwd: np.ndarray
    input_inv: np.ndarray
    output_fwd: np.ndarray
    output_inv: np.ndarray
    prior_mean: np.ndarray

    def whiten_x(self, x):
        x = np.asarray(x, dtype=float)
        m = self.prior_mean if x.ndim == 1 else self.prior_mean[:, None]
        return self.input_fwd @ (x - m)

    def unwhiten_x(self, xb):
        xb = np.asarray(xb, dtype=float)
        m = self.prior_mean if xb.ndim == 1 else self.prior_mean[:, None]
        return self.input_inv @ xb + m

    def whiten_y(self, y):
        return self.output_fwd @ np.asarray(y, dtype=float)

    def unwhiten_y(self, yb):
        return self.output_inv @ np.asarray(yb, dtype=float)


@dataclass(frozen=True)
class ReducedSpace:
    """Orthonormal input split ``[u_r, u_perp]`` and output split ``[v_s, v_perp]``."""

    u_r: np.ndarray
    u_perp: np.ndarray
    v_s: np.ndarray
    v_perp: np.ndarray
    whitened: bool = False

    @classmethod
    def from_bases(cls, u_r, v_s, whitened=False):
        u_r = np.asarray(u_r, dtype=float)
        v_s = np.asarray(v_s, dtype=float)
        return cls(u_r, complement(u_r), v_s, complement(v_s), whitened)

    @property
    def r(self):
        return self.u_r.shape[1]

    @property
    def s(self):
        return self.v_s.shape[1]


@dataclass(frozen=True)
class GaussianConditional:
    """Law of ``x_perp`` given ``x_r``: ``N(offset + mean_map @ x_r, cov)``.

    ``offset`` is zero for centred priors.
    """

    mean_map: np.ndarray
    cov: np.ndarray
    offset: np.ndarray = field(default=None)
    cov_sqrt: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.offset is None:
            object.__setattr__(self, "offset", np.zeros(self.mean_map.shape[0]))
        if self.cov_sqrt is None:
            object.__setattr__(self, "cov_sqrt", psd_sqrt(self.cov))

    def mean(self, x_r):
        x_r = np.asarray(x_r, dtype=float)
        off = self.offset if x_r.ndim == 1 else self.offset[:, None]
        return off + self.mean_map @ x_r

    def sample(self, x_r, rng):
        """One conditional draw per column (or for the single vector) ``x_r``."""
        x_r = np.asarray(x_r, dtype=float)
        mu = self.mean(x_r)
        z = rng.standard_normal(mu.shape)
        return mu + self.cov_sqrt @ z


def whiten_problem(p):
    """Whiten prior and noise.

    Returns the whitened problem and the transform. The whitened forward map is
    ``G_bar(x_bar) = gamma^{-1/2} G(prior_mean + gamma0^{1/2} x_bar)``, so the
    prior mean is absorbed into ``G_bar`` and the whitened prior is ``N(0, I)``.
    """
    in_inv = sym_sqrt(p.gamma0)
    in_fwd = sym_inv_sqrt(p.gamma0)
    out_inv = sym_sqrt(p.gamma)
    out_fwd = sym_inv_sqrt(p.gamma)
    t = WhitenTransform(in_fwd, in_inv, out_fwd, out_inv, p.prior_mean.copy())

    def forward(xb):
        return out_fwd @ p.forward(t.unwhiten_x(xb))

    def jacobian(xb):
        return out_fwd @ p.jacobian(t.unwhiten_x(xb)) @ in_inv

    def forward_batch(xbs, rng=None):
        return out_fwd @ p.forward_batch(t.unwhiten_x(xbs), rng)

    matrix = None if p.matrix is None else out_fwd @ p.matrix @ in_inv
    if matrix is not None and np.any(p.prior_mean):
        # affine after centring; keep the closed-form shortcut only for linear maps
        matrix = None
    d_x, d_y = p.d_x, p.d_y
    pw = InverseProblem(
        forward=forward,
        gamma=np.eye(d_y),
        prior_mean=np.zeros(d_x),
        gamma0=np.eye(d_x),
        y_dagger=out_fwd @ p.y_dagger,
        noisy_forward=p.noisy_forward,
        jacobian=None if p.jacobian is None else jacobian,
        forward_batch=None if p.forward_batch is None else forward_batch,
        matrix=matrix,
        name=p.name + "-whitened",
    )
    return pw, t


def unwhiten_basis(basis, transform_inv):
    """Orthonormal basis of ``Col(transform_inv @ basis)``.

    For an input basis computed in whitened coordinates pass ``gamma0^{-1/2}``
    (``WhitenTransform.input_fwd``); for an output basis pass ``gamma^{-1/2}``.
    """
    return qr_positive(np.asarray(transform_inv) @ np.asarray(basis))


def evaluate(p, xs, rng=None):
    """Forward evaluations of the columns of ``xs`` as a ``(d_y, n)`` array.

    Adds ``N(0, gamma)`` noise when ``p.noisy_forward`` is set.
    """
    xs = np.asarray(xs, dtype=float)
    single = xs.ndim == 1
    xs = xs.reshape(p.d_x, -1)
    if p.forward_batch is not None:
        gs = np.asarray(p.forward_batch(xs, rng), dtype=float)
    elif p.matrix is not None:
        gs = p.matrix @ xs
    else:
        gs = np.column_stack([p.forward(xs[:, j]) for j in range(xs.shape[1])])
    if gs.shape != (p.d_y, xs.shape[1]):
        raise ValueError(f"forward map returned shape {gs.shape}, expected {(p.d_y, xs.shape[1])}")
    if p.noisy_forward:
        if rng is None:
            raise ValueError("noisy forward evaluations need an rng")
        gs = gs + la.cholesky(p.gamma, lower=True) @ rng.standard_normal(gs.shape)
    return gs[:, 0] if single else gs


def _mahalanobis_sq(r, cov):
    c = la.cho_factor(cov, lower=True)
    return float(r @ la.cho_solve(c, r))


def log_likelihood(p, x, gx=None):
    """Unnormalised Gaussian log-likelihood ``-0.5 ||y_dagger - G(x)||^2_gamma``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.d_x,):
        raise ValueError(f"expected x of shape {(p.d_x,)}, got {x.shape}")
    if gx is None:
        gx = p.forward(x)
    return -0.5 * _mahalanobis_sq(p.y_dagger - gx, p.gamma)


def log_prior(p, x):
    """Unnormalised Gaussian log prior density."""
    return -0.5 * _mahalanobis_sq(np.asarray(x, dtype=float) - p.prior_mean, p.gamma0)


def tempered_log_density(p, x, alpha, log_prior_fn=None):
    """Unnormalised log density of the tempered posterior ``prior * likelihood^alpha``.

    ``log_prior_fn(x)`` defaults to the Gaussian prior of ``p``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    lp = log_prior(p, x) if log_prior_fn is None else log_prior_fn(x)
    return lp + alpha * log_likelihood(p, x)


def gaussian_conditional(gamma0, u_r, u_perp, prior_mean=None):
    """Conditional of ``x_perp = u_perp^T x`` given ``x_r = u_r^T x`` under ``N(prior_mean, gamma0)``."""
    grr = u_r.T @ gamma0 @ u_r
    gpr = u_perp.T @ gamma0 @ u_r
    if u_r.shape[1]:
        try:
            cf = la.cho_factor(grr, lower=True)
        except la.LinAlgError as exc:
            raise ValueError("u_r^T gamma0 u_r is singular") from exc
        mean_map = la.cho_solve(cf, gpr.T).T
    else:
        mean_map = np.zeros((u_perp.shape[1], 0))
    cov = symmetrize(u_perp.T @ gamma0 @ u_perp - mean_map @ gpr.T)
    offset = None
    if prior_mean is not None:
        offset = u_perp.T @ prior_mean - mean_map @ (u_r.T @ prior_mean)
    return GaussianConditional(mean_map, cov, offset)


def reduced_log_likelihood(p, space, x, gx=None):
    """``-0.5 ||V_s^T (y_dagger - G(x))||^2`` in the ``V_s^T gamma V_s`` norm."""
    if gx is None:
        gx = p.forward(x)
    r = space.v_s.T @ (p.y_dagger - gx)
    return -0.5 * _mahalanobis_sq(r, space.v_s.T @ p.gamma @ space.v_s) if r.size else 0.0


def reduced_log_prior(p, space, x_r):
    """Log density (unnormalised) of the marginal prior of ``x_r``."""
    u = space.u_r
    return -0.5 * _mahalanobis_sq(np.asarray(x_r) - u.T @ p.prior_mean, u.T @ p.gamma0 @ u)


def reduced_log_posterior(p, space, cond, x_r, rng):
    """Reduced log posterior at ``x_r`` with a single conditional draw of ``x_perp``.

    The draw makes this an unbiased likelihood estimate; a Metropolis chain that
    stores the value with its state targets the reduced posterior exactly.
    """
    x_r = np.asarray(x_r, dtype=float)
    if space.u_perp.shape[1]:
        x = space.u_r @ x_r + space.u_perp @ cond.sample(x_r, rng)
    else:
        x = space.u_r @ x_r
    return reduced_log_prior(p, space, x_r) + reduced_log_likelihood(p, space, x)


def reconstruct_full_samples(space, cond, xr_samples, rng, transform=None):
    """Lift ``(r, n)`` reduced samples to ``(d_x, n)`` full samples.

    Each column gets a fresh draw of ``x_perp`` from the conditional prior. When
    the space lives in whitened coordinates and ``transform`` is given, the
    result is mapped back to the original coordinates.
    """
    xr = np.asarray(xr_samples, dtype=float).reshape(space.r, -1)
    x = space.u_r @ xr
    if space.u_perp.shape[1]:
        x = x + space.u_perp @ cond.sample(xr, rng)
    if space.whitened and transform is not None:
        x = transform.unwhiten_x(x)
    return x
