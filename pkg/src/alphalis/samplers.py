"""Tempered ensemble generation by ensemble Kalman inversion, and adaptive
random-walk Metropolis for (reduced) posteriors."""

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg as la

from .bip_core import evaluate

log = logging.getLogger(__name__)

_STOP_SNAP = 1e-12


@dataclass
class TemperedEnsemble:
    """Ensembles recorded at each temperature.

    ``ensembles[k]`` is a ``(d_x, J)`` array of approximate draws from the
    ``alphas[k]``-tempered posterior, ``evaluations[k]`` the matching
    ``(d_y, J)`` forward evaluations.
    """

    alphas: list
    ensembles: list
    evaluations: list
    n_steps: int = 0

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        if a.size == 0 or a[0] != 0.0:
            raise ValueError("alpha grid must start at 0")
        if np.any(np.diff(a) <= 0):
            raise ValueError("alpha grid must be strictly increasing")
        widths = {e.shape[1] for e in self.ensembles}
        if len(widths) != 1:
            raise ValueError("ensemble sizes differ across alphas")

    def index(self, alpha):
        a = np.asarray(self.alphas)
        k = int(np.argmin(np.abs(a - alpha)))
        if abs(a[k] - alpha) > 1e-9:
            raise KeyError(f"no ensemble recorded at alpha={alpha}")
        return k

    def at(self, alpha):
        k = self.index(alpha)
        return self.ensembles[k], self.evaluations[k]

    def pooled(self, alpha):
        """All recorded samples with temperature up to ``alpha`` (inclusive)."""
        k = self.index(alpha)
        return np.hstack(self.ensembles[: k + 1]), np.hstack(self.evaluations[: k + 1])


@dataclass
class McmcChain:
    samples: np.ndarray
    acceptance_rate: float
    step_scale_history: np.ndarray
    n_nan: int = 0
    log_density: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.samples.shape[0] < 1:
            raise ValueError("chain is empty")
        if not 0.0 <= self.acceptance_rate <= 1.0:
            raise ValueError("acceptance rate outside [0, 1]")


def eki_update(ensemble, evaluations, y_dagger, gamma, dt, rng):
    """One perturbed-observation EKI step with pseudo-time step ``dt``.

    Covariances use the 1/J normalisation; the gain is applied through a
    linear solve with ``C^GG + gamma / dt``.
    """
    x = np.asarray(ensemble, dtype=float)
    g = np.asarray(evaluations, dtype=float)
    n_ens = x.shape[1]
    if n_ens < 3:
        raise ValueError("EKI needs an ensemble of at least 3 members")
    if not 0.0 < dt <= 1.0:
        raise ValueError(f"pseudo-time step must lie in (0, 1], got {dt}")
    dx = x - x.mean(axis=1, keepdims=True)
    dg = g - g.mean(axis=1, keepdims=True)
    c_xg = dx @ dg.T / n_ens
    c_gg = dg @ dg.T / n_ens
    chol = la.cholesky(gamma, lower=True)
    y = y_dagger[:, None] + np.sqrt(1.0 / dt) * (chol @ rng.standard_normal(g.shape))
    s = c_gg + gamma / dt
    try:
        innov = la.solve(s, y - g, assume_a="pos")
    except la.LinAlgError as exc:
        raise np.linalg.LinAlgError("EKI innovation system is ill-conditioned") from exc
    return x + c_xg @ innov


def _next_dt(alpha, target, schedule, n_steps, g, y_dagger, gamma_isqrt, c):
    remaining = target - alpha
    if schedule == "uniform":
        dt = 1.0 / n_steps
    else:
        misfit = gamma_isqrt @ (y_dagger - g.mean(axis=1))
        dt = c / max(np.linalg.norm(misfit), 1e-300)
    dt = min(dt, remaining, 1.0)
    if remaining - dt < _STOP_SNAP:
        dt = remaining
    return dt


def run_tempered_eki(p, J, alpha_stops, schedule="uniform", rng=None, n_steps=10,
                     c_adapt=1.0, max_steps=10_000):
    """Run EKI from prior draws and record ensembles exactly at ``alpha_stops``.

    Parameters
    ----------
    p : InverseProblem
    J : int
        Ensemble size.
    alpha_stops : sequence of float
        Temperatures in (0, 1] at which ensembles are recorded. ``0`` may be
        included and is always recorded.
    schedule : {"uniform", "adaptive"}
        ``"uniform"`` uses steps of ``1 / n_steps``; ``"adaptive"`` uses
        ``c_adapt / ||gamma^{-1/2}(y - mean G)||``. Both are truncated so that
        every stop is hit exactly.
    """
    if schedule not in ("uniform", "adaptive"):
        raise ValueError(f"unknown schedule {schedule!r}")
    rng = np.random.default_rng(rng)
    stops = sorted({float(a) for a in alpha_stops if a > 0})
    if not stops or stops[-1] > 1.0 or any(np.diff(stops) <= 0):
        raise ValueError("alpha_stops must be a non-empty sorted subset of (0, 1]")
    chol0 = la.cholesky(p.gamma0, lower=True)
    x = p.prior_mean[:, None] + chol0 @ rng.standard_normal((p.d_x, J))
    g = evaluate(p, x, rng)
    gamma_isqrt = la.inv(la.cholesky(p.gamma, lower=True))
    alphas, ens, evs = [0.0], [x], [g]
    alpha = 0.0
    steps = 0
    for target in stops:
        while alpha < target:
            dt = _next_dt(alpha, target, schedule, n_steps, g, p.y_dagger, gamma_isqrt, c_adapt)
            x = eki_update(x, g, p.y_dagger, p.gamma, dt, rng)
            alpha = target if target - (alpha + dt) < _STOP_SNAP else alpha + dt
            g = evaluate(p, x, rng)
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite forward evaluations at alpha={alpha:.4f}")
            steps += 1
            if steps > max_steps:
                raise RuntimeError("EKI exceeded the maximum number of steps")
        alphas.append(target)
        ens.append(x)
        evs.append(g)
    return TemperedEnsemble(alphas, ens, evs, steps)


def rwm_sample(log_density, x0, n_samples, n_burn=None, target_accept=0.234, rng=None,
               proposal_cov=None, scale0=None, thin=1):
    """Random-walk Metropolis with Robbins-Monro step-scale adaptation during burn-in.

    The proposal is ``x + scale * L z`` with ``L L^T = proposal_cov``. The log
    step scale moves by ``(accept_prob - target_accept) / sqrt(k)`` during the
    ``n_burn`` burn-in iterations and is frozen afterwards. Returned samples are
    the post-burn-in states, thinned by ``thin``.

    ``log_density`` may be stochastic (for instance a pseudo-marginal estimate);
    the value is stored with the current state and not re-evaluated.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    dim = x.size
    if n_burn is None:
        n_burn = int(0.2 * n_samples)
    rng = np.random.default_rng(rng) if rng is None or isinstance(rng, (int, np.integer)) else rng
    chol = np.eye(dim) if proposal_cov is None else la.cholesky(np.atleast_2d(proposal_cov), lower=True)
    log_scale = np.log(2.38 / np.sqrt(dim) if scale0 is None else scale0)
    lp = log_density(x)
    if not np.isfinite(lp):
        raise ValueError("log density is not finite at the initial state")

    n_total = n_burn + n_samples * thin
    out = np.empty((n_samples, dim))
    out_lp = np.empty(n_samples)
    history = np.empty(n_total)
    n_acc = n_nan = 0
    for k in range(n_total):
        prop = x + np.exp(log_scale) * (chol @ rng.standard_normal(dim))
        lp_prop = log_density(prop)
        u = rng.random()
        if np.isnan(lp_prop):
            n_nan += 1
            acc_prob = 0.0
            if k >= 100 and n_nan > 0.5 * (k + 1):
                raise RuntimeError("more than half of the proposals gave a NaN log density")
        else:
            acc_prob = float(np.exp(min(0.0, lp_prop - lp)))
            if np.log(u) < lp_prop - lp:
                x, lp = prop, lp_prop
                if k >= n_burn:
                    n_acc += 1
        if k < n_burn:
            log_scale += (acc_prob - target_accept) / np.sqrt(k + 1.0)
        history[k] = np.exp(log_scale)
        if k >= n_burn and (k - n_burn) % thin == thin - 1:
            i = (k - n_burn) // thin
            out[i] = x
            out_lp[i] = lp
    if n_nan > 0.5 * n_total:
        raise RuntimeError("more than half of the proposals gave a NaN log density")
    rate = n_acc / max(n_total - n_burn, 1)
    return McmcChain(out, rate, history, n_nan, out_lp)


def sample_gaussian(mean, cov, n, rng):
    """``(d, n)`` independent draws from ``N(mean, cov)``."""
    chol = la.cholesky(cov, lower=True)
    return mean[:, None] + chol @ rng.standard_normal((mean.size, n))


def spawn_rngs(seed, n):
    """Independent generators derived from one root seed via ``SeedSequence.spawn``."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
