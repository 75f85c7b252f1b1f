"""Random-Fourier-feature emulator and the calibrate, encode, emulate, sample pipeline.

The pipeline runs tempered EKI in the full space, builds reduced input and
output bases from the ensembles, fits an emulator of the reduced forward map
on encoded training pairs, and samples the emulated reduced posterior with
random-walk Metropolis before lifting the chain back to the full space.
"""

from dataclasses import asdict, dataclass, field
import json
import logging
import os
from typing import Optional

import numpy as np
import scipy.linalg as la

from ._linalg import symmetrize
from .bip_core import ReducedSpace, gaussian_conditional, reconstruct_full_samples, unwhiten_basis, whiten_problem
from .output_opt import ObjectiveContext, output_basis_alpha0
from .reduction import (
    GradientProvider,
    accumulate_h,
    default_nugget,
    estimate_h_alpha,
    input_basis,
    pca_basis,
)
from .samplers import McmcChain, rwm_sample, run_tempered_eki

log = logging.getLogger(__name__)

LENGTHSCALE_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class RffModel:
    """Ridge regression on random Fourier features of standardised inputs.

    Features are ``sqrt(2 / D) cos(omega^T (x_std / lengthscales) + b)``.
    ``trend`` holds the coefficients of an affine least-squares fit on the
    standardised inputs (rows: intercept, then one per input); the features
    model what it leaves. ``pred_cov`` is the fixed predictive covariance
    returned with every mean.
    """

    frequencies: np.ndarray
    phases: np.ndarray
    weights: np.ndarray
    lengthscales: np.ndarray
    nugget: float
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray
    pred_cov: np.ndarray
    trend: Optional[np.ndarray] = None
    multiplier: float = 1.0
    cv_scores: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.lengthscales <= 0):
            raise ValueError("lengthscales must be positive")

    @property
    def n_features(self):
        return self.phases.size

    @property
    def output_dim(self):
        return self.weights.shape[1]

    def features(self, x):
        """Feature matrix ``(n, D)`` for inputs ``x`` of shape ``(r, n)``."""
        z = (x - self.x_mean[:, None]) / self.x_scale[:, None] / self.lengthscales[:, None]
        return _features(z, self.frequencies, self.phases)

    def standardized_mean(self, x):
        """Prediction in standardised output units, ``(n, s)``."""
        out = self.features(x) @ self.weights
        if self.trend is not None:
            z = (x - self.x_mean[:, None]) / self.x_scale[:, None]
            out = out + self.trend[0] + z.T @ self.trend[1:]
        return out


def _features(z, omega, b):
    return np.sqrt(2.0 / b.size) * np.cos(z.T @ omega.T + b)


def _median_heuristic(z):
    """Per-dimension median of pairwise absolute differences."""
    r, n = z.shape
    iu = np.triu_indices(n, 1)
    out = np.ones(r)
    for i in range(r):
        d = np.abs(z[i][:, None] - z[i][None, :])[iu]
        m = np.median(d) if d.size else 0.0
        out[i] = m if m > 0 else 1.0
    return out


def _ridge(phi, y, lam):
    """Per-output ridge solution ``(Phi^T Phi + lam_o I)^{-1} Phi^T y_o`` -> ``(D, s)``."""
    ev, q = la.eigh(phi.T @ phi)
    proj = q.T @ (phi.T @ y)
    return q @ (proj / (ev[:, None] + lam[None, :]))


def _affine_fit(z, y):
    a = np.column_stack([np.ones(z.shape[1]), z.T])
    coef, *_ = la.lstsq(a, y, cond=1e-10)
    return coef


def _affine_eval(coef, z):
    return coef[0] + z.T @ coef[1:]


def rff_fit(xs, ys, rng=None, n_features=200, nugget=1e-6, noise_var=None, pred_cov=None,
            multipliers=LENGTHSCALE_MULTIPLIERS, n_folds=5, linear_trend=True):
    """Fit an RFF emulator to ``ys`` (``s x J``) at inputs ``xs`` (``r x J``).

    Inputs and outputs are standardised per dimension. The ridge penalty of
    output ``o`` is ``nugget`` plus its noise variance in standardised units
    (``noise_var`` is given in original units; ``None`` means noise-free).
    Lengthscales are ``multiplier x`` the per-dimension median heuristic, with
    the multiplier chosen by ``n_folds``-fold cross-validated MSE.

    With ``linear_trend`` an affine least-squares fit is removed first and the
    features regress the remainder. This keeps predictions sensible away from
    the training inputs, where a stationary feature model alone reverts to the
    training mean.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    r, n = xs.shape
    s = ys.shape[0]
    if n < 2:
        raise ValueError("need at least 2 training points")
    if ys.shape[1] != n:
        raise ValueError("xs and ys have different sample counts")
    rng = np.random.default_rng(rng)
    x_mean = xs.mean(axis=1)
    x_scale = xs.std(axis=1)
    if np.all(x_scale == 0):
        raise ValueError("training inputs have zero variance in every dimension")
    x_scale = np.where(x_scale > 0, x_scale, 1.0)
    y_mean = ys.mean(axis=1)
    y_scale = ys.std(axis=1)
    y_scale = np.where(y_scale > 0, y_scale, 1.0)
    z = (xs - x_mean[:, None]) / x_scale[:, None]
    yz = ((ys - y_mean[:, None]) / y_scale[:, None]).T
    nv = np.zeros(s) if noise_var is None else np.broadcast_to(np.asarray(noise_var, float), (s,))
    lam = nugget + nv / y_scale**2
    use_trend = linear_trend and n > r + 1

    omega = rng.standard_normal((n_features, r))
    b = rng.uniform(0.0, 2.0 * np.pi, n_features)
    base = _median_heuristic(z)
    folds = np.array_split(rng.permutation(n), min(n_folds, n))

    scores = {}
    for m in multipliers:
        zz = z / (m * base)[:, None]
        phi = _features(zz, omega, b)
        err = 0.0
        for f in folds:
            train = np.setdiff1d(np.arange(n), f)
            target, pred0 = yz[train], 0.0
            if use_trend:
                c = _affine_fit(z[:, train], target)
                target = target - _affine_eval(c, z[:, train])
                pred0 = _affine_eval(c, z[:, f])
            w = _ridge(phi[train], target, lam)
            err += float(np.sum((pred0 + phi[f] @ w - yz[f]) ** 2))
        scores[float(m)] = err / (n * s)
    best = min(scores, key=lambda m: (scores[m], m))
    ell = best * base
    trend = _affine_fit(z, yz) if use_trend else None
    target = yz - _affine_eval(trend, z) if use_trend else yz
    w = _ridge(_features(z / ell[:, None], omega, b), target, lam)
    pc = np.zeros((s, s)) if pred_cov is None else np.asarray(pred_cov, dtype=float)
    return RffModel(omega, b, w, ell, nugget, x_mean, x_scale, y_mean, y_scale, pc, trend, best, scores)


def rff_predict(model, x):
    """Emulator mean and the fixed predictive covariance.

    ``x`` of shape ``(r,)`` gives an ``(s,)`` mean; ``(r, n)`` gives ``(s, n)``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xx = x.reshape(model.x_mean.size, -1)
    mean = model.standardized_mean(xx) * model.y_scale + model.y_mean
    mean = mean.T
    return (mean[:, 0] if single else mean), model.pred_cov


@dataclass(frozen=True)
class CesConfig:
    """Pipeline settings.

    ``input_method`` is ``"pca"``, ``"lis"`` (single temperature ``alpha``) or
    ``"lis_acc"`` (accumulated over the recorded stops in ``alpha_range``).
    ``output_method`` ``None`` selects PCA for PCA inputs and the alpha = 0
    output basis otherwise.
    """

    n_ensemble: int = 200
    alpha_stops: tuple = tuple(round(0.1 * k, 10) for k in range(1, 11))
    r: int = 8
    s: int = 8
    input_method: str = "lis_acc"
    alpha: float = 1.0
    alpha_range: tuple = (0.0, 1.0)
    output_method: Optional[str] = None
    train_alpha: float = 0.5
    schedule: str = "uniform"
    eki_steps: int = 10
    noisy: bool = True
    sl_nugget: Optional[float] = None
    n_features: int = 200
    rff_nugget: float = 1e-6
    n_mcmc: int = 20000
    n_burn: Optional[int] = None
    thin: int = 1

    def __post_init__(self):
        if self.input_method not in ("pca", "lis", "lis_acc"):
            raise ValueError(f"unknown input method {self.input_method!r}")
        if self.output_method not in (None, "pca", "lis0"):
            raise ValueError(f"unknown output method {self.output_method!r}")
        if self.r < 1 or self.s < 1:
            raise ValueError("reduced dimensions must be positive")

    def to_dict(self):
        d = asdict(self)
        d["alpha_stops"] = list(self.alpha_stops)
        d["alpha_range"] = list(self.alpha_range)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("alpha_stops", "alpha_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class CesResult:
    reduced_space: ReducedSpace
    emulator: RffModel
    chain: McmcChain
    full_samples: np.ndarray
    provenance: dict

    def __post_init__(self):
        if self.full_samples.shape[0] != self.reduced_space.u_r.shape[0]:
            raise ValueError("full samples must have d_x rows")

    @property
    def posterior_mean(self):
        return self.full_samples.mean(axis=1)

    def save(self, directory):
        """Write config, chain, matrices and a manifest into ``directory``."""
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "config.json"), "w") as fh:
            json.dump(self.provenance["config"], fh, indent=2, sort_keys=True)
        np.savetxt(os.path.join(directory, "chain.csv"), self.chain.samples, delimiter=",", fmt="%.17g",
                   header=",".join(f"xr{i}" for i in range(self.chain.samples.shape[1])), comments="")
        np.savez(os.path.join(directory, "matrices.npz"), u_r=self.reduced_space.u_r, v_s=self.reduced_space.v_s,
                 full_samples=self.full_samples, rff_weights=self.emulator.weights,
                 rff_frequencies=self.emulator.frequencies, rff_phases=self.emulator.phases,
                 rff_lengthscales=self.emulator.lengthscales)
        manifest = {k: v for k, v in self.provenance.items() if k != "config"}
        manifest["files"] = ["config.json", "chain.csv", "matrices.npz", "manifest.json"]
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)


class StageError(RuntimeError):
    """Failure inside one pipeline stage; ``stage`` names it."""

    def __init__(self, stage, exc):
        super().__init__(f"{stage} stage failed: {exc}")
        self.stage = stage


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _encode(p, te, config):
    """Reduced input and output bases in the original coordinates."""
    pw, t = whiten_problem(p)
    stops = te.alphas
    if config.input_method == "pca":
        u = pca_basis(p.gamma0, config.r)
    else:
        if config.input_method == "lis":
            needed = [te.alphas[te.index(config.alpha)]]
        else:
            lo, hi = config.alpha_range
            needed = [a for a in stops if lo - 1e-12 <= a <= hi + 1e-12]
        pairs = []
        for a in needed:
            xs, gs = te.pooled(a)
            xb, gb = t.whiten_x(xs), t.whiten_y(gs)
            nug = default_nugget(pw.gamma, xb.shape[1], config.noisy) if config.sl_nugget is None else config.sl_nugget
            grads = GradientProvider.from_samples(xb, gb, nug)
            xa, ga = te.at(a)
            pairs.append((a, estimate_h_alpha(t.whiten_x(xa), grads, pw, a, evaluations=t.whiten_y(ga))))
        h = accumulate_h(pairs) if len(pairs) > 1 else pairs[0][1]
        u = unwhiten_basis(input_basis(h, config.r), t.input_fwd)

    out_method = config.output_method or ("pca" if config.input_method == "pca" else "lis0")
    x0, g0 = te.at(0.0)
    if out_method == "pca":
        v = pca_basis(g0, config.s, samples=True, noise_cov=p.gamma)
    else:
        xb, gb = t.whiten_x(x0), t.whiten_y(g0)
        nug = default_nugget(pw.gamma, xb.shape[1], config.noisy) if config.sl_nugget is None else config.sl_nugget
        sl = GradientProvider.from_samples(xb, gb, nug).value
        ctx = ObjectiveContext.build(sl, np.zeros((p.d_y, 1)), pw.gamma, 0.0)
        v = unwhiten_basis(output_basis_alpha0(ctx, config.s), t.output_fwd)
    return ReducedSpace.from_bases(u, v), out_method


def ces_run(p, config, rng=0):
    """Calibrate, encode, emulate and sample.

    ``rng`` is an integer seed; it is recorded in the provenance together with
    the configuration so that the run can be replayed bit for bit.
    """
    seed = int(rng)
    r_eki, r_rff, r_mcmc, r_rec = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    stops = sorted(set(config.alpha_stops) | {config.train_alpha})

    te = _stage("calibrate", run_tempered_eki, p, config.n_ensemble, stops, config.schedule, r_eki,
                config.eki_steps)
    space, out_method = _stage("encode", _encode, p, te, config)

    gamma_s = symmetrize(space.v_s.T @ p.gamma @ space.v_s)

    def emulate():
        xs, gs = te.at(config.train_alpha)
        xr = space.u_r.T @ xs
        ys = space.v_s.T @ gs
        return rff_fit(xr, ys, r_rff, config.n_features, config.rff_nugget, np.diag(gamma_s), gamma_s), xr

    model, xr_train = _stage("emulate", emulate)

    def sample():
        cond = gaussian_conditional(p.gamma0, space.u_r, space.u_perp, p.prior_mean)
        prior_cov = symmetrize(space.u_r.T @ p.gamma0 @ space.u_r)
        prior_cf = la.cho_factor(prior_cov, lower=True)
        prior_m = space.u_r.T @ p.prior_mean
        noise_cf = la.cho_factor(gamma_s, lower=True)
        y_s = space.v_s.T @ p.y_dagger

        def log_density(x_r):
            mean, _ = rff_predict(model, x_r)
            d = y_s - mean
            dp = x_r - prior_m
            return -0.5 * (d @ la.cho_solve(noise_cf, d) + dp @ la.cho_solve(prior_cf, dp))

        x_last, _ = te.at(te.alphas[-1])
        xr_last = space.u_r.T @ x_last
        prop = symmetrize(np.atleast_2d(np.cov(xr_last))) + 1e-10 * np.eye(space.r)
        chain = rwm_sample(log_density, xr_last.mean(axis=1), config.n_mcmc, config.n_burn, rng=r_mcmc,
                           proposal_cov=prop, thin=config.thin)
        full = reconstruct_full_samples(space, cond, chain.samples.T, r_rec)
        return chain, full

    chain, full = _stage("sample", sample)
    provenance = {
        "config": config.to_dict(),
        "seed": seed,
        "alpha_stops": [float(a) for a in te.alphas],
        "n_ensemble": config.n_ensemble,
        "eki_steps_taken": te.n_steps,
        "output_method": out_method,
        "rff_multiplier": model.multiplier,
        "acceptance_rate": chain.acceptance_rate,
        "problem": p.name,
    }
    return CesResult(space, model, chain, full, provenance)
