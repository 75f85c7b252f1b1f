"""Configuration-driven sweeps over reduced dimension, temperature, sample
count or prior scale, writing one CSV row per sweep point.

Randomness: replicate ``k`` draws everything from
``SeedSequence(seed, spawn_key=(k,))``; the problem instance of replicate
``k`` uses problem seed ``problem["seed"] + k``. Sweep points of one
replicate share these streams, so rows differ only through the swept value.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import hashlib
import io
import json
import logging
import os
import re
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from ._linalg import principal_angles, symmetrize
from .bip_core import (
    ReducedSpace,
    evaluate,
    gaussian_conditional,
    reconstruct_full_samples,
    reduced_log_likelihood,
    reduced_log_posterior,
    log_likelihood,
    tempered_log_density,
    unwhiten_basis,
    whiten_problem,
)
from .emulator_ces import CesConfig, ces_run
from .metrics import hellinger2_snis, w2_gaussian_sq
from .output_opt import (
    ObjectiveContext,
    objective_J,
    optimize_full,
    optimize_incremental,
    optimize_nepv,
    output_basis_alpha0,
)
from .problems import (
    DarcySpec,
    LinearProblemSpec,
    LorenzSpec,
    linear_posterior,
    linear_reduced_posterior,
    linear_tempered_posterior,
    lorenz_true_forcing,
    make_darcy_problem,
    make_linear_problem,
    make_linexp_problem,
    make_lorenz_problem,
)
from .reduction import GradientProvider, accumulate_h, default_nugget, estimate_h_alpha, input_basis, pca_basis
from .samplers import run_tempered_eki, rwm_sample, sample_gaussian

log = logging.getLogger(__name__)

SWEEP_VARIABLES = ("dim", "alpha", "n_samples", "gamma0")
DEFAULT_ALPHA_GRID = tuple(round(0.1 * k, 10) for k in range(11))
_METHOD_RE = re.compile(r"^\s*(pca|lis|lis_acc)\s*(?:\(([^)]*)\))?\s*$")


@dataclass(frozen=True)
class Method:
    """``pca``, ``lis(a)`` or ``lis_acc(a0, ak)``; ``lis`` without argument follows an alpha sweep."""

    kind: str
    alphas: tuple = ()

    @classmethod
    def parse(cls, text):
        m = _METHOD_RE.match(text)
        if not m:
            raise ValueError(f"cannot parse method {text!r}")
        kind, args = m.group(1), m.group(2)
        vals = tuple(float(a) for a in args.split(",")) if args else ()
        if kind == "pca" and vals:
            raise ValueError("pca takes no arguments")
        if kind == "lis" and len(vals) > 1:
            raise ValueError("lis takes one temperature")
        if kind == "lis_acc" and len(vals) not in (0, 2):
            raise ValueError("lis_acc takes a temperature interval")
        if any(not 0.0 <= a <= 1.0 for a in vals):
            raise ValueError("temperatures must lie in [0, 1]")
        return cls(kind, vals)

    @property
    def label(self):
        if not self.alphas:
            return self.kind
        return self.kind + "_" + "_".join(f"{a:g}" for a in self.alphas)

    def resolve(self, sweep_alpha):
        if self.kind == "lis" and not self.alphas:
            if sweep_alpha is None:
                raise ValueError("lis without a temperature needs an alpha sweep")
            return Method("lis", (float(sweep_alpha),))
        if self.kind == "lis_acc" and not self.alphas:
            return Method("lis_acc", (0.0, 1.0))
        return self


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep.

    ``problem`` is a dict with ``type`` in {linear, linexp, darcy, lorenz} and
    the fields of the matching spec. ``sampler`` is ``exact`` (linear only),
    ``mcmc`` or ``eki`` and provides the tempered samples for the diagnostics.
    ``dim`` is the common reduced dimension ``r = s`` when it is not swept.
    """

    problem: dict
    methods: tuple
    sweep_variable: str = "dim"
    sweep_values: tuple = ()
    dim: int = 8
    n_samples: int = 500
    gradient: str = "exact"
    sampler: str = "exact"
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    sl_pool: bool = False
    output_optimizer: str = "full"
    metric: str = "w2"
    replicates: int = 1
    seed: int = 0
    mcmc_thin: int = 10
    n_mcmc: int = 5000
    n_inner: int = 16
    ces: dict = field(default_factory=dict)
    alphas_optimizer: tuple = (0.5,)
    cache_dir: Optional[str] = None

    def __post_init__(self):
        if not self.methods:
            raise ValueError("methods must be non-empty")
        if not self.sweep_values:
            raise ValueError("sweep values must be non-empty")
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}")
        if self.gradient not in ("exact", "sl"):
            raise ValueError("gradient must be 'exact' or 'sl'")
        if self.sampler not in ("exact", "mcmc", "eki"):
            raise ValueError("sampler must be 'exact', 'mcmc' or 'eki'")
        if self.metric not in ("w2", "hellinger", "param-error"):
            raise ValueError("metric must be 'w2', 'hellinger' or 'param-error'")
        if self.output_optimizer not in ("full", "incremental", "nepv"):
            raise ValueError("output optimizer must be 'full', 'incremental' or 'nepv'")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if "type" not in self.problem:
            raise ValueError("problem needs a 'type'")
        for m in self.methods:
            Method.parse(m)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("methods", "sweep_values", "alpha_grid", "alphas_optimizer"):
            if k in d:
                d[k] = tuple(d[k])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        d = asdict(self)
        for k in ("methods", "sweep_values", "alpha_grid", "alphas_optimizer"):
            d[k] = list(d[k])
        return d


# problem construction -----------------------------------------------------------

def build_problem(problem, replicate=0, gamma0=None):
    d = dict(problem)
    kind = d.pop("type")
    d["seed"] = int(d.get("seed", 0)) + replicate
    if kind in ("linear", "linexp"):
        if gamma0 is not None:
            d["gamma0_scale"] = float(gamma0)
        spec = LinearProblemSpec(**d)
        return make_linear_problem(spec) if kind == "linear" else make_linexp_problem(spec)
    if kind == "darcy":
        return make_darcy_problem(DarcySpec(**d))
    if kind == "lorenz":
        if gamma0 is not None:
            d["prior_scale"] = float(gamma0)
        return make_lorenz_problem(LorenzSpec(**d))
    raise ValueError(f"unknown problem type {kind!r}")


def problem_key(problem, replicate, extra=""):
    """Stable hash of a problem instance, used for the sample cache."""
    blob = json.dumps({"problem": problem, "replicate": replicate, "extra": extra}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def _alpha_key(a):
    return int(round(a * 1_000_000))


# tempered samples -----------------------------------------------------------------

def _mcmc_tempered(pw, alpha, n, seed, thin, cache_dir, key):
    path = None
    if cache_dir:
        path = os.path.join(cache_dir, f"{key}_a{_alpha_key(alpha)}_n{n}_t{thin}.npy")
        if os.path.exists(path):
            return np.load(path)
    rng = _stream(seed, 1, _alpha_key(alpha))
    x0 = np.zeros(pw.d_x)
    chain = rwm_sample(lambda x: tempered_log_density(pw, x, alpha, lambda z: -0.5 * z @ z), x0, n,
                       n_burn=max(1000, n * thin // 5), rng=rng, thin=thin)
    xs = chain.samples.T.copy()
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        np.save(path, xs)
    return xs


def tempered_samples(cfg, p, pw, alphas, n, seed, replicate):
    """Whitened ``(d_x, n)`` draws from each tempered posterior in ``alphas``."""
    alphas = sorted(set(float(a) for a in alphas))
    out = {}
    if cfg.sampler == "exact":
        if p.matrix is None:
            raise ValueError("the exact sampler needs a linear problem")
        for a in alphas:
            post = linear_tempered_posterior(pw, a)
            out[a] = sample_gaussian(post.mean, post.cov, n, _stream(seed, 1, _alpha_key(a)))
    elif cfg.sampler == "mcmc":
        key = problem_key(cfg.problem, replicate, f"seed{seed}")
        for a in alphas:
            out[a] = _mcmc_tempered(pw, a, n, seed, cfg.mcmc_thin, cfg.cache_dir, key)
    else:
        stops = [a for a in alphas if a > 0]
        te = run_tempered_eki(pw, n, stops or [1.0], "uniform", _stream(seed, 2))
        for a in alphas:
            out[a] = te.at(a)[0]
    return out


# reduction ------------------------------------------------------------------------

class _Reducer:
    """Caches diagnostics and objective contexts of one replicate."""

    def __init__(self, cfg, p, pw, transform, samples, seed):
        self.cfg, self.p, self.pw, self.t = cfg, p, pw, transform
        self.samples = samples
        self.seed = seed
        self._evals, self._grads, self._h, self._ctx, self._v = {}, {}, {}, {}, {}
        self.noisy = p.noisy_forward

    def evals(self, a):
        if a not in self._evals:
            self._evals[a] = evaluate(self.pw, self.samples[a], _stream(self.seed, 3, _alpha_key(a)))
        return self._evals[a]

    def grads(self, a):
        if a not in self._grads:
            if self.cfg.gradient == "exact":
                if self.pw.matrix is not None:
                    g = GradientProvider.exact(self.pw.matrix)
                else:
                    g = GradientProvider.exact(self.pw.jacobian)
            else:
                if self.cfg.sl_pool:
                    pool = [b for b in self.samples if b <= a]
                    xs = np.hstack([self.samples[b] for b in pool])
                    gs = np.hstack([self.evals(b) for b in pool])
                else:
                    xs, gs = self.samples[a], self.evals(a)
                nug = default_nugget(self.pw.gamma, xs.shape[1], self.noisy)
                g = GradientProvider.from_samples(xs, gs, nug)
            self._grads[a] = g
        return self._grads[a]

    def h(self, a):
        if a not in self._h:
            self._h[a] = estimate_h_alpha(self.samples[a], self.grads(a), self.pw, a, evaluations=self.evals(a))
        return self._h[a]

    def ctx(self, a):
        if a not in self._ctx:
            g = self.grads(a).stack(self.samples[a])
            resid = self.pw.y_dagger[:, None] - self.evals(a)
            self._ctx[a] = ObjectiveContext.build(g if g.shape[0] > 1 else g[0], resid, self.pw.gamma, a)
        return self._ctx[a]

    def grid(self, method):
        lo, hi = method.alphas
        return [a for a in self.cfg.alpha_grid if lo - 1e-12 <= a <= hi + 1e-12]

    def output_basis(self, method, s):
        key = (method, s)
        if key in self._v:
            return self._v[key]
        if method.kind == "lis":
            a = method.alphas[0]
            ctx = self.ctx(a)
        else:
            ctx = ObjectiveContext.combine([self.ctx(a) for a in self.grid(method)])
        if s >= self.p.d_y:
            v = np.eye(self.p.d_y)
        elif method.kind == "lis" and method.alphas[0] == 0.0:
            v = output_basis_alpha0(ctx, s)
        elif self.cfg.output_optimizer == "incremental":
            v = optimize_incremental(ctx, s)
        elif self.cfg.output_optimizer == "nepv":
            v = optimize_nepv(ctx, s, _stream(self.seed, 4, s))
        else:
            v = optimize_full(ctx, s)
        self._v[key] = v
        return v

    def space(self, method, dim):
        r = min(dim, self.p.d_x)
        s = min(dim, self.p.d_y)
        if method.kind == "pca":
            u = pca_basis(self.p.gamma0, r)
            if self.p.matrix is not None:
                a = self.p.matrix
                cov_y = a @ self.p.gamma0 @ a.T
            else:
                g0 = self.t.unwhiten_y(self.evals(0.0))
                cov_y = np.atleast_2d(np.cov(g0, bias=True))
            v = pca_basis(symmetrize(cov_y), s, noise_cov=self.p.gamma)
            return ReducedSpace.from_bases(u, v)
        if method.kind == "lis":
            h = self.h(method.alphas[0])
        else:
            h = accumulate_h([(a, self.h(a)) for a in self.grid(method)])
        u = unwhiten_basis(input_basis(h, r), self.t.input_fwd)
        v = unwhiten_basis(self.output_basis(method, s), self.t.output_fwd)
        return ReducedSpace.from_bases(u, v)

    def needed_alphas(self, methods):
        out = set()
        for m in methods:
            if m.kind == "pca":
                if self.p.matrix is None:
                    out.add(0.0)
            elif m.kind == "lis":
                out.add(m.alphas[0])
            else:
                out.update(self.grid(m))
        return out


# metrics ----------------------------------------------------------------------------

def snis_hellinger(p, space, rng, n_mcmc=5000, thin=10, n_inner=16):
    """Squared Hellinger distance between the full and the reduced posterior.

    Draws of the reduced posterior come from a pseudo-marginal Metropolis chain
    on ``x_r`` lifted with conditional prior draws. The weights are
    ``L(x) / Lhat(U_r^T x)`` with ``Lhat`` a log-mean-exp over ``n_inner``
    conditional draws; prior factors cancel.
    """
    cond = gaussian_conditional(p.gamma0, space.u_r, space.u_perp, p.prior_mean)
    x0 = space.u_r.T @ p.prior_mean
    prop = symmetrize(space.u_r.T @ p.gamma0 @ space.u_r)
    chain = rwm_sample(lambda xr: reduced_log_posterior(p, space, cond, xr, rng), x0, n_mcmc, rng=rng,
                       proposal_cov=prop, thin=thin)
    xs = reconstruct_full_samples(space, cond, chain.samples.T, rng)
    lw = np.empty(xs.shape[1])
    for j in range(xs.shape[1]):
        x = xs[:, j]
        xr = space.u_r.T @ x
        lik = log_likelihood(p, x)
        if space.u_perp.shape[1]:
            inner = [reduced_log_likelihood(p, space, space.u_r @ xr + space.u_perp @ cond.sample(xr, rng))
                     for _ in range(n_inner)]
            lred = logsumexp(inner) - np.log(n_inner)
        else:
            lred = reduced_log_likelihood(p, space, x)
        lw[j] = lik - lred
    return hellinger2_snis(lw, np.zeros_like(lw), xs.T)


def _lorenz_error(cfg, method, dim, p, seed):
    base = dict(cfg.ces)
    base.update(r=min(dim, p.d_x), s=min(dim, p.d_y))
    if method.kind == "pca":
        base["input_method"] = "pca"
    elif method.kind == "lis":
        base.update(input_method="lis", alpha=method.alphas[0])
    else:
        base.update(input_method="lis_acc", alpha_range=tuple(method.alphas))
    ces_cfg = CesConfig.from_dict(base)
    res = ces_run(p, ces_cfg, seed)
    f_true = lorenz_true_forcing(p.d_x)
    return float(np.linalg.norm(f_true - res.posterior_mean))


# sweep tasks --------------------------------------------------------------------------

def _point_settings(cfg, value):
    dim, n, gamma0, sweep_alpha = cfg.dim, cfg.n_samples, None, None
    if cfg.sweep_variable == "dim":
        dim = int(value)
    elif cfg.sweep_variable == "n_samples":
        n = int(value)
    elif cfg.sweep_variable == "gamma0":
        gamma0 = float(value)
    else:
        sweep_alpha = float(value)
    return dim, n, gamma0, sweep_alpha


def run_task(cfg_dict, replicate, point_indices):
    """Errors of every method at the given sweep points for one replicate.

    Returns ``{point_index: {label: value or error string}}``.
    """
    cfg = ExperimentConfig.from_dict(cfg_dict)
    seed = np.random.SeedSequence(cfg.seed, spawn_key=(replicate,)).generate_state(1)[0]
    seed = int(seed)
    methods = [Method.parse(m) for m in cfg.methods]
    results = {}
    cache = {}
    for i in point_indices:
        value = cfg.sweep_values[i]
        dim, n, gamma0, sweep_alpha = _point_settings(cfg, value)
        row = {}
        try:
            key = (n, gamma0)
            if key not in cache:
                p = build_problem(cfg.problem, replicate, gamma0)
                cache.clear()
                cache[key] = {"p": p}
            state = cache[key]
            p = state["p"]
            resolved = [m.resolve(sweep_alpha) for m in methods]
            if cfg.metric == "param-error":
                for m0, m in zip(methods, resolved):
                    row[m0.label] = _safe(lambda: _lorenz_error(cfg, m, dim, p, seed))
                results[i] = row
                continue
            if "reducer" not in state:
                pw, t = whiten_problem(p)
                state["pw"], state["t"] = pw, t
                state["samples"] = {}
            pw, t = state["pw"], state["t"]
            probe = _Reducer(cfg, p, pw, t, {}, seed)
            need = probe.needed_alphas(resolved)
            missing = need - set(state["samples"])
            if missing:
                state["samples"].update(tempered_samples(cfg, p, pw, missing, n, seed, replicate))
            red = state.get("reducer")
            if red is None:
                red = _Reducer(cfg, p, pw, t, state["samples"], seed)
                state["reducer"] = red
            if cfg.metric == "w2":
                full = state.setdefault("full", linear_posterior(p) if p.matrix is not None else None)
                if full is None:
                    raise ValueError("the w2 metric needs a linear problem")
            for m0, m in zip(methods, resolved):
                def one():
                    space = red.space(m, dim)
                    if cfg.metric == "w2":
                        return w2_gaussian_sq(linear_reduced_posterior(p, space), full)
                    rng = _stream(seed, 5, i, _label_key(m0.label))
                    return snis_hellinger(p, space, rng, cfg.n_mcmc, cfg.mcmc_thin, cfg.n_inner).value
                row[m0.label] = _safe(one)
        except Exception as exc:  # a whole sweep point failed
            log.exception("sweep point %s failed", value)
            row = {m.label: f"error: {exc}" for m in methods}
        results[i] = row
    return results


def _label_key(label):
    return int(hashlib.sha256(label.encode()).hexdigest()[:8], 16)


def _safe(fn):
    try:
        return float(fn())
    except Exception as exc:
        log.warning("method failed: %s", exc)
        return f"error: {exc}"


def lower_median(values):
    """Median with the lower middle element for even counts."""
    v = sorted(values)
    return v[(len(v) - 1) // 2]


def _fmt(v):
    return "" if v is None else f"{v:.17g}"


def _fmt_value(v):
    return f"{int(v)}" if float(v).is_integer() else f"{float(v):.17g}"


@dataclass
class ExperimentResult:
    header: list
    rows: list
    errors: list
    raw: dict = field(default_factory=dict)

    @property
    def n_failures(self):
        return len(self.errors)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(self.header) + "\n")
        for row in self.rows:
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def column(self, name):
        k = self.header.index(name)
        return [float(r[k]) if r[k] != "" else np.nan for r in self.rows]


def run_experiment(cfg, jobs=1, out=None):
    """Run a sweep and return the assembled table; writes CSV to ``out`` when given.

    Cells that failed in every replicate are left empty and listed in
    ``errors`` (and in ``<out>.errors.log``).
    """
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    methods = [Method.parse(m) for m in cfg.methods]
    points = list(range(len(cfg.sweep_values)))
    cfg_dict = cfg.to_dict()
    tasks = [(cfg_dict, k, points) for k in range(cfg.replicates)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(run_task, *zip(*tasks)))
    else:
        outs = [run_task(*t) for t in tasks]

    header = [cfg.sweep_variable] + [f"err_{m.label}" for m in methods]
    rows, errors = [], []
    for i in points:
        row = [_fmt_value(cfg.sweep_values[i])]
        for m in methods:
            vals = []
            for k, res in enumerate(outs):
                v = res[i][m.label]
                if isinstance(v, str):
                    errors.append(f"{cfg.sweep_variable}={cfg.sweep_values[i]} method={m.label} replicate={k}: {v}")
                else:
                    vals.append(v)
            row.append(_fmt(lower_median(vals)) if vals else "")
        rows.append(row)
    result = ExperimentResult(header, rows, errors, {"replicates": outs})
    if out:
        write_result(result, out)
    return result


def write_result(result, out):
    d = os.path.dirname(os.path.abspath(out))
    os.makedirs(d, exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write(result.to_csv())
    if result.errors:
        with open(out + ".errors.log", "w") as fh:
            fh.write("\n".join(result.errors) + "\n")


# optimizer comparison -----------------------------------------------------------------------

def compare_optimizers(cfg, out=None):
    """Full, incremental and NEPv output bases at each ``s`` in ``sweep_values``.

    Uses the first temperature in ``alphas_optimizer`` and output-only
    reduction (``r = d_x``). Columns hold ``J``, iteration counts, NEPv
    fallback counts (stages up to ``s``) and the posterior error of each basis.
    """
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    alpha = float(cfg.alphas_optimizer[0])
    if not 0.0 < alpha <= 1.0:
        raise ValueError("the optimizer comparison needs alpha in (0, 1]")
    seed = int(np.random.SeedSequence(cfg.seed, spawn_key=(0,)).generate_state(1)[0])
    p = build_problem(cfg.problem, 0)
    pw, t = whiten_problem(p)
    samples = tempered_samples(cfg, p, pw, [alpha], cfg.n_samples, seed, 0)
    red = _Reducer(cfg, p, pw, t, samples, seed)
    ctx = red.ctx(alpha)
    s_vals = sorted(int(v) for v in cfg.sweep_values)
    s_max = max(s_vals)
    v_inc, info_inc = optimize_incremental(ctx, s_max, full_output=True)
    v_nep, info_nep = optimize_nepv(ctx, s_max, _stream(seed, 4), full_output=True)
    full_post = linear_posterior(p) if p.matrix is not None else None
    eye = np.eye(p.d_x)

    def err(v_bar):
        if full_post is None:
            return None
        space = ReducedSpace.from_bases(eye, unwhiten_basis(v_bar, t.output_fwd))
        return w2_gaussian_sq(linear_reduced_posterior(p, space), full_post)

    header = ["s", "J_full", "J_incremental", "J_nepv", "iters_full", "iters_incremental", "iters_nepv",
              "fallback_nepv", "converged_full", "angle_full_incremental", "angle_incremental_nepv",
              "err_full", "err_incremental", "err_nepv"]
    rows = []
    for s in s_vals:
        v_full, info_full = optimize_full(ctx, s, full_output=True)
        vi, vn = v_inc[:, :s], v_nep[:, :s]
        it_inc = sum(e["iterations"] for e in info_inc.stages[:s])
        it_nep = sum(e["iterations"] for e in info_nep.stages[:s])
        fb = sum(int(e["fallback"]) for e in info_nep.stages[:s])
        ang_fi = float(np.max(principal_angles(v_full, vi), initial=0.0))
        ang_in = float(np.max(principal_angles(vi, vn), initial=0.0))
        rows.append([str(s), _fmt(objective_J(ctx, v_full)), _fmt(objective_J(ctx, vi)), _fmt(objective_J(ctx, vn)),
                     str(info_full.iterations), str(it_inc), str(it_nep), str(fb), str(int(info_full.converged)),
                     _fmt(ang_fi), _fmt(ang_in), _fmt(err(v_full)), _fmt(err(vi)), _fmt(err(vn))])
    result = ExperimentResult(header, rows, [], {"nepv_stages": info_nep.stages})
    if out:
        write_result(result, out)
    return result


# cache management -------------------------------------------------------------------------------

def cache_entries(cache_dir):
    if not cache_dir or not os.path.isdir(cache_dir):
        return []
    return sorted(f for f in os.listdir(cache_dir) if f.endswith(".npy"))


def cache_clear(cache_dir):
    n = 0
    for f in cache_entries(cache_dir):
        os.remove(os.path.join(cache_dir, f))
        n += 1
    return n
