"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is repeated in the terminal summary
under "acceptance criteria". Runtime limits are part of the checks.
"""

import json
import time
import warnings

import numpy as np
import pytest

from alphalis import (
    GradientProvider,
    InverseProblem,
    ObjectiveContext,
    estimate_h_alpha,
    grad_J,
    hellinger2_gaussian,
    hellinger2_snis,
    objective_J,
    optimize_incremental,
    optimize_nepv,
    run_tempered_eki,
    statistical_linearization,
    whiten_problem,
)
from alphalis._linalg import max_angle
from alphalis.cli import main
from alphalis.emulator_ces import CesConfig, ces_run
from alphalis.experiments import run_experiment
from alphalis.problems import (
    DarcySpec,
    GaussianPosterior,
    LinearProblemSpec,
    LorenzSpec,
    darcy_forward,
    linear_posterior,
    linear_tempered_posterior,
    lorenz96_forward,
    lorenz_true_forcing,
    make_linear_problem,
    make_linexp_problem,
    make_lorenz_problem,
)
from alphalis.reduction import df_lis_matrix
from alphalis.samplers import sample_gaussian

from conftest import linear_problem, random_orthonormal, random_spd, record_criterion

pytestmark = pytest.mark.slow


def quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fn(*args, **kwargs)


def test_c01_full_space_exactness():
    t0 = time.perf_counter()
    cfg = {"problem": {"type": "linear", "d_x": 20, "d_y": 20}, "sweep_values": [20],
           "methods": ["lis(0)", "lis(0.5)", "lis(1)", "lis_acc(0,1)"], "n_samples": 100}
    res = quiet(run_experiment, cfg)
    errs = [res.column(c)[0] for c in res.header[1:]]
    elapsed = time.perf_counter() - t0
    ok = max(errs) < 1e-8 and elapsed < 10
    record_criterion(1, ok, f"max W2^2 at r=s=20 {max(errs):.2e} (< 1e-8), {elapsed:.1f} s (< 10 s)")
    assert ok


def test_c02_df_lis_equivalence():
    p = make_linexp_problem(LinearProblemSpec(12, 10, seed=4, gamma0_scale=0.5))
    pw, _ = whiten_problem(p)
    xs = np.random.default_rng(0).standard_normal((12, 50))
    h = estimate_h_alpha(xs, GradientProvider.exact(pw.jacobian), pw, 0.0).h
    diff = np.max(np.abs(h - df_lis_matrix(pw, xs, pw.jacobian)))
    ok = diff <= 1e-12
    record_criterion(2, ok, f"max entry difference {diff:.1e} (<= 1e-12)")
    assert ok


def _nonlinear_grads(rng, d_x, d_y, n):
    a = rng.standard_normal((d_y, d_x)) / np.sqrt(d_x)
    xs = 0.5 * rng.standard_normal((d_x, n))
    gs = a @ np.exp(xs)
    y = a @ np.exp(rng.standard_normal(d_x)) + 0.3 * rng.standard_normal(d_y)
    return a, xs, gs, y


def test_c03_gradient_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    d_x, d_y, s, h = 6, 10, 3, 1e-6
    worst = 0.0
    for mode in ("exact", "sl"):
        a, xs, gs, y = _nonlinear_grads(rng, d_x, d_y, 25)
        gamma = random_spd(rng, d_y)
        if mode == "exact":
            grads = np.stack([a * np.exp(xs[:, j]) for j in range(xs.shape[1])])
        else:
            grads = statistical_linearization(xs, gs)
        for alpha in (0.0, 0.5, 1.0):
            ctx = ObjectiveContext.build(grads, y[:, None] - gs, gamma, alpha)
            v = random_orthonormal(rng, d_y, s)
            _, riem = grad_J(ctx, v)
            for _ in range(20):
                xi = rng.standard_normal((d_y, s))
                xi -= v @ (v.T @ xi)
                fd = (objective_J(ctx, v + h * xi) - objective_J(ctx, v - h * xi)) / (2 * h)
                an = np.sum(riem * xi)
                worst = max(worst, abs(fd - an) / abs(an))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 30
    record_criterion(3, ok, f"worst relative error {worst:.1e} (< 1e-5), {elapsed:.1f} s (< 30 s)")
    assert ok


def test_c04_projector_identity():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 15))
        s = int(rng.integers(1, d + 1))
        gamma = random_spd(rng, d)
        ctx = ObjectiveContext.build(np.zeros((d, 1)), np.zeros((d, 1)), gamma, 0.5)
        v = random_orthonormal(rng, d, s)
        proj = ctx.projector(v)
        worst = max(worst, np.max(np.abs(proj @ gamma @ proj - proj)))
    ok = worst < 1e-10
    record_criterion(4, ok, f"max |P G P - P| {worst:.1e} (< 1e-10)")
    assert ok


def test_c05_linear_sweep_ordering():
    t0 = time.perf_counter()
    cfg = {"problem": {"type": "linear", "d_x": 50, "d_y": 50}, "methods": ["pca", "lis(0)", "lis(0.5)", "lis(1)"],
           "sweep_values": [2, 4, 8, 16, 32], "n_samples": 500, "sampler": "mcmc", "replicates": 8}
    res = quiet(run_experiment, cfg)
    elapsed = time.perf_counter() - t0
    i = [r[0] for r in res.rows].index("16")
    pca, l0, l05, l1 = (res.column(c)[i] for c in ("err_pca", "err_lis_0", "err_lis_0.5", "err_lis_1"))
    gain = min(pca / l05, pca / l1)
    between = max(l05, l1) < l0 < pca
    ok = gain >= 100 and between and elapsed < 600
    record_criterion(5, ok, f"r=s=16 gain over PCA {pca / l05:.1f}x (lis 0.5), {pca / l1:.1f}x (lis 1) (>= 100x); "
                            f"lis(0) between: {between}; {elapsed:.0f} s (< 600 s)")
    assert ok


def test_c06_small_sample_sweep():
    t0 = time.perf_counter()
    cfg = {"problem": {"type": "linear", "d_x": 50, "d_y": 50}, "methods": ["lis(0.5)", "lis_acc(0,1)", "lis(1)"],
           "sweep_values": [8, 16], "n_samples": 10, "sampler": "mcmc", "replicates": 8}
    res = quiet(run_experiment, cfg)
    elapsed = time.perf_counter() - t0
    l05, acc, l1 = (res.column(c) for c in ("err_lis_0.5", "err_lis_acc_0_1", "err_lis_1"))
    ok = all(a < c and b < c for a, b, c in zip(l05, acc, l1)) and elapsed < 600
    detail = "; ".join(f"r=s={r[0]}: {a:.3g}, {b:.3g} vs {c:.3g}" for r, a, b, c in zip(res.rows, l05, acc, l1))
    record_criterion(6, ok, f"lis(0.5), accumulated vs lis(1): {detail}; {elapsed:.0f} s (< 600 s)")
    assert ok


def test_c07_statistical_linearization():
    rng = np.random.default_rng(7)
    d_x, d_y = 9, 6
    a = rng.standard_normal((d_y, d_x))
    xs = rng.standard_normal((d_x, d_x + 1))
    err = np.max(np.abs(statistical_linearization(xs, a @ xs + 2.0) - a))
    ok = err < 1e-10
    record_criterion(7, ok, f"max |G_SL - A| {err:.1e} with J = d_x + 1 (< 1e-10)")
    assert ok


def test_c08_snis_hellinger_calibration():
    from scipy import stats

    rng = np.random.default_rng(8)
    z = []
    for _ in range(20):
        d = int(rng.integers(1, 6))
        p = GaussianPosterior(0.5 * rng.standard_normal(d), random_spd(rng, d))
        q = GaussianPosterior(0.5 * rng.standard_normal(d), random_spd(rng, d, floor=1.0))
        xs = rng.multivariate_normal(q.mean, q.cov, size=10_000)
        rep = hellinger2_snis(stats.multivariate_normal(p.mean, p.cov).logpdf(xs).reshape(-1),
                              stats.multivariate_normal(q.mean, q.cov).logpdf(xs).reshape(-1), xs)
        z.append(abs(rep.value - hellinger2_gaussian(p, q)) / rep.std_error)
    ok = max(z) < 3
    record_criterion(8, ok, f"worst |estimate - exact| / SE over 20 pairs {max(z):.2f} (< 3)")
    assert ok


def test_c09_eki_consistency():
    rng = np.random.default_rng(9)
    p = linear_problem(rng, 5, 5)
    post = linear_posterior(p)
    means = np.array([run_tempered_eki(p, 2000, [1.0], rng=np.random.default_rng(s)).ensembles[-1].mean(axis=1)
                      for s in range(16)])
    se = means.std(axis=0, ddof=1) / np.sqrt(16)
    z = np.max(np.abs(means.mean(axis=0) - post.mean) / se)
    ok = z < 3
    record_criterion(9, ok, f"worst |mean - exact| / SE over 16 seeds {z:.2f} (< 3)")
    assert ok


def test_c10_darcy_order():
    t0 = time.perf_counter()
    spec = DarcySpec()
    rates = []
    for u in (np.zeros(spec.d_x), np.random.default_rng(10).standard_normal(spec.d_x)):
        ref = darcy_forward(spec, u, h=2.0**-9)
        e = [np.max(np.abs(darcy_forward(spec, u, h=2.0**-k) - ref)) for k in (4, 5)]
        rates.append(np.log2(e[0] / e[1]))
    elapsed = time.perf_counter() - t0
    ok = all(1.7 <= r <= 2.3 for r in rates) and elapsed < 120
    record_criterion(10, ok, f"rates {rates[0]:.3f} (u = 0), {rates[1]:.3f} (random u) in [1.7, 2.3]; "
                             f"{elapsed:.1f} s (< 120 s)")
    assert ok


def test_c11_lorenz_equilibrium():
    spec = LorenzSpec()
    worst = 0.0
    for c in (8.0, 3.5, -2.0):
        y = lorenz96_forward(spec, np.full(spec.n, c), u0=np.full(spec.n, c))
        target = np.concatenate([np.full(spec.n, c), np.zeros(spec.n)])
        worst = max(worst, np.max(np.abs(y - target)))
    ok = worst <= 1e-10
    record_criterion(11, ok, f"max deviation from [c 1; 0] {worst:.1e} (<= 1e-10)")
    assert ok


def test_c12_nepv_agrees_with_incremental():
    worst, n_conv, n_fb, bad = 0.0, 0, 0, 0
    for seed in range(2):
        p = make_linear_problem(LinearProblemSpec(30, 30, seed=seed))
        pw, _ = whiten_problem(p)
        post = linear_tempered_posterior(pw, 0.5)
        rng = np.random.default_rng(seed)
        xs = sample_gaussian(post.mean, post.cov, 200, rng)
        ctx = ObjectiveContext.build(pw.matrix, pw.y_dagger[:, None] - pw.matrix @ xs, np.eye(30), 0.5)
        vi = quiet(optimize_incremental, ctx, 29)
        vn, info = quiet(optimize_nepv, ctx, 29, np.random.default_rng(seed), full_output=True)
        for k, st in enumerate(info.stages, start=1):
            if st["fallback"]:
                n_fb += 1
                continue
            n_conv += 1
            bad += not (st["converged"] and st["eps_history"][-1] < 1e-4)
            worst = max(worst, max_angle(vi[:, :k], vn[:, :k]))
    ok = bad == 0 and worst < 1e-3
    record_criterion(12, ok, f"{n_conv} converged stages, {n_fb} fallbacks; worst angle to incremental "
                             f"{worst:.1e} (< 1e-3)")
    assert ok


def test_c13_ces_lorenz():
    t0 = time.perf_counter()
    f_true = lorenz_true_forcing(20)
    errs = []
    for seed in range(4):
        p = make_lorenz_problem(LorenzSpec(n=20, seed=seed))
        res = quiet(ces_run, p, CesConfig(n_ensemble=100, r=8, s=8, input_method="lis_acc"), seed)
        errs.append(np.linalg.norm(f_true - res.posterior_mean))
    elapsed = time.perf_counter() - t0
    bound = np.linalg.norm(f_true - 8.0) / 2
    med = float(np.median(errs))
    ok = med < bound and elapsed < 1200
    record_criterion(13, ok, f"median |F - posterior mean| {med:.2f} over 4 seeds (< {bound:.2f}); "
                             f"{elapsed:.0f} s (< 1200 s)")
    assert ok


def test_c14_cli_determinism(tmp_path):
    cfg = {"problem": {"type": "linexp", "d_x": 6, "d_y": 6, "gamma0_scale": 0.5},
           "methods": ["pca", "lis(0.5)", "lis_acc(0,1)"], "sweep_values": [1, 3], "sampler": "mcmc",
           "gradient": "sl", "metric": "hellinger", "n_samples": 60, "n_mcmc": 300, "n_inner": 4,
           "alpha_grid": [0.0, 0.5, 1.0], "replicates": 2}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for k, jobs in enumerate(("1", "1", "2")):
        out = tmp_path / f"out{k}.csv"
        code = main(["run", str(path), "--seed", "11", "--jobs", jobs, "--out", str(out)])
        outs.append((code, out.read_bytes()))
    ok = all(c == 0 for c, _ in outs) and outs[0][1] == outs[1][1] == outs[2][1]
    record_criterion(14, ok, "replayed CLI runs (serial twice, two workers once) give identical CSV bytes")
    assert ok
