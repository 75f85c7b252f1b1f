import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from alphalis import InverseProblem, eki_update, run_tempered_eki, rwm_sample
from alphalis.problems import linear_posterior
from alphalis.samplers import spawn_rngs

from conftest import iat_se, linear_problem, random_spd


class _Mirrored:
    """Generator wrapper whose normal draws are negated; uniforms unchanged."""

    def __init__(self, seed):
        self._g = np.random.default_rng(seed)

    def standard_normal(self, *a, **k):
        return -self._g.standard_normal(*a, **k)

    def random(self, *a, **k):
        return self._g.random(*a, **k)


class _Permuted:
    def __init__(self, seed, perm):
        self._g = np.random.default_rng(seed)
        self._perm = perm

    def standard_normal(self, shape):
        return self._g.standard_normal(shape)[:, self._perm]


# EKI

def test_eki_constant_map_leaves_ensemble(rng):
    x = rng.standard_normal((3, 10))
    g = np.ones((2, 10))
    out = eki_update(x, g, np.zeros(2), np.eye(2), 0.5, rng)
    np.testing.assert_array_equal(out, x)


def test_eki_rejects_bad_inputs(rng):
    with pytest.raises(ValueError):
        eki_update(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros(1), np.eye(1), 1.0, rng)
    with pytest.raises(ValueError):
        eki_update(np.zeros((1, 5)), np.zeros((1, 5)), np.zeros(1), np.eye(1), 1.5, rng)


def test_eki_scalar_kalman_update(rng):
    n = 10_000
    x = 1.0 + 2.0 * rng.standard_normal((1, n))
    y = np.array([3.0])
    out = eki_update(x, x.copy(), y, np.eye(1), 1.0, rng)
    m, c = x.mean(), x.var()
    expected = m + c / (c + 1) * (y[0] - m)
    se = out.std() / np.sqrt(n)
    assert abs(out.mean() - expected) < 3 * se


def test_eki_mean_over_seeds(rng):
    # the perturbation averages out: mean of the update over seeds -> noise-free update
    x = rng.standard_normal((2, 50))
    a = np.array([[1.0, 0.5], [0.0, 2.0]])
    g = a @ x
    y = np.array([0.3, -0.2])
    dx = x - x.mean(1, keepdims=True)
    dg = g - g.mean(1, keepdims=True)
    k = (dx @ dg.T / 50) @ np.linalg.inv(dg @ dg.T / 50 + np.eye(2))
    target = (x + k @ (y[:, None] - g)).mean(axis=1)
    means = np.array([eki_update(x, g, y, np.eye(2), 1.0, np.random.default_rng(s)).mean(axis=1)
                      for s in range(400)])
    se = means.std(axis=0) / np.sqrt(400)
    assert np.all(np.abs(means.mean(axis=0) - target) < 3 * se)


def test_eki_column_permutation(rng):
    x = rng.standard_normal((3, 8))
    g = np.vstack([np.sin(x[0]), x[1] * x[2]])
    perm = rng.permutation(8)
    y = np.array([0.1, 0.2])
    out = eki_update(x, g, y, np.eye(2), 0.5, np.random.default_rng(3))
    out_p = eki_update(x[:, perm], g[:, perm], y, np.eye(2), 0.5, _Permuted(3, perm))
    assert out_p.shape == out.shape
    np.testing.assert_allclose(out_p, out[:, perm], atol=1e-12)


def test_tempered_stops_uniform_schedule(rng):
    p = linear_problem(rng, 3, 2)
    te = run_tempered_eki(p, 20, [0.5, 1.0], schedule="uniform", rng=rng, n_steps=2)
    assert te.alphas == [0.0, 0.5, 1.0]
    assert te.n_steps == 2
    assert len(te.ensembles) == len(te.evaluations) == 3


def test_tempered_stops_exact_with_awkward_grid(rng):
    p = linear_problem(rng, 3, 2)
    stops = [0.13, 0.5, 0.77, 1.0]
    for schedule in ("uniform", "adaptive"):
        te = run_tempered_eki(p, 20, stops, schedule=schedule, rng=np.random.default_rng(0), n_steps=3)
        assert te.alphas == [0.0] + stops
        for x, g in zip(te.ensembles, te.evaluations):
            np.testing.assert_allclose(g, p.matrix @ x, atol=1e-12)


def test_tempered_rejects_bad_stops(rng):
    p = linear_problem(rng, 2, 2)
    for bad in ([], [1.2], [0.0]):
        with pytest.raises(ValueError):
            run_tempered_eki(p, 10, bad, rng=rng)
    with pytest.raises(ValueError):
        run_tempered_eki(p, 10, [1.0], schedule="magic", rng=rng)


def test_tempered_prior_entry(rng):
    g0 = random_spd(rng, 3)
    p = linear_problem(rng, 3, 2, gamma0=g0, mean=np.array([1.0, -2.0, 0.5]))
    te = run_tempered_eki(p, 20_000, [1.0], rng=rng)
    x0 = te.ensembles[0]
    assert np.max(np.abs(x0.mean(axis=1) - p.prior_mean)) < 0.05
    assert np.max(np.abs(np.cov(x0) - g0)) < 0.1


def test_tempered_posterior_mean_linear_gaussian():
    # members share the empirical gain and are not independent, so the standard
    # error is taken from the spread of the ensemble mean over seeds
    rng = np.random.default_rng(7)
    p = linear_problem(rng, 5, 5)
    post = linear_posterior(p)
    means = np.array([run_tempered_eki(p, 2000, [1.0], rng=np.random.default_rng(s)).ensembles[-1].mean(axis=1)
                      for s in range(16)])
    se = means.std(axis=0, ddof=1) / np.sqrt(16)
    assert np.all(np.abs(means.mean(axis=0) - post.mean) < 3 * se)


def test_tempered_forward_failure_aborts(rng):
    p = InverseProblem(forward=lambda x: np.array([np.inf if x[0] > 5 else x[0]]), gamma=[[1.0]],
                       prior_mean=[0.0], gamma0=[[1.0]], y_dagger=[100.0])
    with pytest.raises(FloatingPointError):
        run_tempered_eki(p, 50, [1.0], rng=rng)


@settings(max_examples=15, deadline=None)
@given(hst.lists(hst.floats(0.01, 1.0), min_size=1, max_size=5, unique=True), hst.integers(1, 7))
def test_tempered_grid_property(stops, n_steps):
    stops = sorted(stops)
    rng = np.random.default_rng(0)
    p = linear_problem(rng, 2, 2)
    te = run_tempered_eki(p, 5, stops, rng=rng, n_steps=n_steps)
    a = np.asarray(te.alphas)
    assert a[0] == 0.0 and np.all(np.diff(a) > 0)
    np.testing.assert_array_equal(a[1:], stops)
    assert len({e.shape[1] for e in te.ensembles}) == 1


# random-walk Metropolis

def test_rwm_standard_normal_moments():
    chain = rwm_sample(lambda x: -0.5 * float(x @ x), np.zeros(1), 100_000, rng=np.random.default_rng(1))
    x = chain.samples[:, 0]
    assert abs(x.mean()) < 3 * iat_se(x)
    sq = x**2
    assert abs(sq.mean() - 1.0) < 3 * iat_se(sq)
    assert 0.0 <= chain.acceptance_rate <= 1.0
    assert 0.15 < chain.acceptance_rate < 0.35


def test_rwm_adaptation_frozen_after_burn_in():
    chain = rwm_sample(lambda x: -0.5 * float(x @ x), np.zeros(2), 1000, n_burn=300, rng=np.random.default_rng(2))
    hist = chain.step_scale_history
    assert hist.size == 1300
    assert np.all(hist[300:] == hist[299])
    assert chain.samples.shape == (1000, 2)


def test_rwm_mirror_symmetry():
    ld = lambda x: -0.5 * float(x @ x) - 0.1 * float(np.sum(x**4))
    x0 = np.array([0.7, -0.2])
    a = rwm_sample(ld, x0, 500, rng=_Mirrored(5))
    b = rwm_sample(ld, -x0, 500, rng=np.random.default_rng(5))
    np.testing.assert_allclose(a.samples, -b.samples, atol=1e-12)
    assert a.acceptance_rate == b.acceptance_rate


def test_rwm_nan_handling():
    # half-line support: NaN outside; a minority of proposals fail
    ld = lambda x: -0.5 * float(x @ x) if x[0] > -3 else np.nan
    chain = rwm_sample(ld, np.zeros(1), 2000, rng=np.random.default_rng(3))
    assert np.all(chain.samples > -3)
    with pytest.raises(RuntimeError):
        rwm_sample(lambda x: 0.0 if np.all(x == 0) else np.nan, np.zeros(1), 500, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        rwm_sample(lambda x: -np.inf, np.zeros(1), 10, rng=np.random.default_rng(0))


def test_rwm_thinning_and_determinism():
    ld = lambda x: -0.5 * float(x @ x)
    a = rwm_sample(ld, np.zeros(2), 100, thin=3, rng=np.random.default_rng(4))
    b = rwm_sample(ld, np.zeros(2), 100, thin=3, rng=np.random.default_rng(4))
    assert a.samples.shape == (100, 2)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_spawn_rngs_independent_and_reproducible():
    a = [g.random() for g in spawn_rngs(9, 3)]
    b = [g.random() for g in spawn_rngs(9, 3)]
    assert a == b and len(set(a)) == 3
