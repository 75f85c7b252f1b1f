import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from alphalis import (
    DiagnosticMatrix,
    GradientProvider,
    InverseProblem,
    accumulate_h,
    estimate_h_alpha,
    input_basis,
    pca_basis,
    statistical_linearization,
    whiten_problem,
)
from alphalis._linalg import max_angle
from alphalis.problems import linear_tempered_posterior
from alphalis.reduction import default_nugget, df_lis_matrix, quadrature_weights

from conftest import linear_problem, random_orthonormal, random_spd


# statistical linearisation

def test_sl_exact_on_linear_map(rng):
    a = rng.standard_normal((4, 6))
    xs = rng.standard_normal((6, 7))
    np.testing.assert_allclose(statistical_linearization(xs, a @ xs), a, atol=1e-10)


def test_sl_constant_map_gives_zero(rng):
    xs = rng.standard_normal((3, 10))
    np.testing.assert_array_equal(statistical_linearization(xs, np.full((2, 10), 4.0)), 0.0)


def test_sl_secant_slope():
    xs = np.array([[0.0, 2.0]])
    assert statistical_linearization(xs, xs**2)[0, 0] == pytest.approx(2.0)


def test_sl_rejects_single_sample():
    with pytest.raises(ValueError):
        statistical_linearization(np.zeros((2, 1)), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        statistical_linearization(np.zeros((2, 3)), np.zeros((1, 3)), nugget=-1.0)


def test_sl_nugget_shrinks(rng):
    a = rng.standard_normal((2, 3))
    xs = rng.standard_normal((3, 50))
    g = statistical_linearization(xs, a @ xs, nugget=10.0)
    assert np.linalg.norm(g) < np.linalg.norm(a)


@settings(max_examples=30, deadline=None)
@given(hst.integers(1, 5), hst.integers(1, 4), hst.integers(0, 2**31), hst.floats(0.1, 10))
def test_sl_affine_exact_property(d_x, d_y, seed, spread):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d_y, d_x))
    b = rng.standard_normal((d_y, 1))
    xs = spread * rng.standard_normal((d_x, d_x + 3)) + rng.standard_normal((d_x, 1))
    np.testing.assert_allclose(statistical_linearization(xs, a @ xs + b), a, atol=1e-8 * max(1, np.abs(a).max()))


def test_default_nugget():
    assert default_nugget(np.eye(3), 30, noisy=False) == 0.0
    assert default_nugget(np.eye(3), 30, noisy=True) == pytest.approx(0.1)


# tempered diagnostic

def _scalar_problem(y, slope=2.0):
    return InverseProblem(forward=lambda x: slope * np.asarray(x, float), gamma=[[1.0]], prior_mean=[0.0],
                          gamma0=[[1.0]], y_dagger=[y], jacobian=lambda x: np.array([[slope]]))


def test_h_alpha_scalar_example():
    # residual y - G(x) = 1 at x = 0
    p = _scalar_problem(1.0)
    h = estimate_h_alpha(np.zeros((1, 1)), GradientProvider.exact(p.jacobian), p, 0.5)
    assert h.h[0, 0] == pytest.approx(3.0)


def test_h_alpha_zero_residual_at_alpha_one():
    p = _scalar_problem(0.0)
    h = estimate_h_alpha(np.zeros((1, 1)), GradientProvider.exact(p.jacobian), p, 1.0)
    assert h.h[0, 0] == 0.0


def test_h_alpha_zero_is_data_free_for_linear(rng):
    p = linear_problem(rng, 4, 3)
    pw, _ = whiten_problem(p)
    for xs in (rng.standard_normal((4, 5)), 10 * rng.standard_normal((4, 2))):
        h = estimate_h_alpha(xs, GradientProvider.exact(pw.jacobian), pw, 0.0)
        np.testing.assert_allclose(h.h, pw.matrix.T @ pw.matrix, atol=1e-12)


def test_h_alpha_rejects_bad_alpha(rng):
    p = linear_problem(rng, 2, 2)
    with pytest.raises(ValueError):
        estimate_h_alpha(np.zeros((2, 3)), GradientProvider.exact(p.jacobian), p, 1.5)


def test_h_alpha_matches_df_lis_nonlinear(rng):
    a = rng.standard_normal((3, 4))
    p = InverseProblem(forward=lambda x: a @ np.exp(x), gamma=random_spd(rng, 3), prior_mean=np.zeros(4),
                       gamma0=random_spd(rng, 4), y_dagger=rng.standard_normal(3),
                       jacobian=lambda x: a * np.exp(x))
    pw, _ = whiten_problem(p)
    xs = rng.standard_normal((4, 30))
    h = estimate_h_alpha(xs, GradientProvider.exact(pw.jacobian), pw, 0.0)
    np.testing.assert_allclose(h.h, df_lis_matrix(pw, xs, pw.jacobian), rtol=0, atol=1e-12)


def test_h_alpha_exact_vs_shared_gradient_agree_for_linear(rng):
    p = linear_problem(rng, 4, 3, gamma=random_spd(rng, 3))
    xs = rng.standard_normal((4, 9))
    h1 = estimate_h_alpha(xs, GradientProvider.exact(p.jacobian), p, 0.7)
    h2 = estimate_h_alpha(xs, GradientProvider.exact(p.matrix), p, 0.7)
    h3 = estimate_h_alpha(xs, GradientProvider.from_samples(xs, p.matrix @ xs), p, 0.7)
    np.testing.assert_allclose(h1.h, h2.h, atol=1e-12)
    np.testing.assert_allclose(h1.h, h3.h, atol=1e-9)


def test_h_alpha_uses_cached_evaluations(rng):
    p = linear_problem(rng, 3, 2)
    xs = rng.standard_normal((3, 5))
    g = GradientProvider.exact(p.matrix)
    shifted = p.matrix @ xs + 1.0
    h_cached = estimate_h_alpha(xs, g, p, 1.0, evaluations=shifted)
    h_fresh = estimate_h_alpha(xs, g, p, 1.0)
    assert not np.allclose(h_cached.h, h_fresh.h)


@settings(max_examples=25, deadline=None)
@given(hst.floats(0, 1), hst.integers(0, 2**31), hst.booleans())
def test_h_alpha_symmetric_psd_property(alpha, seed, use_sl):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 4))
    p = InverseProblem(forward=lambda x: a @ np.sin(x), gamma=random_spd(rng, 3), prior_mean=np.zeros(4),
                       gamma0=np.eye(4), y_dagger=rng.standard_normal(3), jacobian=lambda x: a * np.cos(x))
    xs = rng.standard_normal((4, 12))
    gp = GradientProvider.from_samples(xs, a @ np.sin(xs)) if use_sl else GradientProvider.exact(p.jacobian)
    h = estimate_h_alpha(xs, gp, p, alpha)
    np.testing.assert_allclose(h.h, h.h.T, atol=1e-10)
    assert h.eigvals[-1] >= -1e-10 * max(h.eigvals[0], 1e-300)
    assert np.all(np.diff(h.eigvals) <= 0)


# accumulation

def _dm(rng, d, tag):
    return DiagnosticMatrix.from_matrix(random_spd(rng, d), tag)


def test_accumulate_single_pair(rng):
    m = _dm(rng, 3, 0.4)
    out = accumulate_h([(0.4, m)])
    np.testing.assert_allclose(out.h, m.h)
    assert out.alpha_tag == (0.4, 0.4)


def test_accumulate_identical_matrices(rng):
    m = _dm(rng, 3, 0.0)
    np.testing.assert_allclose(accumulate_h([(0.0, m), (1.0, m)]).h, m.h, atol=1e-14)


def test_accumulate_empty_rejected():
    with pytest.raises(ValueError):
        accumulate_h([])


def test_accumulate_differs_from_midpoint_on_linear_gaussian(rng):
    p = linear_problem(rng, 5, 5)
    gp = GradientProvider.exact(p.matrix)
    alphas = np.linspace(0, 1, 11)
    pairs = []
    for a in alphas:
        post = linear_tempered_posterior(p, a)
        xs = post.mean[:, None] + np.linalg.cholesky(post.cov) @ rng.standard_normal((5, 2000))
        pairs.append((a, estimate_h_alpha(xs, gp, p, a)))
    acc = accumulate_h(pairs)
    assert acc.alpha_tag == (0.0, 1.0)
    assert np.linalg.norm(acc.h - pairs[5][1].h) > 0


def test_accumulate_linear_in_weights_and_order_free(rng):
    pairs = [(a, _dm(rng, 4, a)) for a in (0.0, 0.3, 0.9)]
    w1, w2 = np.array([0.2, 0.5, 0.3]), np.array([0.6, 0.1, 0.3])
    h1 = accumulate_h(pairs, w1).h
    h2 = accumulate_h(pairs, w2).h
    np.testing.assert_allclose(accumulate_h(pairs, 0.25 * w1 + 0.75 * w2).h, 0.25 * h1 + 0.75 * h2, atol=1e-12)
    perm = [2, 0, 1]
    np.testing.assert_allclose(accumulate_h([pairs[i] for i in perm], w1[perm]).h, h1, atol=1e-12)
    np.testing.assert_allclose(accumulate_h([pairs[i] for i in perm]).h, accumulate_h(pairs).h, atol=1e-12)


def test_quadrature_weights():
    np.testing.assert_allclose(quadrature_weights([0, 0.5, 1]), [1 / 3] * 3)
    np.testing.assert_allclose(quadrature_weights([0, 0.5, 1], "trapezoid"), [0.25, 0.5, 0.25])
    np.testing.assert_allclose(quadrature_weights([0, 0.1, 1], "trapezoid"), [0.05, 0.5, 0.45])
    with pytest.raises(ValueError):
        quadrature_weights([0, 1], "simpson")


def test_diagnostic_roundtrip(tmp_path, rng):
    m = _dm(rng, 3, (0.0, 1.0))
    for name in ("h.npz", "h.csv"):
        m.save(tmp_path / name)
        back = DiagnosticMatrix.load(tmp_path / name)
        np.testing.assert_array_equal(back.h, m.h)
        assert back.alpha_tag == (0.0, 1.0)
    m = _dm(rng, 2, 0.5)
    m.save(tmp_path / "s.csv")
    assert DiagnosticMatrix.load(tmp_path / "s.csv").alpha_tag == 0.5


def test_diagnostic_rejects_indefinite():
    with pytest.raises(ValueError):
        DiagnosticMatrix.from_matrix(np.diag([1.0, -1.0]), 0.0)


# PCA and input bases

def test_pca_diagonal():
    u = pca_basis(np.diag([3.0, 2.0, 1.0]), 2)
    np.testing.assert_allclose(u, np.eye(3)[:, :2], atol=1e-14)


def test_pca_isotropic(rng):
    u = pca_basis(np.eye(4), 3)
    np.testing.assert_allclose(u.T @ u, np.eye(3), atol=1e-12)


def test_pca_empirical_direction(rng):
    xs = np.diag([2.0, 1.0]) @ rng.standard_normal((2, 10_000))
    u = pca_basis(xs, 1, samples=True)
    assert np.arccos(min(1.0, abs(u[0, 0]))) < 0.05


def test_pca_output_side_adds_noise():
    u = pca_basis(np.diag([1.0, 0.5]), 1, noise_cov=np.diag([0.0, 1.0]))
    np.testing.assert_allclose(np.abs(u[:, 0]), [0.0, 1.0], atol=1e-14)


def test_pca_rejects_large_r():
    with pytest.raises(ValueError):
        pca_basis(np.eye(2), 3)


def test_pca_sign_convention(rng):
    u = pca_basis(random_spd(rng, 5), 3)
    idx = np.argmax(np.abs(u), axis=0)
    assert np.all(u[idx, np.arange(3)] > 0)


def test_input_basis_examples(rng):
    h = DiagnosticMatrix.from_matrix(np.diag([5.0, 1.0]), 0.0)
    np.testing.assert_allclose(input_basis(h, 1), [[1.0], [0.0]])
    h = DiagnosticMatrix.from_matrix(random_spd(rng, 4), 0.0)
    u = input_basis(h, 4)
    np.testing.assert_allclose(u.T @ u, np.eye(4), atol=1e-12)
    with pytest.raises(ValueError):
        input_basis(h, 5)


def test_input_basis_rotation_equivariance(rng):
    w = np.diag([9.0, 5.0, 3.0, 2.0, 1.0])
    q = random_orthonormal(rng, 5, 5)
    h = DiagnosticMatrix.from_matrix(w, 0.0)
    hq = DiagnosticMatrix.from_matrix(q @ w @ q.T, 0.0)
    a, b = input_basis(hq, 3), q @ input_basis(h, 3)
    np.testing.assert_allclose(np.abs(np.sum(a * b, axis=0)), 1.0, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(hst.integers(0, 2**31), hst.floats(1e-3, 1e3), hst.integers(1, 5))
def test_input_basis_scale_invariance_property(seed, c, r):
    rng = np.random.default_rng(seed)
    m = random_spd(rng, 5)
    a = input_basis(DiagnosticMatrix.from_matrix(m, 0.0), r)
    b = input_basis(DiagnosticMatrix.from_matrix(c * m, 0.0), r)
    assert max_angle(a, b) < 1e-6
