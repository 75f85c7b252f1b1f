"""Small dense linear-algebra helpers shared across modules."""

import numpy as np
import scipy.linalg as la


def symmetrize(a):
    return 0.5 * (a + a.T)


def _clamped_eigh(a, floor_rel=1e-14):
    w, q = la.eigh(symmetrize(a))
    if w.size and w[-1] <= 0:
        raise ValueError("matrix is not positive definite")
    return np.maximum(w, floor_rel * (w[-1] if w.size else 1.0)), q


def check_spd(a, name="matrix"):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError(f"{name} must be symmetric")
    w = la.eigvalsh(symmetrize(a))
    if w[0] <= 0:
        raise ValueError(f"{name} must be positive definite (min eigenvalue {w[0]:.3e})")
    return a


def sym_sqrt(a):
    """Symmetric square root of an SPD matrix."""
    w, q = _clamped_eigh(a)
    return symmetrize((q * np.sqrt(w)) @ q.T)


def sym_inv_sqrt(a):
    """Symmetric inverse square root of an SPD matrix.

    Eigenvalues are clamped below at ``1e-14 * max(eigenvalue)``.
    """
    w, q = _clamped_eigh(a)
    return symmetrize((q / np.sqrt(w)) @ q.T)


def psd_sqrt(a):
    """Symmetric square root of a PSD matrix, clamping negative eigenvalues to 0."""
    if a.size == 0:
        return np.zeros_like(a)
    w, q = la.eigh(symmetrize(a))
    return symmetrize((q * np.sqrt(np.maximum(w, 0.0))) @ q.T)


def fix_signs(vecs):
    """Flip columns so that each column's largest-magnitude entry is positive."""
    vecs = np.array(vecs, dtype=float, copy=True)
    if vecs.size == 0:
        return vecs
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def sorted_eigh(a):
    """Eigendecomposition with descending eigenvalues and sign-fixed eigenvectors."""
    w, q = la.eigh(symmetrize(a))
    w, q = w[::-1], q[:, ::-1]
    return w, fix_signs(q)


def qr_positive(a, tol=1e-12):
    """Thin QR with positive diagonal of R; raises on (numerical) rank deficiency."""
    q, r = np.linalg.qr(a)
    d = np.diag(r)
    scale = np.abs(d).max() if d.size else 1.0
    if d.size and np.abs(d).min() <= tol * max(scale, np.finfo(float).tiny):
        raise ValueError("columns are linearly dependent")
    signs = np.where(d < 0, -1.0, 1.0)
    return q * signs


def complement(basis):
    """Orthonormal basis of the orthogonal complement of Col(basis)."""
    d, k = basis.shape
    if k == 0:
        return np.eye(d)
    q, _ = np.linalg.qr(basis, mode="complete")
    return q[:, k:]


def principal_angles(a, b):
    """Principal angles between Col(a) and Col(b), in radians."""
    return la.subspace_angles(a, b)


def max_angle(a, b):
    return float(np.max(principal_angles(a, b))) if a.shape[1] else 0.0
