"""Steady Darcy flow on the unit square with a log-normal permeability.

``-div(a grad p) = c`` with ``p = 0`` on the boundary, discretised by a
conservative five-point flux scheme. Face coefficients are the arithmetic mean
of ``a`` at the two adjacent grid nodes.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..bip_core import InverseProblem


@dataclass(frozen=True)
class DarcySpec:
    d_x: int = 16
    d_y: int = 49
    tau: float = 3.0
    smoothness: float = 2.0
    h: float = 2.0**-5
    source: float = 1.0
    noise_var: float = 1e-4
    truth_h: float = 2.0**-7
    seed: int = 0

    def __post_init__(self):
        n = 1.0 / self.h
        if abs(n - round(n)) > 1e-9 or round(n) < 2:
            raise ValueError("grid step must be 1/n for an integer n >= 2")
        if self.d_x < 1 or self.d_y < 1:
            raise ValueError("d_x and d_y must be positive")


@lru_cache(maxsize=None)
def kl_modes(d_x, tau=3.0, smoothness=2.0):
    """The ``d_x`` wavevectors with largest ``lambda_k = (pi^2 |k|^2 + tau^2)^-s``.

    Returns ``(k, lam)`` with ``k`` of shape ``(d_x, 2)``; ties are ordered by ``k``.
    """
    m = int(np.ceil(np.sqrt(d_x))) + 2
    ks = [(k1, k2) for k1 in range(m) for k2 in range(m) if (k1, k2) != (0, 0)]
    ks.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k))
    k = np.array(ks[:d_x], dtype=float)
    lam = (np.pi**2 * (k**2).sum(axis=1) + tau**2) ** (-smoothness)
    return k, lam


def kl_basis(xi1, xi2, k):
    """``phi_k`` evaluated at points ``(xi1, xi2)`` -> ``(n_points, d_x)``."""
    c = np.where((k[:, 0] == 0) | (k[:, 1] == 0), np.sqrt(2.0), 2.0)
    return c * np.cos(np.pi * np.outer(xi1, k[:, 0])) * np.cos(np.pi * np.outer(xi2, k[:, 1]))


def observation_points(d_y):
    """Row-major ``m x m`` interior lattice at ``i / (m + 1)``, ``m = ceil(sqrt(d_y))``, truncated to ``d_y``."""
    m = int(np.ceil(np.sqrt(d_y)))
    t = np.arange(1, m + 1) / (m + 1)
    xi1, xi2 = np.meshgrid(t, t, indexing="ij")
    return xi1.ravel()[:d_y], xi2.ravel()[:d_y]


class DarcyGrid:
    """Discrete operator pieces for an ``n x n`` cell grid (nodes ``0..n`` per axis)."""

    def __init__(self, n, d_x, d_y, tau=3.0, smoothness=2.0):
        self.n = n
        self.h = 1.0 / n
        nodes = np.arange(n + 1) * self.h
        x1, x2 = np.meshgrid(nodes, nodes, indexing="ij")
        k, lam = kl_modes(d_x, tau, smoothness)
        # log-permeability modes at every grid node, (n+1)^2 x d_x
        self.modes = kl_basis(x1.ravel(), x2.ravel(), k) * np.sqrt(lam)
        self._build_faces()
        self.obs = self._interpolation(d_y)

    def _node(self, i, j):
        return i * (self.n + 1) + j

    def _build_faces(self):
        n = self.n
        ni = n - 1
        interior = -np.ones((n + 1) * (n + 1), dtype=int)
        ii, jj = np.meshgrid(np.arange(1, n), np.arange(1, n), indexing="ij")
        interior[self._node(ii, jj).ravel()] = np.arange(ni * ni)
        # faces joining (i, j)-(i+1, j) and (i, j)-(i, j+1) with at least one interior end
        pa, pb = [], []
        i, j = np.meshgrid(np.arange(n), np.arange(1, n), indexing="ij")
        pa.append(self._node(i, j).ravel())
        pb.append(self._node(i + 1, j).ravel())
        i, j = np.meshgrid(np.arange(1, n), np.arange(n), indexing="ij")
        pa.append(self._node(i, j).ravel())
        pb.append(self._node(i, j + 1).ravel())
        self.face_a = np.concatenate(pa)
        self.face_b = np.concatenate(pb)
        nf = self.face_a.size
        ia, ib = interior[self.face_a], interior[self.face_b]
        rows = np.concatenate([ia[ia >= 0], ib[ib >= 0]])
        cols = np.concatenate([np.flatnonzero(ia >= 0), np.flatnonzero(ib >= 0)])
        vals = np.concatenate([np.ones((ia >= 0).sum()), -np.ones((ib >= 0).sum())])
        # incidence: (E^T p)_f = p_a - p_b with boundary values zero
        self.incidence = sp.csr_matrix((vals, (rows, cols)), shape=(ni * ni, nf))
        self.interior = interior

    def _interpolation(self, d_y):
        """Sparse bilinear interpolation from interior nodal values to observation points."""
        xi1, xi2 = observation_points(d_y)
        n = self.n
        rows, cols, vals = [], [], []
        for q, (s1, s2) in enumerate(zip(xi1, xi2)):
            f1, f2 = s1 * n, s2 * n
            i0 = min(int(np.floor(f1)), n - 1)
            j0 = min(int(np.floor(f2)), n - 1)
            t1, t2 = f1 - i0, f2 - j0
            for di, wi in ((0, 1 - t1), (1, t1)):
                for dj, wj in ((0, 1 - t2), (1, t2)):
                    w = wi * wj
                    idx = self.interior[self._node(i0 + di, j0 + dj)]
                    if idx >= 0 and w != 0:
                        rows.append(q)
                        cols.append(idx)
                        vals.append(w)
        return sp.csr_matrix((vals, (rows, cols)), shape=(xi1.size, (n - 1) ** 2))

    def field(self, u):
        with np.errstate(over="raise"):
            try:
                a = np.exp(self.modes @ u)
            except FloatingPointError as exc:
                raise FloatingPointError("permeability overflow") from exc
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise FloatingPointError("permeability is not finite and positive")
        return a

    def stiffness(self, a):
        af = 0.5 * (a[self.face_a] + a[self.face_b])
        e = self.incidence
        return (e @ sp.diags(af) @ e.T).tocsc() / self.h**2

    def solve(self, u, source=1.0, with_factor=False):
        a = self.field(u)
        k = self.stiffness(a)
        try:
            lu = spla.splu(k)
        except RuntimeError as exc:
            raise np.linalg.LinAlgError("Darcy stiffness factorisation failed") from exc
        p = lu.solve(np.full(k.shape[0], float(source)))
        if not np.all(np.isfinite(p)):
            raise np.linalg.LinAlgError("Darcy solve produced non-finite values")
        return (p, a, lu) if with_factor else p

    def nodal(self, p):
        """Interior solution vector -> ``(n+1) x (n+1)`` array including the zero boundary."""
        full = np.zeros((self.n + 1) ** 2)
        mask = self.interior >= 0
        full[mask] = p[self.interior[mask]]
        return full.reshape(self.n + 1, self.n + 1)

    def jacobian(self, u, source=1.0):
        """Observations and their exact derivative with respect to ``u`` (sensitivity method)."""
        p, a, lu = self.solve(u, source, with_factor=True)
        e = self.incidence
        g = (e.T @ p) / self.h**2  # face differences (p_a - p_b) / h^2
        da = 0.5 * (a[self.face_a, None] * self.modes[self.face_a] + a[self.face_b, None] * self.modes[self.face_b])
        rhs = -(e @ (g[:, None] * da))
        dp = lu.solve(np.asarray(rhs))
        return self.obs @ p, self.obs @ dp


@lru_cache(maxsize=8)
def _grid(n, d_x, d_y, tau, smoothness):
    return DarcyGrid(n, d_x, d_y, tau, smoothness)


def grid_for(spec, h=None):
    n = int(round(1.0 / (spec.h if h is None else h)))
    return _grid(n, spec.d_x, spec.d_y, spec.tau, spec.smoothness)


def darcy_forward(spec, u, h=None):
    """Pressure at the observation lattice for KL coefficients ``u``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (spec.d_x,):
        raise ValueError(f"expected u of shape {(spec.d_x,)}, got {u.shape}")
    g = grid_for(spec, h)
    return g.obs @ g.solve(u, spec.source)


def darcy_jacobian(spec, u, h=None):
    return grid_for(spec, h).jacobian(np.asarray(u, dtype=float), spec.source)[1]


def make_darcy_problem(spec):
    """Darcy inverse problem with prior ``N(0, I)`` and data solved on the finer ``truth_h`` grid."""
    rng = np.random.default_rng(spec.seed)
    u_true = rng.standard_normal(spec.d_x)
    y = darcy_forward(spec, u_true, h=spec.truth_h) + np.sqrt(spec.noise_var) * rng.standard_normal(spec.d_y)

    def forward_batch(us, rng=None):
        return np.column_stack([darcy_forward(spec, us[:, j]) for j in range(us.shape[1])])

    return InverseProblem(
        forward=lambda u: darcy_forward(spec, u),
        gamma=spec.noise_var * np.eye(spec.d_y),
        prior_mean=np.zeros(spec.d_x),
        gamma0=np.eye(spec.d_x),
        y_dagger=y,
        jacobian=lambda u: darcy_jacobian(spec, u),
        forward_batch=forward_batch,
        name=f"darcy-{spec.d_x}x{spec.d_y}-seed{spec.seed}",
    )
