"""Output-subspace objective and its minimisers.

The objective over orthonormal ``V`` (``d_y x s``) is

    J(V) = sum_j Tr[dG_j^T P M_j P dG_j],   P = gamma^{-1} - V (V^T gamma V)^{-1} V^T,

with ``M_j = a_j gamma + b_j r_j r_j^T``. For a single temperature alpha and
uniform weights ``w_j``, ``a_j = w_j (1 - alpha)`` and ``b_j = w_j alpha^2``;
accumulated objectives simply concatenate samples with rescaled weights. Since
``P gamma P = P``, the objective reduces to

    J(V) = Tr[P Cbar_a] + sum_j b_j ||dG_j^T P r_j||^2,   Cbar_a = sum_j a_j dG_j dG_j^T,

which is what is evaluated here; no per-sample ``d_y x d_y`` matrices are formed.
"""

from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
import scipy.linalg as la

from ._linalg import complement, qr_positive, sorted_eigh, symmetrize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObjectiveContext:
    """Sample-based data behind the output objective.

    Attributes
    ----------
    grads : (n_g, d_y, d_x) ndarray
        Distinct gradients; ``n_g`` is 1 for a shared (linear or SL) gradient.
    grad_index : (n,) int ndarray
        Row of ``grads`` used by each sample.
    residuals : (d_y, n) ndarray
        ``y_dagger - G(x_j)``.
    gamma : (d_y, d_y) ndarray
    coef_gamma, coef_resid : (n,) ndarray
        ``a_j`` and ``b_j`` above (weights folded in).
    weights : (n,) ndarray
        Sample weights, summing to one.
    """

    grads: np.ndarray
    grad_index: np.ndarray
    residuals: np.ndarray
    gamma: np.ndarray
    coef_gamma: np.ndarray
    coef_resid: np.ndarray
    weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def build(cls, grads, residuals, gamma, alpha, weights=None):
        """Context for one temperature.

        ``grads`` is either one ``(d_y, d_x)`` matrix shared by all samples or a
        ``(n, d_y, d_x)`` stack of per-sample gradients.
        """
        residuals = np.asarray(residuals, dtype=float)
        n = residuals.shape[1]
        grads = np.asarray(grads, dtype=float)
        if grads.ndim == 2:
            grads = grads[None]
            index = np.zeros(n, dtype=int)
        else:
            if grads.shape[0] == 1:
                index = np.zeros(n, dtype=int)
            elif grads.shape[0] == n:
                index = np.arange(n)
            else:
                raise ValueError("need one gradient per sample or one shared gradient")
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
        if not np.isclose(w.sum(), 1.0):
            raise ValueError("weights must sum to one")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        return cls(grads, index, residuals, np.asarray(gamma, dtype=float),
                   w * (1.0 - alpha), w * alpha**2, w)

    @classmethod
    def combine(cls, contexts, weights=None):
        """Weighted sum of objectives, e.g. a quadrature over temperatures."""
        contexts = list(contexts)
        qw = np.full(len(contexts), 1.0 / len(contexts)) if weights is None else np.asarray(weights, float)
        qw = qw / qw.sum()
        grads, index, res, a, b, w = [], [], [], [], [], []
        offset = 0
        for c, q in zip(contexts, qw):
            grads.append(c.grads)
            index.append(c.grad_index + offset)
            offset += c.grads.shape[0]
            res.append(c.residuals)
            a.append(q * c.coef_gamma)
            b.append(q * c.coef_resid)
            w.append(q * c.weights)
        return cls(np.concatenate(grads), np.concatenate(index), np.hstack(res), contexts[0].gamma,
                   np.concatenate(a), np.concatenate(b), np.concatenate(w))

    @property
    def d_y(self):
        return self.gamma.shape[0]

    @property
    def n_samples(self):
        return self.residuals.shape[1]

    # cached pieces --------------------------------------------------------
    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def gamma_inv(self):
        return self._get("gamma_inv", lambda: symmetrize(la.inv(self.gamma)))

    @property
    def is_identity_noise(self):
        return self._get("ident", lambda: bool(np.allclose(self.gamma, np.eye(self.d_y), atol=1e-14)))

    @property
    def per_sample(self):
        return self.grads.shape[0] == self.n_samples and np.array_equal(self.grad_index, np.arange(self.n_samples))

    def _group_sum(self, c):
        return np.bincount(self.grad_index, weights=c, minlength=self.grads.shape[0])

    def weighted_c(self, c):
        """``sum_j c_j dG_j dG_j^T``."""
        s = self._group_sum(c)
        return symmetrize(np.einsum("g,gia,gka->ik", s, self.grads, self.grads))

    @property
    def c_bar(self):
        """``sum_j w_j dG_j dG_j^T`` (the alpha = 0 output diagnostic when gamma = I)."""
        return self._get("c_bar", lambda: self.weighted_c(self.weights))

    @property
    def c_bar_a(self):
        return self._get("c_bar_a", lambda: self.weighted_c(self.coef_gamma))

    @property
    def c_mats(self):
        """Per-sample ``dG_j dG_j^T`` as an ``(n, d_y, d_y)`` stack (memory heavy)."""
        g = self.grads[self.grad_index]
        return np.einsum("jia,jka->jik", g, g)

    @property
    def residual_outer(self):
        """Per-sample unweighted ``M_j`` for a single-temperature context."""
        a = np.divide(self.coef_gamma, self.weights)
        b = np.divide(self.coef_resid, self.weights)
        r = self.residuals
        return a[:, None, None] * self.gamma + b[:, None, None] * np.einsum("ij,kj->jik", r, r)

    @property
    def a0_bar(self):
        """``sum_j w_j Sym(C_j M_j)``."""
        return self._get("a0_bar", lambda: self.a_matrix(np.zeros((self.d_y, 0)), projector=np.eye(self.d_y)))

    def grads_t_apply(self, y):
        """``dG_{g(j)}^T y_j`` for each column ``y_j`` -> ``(d_x, n)``."""
        if self.grads.shape[0] == 1:
            return self.grads[0].T @ y
        if self.per_sample:
            return np.einsum("jia,ij->aj", self.grads, y)
        out = np.empty((self.grads.shape[2], y.shape[1]))
        for g in range(self.grads.shape[0]):
            m = self.grad_index == g
            out[:, m] = self.grads[g].T @ y[:, m]
        return out

    def grads_apply(self, t):
        """``dG_{g(j)} t_j`` for each column ``t_j`` -> ``(d_y, n)``."""
        if self.grads.shape[0] == 1:
            return self.grads[0] @ t
        if self.per_sample:
            return np.einsum("jia,aj->ij", self.grads, t)
        out = np.empty((self.grads.shape[1], t.shape[1]))
        for g in range(self.grads.shape[0]):
            m = self.grad_index == g
            out[:, m] = self.grads[g] @ t[:, m]
        return out

    # projector and objective pieces ----------------------------------------
    def projector(self, v):
        """``P = gamma^{-1} - V (V^T gamma V)^{-1} V^T``."""
        if v.shape[1] == 0:
            return self.gamma_inv.copy()
        a_s = v.T @ self.gamma @ v
        try:
            sol = la.solve(a_s, v.T, assume_a="pos")
        except la.LinAlgError as exc:
            raise ValueError("V^T gamma V is singular") from exc
        return symmetrize(self.gamma_inv - v @ sol)

    @property
    def grouped(self):
        """Use per-gradient residual moments instead of per-sample terms."""
        return self.grads.shape[0] < self.n_samples

    @property
    def group_c(self):
        """``dG_g dG_g^T`` for each distinct gradient."""
        return self._get("group_c", lambda: np.einsum("gia,gka->gik", self.grads, self.grads))

    @property
    def group_rb(self):
        """``sum_{j in g} b_j r_j r_j^T`` for each distinct gradient."""
        def build():
            out = np.zeros((self.grads.shape[0], self.d_y, self.d_y))
            for g in range(self.grads.shape[0]):
                m = self.grad_index == g
                r = self.residuals[:, m]
                out[g] = (r * self.coef_resid[m]) @ r.T
            return out
        return self._get("group_rb", build)

    def resid_value(self, proj):
        """``sum_j b_j ||dG_j^T P r_j||^2``."""
        if not np.any(self.coef_resid):
            return 0.0
        if self.grouped:
            m = proj @ self.group_rb @ proj
            return float(np.sum(m * self.group_c))
        t = self.grads_t_apply(proj @ self.residuals)
        return float(np.sum(t**2 * self.coef_resid))

    def z_matrix(self, proj):
        """``sum_j C_j P M_j``."""
        z = self.c_bar_a @ proj @ self.gamma
        if np.any(self.coef_resid):
            if self.grouped:
                z = z + np.sum(self.group_c @ proj @ self.group_rb, axis=0)
            else:
                pr = proj @ self.residuals
                q = self.grads_apply(self.grads_t_apply(pr))
                z = z + (q * self.coef_resid) @ self.residuals.T
        return z

    def a_matrix(self, v, projector=None):
        """``A(V) = sum_j w_j Sym(C_j P M_j)``."""
        proj = self.projector(v) if projector is None else projector
        return symmetrize(self.z_matrix(proj))

    def b_bar(self, v):
        """``-1/2 sum_j w_j [(v^T M_j v) C_j + (v^T C_j v) M_j]``."""
        v = np.asarray(v, dtype=float).reshape(-1)
        rv = self.residuals.T @ v
        vgv = v @ self.gamma @ v
        coef_c = self.coef_gamma * vgv + self.coef_resid * rv**2
        gtv = self.grads.transpose(0, 2, 1) @ v  # (n_g, d_x)
        e = (gtv**2).sum(axis=1)[self.grad_index]
        term_m = (self.coef_gamma * e).sum() * self.gamma + (self.residuals * (self.coef_resid * e)) @ self.residuals.T
        return -0.5 * symmetrize(self.weighted_c(coef_c) + term_m)


def _check_basis(ctx, v_s):
    v_s = np.asarray(v_s, dtype=float)
    if v_s.ndim != 2 or v_s.shape[0] != ctx.d_y or v_s.shape[1] > ctx.d_y:
        raise ValueError(f"basis must be (d_y, s) with s <= d_y, got {v_s.shape}")
    return v_s


def objective_J(ctx, v_s):
    """Output-reduction objective ``J(V_s)``; depends only on ``Col(V_s)``."""
    v_s = _check_basis(ctx, v_s)
    if v_s.shape[1] == ctx.d_y:
        return 0.0
    proj = ctx.projector(v_s)
    return float(np.sum(proj * ctx.c_bar_a)) + ctx.resid_value(proj)


def grad_J(ctx, v_s):
    """Euclidean and Riemannian (Grassmann) gradients of :func:`objective_J`.

    euclidean = -4 gamma P Sym(Z) V (V^T gamma V)^{-1} with Z = sum_j C_j P M_j;
    riemannian = (I - V V^T) euclidean.
    """
    v_s = _check_basis(ctx, v_s)
    if v_s.shape[1] == ctx.d_y:
        z = np.zeros_like(v_s)
        return z, z.copy()
    proj = ctx.projector(v_s)
    zs = symmetrize(ctx.z_matrix(proj))
    a_s = v_s.T @ ctx.gamma @ v_s
    right = la.solve(a_s, (zs @ v_s).T, assume_a="pos").T
    eucl = -4.0 * ctx.gamma @ (proj @ right)
    riem = eucl - v_s @ (v_s.T @ eucl)
    return eucl, riem


def output_basis_alpha0(ctx, s):
    """Top-``s`` eigenvectors of ``sum_j w_j dG_j dG_j^T`` (closed form at alpha = 0, gamma = I)."""
    if s > ctx.d_y or s < 0:
        raise ValueError(f"s={s} exceeds d_y={ctx.d_y}")
    _, q = sorted_eigh(ctx.c_bar)
    return q[:, :s]


@dataclass
class OptInfo:
    iterations: int = 0
    converged: bool = False
    status: str = ""
    values: list = field(default_factory=list)
    stages: list = field(default_factory=list)


def _armijo(f, x, fx, direction_sq, step0, retract, grad, c=1e-4, max_halvings=60):
    t = step0
    for _ in range(max_halvings + 1):
        cand = retract(x, -t * grad)
        fc = f(cand)
        if fc <= fx - c * t * direction_sq:
            return cand, fc, t
        t *= 0.5
    return None, fx, 0.0


def _bb_step(s_vec, y_vec, fallback):
    sy = abs(float(np.sum(s_vec * y_vec)))
    if sy <= 0:
        return fallback
    return float(np.sum(s_vec * s_vec)) / sy


def _retract_grassmann(v, step):
    return qr_positive(v + step)


def optimize_full(ctx, s, init=None, tol=None, max_iters=2000, full_output=False):
    """Riemannian gradient descent on the Grassmannian for ``min J(V_s)``.

    Armijo backtracking (c = 1e-4, halving, at most 60 halvings) with a
    Barzilai-Borwein trial step and QR retraction. Without ``init`` the
    alpha = 0 closed-form basis is used.
    """
    if s == ctx.d_y:
        v = np.eye(ctx.d_y) if init is None else np.asarray(init, float)
        info = OptInfo(0, True, "full dimension", [0.0])
        return (v, info) if full_output else v
    if init is None:
        init = output_basis_alpha0(ctx, s) if ctx.is_identity_noise else _default_init(ctx, s)
    v = qr_positive(np.asarray(init, dtype=float))
    f = lambda vv: objective_J(ctx, vv)
    fv = f(v)
    tol = 1e-8 * max(1.0, fv) if tol is None else tol
    info = OptInfo(values=[fv])
    _, g = grad_J(ctx, v)
    step = 1.0 / max(np.linalg.norm(g), 1e-300)
    for k in range(max_iters):
        gn2 = float(np.sum(g * g))
        if np.sqrt(gn2) < tol:
            info.converged, info.status = True, "gradient tolerance"
            break
        new, fnew, t = _armijo(f, v, fv, gn2, step, _retract_grassmann, g)
        if new is None:
            info.status = "line search failed"
            warnings.warn("optimize_full: line search failed, returning best iterate", RuntimeWarning)
            break
        _, gnew = grad_J(ctx, new)
        step = _bb_step(-t * g, gnew - g, 2 * t)
        v, fv, g = new, fnew, gnew
        info.values.append(fv)
        info.iterations = k + 1
    else:
        info.status = "max iterations"
    return (v, info) if full_output else v


def _default_init(ctx, s):
    _, q = sorted_eigh(ctx.a_matrix(np.zeros((ctx.d_y, 0))))
    return q[:, :s]


def _stage_objective(ctx, v_prev, vperp):
    def f(u):
        return objective_J(ctx, np.column_stack([v_prev, vperp @ u]))

    def g(u):
        v = np.column_stack([v_prev, vperp @ u])
        eucl, _ = grad_J(ctx, v)
        gu = vperp.T @ eucl[:, -1]
        return gu - u * (u @ gu)

    return f, g


def _sphere_descent(f, g, u0, tol=None, max_iters=2000):
    u = u0 / np.linalg.norm(u0)
    fu = f(u)
    tol = 1e-8 * max(1.0, fu) if tol is None else tol
    gr = g(u)
    step = 1.0 / max(np.linalg.norm(gr), 1e-300)
    retract = lambda x, d: (x + d) / np.linalg.norm(x + d)
    it, converged, status = 0, False, "max iterations"
    for it in range(1, max_iters + 1):
        gn2 = float(gr @ gr)
        if np.sqrt(gn2) < tol:
            converged, status = True, "gradient tolerance"
            it -= 1
            break
        new, fnew, t = _armijo(f, u, fu, gn2, step, retract, gr)
        if new is None:
            status = "line search failed"
            break
        gnew = g(new)
        step = _bb_step(-t * gr, gnew - gr, 2 * t)
        u, fu, gr = new, fnew, gnew
    return u, fu, it, converged, status


def _incremental_stage(ctx, v_prev, rng=None, n_candidates=5):
    vperp = complement(v_prev)
    f, g = _stage_objective(ctx, v_prev, vperp)
    if vperp.shape[1] == 1:
        u = np.ones(1)
        return u, vperp, f(u), 0, True, "one-dimensional complement"
    if rng is not None:
        u0 = rng.standard_normal(vperp.shape[1])
    else:
        _, q = sorted_eigh(vperp.T @ ctx.a_matrix(v_prev) @ vperp)
        cands = [q[:, i] for i in range(min(n_candidates, q.shape[1]))]
        u0 = min(cands, key=f)
    u, fu, it, conv, status = _sphere_descent(f, g, u0)
    return u, vperp, fu, it, conv, status


def optimize_incremental(ctx, s_max, rng=None, full_output=False):
    """Greedy nested basis: each stage adds the unit vector in the current
    complement that minimises ``J``, found by Riemannian descent on the sphere.

    With ``rng`` the stages start from random vectors; otherwise from the best
    of the leading eigenvectors of the stage matrix ``V_perp^T A(V_prev) V_perp``.
    """
    if s_max > ctx.d_y or s_max < 0:
        raise ValueError(f"s_max={s_max} exceeds d_y={ctx.d_y}")
    v = np.zeros((ctx.d_y, 0))
    info = OptInfo(converged=True)
    for s in range(1, s_max + 1):
        u, vperp, fu, it, conv, status = _incremental_stage(ctx, v, rng)
        v = np.column_stack([v, vperp @ u])
        info.values.append(fu)
        info.iterations += it
        info.converged &= conv
        info.stages.append({"stage": s, "iterations": it, "converged": conv, "status": status})
    return (v, info) if full_output else v


# NEPv / self-consistent field ------------------------------------------------

ETA0 = 0.8
ETA_MAX_FLOOR = 0.01
PERTURB_WINDOW = 20
RESET_WINDOW = 40
STAGNATION_SLACK = 1e-4


@dataclass
class ScfState:
    """Smoothed matrix ``b``, step ``eta`` and the bookkeeping of the adaptive schedule.

    ``eps_history[i]`` holds epsilon at iteration ``i + 1``.
    """

    b: np.ndarray
    eta: float = ETA0
    eta_max: float = ETA0
    eps_history: list = field(default_factory=list)
    iters_since_perturbation: int = 0
    iters_since_reset: int = 0
    k: int = 0
    last_event: str = ""


def _candidate_values(ctx, a_prev, cands):
    """Stage objective (up to a constant) for unit candidates orthogonal to V_prev, gamma = I."""
    quad_a = np.einsum("ic,ik,kc->c", cands, a_prev, cands)
    rv = ctx.residuals.T @ cands  # (n, c)
    vmv = ctx.coef_gamma[:, None] * (cands**2).sum(axis=0)[None, :] + ctx.coef_resid[:, None] * rv**2
    gtv = np.einsum("gia,ic->gac", ctx.grads, cands)
    vcv = (gtv**2).sum(axis=1)[ctx.grad_index]  # (n, c)
    return -2.0 * quad_a + (vmv * vcv).sum(axis=0)


def _stationary_ratio_improving(eps_hist):
    if len(eps_hist) < 2:
        return True
    prev = eps_hist[-2]
    return prev == 0 or eps_hist[-1] / prev <= 1.01


def scf_step(ctx, v_prev, state, rng, vperp=None, stage_matrix=None):
    """One smoothed SCF iteration for the next greedy output direction (gamma = I).

    Solves the linear eigenproblem of ``V_perp^T (A(V_prev) + B) V_perp``, keeps
    the eigenvector with the lowest stage objective, records
    ``eps = ||B - Bbar(V_perp u)||_F`` and updates ``eta``/``eta_max`` and ``B``
    with the adaptive growth/shrink, perturbation and reset rules.
    Returns the candidate ``u`` and the updated state (mutated in place).
    """
    if vperp is None:
        vperp = complement(v_prev)
    if stage_matrix is None:
        stage_matrix = ctx.a_matrix(v_prev)
    m = vperp.T @ (stage_matrix + state.b) @ vperp
    try:
        _, q = la.eigh(symmetrize(m))
    except la.LinAlgError as exc:
        raise RuntimeError("SCF eigensolver failed") from exc
    vals = _candidate_values(ctx, stage_matrix, vperp @ q)
    u = q[:, int(np.argmin(vals))]
    b_new = ctx.b_bar(vperp @ u)
    eps = float(np.linalg.norm(state.b - b_new))
    state.k += 1
    state.eps_history.append(eps)
    state.iters_since_perturbation += 1
    state.iters_since_reset += 1
    k = state.k

    hist = state.eps_history
    # index (1-based iteration) of the best eps since the last reset
    since = hist[len(hist) - state.iters_since_reset:]
    best_k = k - state.iters_since_reset + 1 + int(np.argmin(since))
    reset = state.iters_since_reset > RESET_WINDOW and k - RESET_WINDOW > best_k
    perturb = False
    if not reset and min(state.iters_since_perturbation, state.iters_since_reset) > PERTURB_WINDOW \
            and len(hist) > PERTURB_WINDOW + 1:
        window = np.asarray(hist[-(PERTURB_WINDOW + 2):])
        perturb = bool(np.all(window[1:] >= window[:-1] - STAGNATION_SLACK))

    if reset:
        state.eta = 1.0
        state.eta_max = max(ETA_MAX_FLOOR, 0.8 * state.eta_max)
        state.iters_since_reset = 0
        state.iters_since_perturbation = 0
        u = rng.standard_normal(vperp.shape[1])
        u /= np.linalg.norm(u)
        b_new = ctx.b_bar(vperp @ u)
        state.last_event = "reset"
    elif perturb:
        state.eta = 1.0
        state.iters_since_perturbation = 0
        state.last_event = "perturbation"
    elif _stationary_ratio_improving(hist):
        state.eta = min(state.eta_max, 1.1 * state.eta)
        state.last_event = "grow"
    else:
        state.eta = 0.5 * state.eta
        state.last_event = "shrink"
    state.b = (1.0 - state.eta) * state.b + state.eta * b_new
    return u, state


def scf_stage(ctx, v_prev, rng, tol=1e-4, max_iters=2000):
    """Run SCF for one greedy stage. Returns ``(u, vperp, converged, state)``."""
    if not ctx.is_identity_noise:
        raise ValueError("the SCF iteration assumes whitened outputs (gamma = I)")
    vperp = complement(v_prev)
    if vperp.shape[1] == 1:
        return np.ones(1), vperp, True, ScfState(b=np.zeros((ctx.d_y, ctx.d_y)))
    stage_matrix = ctx.a_matrix(v_prev)
    u = rng.standard_normal(vperp.shape[1])
    u /= np.linalg.norm(u)
    state = ScfState(b=ctx.b_bar(vperp @ u))
    for _ in range(max_iters):
        u, state = scf_step(ctx, v_prev, state, rng, vperp, stage_matrix)
        if state.eps_history[-1] < tol:
            return u, vperp, True, state
    return u, vperp, False, state


def optimize_nepv(ctx, s_max, rng, tol=1e-4, max_iters=2000, full_output=False):
    """Nested output basis from the SCF iteration, stage by stage.

    A stage that does not reach ``eps < tol`` within ``max_iters`` iterations
    falls back to the sphere descent of :func:`optimize_incremental`.
    """
    if s_max > ctx.d_y or s_max < 0:
        raise ValueError(f"s_max={s_max} exceeds d_y={ctx.d_y}")
    rng = np.random.default_rng(rng)
    v = np.zeros((ctx.d_y, 0))
    info = OptInfo(converged=True)
    for s in range(1, s_max + 1):
        u, vperp, conv, state = scf_stage(ctx, v, rng, tol, max_iters)
        entry = {"stage": s, "iterations": state.k, "converged": conv, "fallback": False,
                 "eps_history": list(state.eps_history)}
        if not conv:
            u, vperp, _, it, _, status = _incremental_stage(ctx, v)
            entry["fallback"] = True
            entry["fallback_iterations"] = it
            log.info("SCF stage %d did not converge; used sphere descent (%s)", s, status)
        v = np.column_stack([v, vperp @ u])
        info.iterations += state.k
        info.values.append(objective_J(ctx, v))
        info.stages.append(entry)
    info.converged = all(e["converged"] for e in info.stages)
    return (v, info) if full_output else v
