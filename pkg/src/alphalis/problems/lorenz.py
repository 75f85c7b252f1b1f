"""Lorenz '96 with a spatially varying forcing, observed through window statistics."""

from dataclasses import dataclass

import numpy as np

from ..bip_core import InverseProblem


@dataclass(frozen=True)
class LorenzSpec:
    """Settings of the forcing-inversion problem.

    ``prior`` is ``"informative"`` (``25 exp(-|i-j|)``) or ``"diagonal"`` (``25 I``).
    The initial state is ``F + init_noise * N(0, I)``, relaxed by the spin-up.
    """

    n: int = 40
    t_window: float = 20.0
    spinup: float = 4.0
    dt: float = 0.01
    prior: str = "informative"
    prior_scale: float = 25.0
    prior_level: float = 8.0
    n_reps: int = 200
    nugget: float = 1e-2
    init_noise: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("Lorenz '96 needs at least 4 states")
        if self.prior not in ("informative", "diagonal"):
            raise ValueError(f"unknown prior {self.prior!r}")

    @property
    def d_y(self):
        return 2 * self.n

    def gamma0(self):
        if self.prior == "diagonal":
            return self.prior_scale * np.eye(self.n)
        i = np.arange(self.n)
        return self.prior_scale * np.exp(-np.abs(i[:, None] - i[None, :]))


def lorenz96_rhs(u, f):
    """``du_i/dt = (u_{i+1} - u_{i-2}) u_{i-1} - u_i + F_i`` on axis 0 with cyclic indexing."""
    return (np.roll(u, -1, axis=0) - np.roll(u, 2, axis=0)) * np.roll(u, 1, axis=0) - u + f


def rk4_step(rhs, u, dt):
    k1 = rhs(u)
    k2 = rhs(u + 0.5 * dt * k1)
    k3 = rhs(u + 0.5 * dt * k2)
    k4 = rhs(u + dt * k3)
    return u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def lorenz96_forward(spec, forcing, rng=None, u0=None):
    """Window mean and standard deviation of a Lorenz '96 trajectory.

    ``forcing`` is ``(N,)`` or a batch ``(N, n)``; the result is ``(2N,)`` or
    ``(2N, n)`` stacking the mean over the window and then the std. The window
    covers ``t_window / dt`` states starting at the end of the spin-up.
    Moments are accumulated relative to the first window state, which keeps
    the std exactly zero on an equilibrium.
    """
    f = np.asarray(forcing, dtype=float)
    single = f.ndim == 1
    f = f.reshape(spec.n, -1)
    if u0 is None:
        u = f.copy()
        if spec.init_noise:
            if rng is None:
                raise ValueError("a random initial state needs an rng")
            u = u + spec.init_noise * rng.standard_normal(f.shape)
    else:
        u = np.broadcast_to(np.asarray(u0, dtype=float).reshape(spec.n, -1), f.shape).copy()
    rhs = lambda v: lorenz96_rhs(v, f)
    n_spin = int(round(spec.spinup / spec.dt))
    n_win = int(round(spec.t_window / spec.dt))
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_spin):
            u = rk4_step(rhs, u, spec.dt)
        ref = u.copy()
        s1 = np.zeros_like(u)
        s2 = np.zeros_like(u)
        for _ in range(n_win):
            d = u - ref
            s1 += d
            s2 += d * d
            u = rk4_step(rhs, u, spec.dt)
    if not np.all(np.isfinite(u)) or not np.all(np.isfinite(s2)):
        raise FloatingPointError("Lorenz '96 trajectory blew up")
    m1 = s1 / n_win
    mean = ref + m1
    std = np.sqrt(np.maximum(s2 / n_win - m1 * m1, 0.0))
    out = np.vstack([mean, std])
    return out[:, 0] if single else out


def lorenz_true_forcing(n):
    """``F_i = 8 + 6 sin(4 pi (i - 1) / (N - 1))`` for ``i = 1..N``."""
    if n < 2:
        raise ValueError("need N >= 2")
    i = np.arange(1, n + 1)
    return 8.0 + 6.0 * np.sin(4.0 * np.pi * (i - 1) / (n - 1))


def lorenz_estimate_gamma(spec, forcing, n_reps=None, rng=None, u0=None):
    """Sample covariance of the statistics over random initial states, plus ``nugget * I``."""
    n_reps = spec.n_reps if n_reps is None else n_reps
    if n_reps < 2:
        raise ValueError("need at least two replicates")
    f = np.repeat(np.asarray(forcing, dtype=float).reshape(-1, 1), n_reps, axis=1)
    ys = lorenz96_forward(spec, f, rng, u0=u0)
    cov = np.atleast_2d(np.cov(ys))
    return 0.5 * (cov + cov.T) + spec.nugget * np.eye(spec.d_y)


def make_lorenz_problem(spec):
    """Forcing inversion from one noisy window-statistics observation at the true forcing.

    Evaluations through ``forward_batch`` draw fresh initial states from the
    given rng; the single-point ``forward`` uses a fixed initial-state stream so
    that it is a deterministic function.
    """
    ss = np.random.SeedSequence(spec.seed).spawn(3)
    rng_gamma, rng_obs = np.random.default_rng(ss[0]), np.random.default_rng(ss[1])
    fixed_seed = int(ss[2].generate_state(1)[0])
    f_true = lorenz_true_forcing(spec.n)
    gamma = lorenz_estimate_gamma(spec, f_true, rng=rng_gamma)
    y = lorenz96_forward(spec, f_true, rng_obs)

    def forward(f):
        return lorenz96_forward(spec, f, np.random.default_rng(fixed_seed))

    def forward_batch(fs, rng=None):
        if rng is None:
            return np.column_stack([forward(fs[:, j]) for j in range(fs.shape[1])])
        return lorenz96_forward(spec, fs, rng)

    return InverseProblem(
        forward=forward,
        gamma=gamma,
        prior_mean=np.full(spec.n, spec.prior_level),
        gamma0=spec.gamma0(),
        y_dagger=y,
        forward_batch=forward_batch,
        name=f"lorenz96-{spec.n}-{spec.prior}-seed{spec.seed}",
    )
