"""Benchmark inverse problems."""

from .darcy import DarcySpec, darcy_forward, darcy_jacobian, kl_modes, make_darcy_problem, observation_points
from .linear import (
    GaussianPosterior,
    LinearProblemSpec,
    linear_posterior,
    linear_reduced_posterior,
    linear_tempered_posterior,
    linexp_forward,
    linexp_jacobian,
    make_linear_problem,
    make_linexp_problem,
)
from .lorenz import (
    LorenzSpec,
    lorenz96_forward,
    lorenz_estimate_gamma,
    lorenz_true_forcing,
    make_lorenz_problem,
)

__all__ = [
    "DarcySpec", "GaussianPosterior", "LinearProblemSpec", "LorenzSpec",
    "darcy_forward", "darcy_jacobian", "kl_modes", "linear_posterior", "linear_reduced_posterior",
    "linear_tempered_posterior", "linexp_forward", "linexp_jacobian", "lorenz96_forward",
    "lorenz_estimate_gamma", "lorenz_true_forcing", "make_darcy_problem", "make_linear_problem",
    "make_linexp_problem", "make_lorenz_problem", "observation_points",
]
