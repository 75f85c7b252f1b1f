"""Darcy flow: reduction of a nonlinear PDE-constrained problem.

The log-permeability of a unit-square Darcy problem is expanded in 16 modes
and the pressure is observed at 49 interior points. There is no closed-form
posterior, so the reduced posterior is scored by the squared Hellinger
distance, estimated by importance sampling from MCMC draws of the reduced
posterior. Tempered samples come from ensemble Kalman inversion and gradients
from statistical linearisation, so no adjoint is needed.

Run:  python3 demos/03_darcy_hellinger.py     (a few minutes)
"""

import numpy as np

from alphalis.experiments import run_experiment
from alphalis.problems import DarcySpec, darcy_forward
from alphalis.problems.darcy import grid_for

spec = DarcySpec()
u = np.zeros(spec.d_x)
g = grid_for(spec)
print(f"grid with {g.n - 1}^2 unknowns; peak pressure for u = 0: {darcy_forward(spec, u).max():.4f}")

cfg = {
    "problem": {"type": "darcy"},
    "methods": ["pca", "lis(0)", "lis_acc(0,1)"],
    "sweep_values": [2, 4],
    "sampler": "eki",
    "gradient": "sl",
    "metric": "hellinger",
    "n_samples": 100,
    "n_mcmc": 400,
    "n_inner": 8,
    "alpha_grid": [0.0, 0.5, 1.0],
    "seed": 0,
}
res = run_experiment(cfg)
print("\nsquared Hellinger distance to the full posterior")
print(res.to_csv())
