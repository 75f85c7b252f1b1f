"""Tempered likelihood-informed dimension reduction for Bayesian inverse problems.

Input and output subspaces are built from samples of tempered posteriors
``prior * likelihood^alpha``; the package also provides tempered ensemble
sampling, output-subspace optimisers, benchmark problems, posterior distances
and a calibrate-emulate-sample pipeline.
"""

from .bip_core import (
    GaussianConditional,
    InverseProblem,
    ReducedSpace,
    WhitenTransform,
    evaluate,
    gaussian_conditional,
    log_likelihood,
    log_prior,
    reconstruct_full_samples,
    reduced_log_likelihood,
    reduced_log_posterior,
    tempered_log_density,
    unwhiten_basis,
    whiten_problem,
)
from .emulator_ces import CesConfig, CesResult, RffModel, ces_run, rff_fit, rff_predict
from .metrics import DistanceReport, hellinger2_gaussian, hellinger2_snis, w2_gaussian_sq
from .output_opt import (
    ObjectiveContext,
    ScfState,
    grad_J,
    objective_J,
    optimize_full,
    optimize_incremental,
    optimize_nepv,
    output_basis_alpha0,
    scf_step,
)
from .reduction import (
    DiagnosticMatrix,
    GradientProvider,
    accumulate_h,
    estimate_h_alpha,
    input_basis,
    pca_basis,
    statistical_linearization,
)
from .samplers import McmcChain, TemperedEnsemble, eki_update, run_tempered_eki, rwm_sample

__version__ = "0.1.0"
