"""Robust sparse reduced-rank regression.

Multivariate regression with a Huber loss and a combined nuclear-norm /
entrywise-l1 penalty, solved by a consensus ADMM algorithm, plus
cross-validation tuning, a simulation harness and numerical diagnostics.
"""

from .prox import (NumericalError, huber, huber_residual_prox, huber_total,
                   psi, soft_threshold, svd_soft_threshold)
from .solver import (FitResult, Hyperparams, NormalEquations, Problem,
                     ScalingWarning, fit, objective)
from .tuning import CvPlan, CvResult, cross_validate, cv_score, make_folds, tau_from_c
from .simulate import (GeneratedData, Metrics, ScenarioSpec, contaminate,
                       evaluate, gen_coef, gen_design, gen_noise,
                       generate_data, run_scenario)
from .diagnostics import (GrubbsReport, NoiseSpec, gradient_supnorm_experiment,
                          grubbs_screen, loss_gradient, loss_hessian,
                          truncation_bound_experiment)

__version__ = "0.1.0"

__all__ = [
    "NumericalError", "huber", "huber_residual_prox", "huber_total", "psi",
    "soft_threshold", "svd_soft_threshold",
    "FitResult", "Hyperparams", "NormalEquations", "Problem",
    "ScalingWarning", "fit", "objective",
    "CvPlan", "CvResult", "cross_validate", "cv_score", "make_folds",
    "tau_from_c",
    "GeneratedData", "Metrics", "ScenarioSpec", "contaminate", "evaluate",
    "gen_coef", "gen_design", "gen_noise", "generate_data", "run_scenario",
    "GrubbsReport", "NoiseSpec", "gradient_supnorm_experiment",
    "grubbs_screen", "loss_gradient", "loss_hessian",
    "truncation_bound_experiment",
    "__version__",
]
