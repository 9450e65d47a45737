"""Doubly-robust estimation of constrained counterfactual classifiers.

Cross-fitted nuisance estimates turn binary outcomes into pseudo-outcomes
whose cross-entropy risk is minimized over a sigmoid score under smooth
inequality constraints; KKT-based asymptotics give confidence intervals.
"""

__version__ = "0.1.0"

from .data import Dataset, FoldAssignment, load_dataset, split_folds
from .estimator import CounterfactualClassifier
from .exceptions import (
    CfclassError,
    ConvergenceError,
    DataParseError,
    DegenerateFoldError,
    InferenceError,
    SchemaError,
    SeparationError,
)
from .inference import InferenceReport, confidence_intervals, infer, kkt_matrix, solution_covariance
from .influence import PseudoOutcomes, dr_functional, pseudo_outcome, pseudo_outcomes
from .learners import LearnerSpec
from .metrics import accuracy, roc_auc, roc_curve
from .nuisance import NuisanceFit, fit_nuisances, predict_mu, predict_pi
from .optimizer import LinearConstraint, NormBall, Program, Solution, SolverOptions, solve
from .risk import BasisSpec, dr_risk, expand_basis, plugin_risk, risk_gradient, risk_hessian, sigmoid

__all__ = [
    "BasisSpec",
    "CfclassError",
    "ConvergenceError",
    "CounterfactualClassifier",
    "DataParseError",
    "Dataset",
    "DegenerateFoldError",
    "FoldAssignment",
    "InferenceError",
    "InferenceReport",
    "LearnerSpec",
    "LinearConstraint",
    "NormBall",
    "NuisanceFit",
    "Program",
    "PseudoOutcomes",
    "SchemaError",
    "SeparationError",
    "Solution",
    "SolverOptions",
    "accuracy",
    "confidence_intervals",
    "dr_functional",
    "dr_risk",
    "expand_basis",
    "fit_nuisances",
    "infer",
    "kkt_matrix",
    "load_dataset",
    "plugin_risk",
    "predict_mu",
    "predict_pi",
    "pseudo_outcome",
    "pseudo_outcomes",
    "risk_gradient",
    "risk_hessian",
    "roc_auc",
    "roc_curve",
    "sigmoid",
    "solution_covariance",
    "solve",
    "split_folds",
]
