"""Optimal threshold pairs trading under a mean-reverting spread with stop-loss."""

__version__ = "0.1.0"

from .ou_kernel import BasisEval, KernelConfig, ModelParams, basis_eval, eta, structure_vectors
from .threshold_solver import (
    SolverError,
    ThresholdPolicy,
    VerificationReport,
    recover_coefficients,
    sensitivity_sweep,
    solve_policy,
    solve_x0,
    solve_x1x2,
    verify_policy,
)
from .value_function import PiecewiseValue, eval_v, hjb_residual

__all__ = [
    "BasisEval",
    "KernelConfig",
    "ModelParams",
    "PiecewiseValue",
    "SolverError",
    "ThresholdPolicy",
    "VerificationReport",
    "basis_eval",
    "eta",
    "eval_v",
    "hjb_residual",
    "recover_coefficients",
    "sensitivity_sweep",
    "solve_policy",
    "solve_x0",
    "solve_x1x2",
    "structure_vectors",
    "verify_policy",
]
