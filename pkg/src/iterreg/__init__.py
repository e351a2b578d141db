"""Matrix-free iterative regularization with incrementally updated spectral
preconditioners.

The package solves ill-posed operator equations F(x) = y from noisy data by
regularized Newton methods (iteratively regularized Gauss-Newton and
Levenberg-Marquardt variants) whose inner Tikhonov systems are handled by
preconditioned conjugate gradients. Lanczos data generated as a by-product of
accurate CG solves yields approximate eigenpairs of the Gauss-Newton
operator; these are frozen into a spectral preconditioner that is cheaply
updated across Newton steps while the regularization weight decays. Stopping
is data driven: Morozov's discrepancy principle and a balancing (Lepskii-type)
rule fed by estimated noise-propagation curves. Landweber iteration and a
truncated Newton-CG method serve as baselines, and dense brute-force oracles
over small instances back every matrix-free claim in the test suite.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .krylov import (CgBreakdownError, CgConfig, CgTrace, RitzPair,
                     Tridiagonal, pcg_solve, reorthogonalize_basis,
                     ritz_from_trace, select_ritz)
from .operators import (IRGNM, LEVENBERG_MARQUARDT, ContractError,
                        ForwardModel, JacobianHandle, ModelCost,
                        TikhonovSystem, adjoint_mismatch, build_rhs,
                        jacobian_fd_order, stacked_adjoint_apply,
                        stacked_apply)
from .preconditioner import (SpectralPreconditioner, SpectrumReport,
                             TwoSidedSystem, merge_pairs,
                             preconditioned_spectrum_check, ritz_to_eigenpair)
from .solvers import (NewtonConfig, RunHistory, RunRecord, irgnm_run,
                      landweber_run, must_update, newton_cg_run,
                      schedule_gamma, should_recompute)
from .stopping import (DeterministicPhi, DiscrepancyDriver, FixedIndexDriver,
                       NoiseSpec, PhiBudgetDriver, PhiSeries, SampledPhi,
                       WhiteNoisePhi, apply_R_app, discrepancy_stop,
                       k_max_from_bound, lepskii_from_history, lepskii_select,
                       phi_deterministic, phi_sampled, phi_white_noise)
from .testbed import (DenseOracle, OracleRefusal, Problem, generate_noise,
                      make_convolution_problem, make_diagonal_problem,
                      make_nonlinear_composite, noise_sigma_for_level)

__all__ = [
    "__version__",
    # operators
    "ContractError", "ForwardModel", "JacobianHandle", "ModelCost",
    "TikhonovSystem", "IRGNM", "LEVENBERG_MARQUARDT", "adjoint_mismatch",
    "build_rhs", "jacobian_fd_order", "stacked_apply",
    "stacked_adjoint_apply",
    # krylov
    "CgBreakdownError", "CgConfig", "CgTrace", "RitzPair", "Tridiagonal",
    "pcg_solve", "reorthogonalize_basis", "ritz_from_trace", "select_ritz",
    # preconditioner
    "SpectralPreconditioner", "SpectrumReport", "TwoSidedSystem",
    "merge_pairs", "preconditioned_spectrum_check", "ritz_to_eigenpair",
    # solvers
    "NewtonConfig", "RunHistory", "RunRecord", "irgnm_run", "landweber_run",
    "must_update", "newton_cg_run", "schedule_gamma", "should_recompute",
    # stopping
    "DeterministicPhi", "DiscrepancyDriver", "FixedIndexDriver", "NoiseSpec",
    "PhiBudgetDriver", "PhiSeries", "SampledPhi", "WhiteNoisePhi",
    "apply_R_app", "discrepancy_stop", "k_max_from_bound",
    "lepskii_from_history", "lepskii_select", "phi_deterministic",
    "phi_sampled", "phi_white_noise",
    # testbed
    "DenseOracle", "OracleRefusal", "Problem", "generate_noise",
    "make_convolution_problem", "make_diagonal_problem",
    "make_nonlinear_composite", "noise_sigma_for_level",
]
