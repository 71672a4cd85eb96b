"""Variance-reduced proximal gradient for constrained stochastic optimization,
with Monte Carlo harnesses for its instance-dependent guarantees."""

from ._backend import BACKEND, has_kernels
from .algorithm import VrpgPlan, VrpgTrace, derive_plan, recentered_gradient, run_vrpg
from .baselines import SgdPlan, run_projected_sgd_pr, solve_deterministic, solve_m_estimator
from .benchmark import BenchmarkEstimate, check_asymptotic_limit, estimate_delta_sq, solve_tilted
from .instances import (
    KktCertificate,
    QuadraticGaussianInstance,
    RandomCurvatureInstance,
    canonical_instance,
    compute_kkt,
    make_quadratic_instance,
    quadratic_from_spectrum,
    solve_population,
    validate_assumptions,
)
from .prox import L1, Ball2, Box, Halfspaces, Orthant, Simplex, Zero, check_prox_descent
from .verify import (
    ClaimReport,
    compare_schedules,
    verify_epoch_contraction,
    verify_solution_lipschitz,
    verify_theorem,
)

__version__ = "0.1.0"
