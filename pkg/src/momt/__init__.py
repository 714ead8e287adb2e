"""Entropy-regularized multi-marginal mass transport with measured marginals.

Solvers for transport problems whose marginals are observed only through
linear measurements such as sensor-array covariance matrices, with
structure-exploiting tensor projections, linear-system transport costs,
and an application layer for spatial spectral estimation (tracking,
sensor fusion, barycenter tracking).
"""

from .dynamics import (LinearSystem, controllability_gramian, interpolate_plan,
                       lq_cost, optimal_trajectory, push_forward_matrix,
                       state_transition, static_system)
from .graphs import (CentralGraph, ScalingState, SequentialGraph, StarChainGraph,
                     unit_scaling)
from .grids import Grid, grid_1d
from .kernels import (KernelOperator, build_kernel, kernel_apply,
                      squared_distance_cost)
from .partial_info import (MeasurementConstraint, block_jacobian, block_residual,
                           dual_objective, newton_block_update, recover_perturbations,
                           solution_marginals, solve, wright_omega_update)
from .peaks import associate_tracks, peak_extract
from .projections import brute_force_project, project_marginal, project_pair
from .sinkhorn import (SolveReport, bimarginal_plan, entropy, factored_entropy,
                       sinkhorn_bimarginal, sinkhorn_multimarginal, transport_cost)
from .spectral import (CovarianceMeasurement, SensorArray, gamma_matrix,
                       mvdr_spectrum, sample_covariance, simulate_snapshots,
                       stack_hermitian, steering_vector, ula, unstack_hermitian)

__version__ = "0.1.0"

__all__ = [
    "CentralGraph", "CovarianceMeasurement", "Grid", "KernelOperator",
    "LinearSystem", "MeasurementConstraint", "ScalingState", "SensorArray",
    "SequentialGraph", "SolveReport", "StarChainGraph", "associate_tracks",
    "bimarginal_plan", "block_jacobian", "block_residual", "brute_force_project",
    "build_kernel", "controllability_gramian", "dual_objective", "entropy",
    "factored_entropy", "gamma_matrix", "grid_1d", "interpolate_plan",
    "kernel_apply", "lq_cost", "mvdr_spectrum", "newton_block_update",
    "optimal_trajectory", "peak_extract", "project_marginal", "project_pair",
    "push_forward_matrix", "recover_perturbations", "sample_covariance",
    "simulate_snapshots", "sinkhorn_bimarginal", "sinkhorn_multimarginal",
    "solution_marginals", "solve", "squared_distance_cost", "stack_hermitian",
    "state_transition", "static_system", "steering_vector", "transport_cost",
    "ula", "unit_scaling", "unstack_hermitian",
]
