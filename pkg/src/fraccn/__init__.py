"""Nonuniform L2-1-sigma discretisation of the Caputo derivative and tools around it."""

from .audit import AuditCertificate, audit_table
from .complementary import (PI_A, ComplementaryTable, MonotonicityError, build_complementary,
                            discrete_fractional_integral, identity_residual, verify_p_bound)
from .consistency import (ManufacturedFunction, ecs_check, g_his, g_loc, global_consistency,
                          offset_interpolation_error, truncation_error)
from .fem import (DiscreteSolution, SpatialGrid, SubdiffusionProblem, assemble, l2_error,
                  ritz_projection, solve, stability_bound, step)
from .harness import ExperimentConfig, empirical_orders, expected_order, run_table
from .kernels import (KernelTable, a_coeff, apply_discrete_caputo, b_coeff, bridge_integrals,
                      build_kernel_table, kernel_row)
from .mesh import (MeshError, TimeMesh, check_conditions, graded_mesh, random_admissible_mesh,
                   two_part_mesh, uniform_mesh)
from .special import DomainError, caputo_of_power, log_mittag_leffler, mittag_leffler, omega

__version__ = "0.1.0"

__all__ = [
    "AuditCertificate", "audit_table", "PI_A", "ComplementaryTable", "MonotonicityError",
    "build_complementary", "discrete_fractional_integral", "identity_residual", "verify_p_bound",
    "ManufacturedFunction", "ecs_check", "g_his", "g_loc", "global_consistency",
    "offset_interpolation_error", "truncation_error", "DiscreteSolution", "SpatialGrid",
    "SubdiffusionProblem", "assemble", "l2_error", "ritz_projection", "solve", "stability_bound",
    "step", "ExperimentConfig", "empirical_orders", "expected_order", "run_table", "KernelTable",
    "a_coeff", "apply_discrete_caputo", "b_coeff", "bridge_integrals", "build_kernel_table",
    "kernel_row", "MeshError", "TimeMesh", "check_conditions", "graded_mesh",
    "random_admissible_mesh", "two_part_mesh", "uniform_mesh", "DomainError", "caputo_of_power",
    "log_mittag_leffler", "mittag_leffler", "omega",
]
