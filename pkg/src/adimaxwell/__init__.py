"""
Alternating-direction implicit time stepping for Maxwell's equations with
tensor-product B-spline discretizations on the unit cube.
"""
from .linalg1d import (BandedFactorization, BandedMatrix, MatrixKind, SingularMatrixError,
                       assemble_1d, combine_mass_plus_scaled_stiffness, factorize, solve_multi_rhs)
from .kron import FactorizationCache, SweepPlan, adi_solve_block, kron_apply, sweep_solve
from .materials import (CoefficientField, MaterialClass, MaterialTable, VoxelGrid, classify,
                        load_voxels, sample_coefficients, synthetic_phantom)
from .maxwell import (EMState, Operators, SchemeConfig, assemble_operators, l2_project, run, step,
                      zero_state)
from .splines import (DomainError, KnotVector, eval_basis, gauss_rule, greville_points,
                      make_open_knot_vector)
from .verify import (ErrorReport, ManufacturedSolution, convergence_study, dense_oracle_step,
                     error_norms, scaling_study, simulate_manufactured)

__version__ = "0.1.0"


def warmup():
    """Compile the numerical kernels ahead of the first time step."""
    from . import _kernels

    _kernels.warmup()
