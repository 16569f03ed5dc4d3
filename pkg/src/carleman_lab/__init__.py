"""Numerical laboratory for degenerate parabolic control problems.

Builds admissible degenerate diffusion coefficients, certifies their
degeneracy band on grids, constructs the sign-changing Carleman weight
family, solves the forward and backward problems in flux form with an
exactly transposed adjoint, sweeps the weighted observability-type
inequality, and synthesizes approximate null controls by penalized dual
minimization.
"""

from .coefficients import (
    DegeneracyCoefficient,
    HypothesisReport,
    Regime,
    classify,
    coefficient_from_descriptor,
    make_example_coefficient,
    make_power_coefficient,
    make_table_coefficient,
    monotone_ratio_check,
)
from .weights import (
    CarlemanWeights,
    PsiFunction,
    build_psi,
    build_weights,
    default_omega_prime,
    eval_theta_time,
    eval_weight,
)
from .pde_solver import (
    BoundaryRegime,
    LeftBoundary,
    Mesh,
    ProblemSpec,
    Scheme,
    Trajectory,
    assemble_diffusion,
    boundary_regime_for,
    build_mesh,
    energy_report,
    solve_adjoint,
    solve_forward,
)
from .functionals import (
    HardyCase,
    HardyReport,
    Region,
    WeightedNorms,
    aux_hardy_b,
    aux_hardy_p,
    hardy_ratio,
    spacetime_weighted_integral,
    weighted_norm,
)
from .carleman import (
    CarlemanParams,
    CarlemanReport,
    boundary_sign_term,
    carleman_sides,
    carleman_sweep,
    identity_residual,
    observability_ratio,
    stable_s0,
    standard_identity_fields,
    transform_to_w,
)
from .control import (
    ControlResult,
    dual_functional,
    dual_gradient,
    synthesize_null_control,
    verify_control,
)

__version__ = "0.1.0"
