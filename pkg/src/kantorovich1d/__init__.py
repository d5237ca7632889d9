"""Analytic approximate Kantorovich potentials for the 1-D mass transfer
problem, built from the dual stress field, with full duality certification
and convergence diagnostics against the tent-limit oracle."""

from .density import (
    Density,
    DensitySpec,
    TransportProblem,
    cdf,
    inverse_cdf,
    make_density,
    make_problem,
    normalize,
    pdf,
    polynomial_density,
    uniform_density,
    validate_problem,
)
from .dual_algebra import (
    DualScalars,
    E,
    E_inv,
    H,
    K_CAP,
    dual_scalars,
    lambda_floor,
    lambda_from_theta,
    psi_star,
    slope_from_theta,
)
from .energy import (
    ElResidual,
    EnergyReport,
    dual_energy,
    el_residual,
    energy_report,
    kantorovich_value,
    primal_energy,
    primal_increment,
    second_variation_dual,
    second_variation_primal,
    test_function_family,
    total_complementary,
)
from .errors import (
    BalanceError,
    BracketError,
    ConfigError,
    DomainError,
    EvaluationError,
    FeasibilityError,
    InfeasibleStressError,
    LayoutError,
    PositivityError,
    QuadratureError,
    SolverError,
    StateError,
)
from .numerics import Bracket, Tolerances, find_root_monotone, integrate
from .oracle import (
    ImprovementReport,
    TentPotential,
    grid_improve_check,
    limit_constant,
    tent_potential,
    tent_value,
)
from .potential import (
    DualField,
    PotentialSolution,
    balance_mismatch,
    decompose,
    evaluate_potential,
    solve_balance_constant,
    solve_experimental,
    solve_potential,
    theta_at,
)

__version__ = "0.1.0"
