"""Optimal dividend barriers for a two-sided Levy surplus with mixed-exponential jumps."""

from .barrier import (
    BarrierValueFunction,
    OptimalBarrier,
    find_bstar,
    optimal_value_function,
    value_at,
    value_curvature,
    value_gradient,
)
from .generator import (
    DiagnosticCheck,
    DiagnosticsReport,
    GeneratorQuadrature,
    QuadratureError,
    SmoothFunction,
    apply_generator,
    check_convexity,
    check_hjb,
    check_logconvexity,
    check_scale_equation,
    discounted_generator,
)
from .model import (
    NO_JUMPS,
    DomainError,
    JumpSide,
    LundbergReport,
    MixedExponentialDensity,
    ModelError,
    ModelSpec,
    esscher_tilt,
    laplace_exponent,
    load_model,
    lundberg_check,
    model_from_dict,
    model_to_dict,
    tilted_exponent,
)
from .scale import (
    ScaleFunction,
    SolverError,
    TiltedRuinExpansion,
    adjustment_coefficient,
    esscher_tilted_model,
    root_rho,
    ruin_expansion,
    ruin_probability_tilted,
    scale_function,
    scale_h,
    solve_expansion,
)
from .simulate import (
    Barrier,
    DominanceResult,
    NoDividends,
    SimulationError,
    SimulationEstimate,
    Threshold,
    default_rivals,
    dominance_experiment,
    simulate_ruin_probability,
    simulate_value,
)
from .verify import GridSpec, run_diagnostics

__version__ = "0.1.0"
