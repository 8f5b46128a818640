"""Engquist-Osher finite difference solver for a 1-d nonlocal aggregation equation

    u_t + (u Phi'(v))_x = A(u)_xx,   v(x, t) = int_{-inf}^x u dy,

marched through the local equation v_t + Phi(v)_x = A(v_x)_x for the primitive.
"""

from .model import (
    ConfigurationError,
    CriticalPoint,
    DiffusionModel,
    FluxModel,
    FluxPiece,
    InitialDatum,
    ProblemSpec,
    PRESETS,
    load_problem,
    make_problem,
    phi_minus,
    phi_plus,
    preset,
)
from .grid import (
    DomainTooSmallError,
    GridSpec,
    SolverState,
    discretize_initial,
    initial_state,
    inverse_primitive,
    make_grid,
    primitive,
)
from .scheme import (
    CflPolicy,
    NumericalFailure,
    StepReport,
    TimeStep,
    advance,
    eo_flux,
    u_step,
    v_step,
    validate_cfl,
)
from .diagnostics import (
    ErrorTable,
    JumpRecord,
    convergence_table,
    detect_jumps,
    entropy_residual,
    l1_error_u,
    linf_error_v,
    mass,
    support_intervals,
    total_variation,
)

__version__ = "0.1.0"
