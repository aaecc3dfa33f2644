"""Recovery of a time-dependent diffusion coefficient a(t) in
``u_t - a(t) u_xx = f`` on ``[0, pi]`` from the boundary flux ``u_x(0, t)``."""

__version__ = "0.1.0"

from .estimator import DiffusivityRecovery
from .exceptions import (
    CoefficientError,
    ConfigError,
    DataInconsistent,
    DegenerateKernel,
    DomainError,
    EvaluationError,
    HeatInvError,
    InvalidGrid,
    NotConvergedWarning,
    OracleFailure,
    OutOfRange,
)
from .forward import accumulate_A, fd_solve, reconstruct_u, solve_modes, synthesize_flux
from .inverse import (
    SolverOptions,
    closed_form_recover,
    contraction_estimate,
    differentiate,
    fixed_point_solve,
)
from .model import (
    FluxData,
    FunctionSpec,
    ProblemSpec,
    SourceTerm,
    TimeGrid,
    TimeSeries,
    build_time_grid,
    compatibility_check,
    validate_assumptions,
)
from .spectral import eval_q, eval_q0, invert_q0, lift, sine_coefficients
