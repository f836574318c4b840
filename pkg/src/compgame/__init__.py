"""Finite composite games: equilibria, evolutionary dynamics and Lyapunov checks."""

from .core import (
    Category,
    Composite,
    GameSpec,
    Participant,
    PayoffTable,
    PopulationPayoffs,
    Potential,
    SplittableGradient,
    StrategyProfile,
    TangentVector,
    evaluate,
    jacobian,
    linear_composite,
)
from .dynamics import DynamicsKind, Trajectory, check_nash_stationarity, check_pc, field, integrate
from .equilibrium import (
    check_concavity,
    check_dissipative,
    check_potential,
    equilibrium_representations,
    maximize_potential,
    sne_check,
    vi_residual,
)
from .errors import (
    CombinatorialLimitError,
    ConfigurationError,
    DomainError,
    EvaluationError,
    GameError,
    ShapeError,
    SimplexError,
    SpecError,
)
from .lyapunov import LyapunovKind, lyapunov_value, monotonicity_report
from .simplex import project_simplex, project_tangent_cone

__version__ = "0.1.0"
