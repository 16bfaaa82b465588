"""Randomized distributionally robust optimization over discrete measures.

Entropic scaling for the inner worst case, projected gradient steps for
the randomized decision, and penalty/constraint duality on top.
"""

from .divergence import (
    DiscreteMeasure,
    DivergenceKind,
    DivergenceSpec,
    ProxdivVariant,
    equality,
    eval_divergence,
    kl,
    log_proxdiv,
    marginals,
    proxdiv,
)
from .errors import (
    BracketError,
    CapacityError,
    ConfigurationError,
    DimensionError,
    DomainError,
    InfeasibleError,
    NumericalRangeError,
    RDROError,
)
from .projection import BoxBudget, BudgetOrthant, CoverageSimplex, feasibility_residual, project
from .solver import (
    ConvergenceDiagnostics,
    Direction,
    OuterConfig,
    PenalizedProblem,
    SolveReport,
    cross_duality_violations,
    fit_convergence,
    outer_gradient,
    solve_constrained,
    solve_penalized,
    theta_sweep,
)
from .transport import (
    ScalingConfig,
    ScalingReport,
    entropy,
    inner_value,
    oracle_inner,
    regularized_objective,
    scaling_solve,
)
from .utility import CallableUtility, CARAUtility, LinearUtility, ShortageUtility

__version__ = "0.1.0"
