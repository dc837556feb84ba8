"""Nonlinear thermodynamic formalism on subshifts of finite type.

Linear pressure and Markov equilibrium measures via transfer matrices, the
entropy function via Legendre duality, nonlinear pressure maximization,
exact nonlinear partition functions, and beta-scan transition detection.
"""

from .convex import DiagramTable, EntropyEvaluation, diagram, entropy_at, entropy_many
from .errors import (
    BadDimensions,
    BelowCritical,
    BudgetError,
    BudgetExceeded,
    CycleBudgetExceeded,
    DimensionNotOne,
    DimensionTooHigh,
    EmptyInterior,
    GridTooCoarse,
    InadmissibleEnergy,
    InputError,
    ModelError,
    NoConvergence,
    NonBinaryAdjacency,
    NotFreezingShape,
    NumericalError,
    PerronFailure,
    ReducibleAdjacency,
    ThermoError,
    ZeroEntropy,
)
from .gibbs import (
    ClassTable,
    GapNotMonotone,
    GibbsEnsemble,
    ZetaRow,
    convergence_table,
    count_classes,
    gibbs_ensemble,
    zeta_exact,
)
from .nonlinear_pressure import (
    ContinuumSuspected,
    CriticalPoint,
    EquilibriumReport,
    LocalMax,
    NonlinearEnergy,
    critical_points_1d,
    equilibrium_measures,
    g_value,
    nl_pressure,
)
from .shift_model import (
    AffineMap,
    PerronData,
    RotationSet,
    ShiftModel,
    builtin_model,
    linear_pressure,
    reduce_potentials,
    rotation_set,
    validate_model,
    zero_temperature_measure,
)
from .transitions import (
    BetaScan,
    BranchPoint,
    TransitionEvent,
    detect_freezing,
    freezing_threshold,
    potts_critical_beta,
    potts_magnetization,
    potts_ordered_value,
    scan,
)

__version__ = "0.1.0"
