"""Exception hierarchy.

The CLI maps the three families to exit codes: input problems (2), budget
overruns (3) and numerical failures (4).
"""


class ThermoError(Exception):
    """Base class for every error raised by the package."""


class InputError(ThermoError, ValueError):
    pass


class BudgetError(ThermoError):
    pass


class NumericalError(ThermoError, ArithmeticError):
    pass


# model validation
class ModelError(InputError):
    pass


class ReducibleAdjacency(ModelError):
    pass


class BadDimensions(ModelError):
    pass


class NonBinaryAdjacency(ModelError):
    pass


class ZeroEntropy(ModelError):
    """The graph carries a single cycle, so the shift has no entropy."""


# energies and optimisation
class InadmissibleEnergy(InputError):
    pass


class EmptyInterior(InputError):
    pass


class DimensionTooHigh(InputError):
    pass


class DimensionNotOne(InputError):
    pass


class BelowCritical(InputError):
    pass


class NotFreezingShape(InputError):
    pass


class GridTooCoarse(InputError):
    pass


# budgets
class BudgetExceeded(BudgetError):
    pass


class CycleBudgetExceeded(BudgetError):
    pass


# numerics
class PerronFailure(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass
