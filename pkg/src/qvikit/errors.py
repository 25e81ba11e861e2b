"""Exception hierarchy shared by all qvikit modules."""


class QVIError(Exception):
    """Base class for every error raised by qvikit."""


class GridMismatchError(QVIError, ValueError):
    pass


class InvariantViolation(QVIError):
    """An asserted mathematical invariant did not hold.

    The CLI maps every subclass to exit code 2.
    """


# order_lattice
class NotSubSolution(InvariantViolation):
    pass


class NotSuperSolution(InvariantViolation):
    pass


class MonotonicityViolated(InvariantViolation):
    pass


class MaxIterExceeded(QVIError):
    pass


# elliptic
class EllipticityViolated(QVIError, ValueError):
    pass


class SolverDiverged(QVIError):
    pass


# vi
class MaxSweepsExceeded(QVIError):
    pass


class NonConvergence(QVIError):
    pass


class NoValidActiveSet(InvariantViolation):
    pass


# obstacles
class InnerSolveDiverged(QVIError):
    pass


class NegativityDetected(InvariantViolation):
    pass


# stability
class DirectionViolated(InvariantViolation):
    pass


class SandwichViolated(InvariantViolation):
    pass


class HypothesisNotMet(InvariantViolation):
    pass


# control
class InadmissibleControl(QVIError, ValueError):
    pass


class BudgetExceeded(QVIError):
    pass
