"""Exception hierarchy. Each class carries the process exit code the CLI uses."""


class PhidimError(Exception):
    exit_code = 1


class InsufficientTail(PhidimError):
    """The known part of a gap sequence cannot pin down a requested level sum."""
    exit_code = 10


class RatioOutOfRange(PhidimError):
    """A dissection ratio lies outside the open interval (0, 1/2)."""
    exit_code = 11


class EmptyScan(PhidimError):
    """No admissible (k, n) pair was left to scan."""
    exit_code = 12


class ResolutionExceeded(PhidimError):
    """A requested radius is finer than the approximation can resolve."""
    exit_code = 13


class ResolutionWarning(UserWarning):
    pass


class IncompatibleSources(PhidimError):
    """Two approximations were not built from the same gap sequence and stage."""
    exit_code = 14


class HypothesisViolated(PhidimError):
    """A construction precondition does not hold for the supplied parameters."""
    exit_code = 15


class BudgetExceeded(PhidimError):
    """The level budget is too small for the next block of a construction."""
    exit_code = 16


class GapBudgetExceeded(PhidimError):
    """A block arrangement would use more than half of some dyadic gap block."""
    exit_code = 17
