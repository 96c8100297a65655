"""Exception types raised by leorelay."""


class LeoRelayError(Exception):
    """Base class for all leorelay errors."""


class DomainError(LeoRelayError, ValueError):
    """An argument lies outside the domain of the operation."""


class InfeasibleScenarioError(LeoRelayError, ValueError):
    """The two visibility caps do not intersect."""


class GeometryDegeneracyError(LeoRelayError, ArithmeticError):
    """A split solver could not bracket a root for the given caps."""


class NumericalDomainError(LeoRelayError, ArithmeticError):
    """A floating-point argument escaped its admissible range."""


class CertainOutageError(LeoRelayError, ZeroDivisionError):
    """Normalization requested for a scenario whose relay probability is zero."""


class CurveInvariantError(LeoRelayError, AssertionError):
    """A generated curve violates the CDF invariants."""
