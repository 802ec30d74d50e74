"""Exception types raised by the toolkit.

Checks that can *fail* (dissipation, annihilation, Hessian definiteness, ...)
are reported as data, not raised. Exceptions are reserved for broken
contracts and numerical breakdowns.
"""


class IdaPbcError(Exception):
    """Base class for all toolkit errors."""


class ContractError(IdaPbcError, ValueError):
    """Input violates a documented precondition (shape, sign, bounds)."""


class NumericalFailure(IdaPbcError, ArithmeticError):
    """A numerical procedure broke down (non-finite value, no convergence)."""


class SingularityError(NumericalFailure):
    """A matrix that must be invertible is singular or numerically rank deficient."""


class DomainError(NumericalFailure):
    """An evaluation point left the state domain."""


class ShapeabilityError(IdaPbcError):
    """A hypothesis needed by the energy-shaping construction does not hold."""
