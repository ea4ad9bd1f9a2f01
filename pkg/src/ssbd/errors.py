"""Exception types shared across the package.

Validation errors (bad arguments, malformed files) carry exit code 1 when
surfaced through the CLI; numerical failures carry exit code 2.
"""


class SsbdError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class DimensionError(SsbdError, ValueError):
    """Incompatible vector/matrix dimensions."""

    exit_code = 1


class ParameterError(SsbdError, ValueError):
    """Parameter outside its documented domain."""

    exit_code = 1


class ContractError(SsbdError, ValueError):
    """A documented precondition was violated (non-symmetric input,
    non-tangent vector, gradient not small, ...)."""

    exit_code = 1


class FileFormatError(SsbdError, ValueError):
    """Malformed input file."""

    exit_code = 1


class SingularityError(SsbdError, ArithmeticError):
    """Matrix numerically singular past the rank tolerance."""


class IterationError(SsbdError, RuntimeError):
    """An iterative solver failed to converge within its budget."""


class StallError(SsbdError, RuntimeError):
    """Line search found no decrease down to the minimum step size.

    Carries the partial optimization report in ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerateStepError(SsbdError, ValueError):
    """Retraction of a step that lands at (numerically) the origin."""


class ZeroWindowError(SsbdError, RuntimeError):
    """All sampled observation windows were identically zero."""


class DegenerateKernelError(SsbdError, ValueError):
    """Kernel whose shift truncations are all zero."""


class BudgetError(SsbdError, RuntimeError):
    """Estimated compute cost exceeds the configured cap."""
