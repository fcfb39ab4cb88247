"""Exception types shared across the package.

The CLI maps these onto process exit codes: validation errors exit with 2,
generation/convergence failures with 3, numerical failures with 4.
"""


class DirmcError(Exception):
    """Base class for all package errors."""


class ValidationError(DirmcError, ValueError):
    """Malformed input: bad shapes, out-of-range parameters, schema violations."""


class GenerationError(DirmcError, RuntimeError):
    """Instance generation failed (retries exhausted, infeasible target)."""


class ConvergenceError(DirmcError, RuntimeError):
    """An iterative procedure did not reach its tolerance."""


class KktViolationError(DirmcError, RuntimeError):
    """A point claimed stationary fails the first-order conditions."""


class NumericalError(DirmcError, RuntimeError):
    """A computation left the domain where its result is trustworthy."""
