"""Exception types shared across the package."""


class LedgerEmdError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LedgerEmdError):
    """Bad user input: malformed files, unknown codes, inconsistent arguments."""


class MassMismatchError(LedgerEmdError):
    """The two weight vectors do not carry equal mass on some tree component."""


class InfeasibleError(LedgerEmdError):
    """The flow LP has no feasible point (mass mismatch seen by the solver)."""


class SolverError(LedgerEmdError):
    """The LP backend stopped without reaching an optimum."""


class ConvergenceError(LedgerEmdError):
    """An iterative routine (bandwidth search, gradient descent) failed to converge."""
