"""Exception hierarchy shared by all solver components."""


class CompOptError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(CompOptError, ValueError):
    """Dimension mismatch or non-finite input."""


class InfeasiblePointError(CompOptError):
    """A point required to lie in a feasible set does not."""


class ConfigurationError(CompOptError, ValueError):
    """Invalid solver configuration or missing problem data."""


class UninitializedModelError(CompOptError):
    """A lower model was queried before any cut was added."""


class InternalConsistencyError(CompOptError):
    """A self-check on a solver invariant failed."""


class MasterFailure(CompOptError):
    """The master subproblem could not be solved to tolerance."""


class RegistryError(CompOptError, KeyError):
    """Unknown instance name."""
