"""Exception types shared across the package."""


class PrecmcError(Exception):
    """Base class for package errors."""


class FactorizationError(PrecmcError):
    """A matrix that should be positive definite failed to factorize."""


class SingularFactorError(PrecmcError):
    """A triangular factor has a zero or negative diagonal entry."""


class DegenerateUpdateError(PrecmcError):
    """A Sherman-Morrison update hit a numerically degenerate denominator."""


class StructureEstimationError(PrecmcError):
    """Conditional-dependence estimation could not use any probe point."""


class ChainDivergedError(PrecmcError):
    """The log-density at the current chain state is not finite."""


class ConfigError(PrecmcError):
    """A run configuration file or key is invalid."""
