"""Exception hierarchy. Every validation failure has a distinct, named class."""


class SurplusGameError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SurplusGameError, ValueError):
    """A model, path, or parameter violates one of its invariants."""


class GeneratorColumnSumError(ValidationError):
    """Generator matrix columns do not sum to zero."""


class GeneratorSignError(ValidationError):
    """Generator matrix has a negative off-diagonal intensity."""


class InitialDistributionError(ValidationError):
    """Initial chain distribution is not a probability vector."""


class GridAlignmentError(ValidationError):
    """Time grids do not line up (step mismatch, or a delay that is not a grid multiple)."""


class JumpSupportError(ValidationError):
    """A jump-size law (or a sampled jump) leaves its admissible support."""


class ScenarioConstraintError(ValidationError):
    """A scenario control drives a density jump factor to zero or below."""


class MissingHistoryError(ValidationError):
    """A delayed-state update was asked for lagged values that were never supplied."""


class SingularDenominatorError(SurplusGameError):
    """The optimal-investment denominator vanished (no volatility and no asset jumps)."""


class FilterUnderflowError(SurplusGameError):
    """The filter normalizer collapsed even after log-space rescaling."""


class ConfigError(SurplusGameError):
    """A run configuration failed to parse or validate; message names section and key."""
