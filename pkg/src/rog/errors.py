"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI:
  2 -- usage / configuration errors (SpecError, ConfigError)
  3 -- data errors (ParseError, ValidationError, DimensionError, EmptyClassError)
  4 -- numeric failures (SingularCovarianceError, DegenerateError)
"""


class RogError(Exception):
    """Base class for all toolkit errors."""


class ParseError(RogError):
    """Malformed input file."""


class ValidationError(RogError):
    """Data violates a FeatureSet invariant (NaN/Inf, label out of range)."""


class DimensionError(RogError):
    """Ragged rows or incompatible array shapes."""


class SpecError(RogError):
    """Invalid parameter specification (rates, sizes, missing maps)."""


class ConfigError(RogError):
    """Invalid estimator/CLI configuration."""


class EmptyClassError(RogError):
    """A class has no samples where at least one is required."""


class SingularCovarianceError(RogError):
    """Covariance is singular beyond what the ridge can repair."""


class EmptyClusterError(RogError):
    """A cluster lost all members during trimmed k-means."""


class DegenerateError(RogError):
    """Mixture likelihood degenerated to zero; should be unreachable."""


class AssumptionWarning(UserWarning):
    """A theory check was requested outside its assumptions (A3/A4)."""
