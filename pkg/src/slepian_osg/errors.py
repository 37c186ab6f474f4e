"""Exception hierarchy.

Every error raised on purpose by this package derives from :class:`OsgError`
and carries a short ``category`` string so that the CLI and the HTTP service
can report failures in a machine-readable way.
"""


class OsgError(Exception):
    category = "error"


class ConfigurationError(OsgError, ValueError):
    category = "configuration"


class DomainError(OsgError, ValueError):
    category = "domain"


class FormatError(OsgError):
    category = "format"


class MigrationError(FormatError):
    category = "migration"


class NumericalError(OsgError, ArithmeticError):
    category = "numerical"


class SequencingError(OsgError):
    category = "sequencing"


class CapacityError(ConfigurationError):
    category = "capacity"


class UnsupportedGridError(ConfigurationError):
    category = "unsupported-grid"


class SelectionError(ConfigurationError):
    category = "selection"


class IllPosedAnalysisError(NumericalError):
    category = "ill-posed-analysis"


class InsufficientDataError(ConfigurationError):
    category = "insufficient-data"


class DegenerateError(NumericalError):
    category = "degenerate"


class RangeError(OsgError, IndexError):
    category = "range"
