"""Exception hierarchy shared by all reidkit modules.

Every error carries an ``exit_code`` so the CLI can map failures onto the
documented process exit codes: 2 for configuration problems, 3 for
data/format problems, 4 for evaluation problems.
"""


class ReidkitError(Exception):
    """Base class for all reidkit errors."""

    exit_code = 1


class ConfigError(ReidkitError):
    """Invalid parameter value or malformed configuration."""

    exit_code = 2


class FormatError(ReidkitError):
    """File does not conform to its declared on-disk format."""

    exit_code = 3


class DataError(ReidkitError):
    """Well-formed container holding invalid data (NaN, duplicates, ...)."""

    exit_code = 3


class IoError(ReidkitError):
    """Underlying I/O failure while reading or writing an artifact."""

    exit_code = 3


class ShapeError(ReidkitError):
    """Array arguments have incompatible shapes."""

    exit_code = 3


class BatchError(ReidkitError):
    """A loss batch misses required positive/negative pairs."""

    exit_code = 3


class EvalError(ReidkitError):
    """Evaluation is undefined for the given inputs."""

    exit_code = 4
