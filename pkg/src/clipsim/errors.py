"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors -> 1, data errors -> 2,
numerical failures -> 3.
"""


class ClipSimError(Exception):
    pass


class InvalidArgumentError(ClipSimError, ValueError):
    """A caller violated an operation's precondition."""


class DegenerateInputError(InvalidArgumentError):
    """Input is structurally valid but numerically degenerate (e.g. zero norm)."""


class ConfigError(ClipSimError, ValueError):
    """An experiment or generator configuration is unsatisfiable."""


class DataError(ClipSimError):
    """Base class for feature-store and manifest problems."""


class BadMagicError(DataError):
    pass


class VersionMismatchError(DataError):
    pass


class TruncatedPayloadError(DataError):
    pass


class InconsistentDimensionError(DataError):
    pass


class ManifestError(DataError):
    pass


class SequenceTooShortError(InvalidArgumentError):
    """Sequence has fewer frames than one clip; caller should pad first."""


class NumericalError(ClipSimError):
    """Non-finite values where the pipeline requires finite ones."""


class DivergenceError(NumericalError):
    """Training produced a NaN loss; aborted with state dump."""
