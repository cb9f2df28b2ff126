"""Error taxonomy; the CLI maps each class to its own exit code."""


class ExtractError(Exception):
    pass


class UsageError(ExtractError):
    """Bad flags or unsatisfiable job parameters (exit 1)."""


class FrameReadError(ExtractError):
    """Missing or undecodable frame image (exit 2)."""


class ShapeError(ExtractError):
    """Decoded pixels do not form an RGB frame (exit 3)."""


class UnknownBackboneError(ExtractError):
    """Requested backbone is not registered locally (exit 4)."""
