"""Exception hierarchy shared across the package.

FormatError and its kin indicate unusable artifacts (bad model files,
malformed piece JSON, wrong WAV format) and map to CLI exit code 2;
everything else under SheetFollowError maps to exit code 3.
"""


class SheetFollowError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(SheetFollowError):
    """A configuration violates its invariants."""


class AudioInputError(SheetFollowError):
    """Audio samples or an audio file are unusable."""


class EmptyStreamError(SheetFollowError):
    """An operation needs at least one frame but none were pushed."""


class FormatError(SheetFollowError):
    """A serialized artifact (model file, PGM, piece JSON) is malformed."""


class ShapeError(SheetFollowError):
    """A tensor does not match the shape a layer expects."""


class NumericalError(SheetFollowError):
    """A computation produced non-finite values."""


class TrainingDivergedError(SheetFollowError):
    """Epoch loss exceeded twice the initial loss."""


class ConsistencyError(SheetFollowError):
    """Two artifacts that must describe the same piece do not agree."""


class ContractViolationError(SheetFollowError):
    """A caller broke an internal API contract (e.g. unsnapped origin)."""
