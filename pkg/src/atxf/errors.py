"""Exception hierarchy shared by all atxf modules."""


class AtxfError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(AtxfError):
    """Tensor shapes incompatible for the requested operation."""


class NumericError(AtxfError):
    """Non-finite values (NaN/Inf) entered a computation."""


class ContractError(AtxfError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


class ConfigError(AtxfError):
    """Invalid configuration value."""


class SchemaError(AtxfError):
    """Input file does not match the expected column schema."""


class CorpusError(AtxfError):
    """Corpus too small or otherwise unusable."""


class EncodingError(AtxfError):
    """Token id outside the vocabulary range."""


class CheckpointError(AtxfError):
    """Checkpoint file is malformed, truncated or version-incompatible."""


class TransferError(AtxfError):
    """Vocabulary fingerprint mismatch between checkpoint and active vocabulary."""


class DivergenceError(AtxfError):
    """Training produced a non-finite loss."""

    def __init__(self, message, last_stable_epoch=None):
        super().__init__(message)
        self.last_stable_epoch = last_stable_epoch


class OrderingError(AtxfError):
    """A transfer run was requested before its source baseline exists."""


class ChatLookupError(AtxfError):
    """Unknown session or domain."""


class InputError(AtxfError):
    """User input unusable (e.g. empty after cleaning)."""
