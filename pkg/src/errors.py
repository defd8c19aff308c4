"""
Error taxonomy for the importance-ARQ simulator.

Every error is a ValueError so callers that only care about "bad input"
can keep catching ValueError.
"""


class ImportanceArqError(ValueError):
    """Base class for all simulator errors"""


class RejectedInputError(ImportanceArqError):
    """Sample features are not finite"""


class UsageError(ImportanceArqError):
    """An operation was called outside its contract"""


class DegenerateChannelError(ImportanceArqError):
    """Combined channel gain too small to invert"""


class InsufficientClassesError(ImportanceArqError):
    """Training data does not cover enough classes"""


class UntrainedModelError(ImportanceArqError):
    """A model (or one of its components) has no usable boundary"""


class ConfigError(ImportanceArqError):
    """Configuration value outside its domain"""


class InvalidPosteriorError(ImportanceArqError):
    """Vector is not a probability distribution"""


class InsufficientDataError(ImportanceArqError):
    """Not enough samples to satisfy a partition rule"""


class MnistFormatError(ImportanceArqError):
    """Malformed IDX file"""

    def __init__(self, message: str, path: str, offset: int):
        self.path = path
        self.offset = offset
        super().__init__(f"{path}: {message} (at byte offset {offset})")
