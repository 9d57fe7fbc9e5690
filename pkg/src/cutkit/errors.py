"""Typed errors shared across the package."""


class ShapeError(ValueError):
    """Array or image dimensions do not satisfy an operation's contract."""


class EmptyBatchError(ValueError):
    """A batch was requested from zero samples."""


class TruncatedFileError(ValueError):
    """Byte stream ends before the format's record structure allows."""


class CorruptRecordError(ValueError):
    """A record contains a field outside its legal range."""


class FormatError(ValueError):
    """Byte stream does not match the declared container format."""


class PairingError(ValueError):
    """Separately supplied streams (images vs. labels) do not pair up."""


class EmptyDatasetError(ValueError):
    """Operation requires at least one sample."""


class DegenerateChannelError(ValueError):
    """A channel has zero variance and cannot be normalized."""


class ChainError(ValueError):
    """A transform chain stage rejected its input; message names the stage."""


class NumericError(RuntimeError):
    """A computation produced non-finite values."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss; carries the offending epoch."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")
