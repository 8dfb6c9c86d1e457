"""Exception hierarchy shared by the library and the CLI."""


class EditGaugeError(Exception):
    """Base class for all errors raised by editgauge."""

    exit_code = 2


class DataError(EditGaugeError):
    """Input data is malformed or inconsistent."""


class DumpParseError(DataError):
    def __init__(self, message, offset=None):
        super().__init__(f"{message} (byte offset {offset})" if offset is not None else message)
        self.offset = offset


class OresError(DataError):
    def __init__(self, message, rev_id=None, retryable=False):
        super().__init__(f"rev {rev_id}: {message}" if rev_id is not None else message)
        self.rev_id = rev_id
        self.retryable = retryable


class CheckpointMismatchError(DataError):
    """Checkpoint does not match the corpus or configuration it is used with."""


class NumericalError(EditGaugeError):
    """Non-finite values appeared in a loss, gradient or parameter."""

    exit_code = 3
