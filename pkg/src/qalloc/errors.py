"""Exception hierarchy. Each family maps onto one CLI exit code."""


class QallocError(Exception):
    exit_code = 1


class ConfigError(QallocError, ValueError):
    exit_code = 2


class DataError(QallocError, ValueError):
    exit_code = 3


class InsufficientHistoryError(DataError):
    pass


class NumericAbort(QallocError, ArithmeticError):
    exit_code = 4


class NonFiniteLossError(NumericAbort):
    """Raised by a training step whose loss is NaN or infinite.

    ``batch_index`` is the first row of the batch with a non-finite
    residual. ``episode`` and ``step`` are filled in by the training loop.
    """

    def __init__(self, batch_index, loss, episode=None, step=None):
        self.batch_index = batch_index
        self.loss = loss
        self.episode = episode
        self.step = step
        super().__init__(self._message())

    def _message(self):
        msg = f"non-finite loss {self.loss!r} (batch row {self.batch_index})"
        if self.episode is not None:
            msg += f" at episode {self.episode}, step {self.step}"
        return msg

    def at(self, episode, step):
        self.episode = episode
        self.step = step
        self.args = (self._message(),)
        return self
