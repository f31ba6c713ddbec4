"""Exception types shared across the pipeline."""


class IndexcastError(Exception):
    """Base class for all package errors."""


class ParseError(IndexcastError):
    """Malformed input file; message names the offending line."""


class CoverageError(IndexcastError):
    """A symbol's bar history has gaps too large to repair."""


class InsufficientHistoryError(IndexcastError):
    """A series is shorter than the required warm-up / window length."""


class WindowError(IndexcastError):
    """Not enough trading days before an anchor to cut the requested windows."""


class InputError(IndexcastError):
    """Invalid argument or precondition violation."""


class DegenerateModelError(IndexcastError):
    """A classifier cannot be trained (e.g. single-class training window)."""


class DisconnectedGraphError(InputError):
    """An operation required a connected graph and got a disconnected one."""


class DivergenceError(IndexcastError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, learning_rate: float):
        self.epoch = epoch
        self.learning_rate = learning_rate
        super().__init__(
            f"non-finite training loss at epoch {epoch} (learning_rate={learning_rate})"
        )


class ForecastStageError(IndexcastError):
    """A forecast-day stage failed; carries the stage name and day."""

    def __init__(self, stage: str, day, cause: Exception):
        self.stage = stage
        self.day = day
        self.cause = cause
        super().__init__(f"stage '{stage}' failed on {day}: {cause}")
