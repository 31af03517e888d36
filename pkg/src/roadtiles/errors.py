"""Exception hierarchy. Each family maps onto one CLI exit code."""


class RoadTilesError(Exception):
    exit_code = 2


class ConfigError(RoadTilesError, ValueError):
    exit_code = 1


class DataError(RoadTilesError):
    exit_code = 2


class InputError(DataError, OSError):
    """The input could not be read at all."""


class FormatError(DataError, ValueError):
    """The input was readable but structurally wrong."""


class DomainError(DataError, ValueError):
    """An argument lies outside the domain of the operation."""


class GenerationError(DataError):
    pass


class ShapeError(DataError, ValueError):
    pass


class TrainingError(RoadTilesError):
    exit_code = 3


class DivergenceError(TrainingError, ArithmeticError):
    def __init__(self, epoch, loss):
        super().__init__(f"loss became non-finite ({loss}) in epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class ModelFormatError(DataError, ValueError):
    pass


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


class StageError(RoadTilesError):
    """Wraps an error raised inside a pipeline stage."""

    def __init__(self, stage, cause, context=None):
        msg = f"stage '{stage}' failed: {cause}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
