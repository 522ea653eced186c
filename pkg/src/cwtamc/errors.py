"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Input violates an operation's precondition."""


class DegenerateInputError(ValueError):
    """Input is well-formed but carries no usable information (all zeros, zero variance, ...)."""


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")
