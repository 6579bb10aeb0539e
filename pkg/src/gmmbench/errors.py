"""Exception types shared across the package."""


class InvalidConfigurationError(ValueError):
    """Raised for parameter combinations that cannot describe a valid model."""


class NumericalFailure(ArithmeticError):
    """Base class for failures that happen while computing, not while configuring."""


class IllConditionedModelError(NumericalFailure):
    """A covariance that should be SPD could not be Cholesky-factorized."""


class DivergenceError(NumericalFailure):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, learning_rate, loss):
        self.epoch = epoch
        self.learning_rate = learning_rate
        self.loss = loss
        super().__init__(
            f"training diverged at epoch {epoch} (learning rate {learning_rate:g}, loss {loss})"
        )


class SingularSystemError(NumericalFailure):
    """Normal equations could not be factorized."""


class FingerprintMismatchError(ValueError):
    """A cache or dataset was used with a model it was not built from."""
