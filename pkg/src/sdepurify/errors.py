"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """Inputs violate a structural precondition (shape, length, sign)."""


class DivergenceError(RuntimeError):
    """A trajectory or training run produced a non-finite value."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class TrainingDivergenceError(DivergenceError):
    """Loss became non-finite during training."""


class DegenerateDistributionError(DomainError):
    """A distribution collapsed to zero variance where a density is needed."""


class ConfigError(ValueError):
    """Bad or unknown experiment configuration."""
