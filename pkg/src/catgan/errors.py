"""Exception types raised across the package."""


class CatGANError(Exception):
    """Base class for all package errors."""


class DimensionError(CatGANError, ValueError):
    """Operand shapes are incompatible or an axis is out of range."""


class DomainError(CatGANError, ValueError):
    """A numeric function was evaluated outside its domain."""


class ContractError(CatGANError, ValueError):
    """A documented precondition was violated by the caller."""


class FormatError(CatGANError, ValueError):
    """A file does not follow the expected binary or text format."""


class DivergenceError(CatGANError, ValueError):
    """A KL divergence is infinite (prior has zero mass where data does not)."""


class TrainingAborted(CatGANError, RuntimeError):
    """Training produced a non-finite loss.

    ``snapshot`` holds the step index and the objective terms at the time of
    the failure.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}
