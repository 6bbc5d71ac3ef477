from typing import Optional


class DsbError(Exception):
    """Base class for every error raised by dsboot."""

    exit_code = 2


class ConfigError(DsbError):
    exit_code = 1


class SchemaError(DsbError):
    pass


class DataError(DsbError):
    pass


class ShapeError(DsbError):
    pass


class NonFiniteError(DsbError):
    pass


class TrainingDivergence(NonFiniteError):
    def __init__(self, message: str, epoch: Optional[int] = None, batch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class BandwidthError(DsbError):
    pass


class SingularSystemError(DsbError):
    pass


class VariantMismatchError(DsbError):
    pass


class BenchmarkFailed(DsbError):
    """Every benchmark cell failed. The report is still written."""
