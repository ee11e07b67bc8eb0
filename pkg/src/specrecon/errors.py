"""Exception hierarchy.

Three broad families, matching the CLI exit codes: configuration problems
(exit 2), data/ingestion problems (exit 3), and numeric failures (exit 4).
"""


class SpecreconError(Exception):
    """Base class for all package errors."""


class ConfigError(SpecreconError):
    """Invalid run configuration or invalid operation parameters."""


class DataError(SpecreconError):
    """Bad input data: missing files, shape mismatches, invariant violations."""


class NumericError(SpecreconError):
    """Numeric failure: singular systems, undefined statistics, divergence."""


class SingularSystemError(NumericError):
    """Normal equations are singular (rank-deficient design with alpha = 0)."""


class UndefinedCorrelationError(NumericError):
    """Pearson correlation requested for a zero-variance input."""


class ZeroVarianceError(NumericError):
    """A statistic requiring nonzero variance was given degenerate samples."""


class TrainingDivergedError(NumericError):
    """Network training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")
