"""Exception types raised across the package."""


class TaskalError(ValueError):
    """Base class; the CLI turns these into one-line diagnostics."""


class FormatError(TaskalError):
    """A file does not match its declared layout."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class PoolError(TaskalError):
    """Pool bookkeeping was violated (unknown id, overlap, missing label)."""


class BudgetError(TaskalError):
    """Requested budget cannot be served by the candidate set."""


class TrainingError(TaskalError):
    """Training diverged or received inconsistent shapes."""


class ConfigError(TaskalError):
    """Experiment configuration is invalid."""
