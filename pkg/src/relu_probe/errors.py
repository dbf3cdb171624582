"""Exception types shared across the package."""


class ReluProbeError(Exception):
    """Base class for all errors raised by relu_probe."""


class ParameterError(ReluProbeError, ValueError):
    """An argument is outside its valid range."""


class DomainError(ReluProbeError, ValueError):
    """Input data violates a mathematical precondition (e.g. negativity)."""


class SizeError(ReluProbeError, ValueError):
    """Input is too large for an exact search."""


class UndefinedCorrelationError(ReluProbeError, ValueError):
    """Correlation requested for inputs without variance."""


class SpecError(ReluProbeError, ValueError):
    """A layer specification chain is inconsistent."""


class ContractError(ReluProbeError, ValueError):
    """A user-supplied callback broke its shape contract."""


class DataError(ReluProbeError, ValueError):
    """Labels or samples are inconsistent with the request."""


class TrainingError(ReluProbeError, RuntimeError):
    """Training diverged."""

    def __init__(self, message, batch_index):
        super().__init__(f"{message} (batch {batch_index})")
        self.batch_index = batch_index


class FormatError(ReluProbeError, ValueError):
    """A file could not be parsed."""

    def __init__(self, message, offset=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        suffix = f" [{', '.join(where)}]" if where else ""
        super().__init__(message + suffix)
        self.offset = offset
        self.path = path


class ConfigError(ReluProbeError, ValueError):
    """An experiment configuration is invalid."""


class ReportError(ReluProbeError, RuntimeError):
    """Artifacts needed for a report are missing or inconsistent."""
