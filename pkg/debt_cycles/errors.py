"""Exception hierarchy for the debt-cycle pipeline."""

from typing import Optional, Sequence


class DebtCyclesError(ValueError):
    """Base class for all library errors."""


class QuarterParseError(DebtCyclesError):
    """Raised when a quarter literal is not of the form YYYYQn."""

    def __init__(self, token: str) -> None:
        super().__init__(f"Malformed quarter literal {token!r}; expected YYYYQn with n in 1..4")
        self.token = token


class IngestionError(DebtCyclesError):
    """Raised when a panel or group-map file cannot be turned into a Panel."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class SeriesTooShortError(DebtCyclesError):
    """Raised when a series is too short for the requested operation."""


class ZeroDenominatorError(DebtCyclesError):
    """Raised when a percentage change or amplitude would divide by zero."""


class CovariateUnavailableError(DebtCyclesError):
    """Raised when an event window leaves the covariate series."""


class CollinearityError(DebtCyclesError):
    """Raised when a design matrix is rank deficient or badly conditioned."""

    def __init__(self, message: str, columns: Sequence[str]) -> None:
        super().__init__(f"{message}: {', '.join(columns)}")
        self.columns = list(columns)


class NonFiniteLikelihoodError(DebtCyclesError):
    """Raised when the log-likelihood overflows at extreme parameters."""


class NotNestedError(DebtCyclesError):
    """Raised when a likelihood-ratio test is requested on non-nested fits."""


class StageError(DebtCyclesError):
    """Raised when a pipeline stage fails; carries the stage name."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
