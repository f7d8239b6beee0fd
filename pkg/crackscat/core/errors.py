from __future__ import annotations

from crackscat.core.status import Status


class CrackscatError(Exception):
    def __init__(self, message: str, status: int = Status.RuntimeFailure):
        super().__init__(message)
        self.status = status


class ConfigError(CrackscatError):
    def __init__(self, message: str):
        super().__init__(message, status=Status.UsageError)


class FamilyNotFoundError(CrackscatError):
    def __init__(self, name: str, known: list[str]):
        super().__init__(f"Unknown operator family: {name} (expected one of {', '.join(known)})", status=Status.UsageError)


class DomainError(CrackscatError, ValueError):
    pass


class DimensionError(CrackscatError, ValueError):
    pass


class SingularSystemError(CrackscatError):
    pass


class ConvergenceError(CrackscatError):
    def __init__(self, message: str, off_diagonal: float):
        super().__init__(message)
        self.off_diagonal = off_diagonal


class ZeroDenominatorError(CrackscatError, ZeroDivisionError):
    pass


class DatasetError(CrackscatError):
    pass


class DatasetFormatError(DatasetError):
    pass


class EmptyDatasetError(DatasetError):
    pass


class CheckpointError(CrackscatError):
    pass
