from typing import Dict, Optional

EXIT_OK: int = 0
EXIT_USAGE: int = 2
EXIT_IO: int = 3
EXIT_MODEL: int = 4


class ContagionLabError(Exception):
    """Base class of every error raised by contagionlab; carries the CLI exit code."""

    exit_code: int = EXIT_MODEL

    def __init__(self, message: str = '', **context):
        super().__init__(message)
        self.message: str = message
        self.context: Dict[str, object] = dict(context)

    def with_context(self, **context) -> 'ContagionLabError':
        self.context.update(context)
        return self

    def __str__(self) -> str:
        if self.context:
            return f"{self.message} {repr(self.context)}"
        return self.message


class UsageError(ContagionLabError):
    exit_code = EXIT_USAGE


class InputError(ContagionLabError):
    exit_code = EXIT_IO


class ModelError(ContagionLabError):
    exit_code = EXIT_MODEL


class InvalidParameter(ModelError, ValueError):
    pass


# ingest

class MalformedRow(InputError):

    def __init__(self, message: str = '', row: Optional[int] = None, **context):
        super().__init__(message, row=row, **context)
        self.row = row


class DuplicateKey(InputError):
    pass


class MissingColumn(InputError):
    pass


class EmptyResult(InputError):
    pass


class YearAbsent(InputError):
    pass


# reconstruct

class InvalidRatio(ModelError):
    pass


class ZeroTotal(ModelError):
    pass


class DegenerateBandwidth(ModelError):
    pass


class InfeasibleMarginals(ModelError):
    pass


# graph

class SingletonGraph(ModelError):
    pass


class DegenerateVector(ModelError):
    pass


class TooSmall(ModelError):
    pass


# contagion

class NonPositiveLambda2(ModelError):
    pass


class InvalidEpsilon(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class Disconnected(ModelError):
    pass


class UnsupportedForcing(ModelError):
    pass


# stats

class TooFewPoints(ModelError):
    pass


class NonPositiveSample(ModelError):
    pass


class InsufficientData(ModelError):
    pass


class CollinearDesign(ModelError):
    pass


class TooFewClusters(ModelError):
    pass


class ZeroVariance(ModelError):
    pass


class DegenerateReplicate(ModelError):
    pass
