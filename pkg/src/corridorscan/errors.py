"""Exception types shared by the corridorscan package.

Every exception carries a stable ``code`` string so the service layer and CLI
can report machine-readable failure reasons without parsing messages.
"""


class CorridorScanError(Exception):
    code = "ERROR"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context


class RowMismatchError(CorridorScanError):
    code = "ROW_MISMATCH"


class NonMonotonicTimeError(CorridorScanError):
    code = "NON_MONOTONIC_TIME"


class NegativeSpeedError(CorridorScanError):
    code = "NEGATIVE_SPEED"


class NotAMultipleError(CorridorScanError):
    code = "NOT_A_MULTIPLE"


class DegenerateDataError(CorridorScanError):
    code = "DEGENERATE_DATA"


class TooFewSamplesError(CorridorScanError):
    code = "TOO_FEW_SAMPLES"


class StructuringElementTooLargeError(CorridorScanError):
    code = "SE_LARGER_THAN_GRID"


class EmptyRegionError(CorridorScanError):
    code = "EMPTY_REGION"


class InvalidFundamentalDiagramError(CorridorScanError):
    code = "INVALID_FD"


class SpeedOutOfRangeError(CorridorScanError):
    code = "OUT_OF_RANGE"


class TooFewRowsError(CorridorScanError):
    code = "TOO_FEW_ROWS"


class ShapeMismatchError(CorridorScanError):
    code = "SHAPE_MISMATCH"


class ConfigError(CorridorScanError):
    code = "CONFIG"
