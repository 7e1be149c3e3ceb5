import numpy as np


class ZoproError(Exception):
    """Base class for every error raised by zoprolab."""


class ParameterError(ZoproError, ValueError):
    pass


class SpectralError(ZoproError):
    pass


class SolverError(ZoproError):
    pass


class ConsistencyError(ZoproError):
    pass


class NumericError(ZoproError):
    """A value oracle returned a non-finite number."""

    def __init__(self, message: str, point: np.ndarray | None = None):
        super().__init__(message)
        self.point = None if point is None else np.array(point, copy=True)


class ConditioningError(ZoproError):
    """The proximal system H + D is singular or indefinite."""

    def __init__(self, message: str, lambda_min: float, node: int | None = None, round_: int | None = None):
        super().__init__(message)
        self.lambda_min = lambda_min
        self.node = node
        self.round = round_


class PreconditionError(ZoproError):
    def __init__(self, message: str, margin: float):
        super().__init__(message)
        self.margin = margin


class InfeasibleError(ZoproError):
    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


class DescentFailure(ZoproError):
    """Armijo slope is nonnegative, so no step length can satisfy the test."""

    def __init__(self, slope: float):
        super().__init__(f"non-descent slope {slope:.3e}")
        self.slope = slope


class StepsizeFloor(ZoproError):
    def __init__(self, alpha: float, probes: int):
        super().__init__(f"backtracking exhausted at alpha={alpha:.3e} after {probes} probes")
        self.alpha = alpha
        self.probes = probes


PARAMETER_EXIT_CODE = 2
NUMERIC_EXIT_CODE = 3


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ParameterError):
        return PARAMETER_EXIT_CODE
    if isinstance(error, ZoproError):
        return NUMERIC_EXIT_CODE
    return 1
