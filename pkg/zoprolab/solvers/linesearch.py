import numpy as np

from zoprolab.errors import DescentFailure, NumericError, ParameterError, StepsizeFloor
from zoprolab.estimators import ValueOracle


def armijo_stepsize(
    f_value: ValueOracle,
    x: np.ndarray,
    direction: np.ndarray,
    slope: float,
    c_armijo: float,
    shrink: float,
    max_backtracks: int,
    f_x: float | None = None,
) -> tuple[float, int]:
    """First alpha in 1, shrink, shrink^2, ... with f(x + alpha d) <= f(x) + c alpha slope.

    Returns the accepted alpha and the number of trial evaluations. A trial whose value is
    not finite counts as a rejection.
    """
    if not 0 < c_armijo < 1 or not 0 < shrink < 1 or max_backtracks < 0:
        raise ParameterError(f"bad Armijo parameters c={c_armijo}, shrink={shrink}, max_backtracks={max_backtracks}")
    if not slope < 0:
        raise DescentFailure(slope)
    x = np.asarray(x, dtype=float)
    base = float(f_value(x)) if f_x is None else f_x

    alpha = 1.0
    for probes in range(1, max_backtracks + 2):
        try:
            trial = float(f_value(x + alpha * direction))
        except NumericError:
            trial = np.inf
        if trial <= base + c_armijo * alpha * slope:
            return alpha, probes
        if probes <= max_backtracks:
            alpha *= shrink
    raise StepsizeFloor(alpha, max_backtracks + 1)
