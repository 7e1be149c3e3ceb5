import logging
from typing import Sequence

import numpy as np
from scipy import linalg

from zoprolab.errors import ConditioningError, ParameterError
from zoprolab.objectives import ConvexityBounds
from zoprolab.solvers.config import DPolicy, DPolicyKind

logger = logging.getLogger(__name__)


def _unpack(bounds: Sequence[ConvexityBounds]) -> tuple[np.ndarray, np.ndarray]:
    m = np.array([b.m for b in bounds], dtype=float)
    M = np.array([b.M for b in bounds], dtype=float)
    if np.any(m <= 0) or np.any(M < m):
        raise ParameterError("convexity bounds need 0 < m_i <= M_i at every node")
    return m, M


def proximal_coefficients(bounds: Sequence[ConvexityBounds], theta: float, eta: float) -> np.ndarray:
    """Per-node scalar c_i in the proximal condition D_i >= c_i I + rho (W + I)."""
    m, M = _unpack(bounds)
    return M / (2 * eta) + (2 / theta - 1.5) * M - 1.5 * m + (M / theta - (M + m) / 2) ** 2


def kappa_coefficients(
    bounds: Sequence[ConvexityBounds], theta: float, eta: float, alpha_floor: float, beta: float
) -> np.ndarray:
    """Per-node k_i such that kappa > 0 reduces to tau / alpha_floor > k_i + rho (lambda_max + 1)."""
    m, M = _unpack(bounds)
    lam_bar = (M / theta - (M + m) / 2) / alpha_floor
    return -(M + m) / (2 * alpha_floor) + M / (2 * eta) + lam_bar**2 / beta + 2 * lam_bar


def required_tau(
    bounds: Sequence[ConvexityBounds],
    rho: float,
    lambda_max: float,
    theta: float,
    eta: float,
    alpha_floor: float,
    beta: float | None = None,
) -> float:
    beta = 2.0 / alpha_floor if beta is None else beta
    coupling = rho * (lambda_max + 1.0)
    tau_prox = float(np.max(proximal_coefficients(bounds, theta, eta))) + coupling
    tau_kappa = alpha_floor * (float(np.max(kappa_coefficients(bounds, theta, eta, alpha_floor, beta))) + coupling)
    return max(tau_prox, tau_kappa)


def choose_D(
    policy: DPolicy,
    bounds: Sequence[ConvexityBounds],
    rho: float,
    lambda_max: float,
    d: int,
    theta: float | None = None,
    alpha_floor: float | None = None,
    eta: float | None = None,
    beta: float | None = None,
) -> list[np.ndarray]:
    """Proximal matrices D_i = tau I, one per node.

    ``global_bound`` takes the smallest tau meeting both the blockwise proximal condition
    and positivity of kappa at ``alpha_floor``, plus headroom, and gives it to every node.
    """
    if rho <= 0 or lambda_max <= 0 or d < 1:
        raise ParameterError(f"choose_D needs rho > 0, lambda_max > 0 and d >= 1, got {rho}, {lambda_max}, {d}")
    if policy.kind is DPolicyKind.SCALED_IDENTITY:
        tau = policy.tau
    else:
        theta = policy.theta if theta is None else theta
        eta = policy.eta if eta is None else eta
        alpha_floor = policy.alpha_floor if alpha_floor is None else alpha_floor
        if not 0 < theta <= 1 or not eta > 1 or not 0 < alpha_floor <= 1:
            raise ParameterError(f"invalid theta={theta}, eta={eta}, alpha_floor={alpha_floor}")
        tau_req = required_tau(bounds, rho, lambda_max, theta, eta, alpha_floor, beta)
        scale = max(abs(tau_req), max(b.M for b in bounds))
        tau = max(tau_req, 0.0) + policy.headroom * scale
        logger.debug("tau_req=%.6g tau=%.6g", tau_req, tau)
    return [tau * np.eye(d) for _ in bounds]


def ensure_positive(system: np.ndarray, floor: float) -> tuple[np.ndarray, float]:
    """Shift a symmetric matrix so its smallest eigenvalue is at least ``floor``."""
    lam_min = float(linalg.eigvalsh(system)[0])
    if lam_min > floor:
        return system, 0.0
    shift = floor - lam_min
    return system + shift * np.eye(system.shape[0]), shift


def search_direction(
    h_est: np.ndarray,
    d_mat: np.ndarray,
    g_est: np.ndarray,
    y: np.ndarray,
    q: np.ndarray,
    rho: float,
) -> np.ndarray:
    """dir = -(H + D)^-1 (g + rho y + q)."""
    system = h_est + d_mat
    system = (system + system.T) / 2
    rhs = g_est + rho * y + q
    try:
        factor = linalg.cho_factor(system)
    except linalg.LinAlgError as e:
        lam_min = float(linalg.eigvalsh(system)[0])
        raise ConditioningError(f"H + D is not positive definite (lambda_min={lam_min:.3e})", lam_min) from e
    return -linalg.cho_solve(factor, rhs)
