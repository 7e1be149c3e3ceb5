"""Numerical evaluation of the linear-convergence machinery and checks of runs against it."""

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from zoprolab.errors import ConsistencyError, InfeasibleError, ParameterError, PreconditionError
from zoprolab.estimators import smoothing_error_bounds
from zoprolab.graph import WeightedGraph, spectral_summary, weight_matrix
from zoprolab.objectives import Problem
from zoprolab.solvers.config import AlgoConfig
from zoprolab.solvers.proximal import proximal_coefficients
from zoprolab.solvers.state import NodeState, RunRecord, stack_q, stack_x

logger = logging.getLogger(__name__)

GRID_POINTS = 61
GRID_RANGE = (1e-3, 1e3)
REFINE_POINTS = 21
DUAL_RANGE_RTOL = 1e-8


@dataclass(frozen=True)
class TheoremParams:
    eta: float = 2.0
    beta: float | None = None
    gamma: float | None = None
    gamma_margin: float = 1.1

    def resolve(self, alpha_floor: float, m: float) -> tuple[float, float, float]:
        """(eta, beta, gamma) with beta defaulting to 2/alpha_floor and gamma to a margin over its minimum."""
        eta = self.eta
        if not eta > 1:
            raise ParameterError(f"eta must exceed 1, got {eta}")
        beta = 2.0 / alpha_floor if self.beta is None else self.beta
        if not beta > 1.0 / alpha_floor:
            raise ParameterError(f"beta must exceed 1/alpha_floor = {1.0 / alpha_floor:.6g}, got {beta}")
        gamma_min = minimal_gamma(m, eta, beta)
        gamma = self.gamma_margin * gamma_min if self.gamma is None else self.gamma
        if not gamma > gamma_min:
            raise ParameterError(f"gamma must exceed {gamma_min:.6g}, got {gamma}")
        return eta, beta, gamma


def minimal_gamma(m: float, eta: float, beta: float) -> float:
    return (2 * m * (eta - 1) + eta + beta) / (eta - 1)


@dataclass(frozen=True, eq=False)
class TheoremConstants:
    m: float
    M: float
    lambda_m_blocks: np.ndarray
    lambda_M_blocks: np.ndarray
    alpha_floor: float
    k_bound: float
    theta: float
    g1_sq: float
    g2_sq: float
    eta: float
    beta: float
    gamma: float
    c1: float
    c2: float
    delta: float
    g_offset: float
    kappa: float
    delta_c: float
    rho: float
    lambda_w: float
    r_blocks: np.ndarray

    @property
    def r_matrix(self) -> np.ndarray:
        return linalg.block_diag(*self.r_blocks)

    @property
    def q_matrix(self) -> np.ndarray:
        r = self.r_matrix
        return linalg.block_diag(self.rho * r, np.eye(r.shape[0]))

    @property
    def floor(self) -> float:
        """Asymptotic neighborhood radius G / delta."""
        return self.g_offset / self.delta

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "M": self.M,
            "lambda_m_blocks": self.lambda_m_blocks.tolist(),
            "lambda_M_blocks": self.lambda_M_blocks.tolist(),
            "alpha_floor": self.alpha_floor,
            "k_bound": self.k_bound,
            "theta": self.theta,
            "g1_sq": self.g1_sq,
            "g2_sq": self.g2_sq,
            "eta": self.eta,
            "beta": self.beta,
            "gamma": self.gamma,
            "c1": self.c1,
            "c2": self.c2,
            "delta": self.delta,
            "g_offset": self.g_offset,
            "floor": self.floor,
            "kappa": self.kappa,
            "delta_c": self.delta_c,
            "rho": self.rho,
            "lambda_w": self.lambda_w,
            "r_blocks": self.r_blocks.tolist(),
        }


def _blocks(d_mats: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([np.asarray(d, dtype=float) for d in d_mats])


def _node_diag(values: np.ndarray, d: int) -> np.ndarray:
    return np.kron(np.diag(values), np.eye(d))


def check_proximal_condition(
    problem: Problem,
    graph: WeightedGraph,
    d_mats: Sequence[np.ndarray],
    theta: float,
    eta: float,
    rho: float,
) -> float:
    """Smallest eigenvalue of D minus the right side of the proximal condition; positive means it holds."""
    d = problem.dim
    p = weight_matrix(graph)
    coupling = rho * np.kron(p + np.eye(p.shape[0]), np.eye(d))
    rhs = _node_diag(proximal_coefficients(problem.bounds(), theta, eta), d) + coupling
    return float(linalg.eigvalsh(linalg.block_diag(*d_mats) - rhs)[0])


def _kappa(
    m_i: np.ndarray,
    M_i: np.ndarray,
    r_blocks: np.ndarray,
    p: np.ndarray,
    theta: float,
    eta: float,
    beta: float,
    alpha_floor: float,
    rho: float,
) -> float:
    d = r_blocks.shape[1]
    lam_bar = (M_i / theta - (M_i + m_i) / 2) / alpha_floor
    diag = M_i / (2 * eta) + lam_bar**2 / beta + 2 * lam_bar
    mat = linalg.block_diag(*r_blocks) - _node_diag(diag, d) - rho * np.kron(np.eye(p.shape[0]) + p, np.eye(d))
    return float(linalg.eigvalsh(mat)[0])


def _delta_surface(
    c1: np.ndarray,
    c2: np.ndarray,
    first_scale: float,
    delta_c: float,
    m_sq_over: np.ndarray,
    r_max: np.ndarray,
) -> np.ndarray:
    """min of the three contraction candidates, vectorized over broadcast (c1, c2)."""
    t1 = first_scale / (1 + c1)
    t2 = 1.0 / ((1 + 1 / c1) * (1 + c2))
    s = (1 + 1 / c1) * (1 + 1 / c2)
    # B is block diagonal, so lambda_max(B / rho) is the largest blockwise value.
    b_max = np.max(s[..., None] * m_sq_over + r_max, axis=-1)
    t3 = delta_c / b_max
    return np.minimum(np.minimum(t1, t2), t3)


def _grid_search(evaluate) -> tuple[float, float, float]:
    lo, hi = np.log10(GRID_RANGE[0]), np.log10(GRID_RANGE[1])
    axis = np.logspace(lo, hi, GRID_POINTS)
    c1, c2 = np.meshgrid(axis, axis, indexing="ij")
    values = evaluate(c1, c2)
    i, j = np.unravel_index(np.argmax(values), values.shape)

    step = (hi - lo) / (GRID_POINTS - 1)
    fine1 = np.logspace(max(lo, np.log10(axis[i]) - step), min(hi, np.log10(axis[i]) + step), REFINE_POINTS)
    fine2 = np.logspace(max(lo, np.log10(axis[j]) - step), min(hi, np.log10(axis[j]) + step), REFINE_POINTS)
    f1, f2 = np.meshgrid(fine1, fine2, indexing="ij")
    fine = evaluate(f1, f2)
    a, b = np.unravel_index(np.argmax(fine), fine.shape)
    if fine[a, b] >= values[i, j]:
        return float(fine[a, b]), float(fine1[a]), float(fine2[b])
    return float(values[i, j]), float(axis[i]), float(axis[j])


def theorem_constants(
    problem: Problem,
    graph: WeightedGraph,
    cfg: AlgoConfig,
    d_mats: Sequence[np.ndarray],
    theta: float,
    alpha_floor: float,
    k_bound: float,
    params: TheoremParams | None = None,
    exact_oracle: bool = False,
) -> TheoremConstants:
    """Contraction factor delta and offset G for one scenario.

    The sup over (c1, c2) is taken on a log grid over [1e-3, 1e3]^2 with one refinement
    pass around the best grid point. ``exact_oracle`` zeroes the estimator error terms,
    which is the setting of the exact-derivative baseline.
    """
    params = params or TheoremParams()
    if not 0 < theta <= 1 or not 0 < alpha_floor <= 1:
        raise ParameterError(f"need theta and alpha_floor in (0, 1], got {theta}, {alpha_floor}")
    bounds = problem.bounds()
    m_i = np.array([b.m for b in bounds])
    M_i = np.array([b.M for b in bounds])
    m, M = float(m_i.min()), float(M_i.max())
    eta, beta, gamma = params.resolve(alpha_floor, m)
    rho = cfg.rho

    margin = check_proximal_condition(problem, graph, d_mats, theta, eta, rho)
    if margin <= 0:
        raise PreconditionError(f"proximal condition violated: eigenvalue margin {margin:.3e}", margin)

    p = weight_matrix(graph)
    lambda_w = spectral_summary(p).lambda_w
    d = problem.dim
    blocks = _blocks(d_mats)
    r_blocks = np.array([((M_i[k] + m_i[k]) / 2 * np.eye(d) + blocks[k]) / alpha_floor for k in range(len(blocks))])
    kappa = _kappa(m_i, M_i, r_blocks, p, theta, eta, beta, alpha_floor, rho)
    if kappa <= 0:
        raise PreconditionError(f"kappa is not positive ({kappa:.3e}) for alpha_floor={alpha_floor}", kappa)
    delta_c = (2 * m - gamma) * (1 - eta) - eta - beta
    if delta_c <= 0:
        raise InfeasibleError(f"delta_c = {delta_c:.3e} is not positive", {"gamma": gamma, "eta": eta, "beta": beta})

    norm_sq = max(float(linalg.norm(M_i[k] / theta * np.eye(d) + blocks[k], 2)) ** 2 for k in range(len(blocks)))
    first_scale = rho * lambda_w * kappa / (2 * alpha_floor**-2 * norm_sq)
    m_sq_over = M_i**2 / (rho * lambda_w)
    r_max = np.array([linalg.eigvalsh(r)[-1] for r in r_blocks])

    def evaluate(c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
        return _delta_surface(c1, c2, first_scale, delta_c, m_sq_over, r_max)

    delta, c1, c2 = _grid_search(evaluate)
    if not 0 < delta < 1:
        report = {"delta": delta, "kappa": kappa, "delta_c": delta_c}
        logger.warning("no contraction factor found on the grid: %s", report)
        raise InfeasibleError(f"no grid point yields delta in (0, 1), best {delta:.3e}", report)

    if exact_oracle:
        g1_sq = g2_sq = 0.0
    else:
        smoothing = cfg.smoothing
        errs = smoothing_error_bounds(smoothing.mu, M, problem.n_nodes, d, smoothing.batch, k_bound)
        g1_sq, g2_sq = errs.g1_sq, errs.g2_sq
    g1, g2 = math.sqrt(g1_sq), math.sqrt(g2_sq)
    g_offset = (
        rho * (eta + (1 - eta) / gamma) * g2_sq
        + 2 * (g1_sq + g2_sq)
        + 2 * delta * (1 + c1) * (g1 + g2) ** 2 / lambda_w
    )
    return TheoremConstants(
        m=m,
        M=M,
        lambda_m_blocks=m_i,
        lambda_M_blocks=M_i,
        alpha_floor=alpha_floor,
        k_bound=k_bound,
        theta=theta,
        g1_sq=g1_sq,
        g2_sq=g2_sq,
        eta=eta,
        beta=beta,
        gamma=gamma,
        c1=c1,
        c2=c2,
        delta=delta,
        g_offset=g_offset,
        kappa=kappa,
        delta_c=delta_c,
        rho=rho,
        lambda_w=lambda_w,
        r_blocks=r_blocks,
    )


class DualGeometry:
    """Square root of the pseudo-inverse of P, applied blockwise to node-major (N, d) stacks."""

    def __init__(self, p_matrix: np.ndarray):
        eigs, vecs = linalg.eigh(p_matrix)
        keep = eigs > 1e-9 * eigs[-1]
        inv_sqrt = np.zeros_like(eigs)
        inv_sqrt[keep] = 1.0 / np.sqrt(eigs[keep])
        self.half_pinv = (vecs * inv_sqrt) @ vecs.T
        self.null_basis = vecs[:, ~keep]

    def to_v(self, q: np.ndarray) -> np.ndarray:
        leak = float(np.linalg.norm(self.null_basis.T @ q))
        if leak > DUAL_RANGE_RTOL * max(float(np.linalg.norm(q)), 1.0):
            raise ConsistencyError(f"dual variable has a component of norm {leak:.3e} outside the range of W")
        return self.half_pinv @ q


def _unpack_states(states) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(states, tuple):
        xs, qs = states
        return np.asarray(xs, dtype=float), np.asarray(qs, dtype=float)
    return stack_x(states), stack_q(states)


def _r_norm_sq(dx: np.ndarray, r_matrix: np.ndarray) -> float:
    if r_matrix.ndim == 3:
        return float(np.einsum("ni,nij,nj->", dx, r_matrix, dx))
    flat = dx.reshape(-1)
    return float(flat @ r_matrix @ flat)


def _q_distance(xs, qs, x_star, v_star, geometry: DualGeometry, rho: float, r_matrix: np.ndarray) -> float:
    v = geometry.to_v(qs)
    return rho * _r_norm_sq(xs - x_star, r_matrix) + float(np.sum((v - v_star) ** 2))


def optimal_dual(problem: Problem, x_star: np.ndarray, geometry: DualGeometry) -> np.ndarray:
    """v* = -(W^+)^(1/2) grad f(x*), one row per node."""
    grads = problem.stacked_gradient(np.tile(x_star, (problem.n_nodes, 1)))
    return -geometry.half_pinv @ grads


def q_distance(
    states: list[NodeState] | tuple[np.ndarray, np.ndarray],
    x_star: np.ndarray,
    problem: Problem,
    p_matrix: np.ndarray,
    rho: float,
    r_matrix: np.ndarray,
) -> float:
    """||z - z*||_Q^2 = rho ||x - x*||_R^2 + ||v - v*||^2.

    ``states`` is a list of NodeState or an (xs, qs) pair of (N, d) stacks; ``r_matrix`` is
    either the dense Nd x Nd R or its (N, d, d) diagonal blocks.
    """
    geometry = DualGeometry(p_matrix)
    xs, qs = _unpack_states(states)
    return _q_distance(xs, qs, x_star, optimal_dual(problem, x_star, geometry), geometry, rho, np.asarray(r_matrix))


@dataclass(frozen=True, eq=False)
class EnvelopeReport:
    measured: np.ndarray
    bound: np.ndarray
    violations: tuple[int, ...]
    tail_mean: float
    floor: float
    n_runs: int
    curvature_verified: bool = True
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def violation_fraction(self) -> float:
        return len(self.violations) / len(self.measured)

    @property
    def tail_within_floor(self) -> bool:
        return self.tail_mean <= self.floor

    def to_json(self) -> dict:
        return {
            "iterations": len(self.measured),
            "n_runs": self.n_runs,
            "violations": list(self.violations),
            "violation_fraction": self.violation_fraction,
            "tail_mean": self.tail_mean,
            "floor": self.floor,
            "tail_within_floor": self.tail_within_floor,
            "curvature_verified": self.curvature_verified,
            "notes": list(self.notes),
        }


def envelope_bound(initial: float, delta: float, g_offset: float, n: int) -> np.ndarray:
    decay = (1 - delta) ** np.arange(n)
    return decay * initial + (1 - decay) * (g_offset / delta)


def envelope_check(
    runs: Sequence[RunRecord],
    constants: TheoremConstants,
    problem: Problem,
    graph: WeightedGraph,
    x_star: np.ndarray,
    curvature_verified: bool = True,
) -> EnvelopeReport:
    """Seed-averaged Q-distance against (1-delta)^k z0 + (1 - (1-delta)^k) G/delta."""
    if not runs or any(not run.states_history for run in runs):
        raise ParameterError("envelope_check needs runs recorded with record_states")
    notes = []
    if len(runs) < 10:
        notes.append(f"only {len(runs)} runs averaged; expectation proxy is weak")
    if not curvature_verified:
        notes.append("curvature sandwich unverified")

    geometry = DualGeometry(weight_matrix(graph))
    v_star = optimal_dual(problem, x_star, geometry)
    n = min(len(run.states_history) for run in runs)
    measured = np.zeros(n)
    for run in runs:
        for k, (xs, qs) in enumerate(run.states_history[:n]):
            measured[k] += _q_distance(xs, qs, x_star, v_star, geometry, constants.rho, constants.r_blocks)
    measured /= len(runs)

    bound = envelope_bound(measured[0], constants.delta, constants.g_offset, n)
    slack = 1e-12 * np.maximum(bound, 1.0)
    violations = tuple(int(k) for k in np.flatnonzero(measured > bound + slack))
    tail = measured[-max(1, math.ceil(0.1 * n)) :]
    return EnvelopeReport(
        measured=measured,
        bound=bound,
        violations=violations,
        tail_mean=float(tail.mean()),
        floor=constants.floor,
        n_runs=len(runs),
        curvature_verified=curvature_verified,
        notes=tuple(notes),
    )


def envelope_rows(report: EnvelopeReport) -> list[tuple[int, float, float]]:
    return [(k, float(m), float(b)) for k, (m, b) in enumerate(zip(report.measured, report.bound))]


@dataclass(frozen=True, eq=False)
class SlopeTrace:
    slopes: np.ndarray
    window: int
    window_min_abs: float


def slope_trace(run: RunRecord) -> SlopeTrace:
    """Per-node slope sequences (iterations x nodes) and min |slope| over the final 10% of iterations."""
    if not run.slopes:
        raise ParameterError("run has no recorded slopes")
    slopes = np.array(run.slopes)
    window = max(1, math.ceil(0.1 * len(slopes)))
    return SlopeTrace(slopes, window, float(np.min(np.abs(slopes[-window:]))))


def estimate_k_bound(problem: Problem, runs: Sequence[RunRecord], factor: float = 1.5) -> float:
    """factor times the largest stacked exact-gradient norm over the recorded iterates."""
    largest = 0.0
    for run in runs:
        stacks = [xs for xs, _ in run.states_history] or [stack_x(run.final_states)]
        for xs in stacks:
            largest = max(largest, float(np.linalg.norm(problem.stacked_gradient(xs))))
    if largest == 0.0:
        raise ParameterError("no recorded iterate with a nonzero gradient")
    return factor * largest


def descriptive_alpha_floor(runs: Sequence[RunRecord]) -> float:
    """Smallest Armijo-accepted stepsize over the runs; safeguarded fallback steps are excluded."""
    accepted = [
        float(np.min(alphas[ok])) for run in runs for alphas, ok in zip(run.stepsizes, run.armijo_accepted) if ok.any()
    ]
    if not accepted:
        raise ParameterError("no accepted Armijo step in any run")
    return min(accepted)


def a_priori_alpha_floor(cfg: AlgoConfig) -> float:
    return cfg.alpha_floor
