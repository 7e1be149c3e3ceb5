"""Pieces shared by the ZoPro and SoPro loops: initialization, the exchange barrier and recording."""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from zoprolab.errors import ConsistencyError
from zoprolab.graph import WeightedGraph, kron_apply, spectral_summary
from zoprolab.objectives import Problem, solve_reference
from zoprolab.simnet import SyncNetwork
from zoprolab.solvers.config import AlgoConfig
from zoprolab.solvers.proximal import choose_D
from zoprolab.solvers.state import NodeState, RunRecord, stack_q, stack_x, stack_y

logger = logging.getLogger(__name__)

DUAL_SUM_RTOL = 1e-9
STENCIL_RTOL = 1e-12

StopRule = Callable[[RunRecord], bool]


@dataclass(frozen=True)
class RoundReport:
    stepsizes: np.ndarray
    slopes: np.ndarray
    accepted: np.ndarray
    oracle_calls: int = 0
    derivative_calls: int = 0
    probes: int = 0
    shifts: int = 0


RoundFn = Callable[[list[NodeState], int], tuple[list[NodeState], RoundReport]]


def as_network(graph: WeightedGraph | SyncNetwork) -> SyncNetwork:
    if isinstance(graph, SyncNetwork):
        return graph
    return SyncNetwork(graph, keep_trace=False)


def initial_point(problem: Problem, seed: int, scale: float = 1.0) -> np.ndarray:
    """Seeded i.i.d. Gaussian x^0 of shape (N, d), shared by every algorithm run with ``seed``."""
    rng = np.random.default_rng([seed, 0])
    return scale * rng.standard_normal((problem.n_nodes, problem.dim))


def proximal_blocks(
    problem: Problem,
    network: SyncNetwork,
    cfg: AlgoConfig,
    theta: float | None = None,
    alpha_floor: float | None = None,
) -> list[np.ndarray]:
    """D_i at ``alpha_floor``, by default the config's a priori floor ``cfg.alpha_floor``."""
    spectrum = spectral_summary(network.p_matrix)
    alpha_floor = cfg.alpha_floor if alpha_floor is None else alpha_floor
    return choose_D(
        cfg.d_policy, problem.bounds(), cfg.rho, spectrum.lambda_max, problem.dim, theta=theta, alpha_floor=alpha_floor
    )


def initial_states(xs: np.ndarray, network: SyncNetwork, d_mats: list[np.ndarray]) -> list[NodeState]:
    """q^0 = 0 and y^0 from one initial exchange."""
    views, _ = network.exchange(list(xs), 0)
    return [
        NodeState(x=np.array(xs[i]), q=np.zeros_like(xs[i]), y=network.stencil(i, xs[i], views[i]), d_mat=d_mats[i])
        for i in range(network.n_nodes)
    ]


def check_dual_sum(states: list[NodeState]) -> None:
    qs = stack_q(states)
    drift = float(np.linalg.norm(qs.sum(axis=0)))
    if drift > DUAL_SUM_RTOL * max(float(np.linalg.norm(qs)), 1.0):
        raise ConsistencyError(f"dual variables left the consensus complement: |sum q_i| = {drift:.3e}")


def check_stencil(states: list[NodeState], network: SyncNetwork) -> None:
    """Every y_i must equal row i of (P kron I) x, i.e. the stencil saw the current neighbor values."""
    xs = stack_x(states)
    expected = kron_apply(network.p_matrix, xs)
    gap = float(np.max(np.abs(stack_y(states) - expected)))
    scale = float(np.abs(network.p_matrix).sum(axis=1).max()) * max(float(np.max(np.abs(xs))), 1.0)
    if gap > STENCIL_RTOL * scale:
        raise ConsistencyError(f"neighbor stencil disagrees with the weight matrix by {gap:.3e}")


def exchange_and_update(
    states: list[NodeState],
    xs: list[np.ndarray],
    stepsizes: np.ndarray,
    network: SyncNetwork,
    rho: float,
    round: int,
) -> list[NodeState]:
    """Exchange the new primal values, then y_i from the neighbor view and q_i += rho y_i."""
    views, _ = network.exchange(xs, round)
    updated = []
    for i, state in enumerate(states):
        y = network.stencil(i, xs[i], views[i])
        updated.append(NodeState(xs[i], state.q + rho * y, y, state.d_mat, float(stepsizes[i])))
    check_stencil(updated, network)
    check_dual_sum(updated)
    return updated


def drive(
    algorithm: str,
    problem: Problem,
    network: SyncNetwork,
    cfg: AlgoConfig,
    seed: int,
    states: list[NodeState],
    step: RoundFn,
    x_star: np.ndarray | None = None,
    should_stop: StopRule | None = None,
) -> RunRecord:
    if x_star is None:
        x_star = solve_reference(problem)
    spectrum = spectral_summary(network.p_matrix)
    record = RunRecord(
        algorithm,
        metadata={
            "algorithm": algorithm,
            "seed": seed,
            "config": cfg.to_json(),
            "graph_digest": network.graph.digest(),
            "problem_digest": problem.digest(),
            "problem_meta": dict(problem.meta),
            "n_nodes": problem.n_nodes,
            "dim": problem.dim,
            "tau": float(states[0].d_mat[0, 0]),
            "lambda_w": spectrum.lambda_w,
            "lambda_max": spectrum.lambda_max,
        },
    )
    record.initial = record.observe(states, x_star, problem.local_values(stack_x(states)))
    if cfg.record_states:
        record.keep_state(states)

    oracle_calls = derivative_calls = 0
    for k in range(cfg.max_iterations):
        states, report = step(states, k)
        oracle_calls += report.oracle_calls
        derivative_calls += report.derivative_calls
        record.positivity_shifts += report.shifts
        metrics = record.observe(states, x_star, problem.local_values(stack_x(states)))
        record.append(metrics, report.stepsizes, report.slopes, report.accepted, oracle_calls, derivative_calls)
        if cfg.record_states:
            record.keep_state(states)
        if should_stop is not None and should_stop(record):
            logger.debug("%s stopped early after %d iterations", algorithm, k + 1)
            break

    record.final_states = states
    if network.keep_trace:
        record.trace = network.trace
    return record
