import logging
from dataclasses import replace
from typing import Callable, Sequence

import numpy as np

from zoprolab.errors import ConditioningError, DescentFailure, NumericError, StepsizeFloor
from zoprolab.estimators import CountingOracle, Estimates, sample_directions, zeroth_order_estimates
from zoprolab.graph import WeightedGraph
from zoprolab.objectives import NodeObjective, Problem
from zoprolab.simnet import SyncNetwork
from zoprolab.solvers.config import AlgoConfig, SlopeMode
from zoprolab.solvers.driver import (
    RoundReport,
    StopRule,
    as_network,
    drive,
    exchange_and_update,
    initial_point,
    initial_states,
    proximal_blocks,
)
from zoprolab.solvers.linesearch import armijo_stepsize
from zoprolab.solvers.proximal import ensure_positive, search_direction
from zoprolab.solvers.state import NodeState, RunRecord

logger = logging.getLogger(__name__)

# (node, objective, oracle, x, round) -> estimates; lets tests substitute exact derivatives.
Estimator = Callable[[int, NodeObjective, CountingOracle, np.ndarray, int], Estimates]


def smoothing_estimator(cfg: AlgoConfig) -> Estimator:
    def estimate(node: int, obj: NodeObjective, oracle: CountingOracle, x: np.ndarray, round: int) -> Estimates:
        dirs = sample_directions(cfg.smoothing, obj.dim, round, node)
        return zeroth_order_estimates(oracle, x, dirs, cfg.smoothing.mu)

    return estimate


Merit = Callable[[np.ndarray], float]


def local_merit(oracle: CountingOracle, linear: np.ndarray) -> Merit:
    """phi_i(x) = f_i(x) + linear^T x with linear = q_i + rho y_i, through the node's counting oracle."""

    def merit(x: np.ndarray) -> float:
        return float(oracle(x)) + float(linear @ x)

    return merit


def _slope(cfg: AlgoConfig, merit: Merit, est: Estimates, linear: np.ndarray, x: np.ndarray, d: np.ndarray) -> float:
    if cfg.slope_mode is SlopeMode.FINITE_DIFFERENCE:
        return (merit(x + cfg.fd_epsilon * d) - (est.f_x + float(linear @ x))) / cfg.fd_epsilon
    return float((est.grad + linear) @ d)


def _stepsize(
    cfg: AlgoConfig, merit: Merit, x: np.ndarray, direction: np.ndarray, slope: float, phi_x: float, where: str
) -> tuple[float, bool]:
    try:
        alpha, _ = armijo_stepsize(merit, x, direction, slope, cfg.c_armijo, cfg.shrink, cfg.max_backtracks, f_x=phi_x)
        return alpha, True
    except DescentFailure:
        logger.debug("%s: non-descent slope %.3e, taking safeguarded step", where, slope)
    except StepsizeFloor as e:
        logger.debug("%s: backtracking exhausted after %d probes", where, e.probes)
    return cfg.alpha_safeguard, False


def zopro_round(
    states: list[NodeState],
    problem: Problem,
    graph: WeightedGraph | SyncNetwork,
    cfg: AlgoConfig,
    round: int,
    oracles: Sequence[CountingOracle] | None = None,
    estimator: Estimator | None = None,
) -> tuple[list[NodeState], RoundReport]:
    """One synchronous ZoPro round over every node.

    Each node estimates g and H from value queries, solves the proximal system for its
    direction, backtracks on its local merit f_i + (q_i + rho y_i)^T x, and steps; the
    exchange then refreshes y and advances q.
    """
    network = as_network(graph)
    oracles = oracles or [CountingOracle(obj.value, obj.values) for obj in problem.nodes]
    estimator = estimator or smoothing_estimator(cfg)
    calls_before = sum(o.calls for o in oracles)

    n = problem.n_nodes
    xs: list[np.ndarray] = []
    stepsizes, slopes = np.empty(n), np.empty(n)
    accepted = np.zeros(n, dtype=bool)
    shifts = 0
    for i, (state, obj) in enumerate(zip(states, problem.nodes)):
        where = f"node {i} round {round}"
        oracle = oracles[i]
        try:
            est = estimator(i, obj, oracle, state.x, round)
            _, shift = ensure_positive(est.hess + state.d_mat, cfg.positivity_floor)
            if shift:
                shifts += 1
                logger.warning("%s: H + D shifted by %.3e to stay positive definite", where, shift)
            d_mat = state.d_mat + shift * np.eye(problem.dim)
            direction = search_direction(est.hess, d_mat, est.grad, state.y, state.q, cfg.rho)
            linear = state.q + cfg.rho * state.y
            merit = local_merit(oracle, linear)
            slope = _slope(cfg, merit, est, linear, state.x, direction)
        except ConditioningError as e:
            raise ConditioningError(f"{where}: {e}", e.lambda_min, node=i, round_=round) from e
        except NumericError as e:
            raise NumericError(f"{where}: {e}", e.point) from e

        alpha, ok = _stepsize(cfg, merit, state.x, direction, slope, est.f_x + float(linear @ state.x), where)
        xs.append(state.x + alpha * direction)
        stepsizes[i], slopes[i], accepted[i] = alpha, slope, ok

    updated = exchange_and_update(states, xs, stepsizes, network, cfg.rho, round + 1)
    report = RoundReport(
        stepsizes=stepsizes,
        slopes=slopes,
        accepted=accepted,
        oracle_calls=sum(o.calls for o in oracles) - calls_before,
        shifts=shifts,
    )
    return updated, report


def run_stream_seed(base: int, seed: int) -> int:
    """Direction-stream seed for one run, mixing the config seed with the run seed."""
    return int(np.random.SeedSequence([base, seed]).generate_state(1)[0])


def run_zopro(
    problem: Problem,
    graph: WeightedGraph,
    cfg: AlgoConfig | None = None,
    seed: int = 0,
    x_star: np.ndarray | None = None,
    should_stop: StopRule | None = None,
    estimator: Estimator | None = None,
) -> RunRecord:
    cfg = cfg or AlgoConfig()
    round_cfg = replace(cfg, smoothing=replace(cfg.smoothing, rng_seed=run_stream_seed(cfg.smoothing.rng_seed, seed)))
    network = SyncNetwork(graph, keep_trace=cfg.keep_trace)
    d_mats = proximal_blocks(problem, network, cfg)
    states = initial_states(initial_point(problem, seed, cfg.init_scale), network, d_mats)
    oracles = [CountingOracle(obj.value, obj.values) for obj in problem.nodes]

    def step(current: list[NodeState], k: int) -> tuple[list[NodeState], RoundReport]:
        return zopro_round(current, problem, network, round_cfg, k, oracles, estimator)

    return drive("zopro", problem, network, cfg, seed, states, step, x_star, should_stop)
