import asyncio
import logging
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from dotenv import load_dotenv
from scipy import stats

from zoprolab import analysis
from zoprolab.errors import ConsistencyError, InfeasibleError, ParameterError, PreconditionError
from zoprolab.estimators import ThetaProbe, curvature_theta
from zoprolab.graph import WeightedGraph, complete_graph, path_graph, random_connected_graph, ring_graph
from zoprolab.harness import persistence
from zoprolab.harness.spec import (
    ACCURACY_LEVELS,
    ALGORITHMS,
    ExperimentSpec,
    ScenarioSpec,
    experiment_from_dict,
    scenario_from_dict,
)
from zoprolab.log import ScenarioLogger
from zoprolab.objectives import ObjectiveKind, Problem, make_logistic_problem, make_quadratic_problem, solve_reference
from zoprolab.solvers import AlgoConfig, RunRecord, algo_config_from_dict, run_sopro, run_zopro
from zoprolab.solvers.driver import StopRule

logger = logging.getLogger(__name__)


class Scenario(NamedTuple):
    spec: ScenarioSpec
    seed: int
    graph: WeightedGraph
    problem: Problem
    x_star: np.ndarray


def iterations_to_converge(errors: Sequence[float], tol: float, window: int) -> int | None:
    """Smallest k with errors[k..k+window] all <= tol, or None."""
    if window < 0:
        raise ParameterError(f"window must be >= 0, got {window}")
    run = 0
    for k, err in enumerate(errors):
        run = run + 1 if err <= tol else 0
        if run == window + 1:
            return k - window
    return None


def convergence_stop(tol: float, window: int) -> StopRule:
    def should_stop(record: RunRecord) -> bool:
        tail = record.avg_error[-(window + 1) :]
        return len(tail) == window + 1 and max(tail) <= tol

    return should_stop


def _build_graph(spec: ScenarioSpec, seed: int) -> WeightedGraph:
    if spec.topology == "ring":
        return ring_graph(spec.n_nodes, spec.weight_policy)
    if spec.topology == "path":
        return path_graph(spec.n_nodes, spec.weight_policy)
    if spec.topology == "complete":
        return complete_graph(spec.n_nodes, spec.weight_policy)
    return random_connected_graph(spec.n_nodes, spec.avg_degree, seed, spec.weight_policy)


def _build_problem(spec: ScenarioSpec, seed: int) -> Problem:
    if spec.kind is ObjectiveKind.QUADRATIC:
        return make_quadratic_problem(spec.n_nodes, spec.dim, seed, spec.quad_m, spec.quad_M, spec.identical)
    return make_logistic_problem(spec.n_nodes, spec.dim, spec.samples_per_node, spec.lam, seed, spec.label_noise)


def build_scenario(spec: ScenarioSpec, seed: int) -> Scenario:
    """Graph, problem and reference optimum, each drawn from its own stream of ``seed``."""
    graph_seed, problem_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(2))
    graph = _build_graph(spec, graph_seed)
    problem = _build_problem(spec, problem_seed)
    return Scenario(spec, seed, graph, problem, solve_reference(problem))


def run_single(
    scenario: Scenario,
    algo_cfg: AlgoConfig,
    algorithm: str = "zopro",
    seed: int = 0,
    out_dir: str | Path | None = None,
    should_stop: StopRule | None = None,
) -> RunRecord:
    if algorithm not in ALGORITHMS:
        raise ParameterError(f"unknown algorithm {algorithm!r}, expected one of {ALGORITHMS}")
    if algorithm == "zopro":
        record = run_zopro(scenario.problem, scenario.graph, algo_cfg, seed, scenario.x_star, should_stop)
    else:
        record = run_sopro(scenario.problem, scenario.graph, algo_cfg, scenario.x_star, seed, should_stop)
    record.metadata["scenario"] = scenario.spec.to_json()
    record.metadata["scenario_seed"] = scenario.seed

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        record.write_csv(out / "run.csv")
        persistence.write_json(out / "run.json", record.to_json())
    return record


@dataclass
class ScenarioResult:
    point: int
    scenario: int
    seed: int
    algorithm: str
    success: bool
    message: str = ""
    iterations: int | None = None
    converged: bool = False
    final_error: float | None = None
    oracle_calls: int = 0
    derivative_calls: int = 0
    wall_time: float = 0.0
    graph_digest: str = ""
    problem_digest: str = ""
    levels: dict[float, tuple[int, int, int] | None] = field(default_factory=dict)


def _levels(record: RunRecord, window: int) -> dict[float, tuple[int, int, int] | None]:
    reached = {}
    for level in ACCURACY_LEVELS:
        k = iterations_to_converge(record.avg_error, level, window)
        reached[level] = None if k is None else (k + 1, record.oracle_calls[k], record.derivative_calls[k])
    return reached


def _run_dir(out_dir: Path, point: int, scenario: int, algorithm: str) -> Path:
    return out_dir / "runs" / f"p{point:02d}-s{scenario:02d}-{algorithm}"


def execute_scenario(spec: ExperimentSpec, point: int, scenario: int, out_dir: Path) -> list[ScenarioResult]:
    """Build one scenario and run every selected algorithm on it. Failures become results."""
    seed = spec.seed_for(point, scenario)
    point_spec = spec.points()[point]
    log = ScenarioLogger(logger, f"{point_spec.tag}-s{scenario}")
    try:
        sc = build_scenario(point_spec, seed)
    except Exception as e:
        log.error("scenario construction failed: %s", e)
        return [ScenarioResult(point, scenario, seed, algo, False, str(e)) for algo in spec.algorithms]

    results = []
    for algorithm in spec.algorithms:
        stop = convergence_stop(spec.tol, spec.window) if spec.early_stop else None
        start = time.perf_counter()
        log.info("%s started", algorithm)
        try:
            record = run_single(sc, spec.algo, algorithm, seed, _run_dir(out_dir, point, scenario, algorithm), stop)
        except Exception as e:
            log.error("%s failed: %s", algorithm, e)
            results.append(
                ScenarioResult(
                    point,
                    scenario,
                    seed,
                    algorithm,
                    False,
                    f"{type(e).__name__}: {e}",
                    graph_digest=sc.graph.digest(),
                    problem_digest=sc.problem.digest(),
                )
            )
            continue
        k = iterations_to_converge(record.avg_error, spec.tol, spec.window)
        result = ScenarioResult(
            point,
            scenario,
            seed,
            algorithm,
            True,
            iterations=record.n_iterations if k is None else k + 1,
            converged=k is not None,
            final_error=record.avg_error[-1],
            oracle_calls=record.oracle_calls[-1],
            derivative_calls=record.derivative_calls[-1],
            wall_time=time.perf_counter() - start,
            graph_digest=sc.graph.digest(),
            problem_digest=sc.problem.digest(),
            levels=_levels(record, spec.window),
        )
        log.info("%s finished: %d iterations, final error %.3e", algorithm, record.n_iterations, result.final_error)
        results.append(result)
    return results


@dataclass
class MetricsRow:
    value: float | str
    algorithm: str
    scenarios: int
    converged: int
    failed: int
    mean_iterations: float
    std_iterations: float
    mean_final_error: float
    mean_oracle_calls: float
    mean_wall_time: float


METRICS_HEADER = (
    "value",
    "algorithm",
    "scenarios",
    "converged",
    "failed",
    "mean_iterations",
    "std_iterations",
    "mean_final_error",
    "mean_oracle_calls",
)
RUNS_HEADER = (
    "point",
    "scenario",
    "seed",
    "algorithm",
    "status",
    "iterations",
    "converged",
    "final_error",
    "oracle_calls",
    "derivative_calls",
    "message",
)
TIMINGS_HEADER = ("value", "algorithm", "scenarios", "mean_wall_time")
RUN_TIMINGS_HEADER = ("point", "scenario", "algorithm", "wall_time")


@dataclass
class MetricsTable:
    axis: str | None
    rows: list[MetricsRow]
    results: list[ScenarioResult]

    def series(self, algorithm: str = "zopro") -> tuple[list, list[float]]:
        picked = [r for r in self.rows if r.algorithm == algorithm]
        return [r.value for r in picked], [r.mean_iterations for r in picked]

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        persistence.write_rows(
            out / persistence.METRICS_NAME,
            METRICS_HEADER,
            (
                (
                    r.value,
                    r.algorithm,
                    r.scenarios,
                    r.converged,
                    r.failed,
                    r.mean_iterations,
                    r.std_iterations,
                    r.mean_final_error,
                    r.mean_oracle_calls,
                )
                for r in self.rows
            ),
        )
        persistence.write_rows(
            out / "runs.csv",
            RUNS_HEADER,
            (
                (
                    r.point,
                    r.scenario,
                    r.seed,
                    r.algorithm,
                    "ok" if r.success else "failed",
                    r.iterations,
                    r.converged,
                    r.final_error,
                    r.oracle_calls,
                    r.derivative_calls,
                    r.message,
                )
                for r in self.results
            ),
        )
        persistence.write_rows(
            out / persistence.TIMINGS_NAME,
            TIMINGS_HEADER,
            ((r.value, r.algorithm, r.scenarios, r.mean_wall_time) for r in self.rows),
        )
        persistence.write_rows(
            out / persistence.RUN_TIMINGS_NAME,
            RUN_TIMINGS_HEADER,
            ((r.point, r.scenario, r.algorithm, r.wall_time) for r in self.results),
        )


def _aggregate(spec: ExperimentSpec, results: list[ScenarioResult]) -> MetricsTable:
    values = spec.point_values()
    rows = []
    for point, value in enumerate(values):
        for algorithm in spec.algorithms:
            group = [r for r in results if r.point == point and r.algorithm == algorithm]
            ok = [r for r in group if r.success]
            iters = np.array([r.iterations for r in ok], dtype=float)
            nan = float("nan")
            rows.append(
                MetricsRow(
                    value=value,
                    algorithm=algorithm,
                    scenarios=len(group),
                    converged=sum(r.converged for r in ok),
                    failed=len(group) - len(ok),
                    mean_iterations=float(iters.mean()) if ok else nan,
                    std_iterations=float(iters.std()) if ok else nan,
                    mean_final_error=float(np.mean([r.final_error for r in ok])) if ok else nan,
                    mean_oracle_calls=float(np.mean([r.oracle_calls for r in ok])) if ok else nan,
                    mean_wall_time=float(np.mean([r.wall_time for r in ok])) if ok else nan,
                )
            )
    return MetricsTable(spec.axis, rows, results)


def _manifest(spec: ExperimentSpec, results: list[ScenarioResult]) -> dict:
    return {
        "spec": spec.to_json(),
        "runs": [
            {
                "point": r.point,
                "scenario": r.scenario,
                "seed": r.seed,
                "algorithm": r.algorithm,
                "status": "ok" if r.success else "failed",
                "graph_digest": r.graph_digest,
                "problem_digest": r.problem_digest,
            }
            for r in results
        ],
    }


def default_workers() -> int:
    load_dotenv()
    return max(1, int(os.getenv("ZOPROLAB_WORKERS", "1")))


async def run_experiment_async(spec: ExperimentSpec, out_dir: str | Path, workers: int | None = None) -> MetricsTable:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    semaphore = asyncio.Semaphore(workers or default_workers())

    async def one(point: int, scenario: int) -> list[ScenarioResult]:
        async with semaphore:
            return await asyncio.to_thread(execute_scenario, spec, point, scenario, out)

    n_points = len(spec.points())
    logger.info("sweep %s: %d points x %d scenarios", spec.name, n_points, spec.scenarios)
    tasks = [one(p, s) for p in range(n_points) for s in range(spec.scenarios)]
    gathered = await asyncio.gather(*tasks, return_exceptions=True)

    results: list[ScenarioResult] = []
    for (p, s), outcome in zip(((p, s) for p in range(n_points) for s in range(spec.scenarios)), gathered):
        if isinstance(outcome, BaseException):
            logger.error("scenario p%d s%d crashed: %s", p, s, outcome)
            seed = spec.seed_for(p, s)
            results.extend(ScenarioResult(p, s, seed, a, False, str(outcome)) for a in spec.algorithms)
        else:
            results.extend(outcome)

    table = _aggregate(spec, results)
    table.write(out)
    persistence.write_json(out / persistence.MANIFEST_NAME, _manifest(spec, results))
    return table


def run_experiment(spec: ExperimentSpec, out_dir: str | Path, workers: int | None = None) -> MetricsTable:
    return asyncio.run(run_experiment_async(spec, out_dir, workers))


@dataclass
class ComparisonRow:
    value: float | str
    point: int
    scenario: int
    seed: int
    algorithm: str
    level: float
    iterations: int | None
    oracle_calls: int | None
    derivative_calls: int | None
    graph_digest: str
    problem_digest: str


COMPARISON_HEADER = (
    "value",
    "point",
    "scenario",
    "seed",
    "algorithm",
    "level",
    "iterations",
    "oracle_calls",
    "derivative_calls",
    "graph_digest",
    "problem_digest",
)


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]
    metrics: MetricsTable

    def shared_scenarios(self) -> bool:
        """True when both algorithms saw identical graphs and problems in every scenario."""
        seen: dict[tuple[int, int], set[tuple[str, str]]] = {}
        for r in self.metrics.results:
            seen.setdefault((r.point, r.scenario), set()).add((r.graph_digest, r.problem_digest))
        return all(len(digests) == 1 for digests in seen.values())

    def write(self, out_dir: str | Path) -> None:
        persistence.write_rows(
            Path(out_dir) / persistence.COMPARISON_NAME,
            COMPARISON_HEADER,
            (
                (
                    r.value,
                    r.point,
                    r.scenario,
                    r.seed,
                    r.algorithm,
                    r.level,
                    r.iterations,
                    r.oracle_calls,
                    r.derivative_calls,
                    r.graph_digest,
                    r.problem_digest,
                )
                for r in self.rows
            ),
        )


def compare_algorithms(spec: ExperimentSpec, out_dir: str | Path, workers: int | None = None) -> ComparisonTable:
    """ZoPro against SoPro per scenario: iterations and queries to each accuracy level."""
    if set(spec.algorithms) != set(ALGORITHMS):
        raise ParameterError(f"comparison needs both algorithms enabled, got {spec.algorithms}")
    metrics = run_experiment(spec, out_dir, workers)
    values = spec.point_values()
    rows = []
    for r in metrics.results:
        for level in ACCURACY_LEVELS:
            hit = r.levels.get(level)
            rows.append(
                ComparisonRow(
                    values[r.point],
                    r.point,
                    r.scenario,
                    r.seed,
                    r.algorithm,
                    level,
                    *(hit if hit else (None, None, None)),
                    r.graph_digest,
                    r.problem_digest,
                )
            )
    table = ComparisonTable(rows, metrics)
    table.write(out_dir)
    return table


def replay(manifest_path: str | Path, out_dir: str | Path, workers: int | None = None) -> MetricsTable:
    """Re-run a sweep from its manifest and confirm every scenario rebuilds identically."""
    doc = persistence.read_json(manifest_path)
    spec = experiment_from_dict(doc["spec"])
    table = run_experiment(spec, out_dir, workers)
    recorded = {(r["point"], r["scenario"], r["algorithm"]): r for r in doc.get("runs", [])}
    for r in table.results:
        before = recorded.get((r.point, r.scenario, r.algorithm))
        if not (before and r.success):
            continue
        if (before["graph_digest"], before["problem_digest"]) != (r.graph_digest, r.problem_digest):
            raise ConsistencyError(f"scenario p{r.point} s{r.scenario} rebuilt with different digests")
    return table


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    return float(stats.spearmanr(xs, ys).statistic)


@dataclass
class AnalysisReport:
    theta_probe: ThetaProbe
    theta: float
    k_bound: float
    alpha_descriptive: float
    alpha_a_priori: float
    alpha_used: float
    constants: analysis.TheoremConstants | None = None
    envelope: analysis.EnvelopeReport | None = None
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "theta": self.theta,
            "theta_verified": self.theta_probe.verified,
            "theta_lower": self.theta_probe.lower,
            "theta_upper": self.theta_probe.upper,
            "theta_violations": list(self.theta_probe.violations),
            "k_bound": self.k_bound,
            "alpha_descriptive": self.alpha_descriptive,
            "alpha_a_priori": self.alpha_a_priori,
            "alpha_used": self.alpha_used,
            "error": self.error,
        }


def _probe_points(run: RunRecord, snapshots: int) -> list[np.ndarray]:
    history = run.states_history
    picks = np.unique(np.linspace(0, len(history) - 1, snapshots).astype(int))
    return [history[k][0] for k in picks]


def analyze_run(run_dir: str | Path, seeds: int = 10, snapshots: int = 5) -> AnalysisReport:
    """Theorem constants and envelope report for the scenario behind a recorded run.

    The scenario is rebuilt from ``run.json`` and re-run for ``seeds`` consecutive seeds with
    state recording on; results land next to the run as constants.json, envelope.json and
    envelope.csv.
    """
    run_dir = Path(run_dir)
    doc = persistence.read_json(run_dir / "run.json")
    meta = doc["metadata"]
    algorithm = meta["algorithm"]
    sc = build_scenario(scenario_from_dict(meta["scenario"]), meta["scenario_seed"])
    base_cfg = algo_config_from_dict(meta["config"])
    cfg = replace(base_cfg, record_states=True, max_iterations=max(1, doc["iterations"]))
    log = ScenarioLogger(logger, run_dir.name)

    runs = [run_single(sc, cfg, algorithm, meta["seed"] + s) for s in range(seeds)]
    exact = algorithm == "sopro"
    if exact:
        probe = ThetaProbe(1.0, 1.0, 1.0, 0)
        theta = 1.0
    else:
        probe = curvature_theta(sc.problem, _probe_points(runs[0], snapshots), cfg.smoothing)
        theta = probe.theta if probe.verified else cfg.d_policy.theta
        if not probe.verified:
            log.warning("curvature sandwich not verified: %s", "; ".join(probe.violations))

    k_bound = analysis.estimate_k_bound(sc.problem, runs)
    alpha_desc = analysis.descriptive_alpha_floor(runs)
    # D was chosen at this floor and no step of either algorithm falls below it.
    alpha_used = cfg.d_policy.alpha_floor if exact else cfg.alpha_floor
    report = AnalysisReport(probe, theta, k_bound, alpha_desc, analysis.a_priori_alpha_floor(cfg), alpha_used)

    d_mats = [state.d_mat for state in runs[0].final_states]
    try:
        constants = analysis.theorem_constants(
            sc.problem, sc.graph, cfg, d_mats, theta, alpha_used, k_bound, exact_oracle=exact
        )
    except (PreconditionError, InfeasibleError) as e:
        log.warning("theorem constants unavailable: %s", e)
        report.error = f"{type(e).__name__}: {e}"
        persistence.write_json(run_dir / "constants.json", {"error": report.error, **report.to_json()})
        return report

    envelope = analysis.envelope_check(runs, constants, sc.problem, sc.graph, sc.x_star, probe.verified)
    report.constants, report.envelope = constants, envelope
    persistence.write_json(run_dir / "constants.json", {**constants.to_json(), "probe": report.to_json()})
    persistence.write_json(run_dir / "envelope.json", envelope.to_json())
    persistence.write_rows(run_dir / "envelope.csv", ("k", "measured", "bound"), analysis.envelope_rows(envelope))
    log.info(
        "delta=%.4g G/delta=%.4g violations=%.1f%%", constants.delta, constants.floor, 100 * envelope.violation_fraction
    )
    return report
