import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from zoprolab.simnet import ExchangeTrace

RUN_CSV_HEADER = ("iter", "avg_error", "consensus_residual", "objective", "min_alpha", "max_alpha", "oracle_calls")


@dataclass(frozen=True, eq=False)
class NodeState:
    x: np.ndarray
    q: np.ndarray
    y: np.ndarray
    d_mat: np.ndarray
    alpha_last: float = 1.0


def stack_x(states: list[NodeState]) -> np.ndarray:
    return np.array([s.x for s in states])


def stack_q(states: list[NodeState]) -> np.ndarray:
    return np.array([s.q for s in states])


def stack_y(states: list[NodeState]) -> np.ndarray:
    return np.array([s.y for s in states])


def fmt(v: float) -> str:
    return format(float(v), ".17g")


@dataclass
class RunRecord:
    algorithm: str
    metadata: dict = field(default_factory=dict)
    avg_error: list[float] = field(default_factory=list)
    consensus_residual: list[float] = field(default_factory=list)
    objective_value: list[float] = field(default_factory=list)
    min_stepsize: list[float] = field(default_factory=list)
    max_stepsize: list[float] = field(default_factory=list)
    oracle_calls: list[int] = field(default_factory=list)
    derivative_calls: list[int] = field(default_factory=list)
    slopes: list[np.ndarray] = field(default_factory=list)
    stepsizes: list[np.ndarray] = field(default_factory=list)
    armijo_accepted: list[np.ndarray] = field(default_factory=list)
    positivity_shifts: int = 0
    initial: dict = field(default_factory=dict)
    states_history: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    y_history: list[np.ndarray] = field(default_factory=list)
    final_states: list[NodeState] = field(default_factory=list)
    trace: ExchangeTrace | None = None

    @property
    def n_iterations(self) -> int:
        return len(self.avg_error)

    def observe(self, states: list[NodeState], x_star: np.ndarray, local_values: np.ndarray) -> dict:
        xs = stack_x(states)
        return {
            "avg_error": float(np.mean(np.sum((xs - x_star) ** 2, axis=1))),
            "consensus_residual": float(np.linalg.norm(stack_y(states))),
            "objective": float(np.sum(local_values)),
        }

    def append(
        self,
        metrics: dict,
        stepsizes: np.ndarray,
        slopes: np.ndarray,
        accepted: np.ndarray,
        oracle_calls: int,
        derivative_calls: int,
    ) -> None:
        self.avg_error.append(metrics["avg_error"])
        self.consensus_residual.append(metrics["consensus_residual"])
        self.objective_value.append(metrics["objective"])
        self.min_stepsize.append(float(np.min(stepsizes)))
        self.max_stepsize.append(float(np.max(stepsizes)))
        self.oracle_calls.append(int(oracle_calls))
        self.derivative_calls.append(int(derivative_calls))
        self.stepsizes.append(np.asarray(stepsizes, dtype=float))
        self.slopes.append(np.asarray(slopes, dtype=float))
        self.armijo_accepted.append(np.asarray(accepted, dtype=bool))

    def keep_state(self, states: list[NodeState]) -> None:
        self.states_history.append((stack_x(states), stack_q(states)))
        self.y_history.append(stack_y(states))

    def rows(self) -> list[tuple[str, ...]]:
        return [
            (
                str(k + 1),
                fmt(self.avg_error[k]),
                fmt(self.consensus_residual[k]),
                fmt(self.objective_value[k]),
                fmt(self.min_stepsize[k]),
                fmt(self.max_stepsize[k]),
                str(self.oracle_calls[k]),
            )
            for k in range(self.n_iterations)
        ]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(RUN_CSV_HEADER)
            writer.writerows(self.rows())

    def to_json(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "metadata": self.metadata,
            "iterations": self.n_iterations,
            "initial": self.initial,
            "final_avg_error": self.avg_error[-1] if self.avg_error else self.initial.get("avg_error"),
            "positivity_shifts": self.positivity_shifts,
            "oracle_calls": self.oracle_calls[-1] if self.oracle_calls else 0,
            "derivative_calls": self.derivative_calls[-1] if self.derivative_calls else 0,
            "final_x": [s.x.tolist() for s in self.final_states],
            "final_q": [s.q.tolist() for s in self.final_states],
        }
