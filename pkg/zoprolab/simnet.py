import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from zoprolab.graph import WeightedGraph, weight_matrix


@dataclass(frozen=True)
class Delivery:
    round: int
    sender: int
    receiver: int
    digest: str
    payload: tuple[float, ...] | None = None


@dataclass(frozen=True)
class ExchangeTrace:
    records: tuple[Delivery, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def __add__(self, other: "ExchangeTrace") -> "ExchangeTrace":
        return ExchangeTrace(self.records + other.records)

    def rounds(self) -> list[int]:
        return sorted({r.round for r in self.records})


@dataclass(frozen=True, eq=False)
class NeighborView:
    node: int
    values: Mapping[int, np.ndarray]


def payload_digest(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x, dtype=float).tobytes()).hexdigest()[:16]


def _primal(state) -> np.ndarray:
    return np.asarray(getattr(state, "x", state), dtype=float)


def exchange(
    states: Sequence,
    graph: WeightedGraph,
    round: int,
    trace_payloads: bool = False,
) -> tuple[list[NeighborView], ExchangeTrace]:
    """Deliver every node's primal value to each of its neighbors.

    ``states`` holds either NodeState objects or bare primal vectors, indexed by node id.
    """
    xs = [_primal(s) for s in states]
    views: list[NeighborView] = []
    records: list[Delivery] = []
    for i in range(graph.n_nodes):
        received: dict[int, np.ndarray] = {}
        for j in graph.neighbors(i):
            payload = xs[j].copy()
            payload.flags.writeable = False
            received[j] = payload
            records.append(
                Delivery(round, j, i, payload_digest(payload), tuple(payload.tolist()) if trace_payloads else None)
            )
        views.append(NeighborView(i, MappingProxyType(received)))
    return views, ExchangeTrace(tuple(records))


def stencil(graph: WeightedGraph, i: int, x_i: np.ndarray, view: NeighborView) -> np.ndarray:
    """y_i = sum_j p_ij (x_i - x_j) over the neighbor view."""
    y = np.zeros_like(np.asarray(x_i, dtype=float))
    for j, x_j in view.values.items():
        y += graph.weight(i, j) * (x_i - x_j)
    return y


def locality_audit(trace: ExchangeTrace, graph: WeightedGraph) -> list[Delivery]:
    return [r for r in trace.records if not graph.has_edge(r.sender, r.receiver)]


class SyncNetwork:
    """Round-synchronous, loss-free message passing over a fixed graph."""

    def __init__(self, graph: WeightedGraph, trace_payloads: bool = False, keep_trace: bool = True):
        self.graph = graph
        self.p_matrix = weight_matrix(graph)
        self.trace_payloads = trace_payloads
        self.keep_trace = keep_trace
        self._records: list[Delivery] = []

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    def exchange(self, states: Sequence, round: int) -> tuple[list[NeighborView], ExchangeTrace]:
        views, trace = exchange(states, self.graph, round, self.trace_payloads)
        if self.keep_trace:
            self._records.extend(trace.records)
        return views, trace

    def stencil(self, i: int, x_i: np.ndarray, view: NeighborView) -> np.ndarray:
        return stencil(self.graph, i, x_i, view)

    def auxiliary(self, states: Sequence, views: Sequence[NeighborView]) -> np.ndarray:
        """Stack of every node's y_i computed from its own view."""
        return np.array([self.stencil(i, _primal(s), views[i]) for i, s in enumerate(states)])

    @property
    def trace(self) -> ExchangeTrace:
        return ExchangeTrace(tuple(self._records))

    def audit(self) -> list[Delivery]:
        return locality_audit(self.trace, self.graph)


def write_trace_jsonl(trace: ExchangeTrace, path: str | Path) -> None:
    with open(path, "w") as f:
        for record in trace.records:
            f.write(json.dumps(asdict(record), sort_keys=True) + "\n")


def read_trace_jsonl(path: str | Path) -> ExchangeTrace:
    records = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            doc = json.loads(line)
            payload = doc.get("payload")
            records.append(
                Delivery(
                    doc["round"], doc["sender"], doc["receiver"], doc["digest"], tuple(payload) if payload else None
                )
            )
    return ExchangeTrace(tuple(records))
