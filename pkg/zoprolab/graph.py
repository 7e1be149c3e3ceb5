import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import networkx as nx
import numpy as np
from scipy import linalg

from zoprolab.errors import ParameterError, SpectralError

WeightPolicy = Literal["uniform", "metropolis"]
WEIGHT_POLICIES: tuple[str, ...] = ("uniform", "metropolis")

# Eigenvalues at or below ZERO_EIG_RTOL * lambda_max count as the null space.
ZERO_EIG_RTOL = 1e-9


@dataclass(frozen=True)
class WeightedGraph:
    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]
    policy: str = "uniform"

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ParameterError(f"graph needs at least 2 nodes, got {self.n_nodes}")
        if len(self.edges) != len(self.weights):
            raise ParameterError("edges and weights differ in length")
        seen: set[tuple[int, int]] = set()
        for (i, j), w in zip(self.edges, self.weights):
            if i == j:
                raise ParameterError(f"self-loop at node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ParameterError(f"edge ({i}, {j}) out of range for {self.n_nodes} nodes")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ParameterError(f"duplicate edge {key}")
            seen.add(key)
            if not w > 0:
                raise ParameterError(f"edge {key} has non-positive weight {w}")
        if not nx.is_connected(self.to_networkx()):
            raise ParameterError("graph is not connected")

    @cached_property
    def _adjacency(self) -> dict[int, dict[int, float]]:
        adj: dict[int, dict[int, float]] = {i: {} for i in range(self.n_nodes)}
        for (i, j), w in zip(self.edges, self.weights):
            adj[i][j] = w
            adj[j][i] = w
        return adj

    def neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(self._adjacency[i]))

    def weight(self, i: int, j: int) -> float:
        return self._adjacency[i][j]

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._adjacency.get(i, {})

    def degree(self, i: int) -> int:
        return len(self._adjacency[i])

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_nodes))
        g.add_weighted_edges_from((i, j, w) for (i, j), w in zip(self.edges, self.weights))
        return g

    def to_json(self) -> dict:
        return {
            "n": self.n_nodes,
            "edges": [[i, j, w] for (i, j), w in zip(self.edges, self.weights)],
            "policy": self.policy,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class SpectralSummary:
    lambda_w: float
    lambda_max: float
    eigenvalues: tuple[float, ...]


def _policy_weights(edges: list[tuple[int, int]], n: int, policy: str) -> list[float]:
    if policy == "uniform":
        return [1.0] * len(edges)
    if policy == "metropolis":
        deg = np.zeros(n, dtype=int)
        for i, j in edges:
            deg[i] += 1
            deg[j] += 1
        return [1.0 / (1.0 + max(deg[i], deg[j])) for i, j in edges]
    raise ParameterError(f"unknown weight policy {policy!r}, expected one of {WEIGHT_POLICIES}")


def _from_edge_list(n: int, edges: list[tuple[int, int]], policy: str) -> WeightedGraph:
    edges = sorted((min(i, j), max(i, j)) for i, j in edges)
    return WeightedGraph(n, tuple(edges), tuple(_policy_weights(edges, n, policy)), policy)


def random_connected_graph(n: int, avg_degree: float, seed: int, policy: str = "uniform") -> WeightedGraph:
    """Uniform random spanning tree plus uniformly chosen extra edges.

    The edge count is floor(n * avg_degree / 2), so the average degree is met exactly
    whenever that product is even.
    """
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    n_edges = int(np.floor(n * avg_degree / 2))
    max_edges = n * (n - 1) // 2
    if not (n - 1 <= n_edges <= max_edges):
        raise ParameterError(
            f"average degree {avg_degree} infeasible for n={n}: {n_edges} edges not in [{n - 1}, {max_edges}]"
        )

    rng = np.random.default_rng(seed)
    if n == 2:
        tree_edges = [(0, 1)]
    else:
        prufer = rng.integers(0, n, size=n - 2).tolist()
        tree_edges = [tuple(sorted(e)) for e in nx.from_prufer_sequence(prufer).edges()]

    present = set(tree_edges)
    candidates = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in present]
    n_extra = n_edges - len(tree_edges)
    picked = rng.choice(len(candidates), size=n_extra, replace=False) if n_extra else []
    edges = tree_edges + [candidates[k] for k in sorted(picked)]
    return _from_edge_list(n, edges, policy)


def ring_graph(n: int, policy: str = "uniform") -> WeightedGraph:
    if n < 3:
        return path_graph(n, policy)
    return _from_edge_list(n, list(nx.cycle_graph(n).edges()), policy)


def path_graph(n: int, policy: str = "uniform") -> WeightedGraph:
    return _from_edge_list(n, list(nx.path_graph(n).edges()), policy)


def complete_graph(n: int, policy: str = "uniform") -> WeightedGraph:
    return _from_edge_list(n, list(nx.complete_graph(n).edges()), policy)


def with_weights(g: WeightedGraph, policy: str) -> WeightedGraph:
    return _from_edge_list(g.n_nodes, list(g.edges), policy)


def weight_matrix(g: WeightedGraph) -> np.ndarray:
    """Consensus penalty matrix P: weighted degree on the diagonal, -p_ij off it."""
    p = np.zeros((g.n_nodes, g.n_nodes))
    for (i, j), w in zip(g.edges, g.weights):
        p[i, j] = p[j, i] = -w
        p[i, i] += w
        p[j, j] += w
    p.flags.writeable = False
    return p


def spectral_summary(p: np.ndarray) -> SpectralSummary:
    # W = P kron I_d has the spectrum of P with multiplicity d, so P suffices.
    eigs = linalg.eigvalsh(p)
    lambda_max = float(eigs[-1])
    if not lambda_max > 0:
        raise SpectralError("weight matrix has no positive eigenvalue")
    nonzero = eigs[eigs > ZERO_EIG_RTOL * lambda_max]
    if nonzero.size == 0:
        raise SpectralError("no eigenvalue above the zero threshold")
    return SpectralSummary(float(nonzero[0]), lambda_max, tuple(float(e) for e in eigs))


def kron_apply(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(P kron I_d) applied to the node-major stack x of shape (N, d)."""
    return p @ x


def graph_to_json(g: WeightedGraph) -> dict:
    return g.to_json()


def graph_from_json(doc: dict) -> WeightedGraph:
    edges, weights = [], []
    for i, j, w in doc["edges"]:
        edges.append((int(min(i, j)), int(max(i, j))))
        weights.append(float(w))
    return WeightedGraph(int(doc["n"]), tuple(edges), tuple(weights), doc.get("policy", "uniform"))
