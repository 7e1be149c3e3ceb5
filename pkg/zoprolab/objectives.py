import hashlib
import json
from dataclasses import dataclass, field
from enum import StrEnum
from typing import ClassVar, Protocol

import numpy as np
from scipy import linalg
from scipy.special import expit

from zoprolab.errors import ParameterError, SolverError


class ObjectiveKind(StrEnum):
    LOGISTIC = "logistic"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class ConvexityBounds:
    m: float
    M: float


class NodeObjective(Protocol):
    kind: ClassVar[ObjectiveKind]

    @property
    def dim(self) -> int: ...

    def value(self, x: np.ndarray) -> float: ...

    def values(self, xs: np.ndarray) -> np.ndarray: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def hessian(self, x: np.ndarray) -> np.ndarray: ...

    def convexity_bounds(self) -> ConvexityBounds: ...

    def to_json(self) -> dict: ...


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True, ndmin=ndim)
    arr.flags.writeable = False
    return arr


def _check_dim(x: np.ndarray, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise ParameterError(f"expected a vector of dimension {d}, got shape {x.shape}")
    return x


def _check_stack(xs: np.ndarray, d: int) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != d:
        raise ParameterError(f"expected a (k, {d}) stack of points, got shape {xs.shape}")
    return xs


def softplus(z: np.ndarray) -> np.ndarray:
    """log(1 + exp(z)) without overflow for large |z|."""
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)


@dataclass(frozen=True, eq=False)
class LogisticObjective:
    """(lam / 2N) ||x||^2 + sum_l log(1 + exp(-v_l u_l^T x))."""

    kind: ClassVar[ObjectiveKind] = ObjectiveKind.LOGISTIC

    features: np.ndarray
    labels: np.ndarray
    lam: float
    n_nodes: int = 1

    def __post_init__(self):
        features = _frozen(self.features, 2)
        labels = _frozen(self.labels, 1)
        if labels.shape[0] != features.shape[0]:
            raise ParameterError("one label per sample required")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ParameterError("logistic labels must be -1 or +1")
        if self.lam < 0 or self.n_nodes < 1:
            raise ParameterError(f"invalid regularization lam={self.lam}, N={self.n_nodes}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def reg(self) -> float:
        return self.lam / self.n_nodes

    def _margins(self, x: np.ndarray) -> np.ndarray:
        return self.labels * (self.features @ x)

    def value(self, x: np.ndarray) -> float:
        x = _check_dim(x, self.dim)
        z = self._margins(x)
        return float(0.5 * self.reg * x @ x + softplus(-z).sum())

    def values(self, xs: np.ndarray) -> np.ndarray:
        """Row-wise value over a (k, d) stack of points."""
        xs = _check_stack(xs, self.dim)
        z = (xs @ self.features.T) * self.labels
        return 0.5 * self.reg * np.sum(xs * xs, axis=1) + softplus(-z).sum(axis=1)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = _check_dim(x, self.dim)
        z = self._margins(x)
        return self.reg * x - self.features.T @ (self.labels * expit(-z))

    def hessian(self, x: np.ndarray) -> np.ndarray:
        s = expit(self._margins(_check_dim(x, self.dim)))
        curvature = s * (1.0 - s)
        return self.reg * np.eye(self.dim) + (self.features.T * curvature) @ self.features

    def convexity_bounds(self) -> ConvexityBounds:
        gram_max = linalg.eigvalsh(self.features.T @ self.features)[-1] if len(self.labels) else 0.0
        return ConvexityBounds(self.reg, self.reg + 0.25 * float(gram_max))

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
            "lam": self.lam,
            "n_nodes": self.n_nodes,
        }


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """1/2 (x - c)^T A (x - c) with A symmetric positive definite."""

    kind: ClassVar[ObjectiveKind] = ObjectiveKind.QUADRATIC

    matrix: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        a = _frozen(self.matrix, 2)
        c = _frozen(self.center, 1)
        if a.shape != (c.shape[0], c.shape[0]):
            raise ParameterError(f"matrix shape {a.shape} does not match center of length {c.shape[0]}")
        if not np.allclose(a, a.T, rtol=0, atol=1e-12):
            raise ParameterError("quadratic matrix must be symmetric")
        if linalg.eigvalsh(a)[0] <= 0:
            raise ParameterError("quadratic matrix must be positive definite")
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def value(self, x: np.ndarray) -> float:
        r = _check_dim(x, self.dim) - self.center
        return float(0.5 * r @ self.matrix @ r)

    def values(self, xs: np.ndarray) -> np.ndarray:
        r = _check_stack(xs, self.dim) - self.center
        return 0.5 * np.einsum("ki,ij,kj->k", r, self.matrix, r)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ (_check_dim(x, self.dim) - self.center)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        _check_dim(x, self.dim)
        return np.array(self.matrix)

    def convexity_bounds(self) -> ConvexityBounds:
        eigs = linalg.eigvalsh(self.matrix)
        return ConvexityBounds(float(eigs[0]), float(eigs[-1]))

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "matrix": self.matrix.tolist(), "center": self.center.tolist()}


def value(obj: NodeObjective, x: np.ndarray) -> float:
    return obj.value(x)


def exact_gradient(obj: NodeObjective, x: np.ndarray) -> np.ndarray:
    return obj.gradient(x)


def exact_hessian(obj: NodeObjective, x: np.ndarray) -> np.ndarray:
    return obj.hessian(x)


def convexity_bounds(obj: NodeObjective) -> ConvexityBounds:
    return obj.convexity_bounds()


def objective_from_json(doc: dict) -> NodeObjective:
    kind = ObjectiveKind(doc["kind"])
    if kind is ObjectiveKind.LOGISTIC:
        return LogisticObjective(np.array(doc["features"]), np.array(doc["labels"]), doc["lam"], doc["n_nodes"])
    return QuadraticObjective(np.array(doc["matrix"]), np.array(doc["center"]))


@dataclass(frozen=True, eq=False)
class Problem:
    nodes: tuple[NodeObjective, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if len(self.nodes) < 2:
            raise ParameterError(f"a problem needs at least 2 nodes, got {len(self.nodes)}")
        dims = {node.dim for node in self.nodes}
        if len(dims) != 1:
            raise ParameterError(f"nodes disagree on dimension: {sorted(dims)}")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def dim(self) -> int:
        return self.nodes[0].dim

    def total_value(self, x: np.ndarray) -> float:
        return float(sum(node.value(x) for node in self.nodes))

    def total_gradient(self, x: np.ndarray) -> np.ndarray:
        return np.sum([node.gradient(x) for node in self.nodes], axis=0)

    def total_hessian(self, x: np.ndarray) -> np.ndarray:
        return np.sum([node.hessian(x) for node in self.nodes], axis=0)

    def stacked_gradient(self, xs: np.ndarray) -> np.ndarray:
        """Rows are grad f_i(x_i); xs has shape (N, d)."""
        return np.array([node.gradient(x) for node, x in zip(self.nodes, xs)])

    def local_values(self, xs: np.ndarray) -> np.ndarray:
        return np.array([node.value(x) for node, x in zip(self.nodes, xs)])

    def bounds(self) -> list[ConvexityBounds]:
        return [node.convexity_bounds() for node in self.nodes]

    def to_json(self) -> dict:
        return {"nodes": [node.to_json() for node in self.nodes], "meta": dict(self.meta)}

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def problem_to_json(p: Problem) -> dict:
    return p.to_json()


def problem_from_json(doc: dict) -> Problem:
    return Problem(tuple(objective_from_json(n) for n in doc["nodes"]), dict(doc.get("meta", {})))


def make_logistic_problem(
    n_nodes: int,
    d: int,
    samples_per_node: int,
    lam: float,
    seed: int,
    label_noise: float = 0.1,
) -> Problem:
    """Synthetic L2-regularized logistic regression split across nodes.

    Features are standard Gaussian; labels come from a random hyperplane with a
    fraction ``label_noise`` flipped.
    """
    if min(n_nodes, d, samples_per_node) < 1 or lam <= 0:
        raise ParameterError("n_nodes, d, samples_per_node and lam must all be positive")
    if not 0 <= label_noise < 1:
        raise ParameterError(f"label_noise must lie in [0, 1), got {label_noise}")

    rng = np.random.default_rng(seed)
    w_true = rng.standard_normal(d)
    features = rng.standard_normal((n_nodes, samples_per_node, d))
    labels = np.where(features @ w_true >= 0, 1.0, -1.0)
    flips = rng.random((n_nodes, samples_per_node)) < label_noise
    labels[flips] *= -1.0

    nodes = tuple(LogisticObjective(features[i], labels[i], lam, n_nodes) for i in range(n_nodes))
    meta = {
        "generator": "gaussian-hyperplane-logistic",
        "synthetic": True,
        "seed": seed,
        "samples_per_node": samples_per_node,
        "lam": lam,
        "label_noise": label_noise,
    }
    return Problem(nodes, meta)


def make_quadratic_problem(
    n_nodes: int,
    d: int,
    seed: int,
    m: float = 1.0,
    M: float = 4.0,
    identical: bool = False,
) -> Problem:
    """Random SPD quadratics whose spectra span [m, M]."""
    if not 0 < m <= M:
        raise ParameterError(f"need 0 < m <= M, got m={m}, M={M}")
    rng = np.random.default_rng(seed)

    def draw() -> QuadraticObjective:
        basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
        eigs = rng.uniform(m, M, size=d)
        eigs[0] = m
        if d > 1:
            eigs[-1] = M
        a = (basis * eigs) @ basis.T
        return QuadraticObjective((a + a.T) / 2, rng.standard_normal(d))

    if identical:
        nodes = (draw(),) * n_nodes
    else:
        nodes = tuple(draw() for _ in range(n_nodes))
    meta = {
        "generator": "random-spd-quadratic",
        "synthetic": True,
        "seed": seed,
        "m": m,
        "M": M,
        "identical": identical,
    }
    return Problem(nodes, meta)


def solve_reference(p: Problem, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Centralized damped Newton on F(x) = sum_i f_i(x)."""
    x = np.zeros(p.dim)
    f_x = p.total_value(x)
    scale = max(1.0, float(np.linalg.norm(p.total_gradient(x))))
    for _ in range(max_iter):
        g = p.total_gradient(x)
        if np.linalg.norm(g) <= tol * scale:
            return x
        step = -linalg.solve(p.total_hessian(x), g, assume_a="pos")
        t = 1.0
        # Slack of a few ulps of F keeps roundoff from rejecting full Newton steps near x*.
        slack = 8 * np.finfo(float).eps * max(1.0, abs(f_x))
        while True:
            x_new = x + t * step
            f_new = p.total_value(x_new)
            if f_new <= f_x + slack:
                break
            t *= 0.5
            if t < 1e-12:
                raise SolverError(f"step halving failed at |grad F|={np.linalg.norm(g):.3e}")
        x, f_x = x_new, f_new
    raise SolverError(f"Newton reference solve did not reach tol={tol} in {max_iter} iterations")
