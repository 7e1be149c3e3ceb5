from dataclasses import dataclass
from enum import StrEnum
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import linalg

from zoprolab.errors import NumericError, ParameterError
from zoprolab.objectives import NodeObjective, Problem

ValueOracle = Callable[[np.ndarray], float]
BatchOracle = Callable[[np.ndarray], np.ndarray]
HessianSource = Callable[[int, NodeObjective, np.ndarray, int], np.ndarray]


class DirectionMode(StrEnum):
    FRESH = "fresh_per_iteration"
    FIXED = "fixed_at_init"


@dataclass(frozen=True)
class SmoothingConfig:
    mu: float = 0.05
    batch: int = 50
    direction_mode: DirectionMode = DirectionMode.FRESH
    rng_seed: int = 0
    shared_directions: bool = True

    def __post_init__(self):
        if not self.mu > 0:
            raise ParameterError(f"smoothing radius mu must be positive, got {self.mu}")
        if self.batch < 1:
            raise ParameterError(f"batch must be >= 1, got {self.batch}")
        if self.rng_seed < 0:
            raise ParameterError(f"rng_seed must be nonnegative, got {self.rng_seed}")
        object.__setattr__(self, "direction_mode", DirectionMode(self.direction_mode))


@dataclass(frozen=True, eq=False)
class DirectionSet:
    directions: np.ndarray

    def __post_init__(self):
        u = np.array(self.directions, dtype=float, copy=True, ndmin=2)
        if not np.all(np.isfinite(u)):
            raise NumericError("direction set contains non-finite entries")
        u.flags.writeable = False
        object.__setattr__(self, "directions", u)

    @property
    def batch(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def same_as(self, other: "DirectionSet") -> bool:
        return np.array_equal(self.directions, other.directions)

    def to_json(self) -> list[list[float]]:
        return self.directions.tolist()


@dataclass(frozen=True)
class SmoothingErrorBounds:
    g1_sq: float
    g2_sq: float
    k_bound: float


class Estimates(NamedTuple):
    grad: np.ndarray
    hess: np.ndarray
    f_x: float


class CountingOracle:
    """Value oracle wrapper that counts queries and rejects non-finite values.

    ``batch_fn`` evaluates a (k, d) stack of points at once; each row counts as one query.
    """

    def __init__(self, fn: ValueOracle, batch_fn: BatchOracle | None = None):
        self.fn = fn
        self.batch_fn = batch_fn
        self.calls = 0

    def __call__(self, x: np.ndarray) -> float:
        self.calls += 1
        return _probe(self.fn, x)

    def batch(self, points: np.ndarray) -> np.ndarray:
        self.calls += len(points)
        if self.batch_fn is None:
            return np.array([float(self.fn(p)) for p in points])
        return np.asarray(self.batch_fn(points), dtype=float)


def _probe(f: ValueOracle, x: np.ndarray) -> float:
    v = float(f(x))
    if not np.isfinite(v):
        raise NumericError(f"objective returned {v}", point=x)
    return v


def _probe_many(f: ValueOracle, points: np.ndarray) -> np.ndarray:
    batch = getattr(f, "batch", None)
    values = batch(points) if batch is not None else np.array([float(f(p)) for p in points])
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NumericError(f"objective returned {values[bad[0]]}", point=points[bad[0]])
    return values


def sample_directions(cfg: SmoothingConfig, d: int, round: int, node: int = 0) -> DirectionSet:
    """Gaussian directions u_1..u_b for one round.

    Fixed mode ignores ``round``. With ``shared_directions`` every node receives the same
    set, otherwise ``node`` is folded into the seed.
    """
    if d < 1:
        raise ParameterError(f"dimension must be >= 1, got {d}")
    fixed = cfg.direction_mode is DirectionMode.FIXED
    key = [cfg.rng_seed, 0 if fixed else 1, 0 if fixed else round]
    if not cfg.shared_directions:
        key.append(node)
    rng = np.random.default_rng(np.random.SeedSequence(key))
    return DirectionSet(rng.standard_normal((cfg.batch, d)))


def _check_mu(mu: float) -> None:
    if not mu > 0:
        raise ParameterError(f"mu must be positive, got {mu}")


def _forward(f: ValueOracle, x: np.ndarray, dirs: DirectionSet, mu: float) -> np.ndarray:
    return _probe_many(f, x + mu * dirs.directions)


def _backward(f: ValueOracle, x: np.ndarray, dirs: DirectionSet, mu: float) -> np.ndarray:
    return _probe_many(f, x - mu * dirs.directions)


def _grad_from(f_x: float, fwd: np.ndarray, dirs: DirectionSet, mu: float) -> np.ndarray:
    return ((fwd - f_x) / mu) @ dirs.directions / dirs.batch


def _hess_from(f_x: float, fwd: np.ndarray, bwd: np.ndarray, dirs: DirectionSet, mu: float) -> np.ndarray:
    coeff = (fwd + bwd - 2.0 * f_x) / (2.0 * mu**2)
    u = dirs.directions
    h = (u.T * coeff) @ u / dirs.batch
    return (h + h.T) / 2


def grad_estimate(f_value: ValueOracle, x: np.ndarray, dirs: DirectionSet, mu: float) -> np.ndarray:
    _check_mu(mu)
    x = np.asarray(x, dtype=float)
    return _grad_from(_probe(f_value, x), _forward(f_value, x, dirs, mu), dirs, mu)


def hessian_estimate(f_value: ValueOracle, x: np.ndarray, dirs: DirectionSet, mu: float) -> np.ndarray:
    _check_mu(mu)
    x = np.asarray(x, dtype=float)
    f_x = _probe(f_value, x)
    return _hess_from(f_x, _forward(f_value, x, dirs, mu), _backward(f_value, x, dirs, mu), dirs, mu)


def zeroth_order_estimates(f_value: ValueOracle, x: np.ndarray, dirs: DirectionSet, mu: float) -> Estimates:
    """Gradient and Hessian estimates from one shared set of 2b + 1 value queries."""
    _check_mu(mu)
    x = np.asarray(x, dtype=float)
    f_x = _probe(f_value, x)
    fwd = _forward(f_value, x, dirs, mu)
    bwd = _backward(f_value, x, dirs, mu)
    return Estimates(_grad_from(f_x, fwd, dirs, mu), _hess_from(f_x, fwd, bwd, dirs, mu), f_x)


def smoothing_error_bounds(mu: float, M: float, N: int, d: int, b: int, k_bound: float) -> SmoothingErrorBounds:
    if min(mu, M, N, d, b, k_bound) <= 0:
        raise ParameterError("smoothing error bounds need positive mu, M, N, d, b and K")
    nd = N * d
    g1_sq = 2.0 * nd * (mu**2 * M**2 * nd + k_bound**2) / b
    g2_sq = (mu**2 / 4.0) * M**2 * (nd + 3) ** 3
    return SmoothingErrorBounds(g1_sq, g2_sq, k_bound)


@dataclass(frozen=True)
class ThetaProbe:
    theta: float | None
    lower: float
    upper: float
    samples: int
    violations: tuple[str, ...] = ()

    @property
    def verified(self) -> bool:
        return self.theta is not None


def _estimated_hessian(cfg: SmoothingConfig) -> HessianSource:
    def source(node: int, obj: NodeObjective, x: np.ndarray, sample: int) -> np.ndarray:
        dirs = sample_directions(cfg, obj.dim, sample, node)
        return hessian_estimate(CountingOracle(obj.value, obj.values), x, dirs, cfg.mu)

    return source


def curvature_theta(
    problem: Problem,
    points: Sequence[np.ndarray],
    cfg: SmoothingConfig | None = None,
    hessian_fn: HessianSource | None = None,
) -> ThetaProbe:
    """Largest theta in (0, 1] with theta*H_est <= H <= (2 - theta)*H_est at every sample.

    A point is either one d-vector shared by all nodes or an (N, d) stack of per-node
    iterates. Indefinite estimates are reported as violations rather than raised.
    """
    if not points:
        raise ParameterError("curvature_theta needs at least one point")
    source = hessian_fn or _estimated_hessian(cfg or SmoothingConfig())

    lower, upper = np.inf, -np.inf
    violations: list[str] = []
    samples = 0
    for k, point in enumerate(points):
        point = np.asarray(point, dtype=float)
        for i, obj in enumerate(problem.nodes):
            x = point[i] if point.ndim == 2 else point
            h_est = source(i, obj, x, k)
            h_true = obj.hessian(x)
            samples += 1
            est_min = linalg.eigvalsh(h_est)[0]
            if est_min <= 0:
                violations.append(f"node {i} sample {k}: estimate not positive definite (lambda_min={est_min:.3e})")
                continue
            gen = linalg.eigh(h_true, h_est, eigvals_only=True)
            lower = min(lower, float(gen[0]))
            upper = max(upper, float(gen[-1]))

    theta = min(1.0, lower, 2.0 - upper) if np.isfinite(lower) else -np.inf
    if theta <= 0 and not violations:
        violations.append(f"no theta in (0, 1]: generalized eigenvalues span [{lower:.3e}, {upper:.3e}]")
    if violations:
        return ThetaProbe(None, lower, upper, samples, tuple(violations))
    return ThetaProbe(float(theta), lower, upper, samples)
