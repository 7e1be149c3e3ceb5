from dataclasses import asdict, dataclass, field
from enum import StrEnum

from zoprolab.errors import ParameterError
from zoprolab.estimators import SmoothingConfig


class DPolicyKind(StrEnum):
    GLOBAL_BOUND = "global_bound"
    SCALED_IDENTITY = "scaled_identity"


class SlopeMode(StrEnum):
    ESTIMATE = "estimate"
    FINITE_DIFFERENCE = "finite_difference"


@dataclass(frozen=True)
class DPolicy:
    kind: DPolicyKind = DPolicyKind.GLOBAL_BOUND
    tau: float = 1.0
    theta: float = 1.0
    eta: float = 2.0
    alpha_floor: float = 1.0
    headroom: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "kind", DPolicyKind(self.kind))
        if self.kind is DPolicyKind.SCALED_IDENTITY and not self.tau > 0:
            raise ParameterError(f"scaled_identity needs tau > 0, got {self.tau}")
        if not 0 < self.theta <= 1:
            raise ParameterError(f"theta must lie in (0, 1], got {self.theta}")
        if not self.eta > 1:
            raise ParameterError(f"eta must exceed 1, got {self.eta}")
        if not 0 < self.alpha_floor <= 1:
            raise ParameterError(f"alpha_floor must lie in (0, 1], got {self.alpha_floor}")


@dataclass(frozen=True)
class AlgoConfig:
    rho: float = 0.5
    c_armijo: float = 0.1
    shrink: float = 0.5
    max_backtracks: int = 2
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    d_policy: DPolicy = field(default_factory=DPolicy)
    max_iterations: int = 2000
    slope_mode: SlopeMode = SlopeMode.ESTIMATE
    fd_epsilon: float = 1e-6
    positivity_floor: float = 1e-8
    init_scale: float = 1.0
    record_states: bool = False
    keep_trace: bool = False

    def __post_init__(self):
        object.__setattr__(self, "slope_mode", SlopeMode(self.slope_mode))
        if not self.rho > 0:
            raise ParameterError(f"rho must be positive, got {self.rho}")
        if not 0 < self.c_armijo < 1:
            raise ParameterError(f"c_armijo must lie in (0, 1), got {self.c_armijo}")
        if not 0 < self.shrink < 1:
            raise ParameterError(f"shrink must lie in (0, 1), got {self.shrink}")
        if self.max_backtracks < 1 or self.max_iterations < 1:
            raise ParameterError("max_backtracks and max_iterations must be positive")

    @property
    def alpha_safeguard(self) -> float:
        """Step taken when backtracking fails; no stepsize ever falls below it."""
        return self.shrink**self.max_backtracks

    @property
    def alpha_floor(self) -> float:
        """A priori stepsize floor at which D is chosen and the convergence constants are evaluated."""
        return min(self.d_policy.alpha_floor, self.alpha_safeguard)

    def to_json(self) -> dict:
        return asdict(self)


def algo_config_from_dict(doc: dict) -> AlgoConfig:
    doc = dict(doc)
    smoothing = doc.pop("smoothing", {})
    d_policy = doc.pop("d_policy", {})
    try:
        return AlgoConfig(smoothing=SmoothingConfig(**smoothing), d_policy=DPolicy(**d_policy), **doc)
    except TypeError as e:
        raise ParameterError(f"bad algorithm config: {e}") from e
