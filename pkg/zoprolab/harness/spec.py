import tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from zoprolab.errors import ParameterError
from zoprolab.objectives import ObjectiveKind
from zoprolab.solvers.config import AlgoConfig, algo_config_from_dict

ALGORITHMS = ("zopro", "sopro")
TOPOLOGIES = ("random", "ring", "path", "complete")

# Accuracy levels reported by algorithm comparisons.
ACCURACY_LEVELS: tuple[float, ...] = (1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class ScenarioSpec:
    n_nodes: int = 10
    avg_degree: float = 4.0
    lam: float = 1.0
    dim: int = 5
    samples_per_node: int = 5
    kind: ObjectiveKind = ObjectiveKind.LOGISTIC
    weight_policy: str = "uniform"
    topology: str = "random"
    label_noise: float = 0.1
    quad_m: float = 1.0
    quad_M: float = 4.0
    identical: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ObjectiveKind(self.kind))
        object.__setattr__(self, "n_nodes", int(self.n_nodes))
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "samples_per_node", int(self.samples_per_node))
        if self.topology not in TOPOLOGIES:
            raise ParameterError(f"unknown topology {self.topology!r}, expected one of {TOPOLOGIES}")

    @property
    def tag(self) -> str:
        return f"n{self.n_nodes}-da{self.avg_degree:g}-lam{self.lam:g}"

    def to_json(self) -> dict:
        return asdict(self)


# Scenario sizes: desk scale for CI, full scale for the long sweeps.
SCALE_PRESETS: dict[str, ScenarioSpec] = {
    "desk": ScenarioSpec(n_nodes=10, avg_degree=4, lam=1.0, dim=5, samples_per_node=5),
    "full": ScenarioSpec(n_nodes=50, avg_degree=20, lam=1.0, dim=20, samples_per_node=5),
}

SWEEP_AXES = ("n_nodes", "avg_degree", "lam")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "experiment"
    base: ScenarioSpec = field(default_factory=ScenarioSpec)
    axis: str | None = "n_nodes"
    values: tuple[float, ...] = (10,)
    grid: tuple[dict, ...] = ()
    scenarios: int = 10
    algorithms: tuple[str, ...] = ("zopro",)
    algo: AlgoConfig = field(default_factory=AlgoConfig)
    tol: float = 1e-4
    window: int = 100
    early_stop: bool = True
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "grid", tuple(dict(p) for p in self.grid))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if self.grid:
            object.__setattr__(self, "axis", None)
        elif self.axis not in SWEEP_AXES:
            raise ParameterError(f"sweep axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        elif not self.values:
            raise ParameterError("sweep values must be nonempty")
        if self.scenarios < 1:
            raise ParameterError(f"scenario count must be positive, got {self.scenarios}")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if not self.algorithms or unknown:
            raise ParameterError(f"algorithms must be drawn from {ALGORITHMS}, got {self.algorithms}")
        if self.window < 0 or not self.tol > 0:
            raise ParameterError(f"need tol > 0 and window >= 0, got tol={self.tol}, window={self.window}")

    def points(self) -> list[ScenarioSpec]:
        if self.grid:
            return [_replace_scenario(self.base, p) for p in self.grid]
        return [_replace_scenario(self.base, {self.axis: v}) for v in self.values]

    def point_values(self) -> list[float | str]:
        if self.grid:
            return [",".join(f"{k}={v}" for k, v in sorted(p.items())) for p in self.grid]
        return list(self.values)

    def seed_for(self, point: int, scenario: int) -> int:
        return self.base_seed + 1000 * point + scenario

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "base": self.base.to_json(),
            "axis": self.axis,
            "values": list(self.values),
            "grid": [dict(p) for p in self.grid],
            "scenarios": self.scenarios,
            "algorithms": list(self.algorithms),
            "algo": self.algo.to_json(),
            "tol": self.tol,
            "window": self.window,
            "early_stop": self.early_stop,
            "base_seed": self.base_seed,
        }


def _replace_scenario(base: ScenarioSpec, changes: dict) -> ScenarioSpec:
    known = {f.name for f in fields(ScenarioSpec)}
    unknown = set(changes) - known
    if unknown:
        raise ParameterError(f"unknown scenario keys {sorted(unknown)}")
    return replace(base, **changes)


def scenario_from_dict(doc: dict, preset: str | None = None) -> ScenarioSpec:
    doc = dict(doc)
    preset = doc.pop("preset", preset)
    if preset is not None and preset not in SCALE_PRESETS:
        raise ParameterError(f"unknown scale preset {preset!r}, expected one of {sorted(SCALE_PRESETS)}")
    base = SCALE_PRESETS[preset] if preset else ScenarioSpec()
    return _replace_scenario(base, doc)


def experiment_from_dict(doc: dict) -> ExperimentSpec:
    """Build an ExperimentSpec from a TOML document or a manifest's spec section.

    TOML documents carry ``[experiment]``, ``[scenario]`` and ``[algo]`` tables; manifests
    store the flat form produced by ``ExperimentSpec.to_json``.
    """
    if "experiment" in doc:
        top = dict(doc["experiment"])
        base = scenario_from_dict(doc.get("scenario", {}))
        algo = doc.get("algo", {})
    else:
        top = dict(doc)
        base = scenario_from_dict(top.pop("base", {}))
        algo = top.pop("algo", {})
    top.pop("base", None)
    try:
        return ExperimentSpec(base=base, algo=algo_config_from_dict(algo), **top)
    except TypeError as e:
        raise ParameterError(f"bad experiment spec: {e}") from e


def _load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ParameterError(f"cannot read config {path}: {e}") from e


def load_experiment(path: str | Path) -> ExperimentSpec:
    return experiment_from_dict(_load_toml(path))


@dataclass(frozen=True)
class RunSpec:
    scenario: ScenarioSpec
    algo: AlgoConfig
    algorithm: str = "zopro"
    seed: int = 0


def load_run_config(path: str | Path) -> RunSpec:
    doc = _load_toml(path)
    run = dict(doc.get("run", {}))
    algorithm = run.pop("algorithm", "zopro")
    seed = int(run.pop("seed", 0))
    if run:
        raise ParameterError(f"unknown run keys {sorted(run)}")
    if algorithm not in ALGORITHMS:
        raise ParameterError(f"unknown algorithm {algorithm!r}")
    scenario = scenario_from_dict(doc.get("scenario", {}))
    return RunSpec(scenario, algo_config_from_dict(doc.get("algo", {})), algorithm, seed)
