from zoprolab.harness.experiment import (
    AnalysisReport,
    ComparisonTable,
    MetricsTable,
    Scenario,
    ScenarioResult,
    analyze_run,
    build_scenario,
    compare_algorithms,
    convergence_stop,
    iterations_to_converge,
    replay,
    run_experiment,
    run_experiment_async,
    run_single,
    spearman,
)
from zoprolab.harness.spec import (
    ACCURACY_LEVELS,
    SCALE_PRESETS,
    ExperimentSpec,
    RunSpec,
    ScenarioSpec,
    experiment_from_dict,
    load_experiment,
    load_run_config,
    scenario_from_dict,
)

__all__ = [
    "AnalysisReport",
    "ComparisonTable",
    "MetricsTable",
    "Scenario",
    "ScenarioResult",
    "analyze_run",
    "build_scenario",
    "compare_algorithms",
    "convergence_stop",
    "iterations_to_converge",
    "replay",
    "run_experiment",
    "run_experiment_async",
    "run_single",
    "spearman",
    "ACCURACY_LEVELS",
    "SCALE_PRESETS",
    "ExperimentSpec",
    "RunSpec",
    "ScenarioSpec",
    "experiment_from_dict",
    "load_experiment",
    "load_run_config",
    "scenario_from_dict",
]
