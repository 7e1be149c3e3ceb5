from zoprolab.errors import (
    ConditioningError,
    ConsistencyError,
    DescentFailure,
    InfeasibleError,
    NumericError,
    ParameterError,
    PreconditionError,
    StepsizeFloor,
    ZoproError,
)
from zoprolab.estimators import DirectionMode, SmoothingConfig, sample_directions, zeroth_order_estimates
from zoprolab.graph import WeightedGraph, random_connected_graph, spectral_summary, weight_matrix
from zoprolab.objectives import Problem, make_logistic_problem, make_quadratic_problem, solve_reference
from zoprolab.simnet import SyncNetwork
from zoprolab.solvers import AlgoConfig, DPolicy, DPolicyKind, RunRecord, choose_D, run_sopro, run_zopro

__all__ = [
    "ConditioningError",
    "ConsistencyError",
    "DescentFailure",
    "InfeasibleError",
    "NumericError",
    "ParameterError",
    "PreconditionError",
    "StepsizeFloor",
    "ZoproError",
    "DirectionMode",
    "SmoothingConfig",
    "sample_directions",
    "zeroth_order_estimates",
    "WeightedGraph",
    "random_connected_graph",
    "spectral_summary",
    "weight_matrix",
    "Problem",
    "make_logistic_problem",
    "make_quadratic_problem",
    "solve_reference",
    "SyncNetwork",
    "AlgoConfig",
    "DPolicy",
    "DPolicyKind",
    "RunRecord",
    "choose_D",
    "run_sopro",
    "run_zopro",
]
