from zoprolab.solvers.config import AlgoConfig, DPolicy, DPolicyKind, SlopeMode, algo_config_from_dict
from zoprolab.solvers.driver import RoundReport, initial_point
from zoprolab.solvers.linesearch import armijo_stepsize
from zoprolab.solvers.proximal import choose_D, search_direction
from zoprolab.solvers.sopro import run_sopro, sopro_round
from zoprolab.solvers.state import RUN_CSV_HEADER, NodeState, RunRecord
from zoprolab.solvers.zopro import run_zopro, zopro_round

__all__ = [
    "AlgoConfig",
    "DPolicy",
    "DPolicyKind",
    "SlopeMode",
    "algo_config_from_dict",
    "RoundReport",
    "initial_point",
    "armijo_stepsize",
    "choose_D",
    "search_direction",
    "run_sopro",
    "sopro_round",
    "RUN_CSV_HEADER",
    "NodeState",
    "RunRecord",
    "run_zopro",
    "zopro_round",
]
