"""Stochastic Petri net performance model of the Hyperledger Fabric
transaction flow: exact CTMC solution, discrete-event simulation,
metrics, sensitivity ranking and validation against measurements."""

__version__ = "0.1.0"

from .hlf import BASELINE, FACTOR_RANGES, FACTORS, HlfNet, HlfParams, apply_factor, build
from .metrics import MetricsReport, SolverOptions, evaluate
from .net import Arc, Net, Place, Transition, enabled_transitions, fire, immediate, timed
from .reachability import explore, solve_net, solve_steady_state
from .sensitivity import index, rank_all, sweep
from .simulation import SimConfig, simulate, tag_transactions
from .validation import ingest_csv, validate

__all__ = [
    "BASELINE", "FACTOR_RANGES", "FACTORS", "HlfNet", "HlfParams", "apply_factor", "build",
    "MetricsReport", "SolverOptions", "evaluate",
    "Arc", "Net", "Place", "Transition", "enabled_transitions", "fire", "immediate", "timed",
    "explore", "solve_net", "solve_steady_state",
    "index", "rank_all", "sweep",
    "SimConfig", "simulate", "tag_transactions",
    "ingest_csv", "validate",
]
