"""Scenery reconstruction along random walks with exponentially decaying jumps."""

from .events import EventReport, TrialSetup, containment_trial
from .observe import ObservationStream, StopTimes, observe, oracle_stops, pattern_stops
from .paths import PathFunction, check_delta_path, check_k_delta_path, enumerate_delta_paths
from .reconstruct import (
    NoDataError, ReconstructionParams, derive_params, exact_chain_mu, reconstruct_point,
    reconstruct_whole,
)
from .scenery import IIDScenery, Pattern, Scenery, equivalent, generate_iid
from .walk import IncrementDistribution, geometric_tail, lazy_simple, simulate, state_distribution

__all__ = [
    "EventReport", "IIDScenery", "IncrementDistribution", "NoDataError", "ObservationStream",
    "PathFunction", "Pattern", "ReconstructionParams", "Scenery", "StopTimes", "TrialSetup",
    "check_delta_path", "check_k_delta_path", "containment_trial", "derive_params",
    "enumerate_delta_paths", "equivalent", "exact_chain_mu", "generate_iid", "geometric_tail",
    "lazy_simple", "observe", "oracle_stops", "pattern_stops", "reconstruct_point",
    "reconstruct_whole", "simulate", "state_distribution",
]
