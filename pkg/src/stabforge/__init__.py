"""Simulator and checker for a transformer that turns terminating synchronous
algorithms into silent self-stabilizing algorithms in the atomic-state model."""

from .topology import Topology, build_topology, neighbor_view
from .sync_model import SyncAlgorithmSpec, SyncHistory, run_to_stability, sync_round
from .transformer import TransNodeState, TransParams, apply_step, enabled_rule
from .daemon import DaemonPolicy, ExecutionTrace, compute_rounds, run_execution

__version__ = "0.1.0"

__all__ = [
    "Topology",
    "build_topology",
    "neighbor_view",
    "SyncAlgorithmSpec",
    "SyncHistory",
    "run_to_stability",
    "sync_round",
    "TransNodeState",
    "TransParams",
    "apply_step",
    "enabled_rule",
    "DaemonPolicy",
    "ExecutionTrace",
    "compute_rounds",
    "run_execution",
]
