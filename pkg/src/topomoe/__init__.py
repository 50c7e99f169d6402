"""Topology-gated mixture of cutoff-specific message-passing experts.

Pipeline: molecular point cloud -> distance filtration -> normalized
topological descriptor trajectory -> Top-k expert routing -> weighted
aggregation of cutoff-specific invariant GNN experts -> property
prediction, trained end to end with balance-regularized objectives.
"""

from importlib import resources as _resources

from .descriptors import (
    TopoTrajectory,
    TrajectoryCache,
    betti_curve_value,
    build_trajectory,
    global_efficiency,
    persistence_diagrams,
    randic_normalized,
    wiener_normalized,
)
from .filtration import (
    DistanceMatrix,
    FiltrationSchedule,
    InteractionGraph,
    build_cutoff_graph,
    build_filtration,
    build_schedule,
    pairwise_distances,
)
from .kernels import BACKEND, HAS_COMPILED
from .molecule import Dataset, LabeledSample, PointCloud, parse_dataset, parse_xyz
from .persistence import PersistenceDiagram, flag_persistence
from .training import Checkpoint, MoEModel, TrainConfig, evaluate, forward_pass, train

__version__ = "0.1.0"


def sample_dataset_path():
    """Path of the bundled 100-molecule smoke-test dataset."""
    return _resources.files("topomoe").joinpath("data/sample100.jsonl")


def default_config_path():
    """Path of the shipped defaults config (JSON with documented keys)."""
    return _resources.files("topomoe").joinpath("data/default_config.json")

__all__ = [
    "BACKEND",
    "Checkpoint",
    "Dataset",
    "DistanceMatrix",
    "FiltrationSchedule",
    "HAS_COMPILED",
    "InteractionGraph",
    "LabeledSample",
    "MoEModel",
    "PersistenceDiagram",
    "PointCloud",
    "TopoTrajectory",
    "TrainConfig",
    "TrajectoryCache",
    "betti_curve_value",
    "build_cutoff_graph",
    "build_filtration",
    "build_schedule",
    "build_trajectory",
    "evaluate",
    "flag_persistence",
    "forward_pass",
    "global_efficiency",
    "pairwise_distances",
    "parse_dataset",
    "parse_xyz",
    "persistence_diagrams",
    "randic_normalized",
    "train",
    "wiener_normalized",
]
