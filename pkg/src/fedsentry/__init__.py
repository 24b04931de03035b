"""fedsentry: federated-learning simulation with graph-based detection of
collusive label-flipping attackers.

The detection core consumes only a per-round correlation matrix of client
weight updates, so it is independent of the model being trained:

- :func:`fedsentry.mst.mst_ad` cuts the maximum spanning tree of the
  client graph at its weakest edge and flags the heavier subtree.
- :func:`fedsentry.density.density_ad` greedily peels sparse vertices and
  flags the denser of the peeled and surviving sets.

Around that sit a small federated simulator (local SGD on Dirichlet
non-IID shards, label-flipping attackers, weighted-average and
geometric-median aggregation) and an experiment harness with accuracy,
attack-success-rate, and earliest-detection metrics.
"""

from .aggregate import AggregationPolicy, geometric_median, weighted_aggregate
from .attacks import AttackConfig, choose_attackers, flip_labels
from .data import DataShard, dirichlet_partition, load_idx, synth_blobs
from .density import density, density_ad, removal_condition_holds
from .gradients import CorrelationMatrix, GradientUpdate, build_correlation_matrix, pearson
from .harness import ExperimentConfig, load_config, run_experiment, run_sweep
from .metrics import attack_success_rate, earliest_detection, evaluate
from .mst import DetectionResult, Edge, maximum_spanning_tree, mst_ad
from .training import (
    OneHiddenLayerClassifier,
    SoftmaxClassifier,
    TrainingConfig,
    local_train,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationPolicy",
    "AttackConfig",
    "CorrelationMatrix",
    "DataShard",
    "DetectionResult",
    "Edge",
    "ExperimentConfig",
    "GradientUpdate",
    "OneHiddenLayerClassifier",
    "SoftmaxClassifier",
    "TrainingConfig",
    "attack_success_rate",
    "build_correlation_matrix",
    "choose_attackers",
    "density",
    "density_ad",
    "dirichlet_partition",
    "earliest_detection",
    "evaluate",
    "flip_labels",
    "geometric_median",
    "load_config",
    "load_idx",
    "local_train",
    "maximum_spanning_tree",
    "mst_ad",
    "pearson",
    "removal_condition_holds",
    "run_experiment",
    "run_sweep",
    "synth_blobs",
    "weighted_aggregate",
]
