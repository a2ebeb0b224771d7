"""Unsupervised topological loop detection with SE(2) pose-graph back end.

The package is organized as a pipeline over synthetic traversals:

- :mod:`toposlam.simulator` generates descriptor streams, poses, and odometry;
- :mod:`toposlam.clustering` groups frame descriptors with k-means and picks K
  by an elbow rule;
- :mod:`toposlam.topology` segments label runs into sequences, aggregates one
  descriptor per sequence, and links similar sequences into a graph;
- :mod:`toposlam.loopdetect` emits loop-closure candidates, either through the
  sequence graph or by flat exhaustive image matching;
- :mod:`toposlam.posegraph` optimizes an SE(2) pose graph with Levenberg-
  Marquardt and a Huber kernel on loop edges;
- :mod:`toposlam.evaluation` scores detections (precision/recall) and
  trajectories (absolute pose error);
- :mod:`toposlam.pipeline` wires the stages together behind one config.
"""

from .clustering import Clustering, elbow_select_k, kmeans, select_elbow
from .dataset import (
    Frame,
    LoopPair,
    Pose2,
    Traversal,
    read_descriptors,
    read_loop_pairs,
    read_poses,
    write_descriptors,
    write_loop_pairs,
    write_poses,
)
from .errors import (
    CanonicalizationError,
    ConfigError,
    ConsistencyError,
    DataCorruptionError,
    DataFormatError,
    EmptyDataError,
    NumericalError,
    OrderingError,
    RouteError,
    ToposlamError,
)
from .evaluation import (
    APEReport,
    PRPoint,
    ape,
    operating_point,
    pr_curve,
    rotation_histogram,
)
from .loopdetect import (
    DetectorConfig,
    detect_flat_baseline,
    detect_hierarchical,
    ground_truth_pairs,
)
from .pipeline import (
    BUILTIN_SCENARIOS,
    ExperimentConfig,
    compare_detectors,
    load_builtin_config,
    run_experiment,
)
from .posegraph import (
    Edge,
    PoseGraph,
    SolverConfig,
    build_graph,
    load_graph,
    optimize,
    save_graph,
)
from .se2 import compose, dead_reckon, invert, relative, wrap_angle
from .simulator import (
    DescriptorModel,
    OdometryNoise,
    Scenario,
    World,
    make_world,
    scenario_from_json,
    simulate_scenario,
)
from .topology import (
    Sequence,
    SequenceGraph,
    aggregate_sequence,
    build_sequence_graph,
    cosine_similarity,
    segment_sequences,
)

__version__ = "0.1.0"

__all__ = [
    "APEReport",
    "BUILTIN_SCENARIOS",
    "CanonicalizationError",
    "Clustering",
    "ConfigError",
    "ConsistencyError",
    "DataCorruptionError",
    "DataFormatError",
    "DescriptorModel",
    "DetectorConfig",
    "Edge",
    "EmptyDataError",
    "ExperimentConfig",
    "Frame",
    "LoopPair",
    "NumericalError",
    "OdometryNoise",
    "OrderingError",
    "PRPoint",
    "Pose2",
    "PoseGraph",
    "RouteError",
    "Scenario",
    "Sequence",
    "SequenceGraph",
    "SolverConfig",
    "ToposlamError",
    "Traversal",
    "World",
    "ape",
    "aggregate_sequence",
    "build_graph",
    "build_sequence_graph",
    "compare_detectors",
    "compose",
    "cosine_similarity",
    "dead_reckon",
    "detect_flat_baseline",
    "detect_hierarchical",
    "elbow_select_k",
    "ground_truth_pairs",
    "invert",
    "kmeans",
    "load_builtin_config",
    "load_graph",
    "make_world",
    "operating_point",
    "optimize",
    "pr_curve",
    "read_descriptors",
    "read_loop_pairs",
    "read_poses",
    "relative",
    "rotation_histogram",
    "run_experiment",
    "save_graph",
    "scenario_from_json",
    "segment_sequences",
    "select_elbow",
    "simulate_scenario",
    "wrap_angle",
    "write_descriptors",
    "write_loop_pairs",
    "write_poses",
]
