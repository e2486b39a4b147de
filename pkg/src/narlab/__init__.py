"""Neural algorithmic reasoning workbench.

Graph generation and execution-preserving transforms, exact and faulty
Bellman-Ford/BFS executors with per-step traces, a minimal reverse-mode
autodiff engine, encode-process-decode graph networks, and latent-space
analysis tools, tied together by the `narlab` CLI.
"""

__version__ = "0.1.0"

from .algorithms import ExecutionTrace, VariantSpec, agreement, bellman_ford_trace, bfs_trace
from .graphs import (
    GeneratorSpec,
    NodePotential,
    WeightedGraph,
    generate_er,
    make_reweighting_cluster,
    reweight,
    scale_weights,
)
from .model import Model, ModelConfig, load_checkpoint, rollout, run, save_checkpoint
from .training import TrainConfig, evaluate, train, train_multi

__all__ = [
    "ExecutionTrace",
    "GeneratorSpec",
    "Model",
    "ModelConfig",
    "NodePotential",
    "TrainConfig",
    "VariantSpec",
    "WeightedGraph",
    "agreement",
    "bellman_ford_trace",
    "bfs_trace",
    "evaluate",
    "generate_er",
    "load_checkpoint",
    "make_reweighting_cluster",
    "reweight",
    "rollout",
    "run",
    "save_checkpoint",
    "scale_weights",
    "train",
    "train_multi",
]
