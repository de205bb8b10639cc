"""signalgrid: decentralized traffic-signal control testbed.

A deterministic queue-based traffic simulator, random-walk diffusion
operators over the intersection graph, recursive neighborhood
information aggregation, a from-scratch differentiable graph-recurrent
actor-critic, plus non-learning baseline controllers and an experiment
harness.
"""

from .aggregation import AggSequence, SequenceBuilder, aggregate_step, locality_check
from .config import ExperimentConfig, load_config, save_config
from .network import (
    DiffusionOperator,
    RoadNetwork,
    build_network,
    build_operator,
    diffusion_matrix,
    hop_distance,
    rwr_distribution,
)
from .sim import FlowSpec, SimConfig, TrafficSim

__version__ = "0.1.0"

__all__ = [
    "AggSequence",
    "DiffusionOperator",
    "ExperimentConfig",
    "FlowSpec",
    "RoadNetwork",
    "SequenceBuilder",
    "SimConfig",
    "TrafficSim",
    "aggregate_step",
    "build_network",
    "build_operator",
    "diffusion_matrix",
    "hop_distance",
    "load_config",
    "locality_check",
    "rwr_distribution",
    "save_config",
]
