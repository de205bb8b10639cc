"""Experiment configuration: one documented default table, strict parsing.

The config is a YAML tree with sections ``network``, ``flows``, ``sim``,
``agg``, ``model``, ``train``, ``baseline``, ``output`` plus the top-level
``seed``. Unknown keys are rejected with their full path; values not set
fall back to the dataclass defaults below; parse -> serialize -> parse is
lossless. Command-line overrides use dotted paths (``train.gamma=0.95``).
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class NetworkConfig:
    kind: str = "grid"                  # "grid" | "edges"
    rows: int = 3
    cols: int = 3
    edges: list | None = None           # [[i, j], ...] for kind="edges"
    weights: list | None = None
    n_nodes: int | None = None
    lanes_per_edge: int = 1
    weight_mode: str = "unit"           # "unit" | "lane_count"


@dataclass
class FlowConfig:
    origin: object = "W"
    destination: object = "E"
    rate_vph: float = 600.0
    swap_after_s: float | None = 900.0
    shape: str = "swap_ramp"            # "swap_ramp" | "constant"
    schedule: list | None = None        # [[t_start_s, rate_vph], ...]


@dataclass
class SimSection:
    delta_t_s: float = 5.0
    guard_s: float = 2.0
    horizon_steps: int = 720
    detection_range_m: float = 50.0
    wait_coeff: float = 0.2
    saturation_rate_vps: float = 0.5
    free_flow_speed_mps: float = 13.9
    lane_length_m: float = 200.0
    lane_capacity: int | None = None


@dataclass
class AggSection:
    K: int = 3
    restart_alpha: float = 0.75
    depth: int = 3
    mix: float = 0.5
    single_identity: bool = False
    mode: str = "fixed"                 # "fixed" | "time_varying"


@dataclass
class ModelSection:
    encoder_units: int = 64
    hidden: int = 64
    k_tap: int = 2
    mode: str = "decentralized"         # "decentralized" | "graph"
    literal_candidate_gate: bool = False
    wave_scale: float = 0.1


@dataclass
class TrainSection:
    gamma: float = 0.99
    spatial_alpha: float = 0.75
    entropy_beta: float = 0.01
    lr_actor: float = 5.0e-4
    lr_critic: float = 2.5e-4
    batch_size: int = 120
    total_steps: int = 200_000
    reward_scale: float = 0.01
    grad_clip: float = 40.0
    lr_decay: str = "linear"            # "linear" | "constant"
    spatial_max_hops: object = "K"      # "K" | "exact" | integer
    eval_episodes: int = 20


@dataclass
class BaselineSection:
    fixed_time_steps_per_phase: int = 4


@dataclass
class OutputSection:
    dir: str = "runs/latest"


@dataclass
class ExperimentConfig:
    seed: int = 0
    network: NetworkConfig = field(default_factory=NetworkConfig)
    flows: list[FlowConfig] = field(default_factory=lambda: [FlowConfig()])
    sim: SimSection = field(default_factory=SimSection)
    agg: AggSection = field(default_factory=AggSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    output: OutputSection = field(default_factory=OutputSection)


def _fill_dataclass(cls, data, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    return cls(**data)


_SECTION_TYPES = {
    "network": NetworkConfig,
    "sim": SimSection,
    "agg": AggSection,
    "model": ModelSection,
    "train": TrainSection,
    "baseline": BaselineSection,
    "output": OutputSection,
}


def config_from_dict(data: dict | None) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    known = {"seed", "flows", *_SECTION_TYPES}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}")
    cfg = ExperimentConfig()
    if "seed" in data:
        cfg.seed = int(data["seed"])
    if "flows" in data:
        if not isinstance(data["flows"], list):
            raise ConfigError("flows: expected a list")
        cfg.flows = [_fill_dataclass(FlowConfig, item, f"flows[{i}]")
                     for i, item in enumerate(data["flows"])]
    for name, cls in _SECTION_TYPES.items():
        if name in data:
            setattr(cfg, name, _fill_dataclass(cls, data[name], name))
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(dump_config(cfg))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True, default_flow_style=False)


def apply_override(cfg: ExperimentConfig, assignment: str) -> ExperimentConfig:
    """Apply one ``section.key=value`` override (value parsed as YAML)."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key=value")
    dotted, raw = assignment.split("=", 1)
    value = yaml.safe_load(raw)
    parts = dotted.strip().split(".")
    cfg = copy.deepcopy(cfg)
    target = cfg
    for p in parts[:-1]:
        if p.startswith("flows["):
            idx = int(p[len("flows["):-1])
            target = target.flows[idx]
            continue
        if not hasattr(target, p):
            raise ConfigError(f"override {assignment!r}: no section {p!r}")
        target = getattr(target, p)
    leaf = parts[-1]
    if not hasattr(target, leaf):
        raise ConfigError(f"override {assignment!r}: no key {leaf!r}")
    setattr(target, leaf, value)
    return cfg
