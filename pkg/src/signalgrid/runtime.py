"""Assembly of runtime objects (network, simulator, models, controllers)
from an experiment configuration, plus run-directory output helpers."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .aggregation import SequenceBuilder
from .baselines import (
    Controller,
    FixedTimeController,
    MaxPressureController,
    PolicyController,
    max_neighbor_count,
    neighbor_orders,
)
from .config import ConfigError, ExperimentConfig, dump_config
from .csvio import write_csv
from .marl.evaluator import EvalResult
from .marl.trainer import EpisodeLog, TrainConfig
from .network import DiffusionOperator, RoadNetwork, build_network, build_operator
from .nn.model import AgentModel, ModelConfig, load_checkpoint
from .rngstreams import substream
from .sim import FlowSpec, SimConfig, TrafficSim

N_ACTIONS = 5
WAVE_DIM = 4

LEARNED_CONTROLLERS = ("graph-a2c", "local-a2c")
CONTROLLER_KINDS = ("fixed-time", "max-pressure") + LEARNED_CONTROLLERS


def make_network(cfg: ExperimentConfig) -> RoadNetwork:
    net_cfg = cfg.network
    if net_cfg.kind == "grid":
        return build_network(rows=net_cfg.rows, cols=net_cfg.cols,
                             lanes_per_edge=net_cfg.lanes_per_edge,
                             weight_mode=net_cfg.weight_mode)
    if net_cfg.kind == "edges":
        if net_cfg.edges is None:
            raise ConfigError("network.kind='edges' needs network.edges")
        return build_network(edges=[tuple(e) for e in net_cfg.edges],
                             weights=net_cfg.weights, n_nodes=net_cfg.n_nodes,
                             lanes_per_edge=net_cfg.lanes_per_edge,
                             weight_mode=net_cfg.weight_mode)
    raise ConfigError(f"unknown network.kind {net_cfg.kind!r}")


def make_operator(cfg: ExperimentConfig, net: RoadNetwork) -> DiffusionOperator:
    return build_operator(net, restart_alpha=cfg.agg.restart_alpha,
                          depth=cfg.agg.depth, mix=cfg.agg.mix)


def make_sim(cfg: ExperimentConfig, net: RoadNetwork) -> TrafficSim:
    sim_cfg = SimConfig(
        delta_t_s=cfg.sim.delta_t_s,
        guard_s=cfg.sim.guard_s,
        horizon_steps=cfg.sim.horizon_steps,
        detection_range_m=cfg.sim.detection_range_m,
        wait_coeff=cfg.sim.wait_coeff,
        saturation_rate_vps=cfg.sim.saturation_rate_vps,
        free_flow_speed_mps=cfg.sim.free_flow_speed_mps,
        lane_length_m=cfg.sim.lane_length_m,
        lane_capacity=cfg.sim.lane_capacity,
    )
    flows = [FlowSpec(origin=f.origin, destination=f.destination,
                      rate_vph=f.rate_vph, swap_after_s=f.swap_after_s,
                      shape=f.shape,
                      schedule=None if f.schedule is None
                      else [tuple(x) for x in f.schedule])
             for f in cfg.flows]
    return TrafficSim(sim_cfg, net, flows, seed=cfg.seed)


def model_config(cfg: ExperimentConfig, net: RoadNetwork, K: int | None = None) -> ModelConfig:
    return ModelConfig(
        wave_dim=WAVE_DIM,
        nbr_dim=max_neighbor_count(net) * N_ACTIONS,
        n_actions=N_ACTIONS,
        encoder_units=cfg.model.encoder_units,
        hidden=cfg.model.hidden,
        K=cfg.agg.K if K is None else K,
        k_tap=cfg.model.k_tap,
        mode=cfg.model.mode,
        literal_candidate_gate=cfg.model.literal_candidate_gate,
        single_identity=cfg.agg.single_identity,
    )


def make_models(cfg: ExperimentConfig, net: RoadNetwork, op: DiffusionOperator,
                K: int | None = None) -> list[AgentModel]:
    mc = model_config(cfg, net, K=K)
    return [AgentModel(mc, substream(cfg.seed, "init", i),
                       op=op if mc.mode == "graph" else None)
            for i in net.nodes]


def resolve_spatial_max_hops(cfg: ExperimentConfig) -> int | None:
    v = cfg.train.spatial_max_hops
    if v == "K":
        return cfg.agg.K
    if v == "exact":
        return None
    if isinstance(v, int):
        return v
    raise ConfigError(f"train.spatial_max_hops: expected 'K', 'exact' or int, got {v!r}")


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    t = cfg.train
    return TrainConfig(
        gamma=t.gamma, spatial_alpha=t.spatial_alpha, entropy_beta=t.entropy_beta,
        lr_actor=t.lr_actor, lr_critic=t.lr_critic, batch_size=t.batch_size,
        total_steps=t.total_steps, seed=cfg.seed, reward_scale=t.reward_scale,
        grad_clip=t.grad_clip, lr_decay=t.lr_decay,
        spatial_max_hops=resolve_spatial_max_hops(cfg),
    )


def make_policy_controller(cfg: ExperimentConfig, net: RoadNetwork,
                           op: DiffusionOperator, kind: str, mode: str = "greedy",
                           models: list[AgentModel] | None = None) -> PolicyController:
    K = 1 if kind == "local-a2c" else None
    if models is None:
        models = make_models(cfg, net, op, K=K)
    builder = SequenceBuilder(op, K=models[0].config.K, mode=cfg.agg.mode,
                              single_identity=cfg.agg.single_identity)
    return PolicyController(models, builder, neighbor_orders(net),
                            wave_scale=cfg.model.wave_scale, mode=mode, name=kind)


def load_models(checkpoint_dir, net: RoadNetwork,
                op: DiffusionOperator | None = None) -> list[AgentModel]:
    paths = sorted(Path(checkpoint_dir).glob("agent_*.ckpt"))
    if len(paths) != net.n:
        raise ConfigError(
            f"{checkpoint_dir}: found {len(paths)} checkpoints for {net.n} agents")
    return [load_checkpoint(p, op=op) for p in paths]


def make_controller(cfg: ExperimentConfig, net: RoadNetwork, op: DiffusionOperator,
                    kind: str, mode: str = "greedy",
                    checkpoint_dir=None) -> Controller:
    if kind == "fixed-time":
        return FixedTimeController(cfg.baseline.fixed_time_steps_per_phase)
    if kind == "max-pressure":
        return MaxPressureController()
    if kind in LEARNED_CONTROLLERS:
        models = None
        if checkpoint_dir is not None:
            models = load_models(checkpoint_dir, net,
                                 op=op if cfg.model.mode == "graph" else None)
        return make_policy_controller(cfg, net, op, kind, mode=mode, models=models)
    raise ConfigError(f"unknown controller {kind!r} (choose from {CONTROLLER_KINDS})")


# -- run-directory output ----------------------------------------------------

METRICS_FIELDS = ["step", "avg_queue", "avg_speed", "avg_reward",
                  "avg_intersection_delay"]
TRIPS_FIELDS = ["vehicle_id", "depart_s", "arrive_s", "trip_delay_s",
                "intersection_delay_s"]
EPISODE_FIELDS = ["episode", "seed", "mean_reward", "mean_queue", "mean_speed",
                  "trip_delay_s", "mean_intersection_delay", "completed_trips"]
TRAINLOG_FIELDS = ["episode", "steps", "mean_episode_reward", "actor_loss",
                   "critic_loss", "entropy"]


def write_metrics_csv(path, rows: list[dict]) -> None:
    write_csv(path, METRICS_FIELDS, rows)


def write_trips_csv(path, trips, with_episode: bool = False) -> None:
    if with_episode:
        rows = [{"episode": ep, **_trip_row(t)} for ep, t in trips]
        write_csv(path, ["episode"] + TRIPS_FIELDS, rows)
    else:
        write_csv(path, TRIPS_FIELDS, [_trip_row(t) for t in trips])


def _trip_row(t) -> dict:
    return {"vehicle_id": t.vehicle_id, "depart_s": t.depart_s,
            "arrive_s": t.arrive_s, "trip_delay_s": t.trip_delay_s,
            "intersection_delay_s": t.intersection_delay_s}


def write_episodes_csv(path, summaries) -> None:
    rows = [{"episode": s.episode, "seed": s.seed, "mean_reward": s.mean_reward,
             "mean_queue": s.mean_queue, "mean_speed": s.mean_speed,
             "trip_delay_s": s.trip_delay_s,
             "mean_intersection_delay": s.mean_intersection_delay,
             "completed_trips": s.completed_trips}
            for s in summaries]
    write_csv(path, EPISODE_FIELDS, rows)


def write_train_log_csv(path, logs: list[EpisodeLog]) -> None:
    rows = [{"episode": l.episode, "steps": l.steps,
             "mean_episode_reward": l.mean_episode_reward,
             "actor_loss": l.actor_loss, "critic_loss": l.critic_loss,
             "entropy": l.entropy} for l in logs]
    write_csv(path, TRAINLOG_FIELDS, rows)


def write_eval_outputs(out_dir, cfg: ExperimentConfig, result: EvalResult) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    step_fields = ["step"]
    for name in ("avg_queue", "avg_speed", "avg_reward", "avg_intersection_delay"):
        step_fields += [f"{name}_mean", f"{name}_std"]
    write_csv(out / "eval_metrics.csv", step_fields, result.step_table)
    write_episodes_csv(out / "episodes.csv", result.summaries)
    write_trips_csv(out / "trips.csv", result.trips, with_episode=True)
    summary = {
        "controller": result.controller,
        "episodes": len(result.summaries),
        "metrics": {
            name: dict(zip(("mean", "std"), result.metric_mean_std(name)))
            for name in ("mean_reward", "mean_queue", "mean_speed",
                         "trip_delay_s", "mean_intersection_delay")
        },
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    (out / "config.yaml").write_text(dump_config(cfg))
