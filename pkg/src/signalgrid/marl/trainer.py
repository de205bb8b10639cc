"""Synchronous on-policy training loop for the decentralized controllers.

Each interaction step every agent aggregates neighborhood information,
samples a phase from its policy, and the joint action drives the
simulator. Transitions accumulate in an on-policy batch; every
``batch_size`` steps (and at each episode end) the frozen critic targets
are re-synced, spatially discounted returns and advantages are computed,
and every agent takes one Adam step on its actor and critic losses.
Episodes restart with fresh per-episode seeds; all sampling flows from
named sub-streams of the single training seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..baselines import PolicyController
from ..nn.model import AgentModel, save_checkpoint
from ..rngstreams import derive_seed
from ..sim import TrafficSim
from .optim import Adam, clip_grad_norm
from .returns import actor_critic_losses, sampled_returns, spatial_weight_matrix


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 0.99
    spatial_alpha: float = 0.75
    entropy_beta: float = 0.01
    lr_actor: float = 5e-4
    lr_critic: float = 2.5e-4
    batch_size: int = 120
    total_steps: int = 200_000
    seed: int = 0
    reward_scale: float = 0.01
    grad_clip: float = 40.0
    lr_decay: str = "linear"
    spatial_max_hops: int | None = 3

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 < self.spatial_alpha <= 1.0:
            raise ValueError("spatial_alpha must be in (0, 1]")
        if self.entropy_beta < 0:
            raise ValueError("entropy_beta must be >= 0")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ValueError("learning rates must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_decay not in ("linear", "constant"):
            raise ValueError("lr_decay must be 'linear' or 'constant'")


@dataclass
class EpisodeLog:
    episode: int
    steps: int
    mean_episode_reward: float
    actor_loss: float
    critic_loss: float
    entropy: float


@dataclass
class _Batch:
    rewards: list = field(default_factory=list)             # scaled, (N,) rows
    seqs: list = field(default_factory=list)                # (N, K, F) rows
    waves: list = field(default_factory=list)               # scaled, (N, wd)
    blocks: list = field(default_factory=list)              # (N, ad)
    actions: list = field(default_factory=list)             # (N,) int rows
    values: list = field(default_factory=list)              # live estimates
    last_done: bool = False

    def __len__(self):
        return len(self.rewards)

    def clear(self):
        self.rewards.clear()
        self.seqs.clear()
        self.waves.clear()
        self.blocks.clear()
        self.actions.clear()
        self.values.clear()
        self.last_done = False


class Trainer:
    def __init__(self, sim: TrafficSim, models: list[AgentModel],
                 controller: PolicyController, config: TrainConfig):
        if controller.mode != "sample":
            raise ValueError("training controller must sample from the policy")
        self.sim = sim
        self.models = models
        self.controller = controller
        self.cfg = config
        self.spatial_w = spatial_weight_matrix(
            sim.net, config.spatial_alpha, config.spatial_max_hops)
        self.optimizers = []
        for m in models:
            params = m.params()
            groups = {name: ("critic" if name in m.critic_param_names() else "actor")
                      for name, _ in params}
            opt = Adam(params, groups,
                       {"actor": config.lr_actor, "critic": config.lr_critic})
            m.optimizer = opt
            self.optimizers.append(opt)
        self.global_step = 0
        self.episode_logs: list[EpisodeLog] = []
        self._update_stats: list[dict] = []

    # -- schedule ------------------------------------------------------------

    def _lr_scale(self) -> float:
        if self.cfg.lr_decay == "constant":
            return 1.0
        return max(0.0, 1.0 - self.global_step / max(1, self.cfg.total_steps))

    # -- update ------------------------------------------------------------

    def _update(self, batch: _Batch, terminal_obs) -> None:
        cfg = self.cfg
        n = len(self.models)
        rewards = np.stack(batch.rewards)                    # (B, N)
        for m in self.models:
            m.sync_target()
        if batch.last_done or terminal_obs is None:
            bootstrap = None
        else:
            seqs_t, waves_t, blocks_t = terminal_obs
            bootstrap = np.array([
                self.models[i].value_estimate(
                    seqs_t[i][np.newaxis], waves_t[i][np.newaxis],
                    blocks_t[i][np.newaxis], target=True)[0]
                for i in range(n)
            ])
        returns = sampled_returns(rewards, self.spatial_w, cfg.gamma, bootstrap)
        lr_scale = self._lr_scale()
        seq_arr = np.stack(batch.seqs)                       # (B, N, K, F)
        wave_arr = np.stack(batch.waves)
        block_arr = np.stack(batch.blocks)
        act_arr = np.stack(batch.actions)
        for i, model in enumerate(self.models):
            seqs_i = seq_arr[:, i]
            waves_i = wave_arr[:, i]
            blocks_i = block_arr[:, i]
            v_target = model.value_estimate(seqs_i, waves_i, blocks_i, target=True)
            adv = returns[:, i] - v_target
            model.zero_grad()
            actor_loss, critic_loss, stats = actor_critic_losses(
                model, seqs_i, waves_i, blocks_i, act_arr[:, i], adv,
                returns[:, i], cfg.entropy_beta)
            total = actor_loss + critic_loss
            if not np.isfinite(total.data):
                raise TrainingDiverged(
                    f"non-finite loss for agent {i} at step {self.global_step} "
                    f"(actor={actor_loss.data!r}, critic={critic_loss.data!r})")
            total.backward()
            clip_grad_norm(model.params(), cfg.grad_clip)
            self.optimizers[i].step(lr_scale)
            self._update_stats.append({
                "actor_loss": float(actor_loss.data),
                "critic_loss": float(critic_loss.data),
                "entropy": stats["entropy"],
            })
        self.controller.refresh_cache()

    # -- main loop ------------------------------------------------------------

    def run(self, on_episode=None) -> list[EpisodeLog]:
        cfg = self.cfg
        sim, ctrl = self.sim, self.controller
        episode = len(self.episode_logs)
        ep_seed = derive_seed(cfg.seed, "episode", episode)
        waves = sim.reset(ep_seed)
        ctrl.reset(sim, ep_seed)
        batch = _Batch()
        ep_reward_sum = 0.0
        ep_steps = 0
        self._update_stats.clear()

        while self.global_step < cfg.total_steps:
            obs = ctrl.observe(waves)
            if len(batch) == cfg.batch_size:
                self._update(batch, obs)
                batch.clear()
            probs, values = ctrl.policy_values(obs)
            actions = ctrl.choose(probs)
            waves, rewards, done, _ = sim.step(actions)
            seqs, scaled_waves, blocks = obs
            batch.rewards.append(rewards * cfg.reward_scale)
            batch.seqs.append(seqs)
            batch.waves.append(scaled_waves)
            batch.blocks.append(blocks)
            batch.actions.append(actions.copy())
            batch.values.append(values)
            batch.last_done = done
            ep_reward_sum += float(rewards.mean())
            ep_steps += 1
            self.global_step += 1
            if done:
                if len(batch):
                    self._update(batch, None)
                    batch.clear()
                stats = self._update_stats or [
                    {"actor_loss": 0.0, "critic_loss": 0.0, "entropy": 0.0}]
                self.episode_logs.append(EpisodeLog(
                    episode=episode,
                    steps=ep_steps,
                    mean_episode_reward=ep_reward_sum / max(1, ep_steps),
                    actor_loss=float(np.mean([s["actor_loss"] for s in stats])),
                    critic_loss=float(np.mean([s["critic_loss"] for s in stats])),
                    entropy=float(np.mean([s["entropy"] for s in stats])),
                ))
                if on_episode is not None:
                    on_episode(self.episode_logs[-1])
                episode += 1
                ep_seed = derive_seed(cfg.seed, "episode", episode)
                waves = sim.reset(ep_seed)
                ctrl.reset(sim, ep_seed)
                ep_reward_sum = 0.0
                ep_steps = 0
                self._update_stats.clear()
        return self.episode_logs

    def save_checkpoints(self, directory) -> list:
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, m in enumerate(self.models):
            p = directory / f"agent_{i:03d}.ckpt"
            save_checkpoint(m, p)
            paths.append(p)
        return paths


def train(sim: TrafficSim, models: list[AgentModel], controller: PolicyController,
          config: TrainConfig, on_episode=None) -> list[EpisodeLog]:
    """Run the full loop; models are updated in place. A zero-step budget
    returns immediately with the models untouched."""
    trainer = Trainer(sim, models, controller, config)
    if config.total_steps <= 0:
        return []
    return trainer.run(on_episode=on_episode)
