"""Seeded episode rollouts and the multi-episode evaluation protocol."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..baselines import Controller
from ..rngstreams import derive_seed
from ..sim import TrafficSim, TripRecord

METRIC_NAMES = ("avg_queue", "avg_speed", "avg_reward", "avg_intersection_delay")


@dataclass
class EpisodeSummary:
    episode: int
    seed: int
    mean_reward: float
    mean_queue: float
    mean_speed: float
    trip_delay_s: float
    mean_intersection_delay: float
    completed_trips: int


@dataclass
class EvalResult:
    controller: str
    summaries: list[EpisodeSummary]
    step_table: list[dict]              # per-step mean/std columns across episodes
    trips: list[tuple[int, TripRecord]]

    def metric_mean_std(self, field: str) -> tuple[float, float]:
        vals = np.array([getattr(s, field) for s in self.summaries])
        return float(vals.mean()), float(vals.std())


def run_episode(sim: TrafficSim, controller: Controller, episode_seed: int,
                ) -> tuple[list[dict], list[TripRecord], EpisodeSummary]:
    """One full-horizon episode; returns per-step metric rows, completed
    trips, and the episode aggregate."""
    waves = sim.reset(episode_seed)
    controller.reset(sim, episode_seed)
    rows = []
    step = 0
    while not sim.done:
        actions = controller.act(sim, waves, step)
        waves, _, _, _ = sim.step(actions)
        snap = sim.metrics_snapshot()
        rows.append({
            "step": step,
            "avg_queue": snap.avg_queue,
            "avg_speed": snap.avg_speed,
            "avg_reward": snap.avg_reward,
            "avg_intersection_delay": snap.avg_intersection_delay,
        })
        step += 1
    final = sim.metrics_snapshot()
    summary = EpisodeSummary(
        episode=0,
        seed=episode_seed,
        mean_reward=float(np.mean([r["avg_reward"] for r in rows])),
        mean_queue=float(np.mean([r["avg_queue"] for r in rows])),
        mean_speed=float(np.mean([r["avg_speed"] for r in rows])),
        trip_delay_s=final.avg_trip_delay,
        mean_intersection_delay=float(
            np.mean([r["avg_intersection_delay"] for r in rows])),
        completed_trips=len(sim.trips),
    )
    return rows, list(sim.trips), summary


def evaluate(sim: TrafficSim, controller: Controller, episodes: int = 20,
             base_seed: int = 0) -> EvalResult:
    """The evaluation protocol: ``episodes`` seeded runs, per-step means
    and standard deviations across episodes plus per-episode aggregates."""
    all_rows: list[list[dict]] = []
    summaries: list[EpisodeSummary] = []
    trips: list[tuple[int, TripRecord]] = []
    for ep in range(episodes):
        seed = derive_seed(base_seed, "eval-episode", ep)
        rows, ep_trips, summary = run_episode(sim, controller, seed)
        summary.episode = ep
        all_rows.append(rows)
        summaries.append(summary)
        trips.extend((ep, t) for t in ep_trips)
    horizon = len(all_rows[0])
    step_table = []
    for s in range(horizon):
        row: dict = {"step": s}
        for name in METRIC_NAMES:
            vals = np.array([all_rows[ep][s][name] for ep in range(episodes)])
            row[f"{name}_mean"] = float(vals.mean())
            row[f"{name}_std"] = float(vals.std())
        step_table.append(row)
    return EvalResult(controller=controller.name, summaries=summaries,
                      step_table=step_table, trips=trips)
