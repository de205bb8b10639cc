"""Signal controllers: non-learning baselines and policy-backed control.

Every controller maps the current simulator state to one phase id per
agent each decision step. ``FixedTimeController`` rotates phases on a
fixed cycle; ``MaxPressureController`` greedily picks the phase with the
largest summed movement pressure (upstream queue minus downstream
queue); ``PolicyController`` wraps trained per-agent models, sampling
from the policy during training-style rollouts and taking the argmax for
evaluation.
"""

from __future__ import annotations

import numpy as np

from .aggregation import SequenceBuilder
from .nn.model import AgentModel, RolloutCache
from .rngstreams import substream
from .sim import N_PHASES, PHASE_MOVES, TrafficSim


def fixed_time_phase(step: int, steps_per_phase: int = 4) -> int:
    """Round-robin through the phase set, ``steps_per_phase`` decision
    steps of green each."""
    return (step // steps_per_phase) % N_PHASES


def max_pressure_phase(pressure_inputs: dict[tuple[int, int], tuple[int, int]]) -> int:
    """Phase maximizing total served-movement pressure; ties take the
    lowest phase id."""
    best_phase, best_score = 0, None
    for phase in range(N_PHASES):
        score = 0
        for move in PHASE_MOVES[phase]:
            q_in, q_out = pressure_inputs.get(move, (0, 0))
            score += q_in - q_out
        if best_score is None or score > best_score:
            best_phase, best_score = phase, score
    return best_phase


class Controller:
    name = "controller"

    def reset(self, sim: TrafficSim, episode_seed: int) -> None:
        pass

    def act(self, sim: TrafficSim, waves: np.ndarray, step: int) -> np.ndarray:
        raise NotImplementedError


class FixedTimeController(Controller):
    name = "fixed-time"

    def __init__(self, steps_per_phase: int = 4):
        if steps_per_phase < 1:
            raise ValueError("steps_per_phase must be >= 1")
        self.steps_per_phase = steps_per_phase

    def act(self, sim, waves, step):
        phase = fixed_time_phase(step, self.steps_per_phase)
        return np.full(sim.net.n, phase, dtype=int)


class MaxPressureController(Controller):
    name = "max-pressure"

    def act(self, sim, waves, step):
        return np.array([max_pressure_phase(sim.movement_pressure_inputs(i))
                         for i in sim.net.nodes], dtype=int)


class PolicyController(Controller):
    """Per-agent models driving the signals through the aggregation pipeline.

    Maintains the rolling aggregation state and the last joint action;
    ``mode='sample'`` draws from each policy (seeded sub-streams),
    ``mode='greedy'`` takes the argmax.
    """

    def __init__(self, models: list[AgentModel], builder: SequenceBuilder,
                 neighbor_order: list[list[int]], wave_scale: float = 0.1,
                 mode: str = "greedy", name: str | None = None):
        if mode not in ("sample", "greedy"):
            raise ValueError(f"unknown action mode {mode!r}")
        self.models = models
        self.builder = builder
        self.neighbor_order = neighbor_order
        self.wave_scale = wave_scale
        self.mode = mode
        if name is not None:
            self.name = name
        else:
            self.name = "graph-a2c" if models[0].config.K > 1 else "local-a2c"
        self.n_actions = models[0].config.n_actions
        self.cache = RolloutCache(models)
        self._rngs = None
        self.prev_actions = np.zeros(len(models), dtype=int)

    def refresh_cache(self) -> None:
        self.cache.refresh()

    def reset(self, sim, episode_seed):
        self.builder.reset()
        self.cache.refresh()
        self.prev_actions = np.zeros(len(self.models), dtype=int)
        self._rngs = [substream(episode_seed, "action", i)
                      for i in range(len(self.models))]

    def neighbor_block(self, agent: int) -> np.ndarray:
        """One-hot block of the neighbors' previous actions, zero-padded
        to the network-wide maximum neighbor count."""
        dim = self.models[agent].config.nbr_dim
        block = np.zeros(dim)
        for slot, j in enumerate(self.neighbor_order[agent]):
            block[slot * self.n_actions + self.prev_actions[j]] = 1.0
        return block

    def observe(self, waves: np.ndarray):
        """Encode all agents, advance the aggregation state, and return
        (sequences, scaled waves, neighbor blocks)."""
        n = len(self.models)
        waves = np.asarray(waves, dtype=float) * self.wave_scale
        blocks = np.stack([self.neighbor_block(i) for i in range(n)])
        encodings = self.cache.encode(waves, blocks)
        seqs = self.builder.push(encodings)
        return seqs, waves, blocks

    def policy_values(self, obs):
        """Per-agent action probabilities and live critic values."""
        seqs, scaled, blocks = obs
        return self.cache.policy_values(seqs, blocks)

    def choose(self, probs: np.ndarray) -> np.ndarray:
        actions = np.zeros(len(self.models), dtype=int)
        for i in range(len(self.models)):
            if self.mode == "sample":
                if self._rngs is None:
                    raise RuntimeError("controller used before reset()")
                actions[i] = self._rngs[i].choice(self.n_actions,
                                                  p=probs[i] / probs[i].sum())
            else:
                actions[i] = int(np.argmax(probs[i]))
        self.prev_actions = actions
        return actions

    def act(self, sim, waves, step):
        probs, _ = self.policy_values(self.observe(waves))
        return self.choose(probs)


def neighbor_orders(net) -> list[list[int]]:
    """Deterministic per-agent neighbor ordering (sorted ids)."""
    return [sorted(net.neighbors(i)) for i in net.nodes]


def max_neighbor_count(net) -> int:
    return max((len(net.neighbors(i)) for i in net.nodes), default=0)
