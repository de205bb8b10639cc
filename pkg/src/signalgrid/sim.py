"""Deterministic queue-based simulator of a signalized road network.

Point-queue (vertical queue) kinematics: a vehicle traverses an edge in
its free-flow time, then waits in the approach queue at the stop line
until a green movement discharges it. Every intersection has four arms
(N, E, S, W); arms without an internal neighbor are external and serve
as entry and exit points for traffic demand.

Per decision step of ``delta_t`` seconds:
  1. a changed signal phase blocks all movements for the guard interval,
     leaving ``delta_t - guard`` seconds of effective green;
  2. vehicles whose travel ended by the step start join their queues;
  3. each served movement discharges up to ``floor(saturation_rate *
     green_seconds)`` vehicles, strictly FIFO per lane (an unserved head
     blocks the lane);
  4. new vehicles spawn from the flow schedules (Poisson-thinned rates,
     one RNG sub-stream per flow);
  5. queued vehicles accrue waiting time and rewards are emitted as
     ``-(queue + wait_coeff * max head wait)`` per agent.

Identical (config, network, flows, seed, actions) reproduce identical
trajectories bit for bit.
"""

from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass, field

import numpy as np

from .network import RoadNetwork
from .rngstreams import substream

ARMS = (0, 1, 2, 3)               # N, E, S, W
ARM_NAMES = ("N", "E", "S", "W")
N_PHASES = 5

# Movement = (incoming arm, outgoing arm). A vehicle arriving on arm a
# heads toward opposite(a); right turns exit (a+3)%4, left turns (a+1)%4.
PHASE_MOVES: dict[int, tuple[tuple[int, int], ...]] = {
    0: ((0, 2), (0, 3), (2, 0), (2, 1)),               # N/S straight + right
    1: ((1, 3), (1, 0), (3, 1), (3, 2)),               # E/W straight + right
    2: ((0, 1), (2, 3)),                               # N/S left
    3: ((1, 2), (3, 0)),                               # E/W left
    4: ((0, 3), (2, 1), (1, 0), (3, 2)),               # all right turns
}

ALL_MOVES = tuple(sorted({m for moves in PHASE_MOVES.values() for m in moves}))


class SimulationError(ValueError):
    pass


@dataclass
class SimConfig:
    delta_t_s: float = 5.0
    guard_s: float = 2.0
    horizon_steps: int = 720
    detection_range_m: float = 50.0
    wait_coeff: float = 0.2
    saturation_rate_vps: float = 0.5
    free_flow_speed_mps: float = 13.9
    lane_length_m: float = 200.0
    lane_capacity: int | None = None

    def __post_init__(self):
        if not self.delta_t_s > self.guard_s >= 0:
            raise SimulationError("need delta_t > guard >= 0")
        if self.horizon_steps < 1:
            raise SimulationError("horizon_steps must be >= 1")

    @property
    def free_flow_time_s(self) -> float:
        return self.lane_length_m / self.free_flow_speed_mps


@dataclass
class FlowSpec:
    """One origin-destination demand stream.

    ``shape='swap_ramp'`` mirrors a two-sided demand wave: the forward
    direction ramps 0 -> peak over [0, swap] then decays back to 0 over
    [swap, 2*swap]; the reversed direction ramps up over [swap, 2*swap]
    and decays over [2*swap, 3*swap]. ``shape='constant'`` holds
    ``rate_vph`` and, if ``swap_after_s`` is set, flips the O-D pair at
    that time. An explicit piecewise-constant ``schedule`` of
    ``[t_start_s, rate_vph]`` rows overrides the built-in shapes (with
    the same literal O-D flip at ``swap_after_s``).
    """

    origin: object
    destination: object
    rate_vph: float = 0.0
    swap_after_s: float | None = None
    shape: str = "swap_ramp"
    schedule: list[tuple[float, float]] | None = None

    def __post_init__(self):
        if self.rate_vph < 0:
            raise SimulationError("flow rate must be >= 0")
        if self.schedule is not None:
            if not self.schedule or self.schedule[0][0] != 0:
                raise SimulationError("flow schedule must start at t=0")
            if any(r < 0 for _, r in self.schedule):
                raise SimulationError("flow schedule rates must be >= 0")
        if self.shape not in ("swap_ramp", "constant"):
            raise SimulationError(f"unknown flow shape {self.shape!r}")

    def _scheduled(self, t: float) -> float:
        rate = 0.0
        for t_start, r in self.schedule:
            if t >= t_start:
                rate = r
        return rate

    def rates_at(self, t: float) -> tuple[float, float]:
        """(forward, reversed) vehicles/hour in effect at time t."""
        if self.schedule is not None:
            r = self._scheduled(t)
            if self.swap_after_s is not None and t >= self.swap_after_s:
                return 0.0, r
            return r, 0.0
        if self.shape == "constant" or not self.swap_after_s:
            if self.swap_after_s and t >= self.swap_after_s:
                return 0.0, self.rate_vph
            return self.rate_vph, 0.0
        s = self.swap_after_s
        if t < s:
            fwd = self.rate_vph * (t / s)
            rev = 0.0
        else:
            fwd = self.rate_vph * max(0.0, 1.0 - (t - s) / s)
            rev = self.rate_vph * min(1.0, (t - s) / s)
            if t >= 2 * s:
                rev = self.rate_vph * max(0.0, 1.0 - (t - 2 * s) / s)
        return fwd, rev


@dataclass
class Vehicle:
    id: int
    legs: list[tuple[int, int, int]]        # (node, in_arm, out_arm)
    leg: int = 0
    depart_time: float = 0.0
    arrive_time: float | None = None
    cumulative_wait: float = 0.0
    per_intersection_wait: dict[int, float] = field(default_factory=dict)
    queued_since: float | None = None


@dataclass
class Lane:
    node: int
    arm: int
    external: bool
    queue: list[int] = field(default_factory=list)
    transit: list[tuple[float, int]] = field(default_factory=list)


@dataclass
class TripRecord:
    vehicle_id: int
    depart_s: float
    arrive_s: float
    trip_delay_s: float
    intersection_delay_s: float


@dataclass
class MetricsSnapshot:
    step: int
    avg_queue: float
    avg_speed: float
    avg_trip_delay: float
    avg_intersection_delay: float
    avg_reward: float
    no_vehicles: bool
    no_trips: bool


def _grid_arm_neighbor(rows: int, cols: int, node: int, arm: int) -> int | None:
    r, c = divmod(node, cols)
    rr, cc = ((r - 1, c), (r, c + 1), (r + 1, c), (r, c - 1))[arm]
    if 0 <= rr < rows and 0 <= cc < cols:
        return rr * cols + cc
    return None


class TrafficSim:
    """Simulator instance owned by a single worker; see module docstring."""

    def __init__(self, config: SimConfig, net: RoadNetwork, flows: list[FlowSpec],
                 seed: int = 0):
        self.config = config
        self.net = net
        self.flows = list(flows)
        self.base_seed = seed
        self._build_geometry()
        self._resolve_flows()
        self.reset(seed)

    # -- geometry -----------------------------------------------------------

    def _build_geometry(self) -> None:
        net = self.net
        n = net.n
        self.arm_neighbor: list[list[int | None]] = [[None] * 4 for _ in range(n)]
        if net.grid_shape is not None:
            rows, cols = net.grid_shape
            for i in range(n):
                for arm in ARMS:
                    self.arm_neighbor[i][arm] = _grid_arm_neighbor(rows, cols, i, arm)
        else:
            for i in range(n):
                nbrs = sorted(net.neighbors(i))
                if len(nbrs) > 4:
                    raise SimulationError(
                        f"node {i} has {len(nbrs)} neighbors; at most 4 supported")
                for arm, j in zip(ARMS, nbrs):
                    self.arm_neighbor[i][arm] = j
        self.arm_toward: list[dict[int, int]] = [
            {j: arm for arm, j in enumerate(self.arm_neighbor[i]) if j is not None}
            for i in range(n)
        ]
        # a lane exists on every arm that can feed traffic into the node
        self.lanes: dict[tuple[int, int], Lane] = {}
        for i in range(n):
            for arm in ARMS:
                j = self.arm_neighbor[i][arm]
                if j is None:
                    self.lanes[(i, arm)] = Lane(i, arm, external=True)
                elif net.weights[j, i] > 0.0:
                    self.lanes[(i, arm)] = Lane(i, arm, external=False)

    def external_arms(self, node: int) -> list[int]:
        return [a for a in ARMS if self.arm_neighbor[node][a] is None]

    # -- flow resolution ------------------------------------------------------

    def _region_endpoints(self, spec, role: str) -> list[tuple[int, int]]:
        """Resolve a region spec to (node, external arm) pairs."""
        if isinstance(spec, str):
            if self.net.grid_shape is None or spec not in ARM_NAMES:
                raise SimulationError(f"unknown region {spec!r}")
            arm = ARM_NAMES.index(spec)
            pairs = [(i, arm) for i in self.net.nodes
                     if self.arm_neighbor[i][arm] is None]
            if not pairs:
                raise SimulationError(f"region {spec!r} matches no border node")
            return pairs
        nodes = [spec] if isinstance(spec, int) else list(spec)
        pairs = []
        for node in nodes:
            if node not in self.net.nodes:
                raise SimulationError(f"unknown region {node!r}")
            ext = self.external_arms(node)
            if not ext:
                raise SimulationError(
                    f"node {node} has no external arm to use as a flow {role}")
            pairs.append((node, ext[0]))
        return pairs

    def _resolve_flows(self) -> None:
        self._flow_endpoints: list[tuple[list, list]] = []
        for flow in self.flows:
            origins = self._region_endpoints(flow.origin, "origin")
            dests = self._region_endpoints(flow.destination, "destination")
            self._flow_endpoints.append((origins, dests))
        self._route_cache: dict[tuple[int, int], list[int] | None] = {}

    def _shortest_path(self, a: int, b: int) -> list[int] | None:
        key = (a, b)
        if key not in self._route_cache:
            prev = {a: None}
            frontier = [a]
            while frontier and b not in prev:
                nxt = []
                for u in frontier:
                    for v in self.net.out_neighbors(u):
                        if v not in prev:
                            prev[v] = u
                            nxt.append(v)
                frontier = nxt
            if b not in prev:
                self._route_cache[key] = None
            else:
                path = [b]
                while path[-1] != a:
                    path.append(prev[path[-1]])
                self._route_cache[key] = path[::-1]
        return self._route_cache[key]

    def _build_legs(self, o_node: int, o_arm: int, d_node: int, d_arm: int
                    ) -> list[tuple[int, int, int]] | None:
        path = self._shortest_path(o_node, d_node)
        if path is None:
            return None
        legs = []
        in_arm = o_arm
        for p, node in enumerate(path):
            if p + 1 < len(path):
                out_arm = self.arm_toward[node][path[p + 1]]
            else:
                out_arm = d_arm
            if out_arm == in_arm:
                return None  # would be a U-turn
            legs.append((node, in_arm, out_arm))
            if p + 1 < len(path):
                in_arm = self.arm_toward[path[p + 1]][node]
        return legs

    # -- lifecycle ------------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Empty the network, put every signal at phase 0, reseed spawning."""
        if seed is not None:
            self.base_seed = seed
        self.step_idx = 0
        self.time = 0.0
        self.phase = [0] * self.net.n
        self.vehicles: dict[int, Vehicle] = {}
        self.trips: list[TripRecord] = []
        self.spawned_total = 0
        self.arrived_total = 0
        self._next_vid = 0
        self.last_rewards = np.zeros(self.net.n)
        self.guard_violations = 0
        for lane in self.lanes.values():
            lane.queue.clear()
            lane.transit.clear()
        self._flow_rngs = [substream(self.base_seed, "spawn", idx)
                           for idx in range(len(self.flows))]
        return self.observe_all()

    @property
    def done(self) -> bool:
        return self.step_idx >= self.config.horizon_steps

    # -- observation ------------------------------------------------------------

    def observe_wave(self, agent: int) -> np.ndarray:
        """Vehicles per incoming lane: queued plus approaching strictly
        within detection range."""
        if agent not in self.net.nodes:
            raise SimulationError(f"unknown agent {agent}")
        wave = np.zeros(4)
        speed = self.config.free_flow_speed_mps
        for arm in ARMS:
            lane = self.lanes.get((agent, arm))
            if lane is None:
                continue
            count = len(lane.queue)
            for join_t, _ in lane.transit:
                dist = max(0.0, (join_t - self.time)) * speed
                if dist < self.config.detection_range_m:
                    count += 1
            wave[arm] = count
        return wave

    def observe_all(self) -> np.ndarray:
        return np.stack([self.observe_wave(i) for i in self.net.nodes])

    def queue_len(self, node: int, arm: int) -> int:
        lane = self.lanes.get((node, arm))
        return len(lane.queue) if lane is not None else 0

    def agent_queue(self, node: int) -> int:
        return sum(self.queue_len(node, arm) for arm in ARMS)

    def movement_pressure_inputs(self, node: int) -> dict[tuple[int, int], tuple[int, int]]:
        """Per movement: (incoming-lane queue, downstream-lane queue).

        Movements exiting the network see an empty downstream lane.
        """
        out = {}
        for move in ALL_MOVES:
            in_arm, out_arm = move
            q_in = self.queue_len(node, in_arm)
            nbr = self.arm_neighbor[node][out_arm]
            if nbr is None:
                q_out = 0
            else:
                q_out = self.queue_len(nbr, self.arm_toward[nbr][node])
            out[move] = (q_in, q_out)
        return out

    # -- dynamics ------------------------------------------------------------

    def step(self, actions) -> tuple[np.ndarray, np.ndarray, bool, dict]:
        if self.done:
            raise SimulationError("episode is over; call reset()")
        actions = list(actions)
        if len(actions) != self.net.n:
            raise SimulationError(
                f"need one action per agent ({self.net.n}), got {len(actions)}")
        for i, a in enumerate(actions):
            if not (isinstance(a, (int, np.integer)) and 0 <= int(a) < N_PHASES):
                raise SimulationError(f"agent {i}: action {a!r} outside 0..{N_PHASES - 1}")

        cfg = self.config
        t0 = self.time
        t_end = t0 + cfg.delta_t_s
        green = []
        for i, a in enumerate(actions):
            a = int(a)
            if a != self.phase[i]:
                self.phase[i] = a
                green.append(cfg.delta_t_s - cfg.guard_s)
            else:
                green.append(cfg.delta_t_s)

        self._admit_arrivals(t0)
        self._discharge(green, t_end)
        self._spawn(t0, t_end)
        self._accrue_waits(t_end)

        rewards = np.array([self._agent_reward(i) for i in self.net.nodes])
        self.last_rewards = rewards
        self.step_idx += 1
        self.time = t_end
        return self.observe_all(), rewards, self.done, {
            "queues": np.array([self.agent_queue(i) for i in self.net.nodes]),
            "in_network": len(self.vehicles),
            "spawned_total": self.spawned_total,
            "arrived_total": self.arrived_total,
        }

    def _admit_arrivals(self, t0: float) -> None:
        cap = self.config.lane_capacity
        for key in sorted(self.lanes):
            lane = self.lanes[key]
            while lane.transit and lane.transit[0][0] <= t0:
                if cap is not None and len(lane.queue) >= cap:
                    break
                join_t, vid = lane.transit.pop(0)
                lane.queue.append(vid)
                self.vehicles[vid].queued_since = max(join_t, t0)

    def _discharge(self, green: list[float], t_end: float) -> None:
        cfg = self.config
        cap = self.config.lane_capacity
        for i in self.net.nodes:
            served = PHASE_MOVES[self.phase[i]]
            budget = {m: math.floor(cfg.saturation_rate_vps * green[i]) for m in served}
            for arm in ARMS:
                lane = self.lanes.get((i, arm))
                if lane is None:
                    continue
                while lane.queue:
                    veh = self.vehicles[lane.queue[0]]
                    node, in_arm, out_arm = veh.legs[veh.leg]
                    move = (in_arm, out_arm)
                    if move not in budget or budget[move] <= 0:
                        break
                    nbr = self.arm_neighbor[i][out_arm]
                    if nbr is not None and cap is not None:
                        down = self.lanes[(nbr, self.arm_toward[nbr][i])]
                        if len(down.queue) >= cap:
                            break
                    lane.queue.pop(0)
                    budget[move] -= 1
                    veh.queued_since = None
                    if veh.leg + 1 < len(veh.legs):
                        veh.leg += 1
                        down = self.lanes[(nbr, self.arm_toward[nbr][i])]
                        insort(down.transit, (t_end + cfg.free_flow_time_s, veh.id))
                    else:
                        veh.arrive_time = t_end
                        self.trips.append(TripRecord(
                            vehicle_id=veh.id,
                            depart_s=veh.depart_time,
                            arrive_s=t_end,
                            trip_delay_s=t_end - veh.depart_time,
                            intersection_delay_s=sum(veh.per_intersection_wait.values()),
                        ))
                        del self.vehicles[veh.id]
                        self.arrived_total += 1

    def _spawn(self, t0: float, t_end: float) -> None:
        cfg = self.config
        for idx, flow in enumerate(self.flows):
            rng = self._flow_rngs[idx]
            origins, dests = self._flow_endpoints[idx]
            fwd_rate, rev_rate = flow.rates_at(t0)
            for rate, o_pairs, d_pairs in ((fwd_rate, origins, dests),
                                           (rev_rate, dests, origins)):
                lam = rate * cfg.delta_t_s / 3600.0
                count = int(rng.poisson(lam)) if lam > 0 else 0
                for _ in range(count):
                    o_node, o_arm = o_pairs[rng.integers(len(o_pairs))]
                    d_node, d_arm = d_pairs[rng.integers(len(d_pairs))]
                    legs = self._build_legs(o_node, o_arm, d_node, d_arm)
                    if legs is None:
                        raise SimulationError(
                            f"flow {idx}: no route from node {o_node} to {d_node}")
                    vid = self._next_vid
                    self._next_vid += 1
                    veh = Vehicle(id=vid, legs=legs, depart_time=t_end)
                    self.vehicles[vid] = veh
                    entry = self.lanes[(o_node, o_arm)]
                    insort(entry.transit, (t_end + cfg.free_flow_time_s, vid))
                    self.spawned_total += 1

    def _accrue_waits(self, t_end: float) -> None:
        for key in sorted(self.lanes):
            lane = self.lanes[key]
            for vid in lane.queue:
                veh = self.vehicles[vid]
                since = veh.queued_since if veh.queued_since is not None else t_end
                dt = t_end - since
                if dt > 0:
                    veh.cumulative_wait += dt
                    node = veh.legs[veh.leg][0]
                    veh.per_intersection_wait[node] = (
                        veh.per_intersection_wait.get(node, 0.0) + dt)
                veh.queued_since = t_end

    def _agent_reward(self, i: int) -> float:
        queue = self.agent_queue(i)
        max_wait = 0.0
        for arm in ARMS:
            lane = self.lanes.get((i, arm))
            if lane is not None and lane.queue:
                max_wait = max(max_wait, self.vehicles[lane.queue[0]].cumulative_wait)
        return -(queue + self.config.wait_coeff * max_wait)

    # -- metrics ------------------------------------------------------------

    def metrics_snapshot(self) -> MetricsSnapshot:
        n = self.net.n
        avg_queue = sum(self.agent_queue(i) for i in self.net.nodes) / n
        in_network = list(self.vehicles.values())
        no_vehicles = not in_network
        if no_vehicles:
            avg_speed = 0.0
            avg_int_delay = 0.0
        else:
            queued = {vid for lane in self.lanes.values() for vid in lane.queue}
            speeds = [0.0 if v.id in queued else self.config.free_flow_speed_mps
                      for v in in_network]
            avg_speed = float(np.mean(speeds))
            avg_int_delay = float(np.mean(
                [sum(v.per_intersection_wait.values()) for v in in_network]))
        no_trips = not self.trips
        avg_trip_delay = 0.0 if no_trips else float(
            np.mean([t.trip_delay_s for t in self.trips]))
        return MetricsSnapshot(
            step=self.step_idx,
            avg_queue=avg_queue,
            avg_speed=avg_speed,
            avg_trip_delay=avg_trip_delay,
            avg_intersection_delay=avg_int_delay,
            avg_reward=float(np.mean(self.last_rewards)),
            no_vehicles=no_vehicles,
            no_trips=no_trips,
        )

    # -- scenario helpers (tests and demos) -------------------------------------

    def seed_queue(self, node: int, arm: int, count: int, wait: float = 0.0,
                   out_arm: int | None = None) -> list[int]:
        """Place synthetic queued vehicles on a lane (single-leg trips)."""
        lane = self.lanes[(node, arm)]
        if out_arm is None:
            out_arm = (arm + 2) % 4
        vids = []
        for _ in range(count):
            vid = self._next_vid
            self._next_vid += 1
            veh = Vehicle(id=vid, legs=[(node, arm, out_arm)], depart_time=self.time)
            veh.cumulative_wait = wait
            if wait:
                veh.per_intersection_wait[node] = wait
            veh.queued_since = self.time
            self.vehicles[vid] = veh
            lane.queue.append(vid)
            self.spawned_total += 1
            vids.append(vid)
        return vids
