"""Neighborhood information aggregation into per-agent signal sequences.

Each tick every agent exchanges exactly once with each 1-hop neighbor and
extends a K-entry sequence of progressively wider-neighborhood aggregates
of the (encoded) node signals:

  entry 0      the agent's own current signal,
  entry k >= 1 a k-hop aggregate of the signal from k ticks ago.

Two modes are provided. The default ``fixed`` mode uses the constant
bidirectional shift operators: entry k applies
``sum_{j=0}^{k-1} (fwd^j + rev^j)`` to the signal k ticks back, built
recursively so only single-hop exchanges happen per tick (the identity
appears once per direction at j=0; ``single_identity=True`` drops the
duplicate). The ``time_varying`` mode chains per-tick one-hop matrices:
entry k equals ``P_t P_{t-1} ... P_{t-k+1}`` applied to the signal k
ticks back. Missing history at episode start is zero-padded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .network import DiffusionOperator, RoadNetwork


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class AggSequence:
    """Ordered K-entry aggregate history owned by one agent."""

    owner: int
    entries: np.ndarray      # (K, F)
    t: int

    @property
    def K(self) -> int:
        return self.entries.shape[0]


def _check_one_hop_support(mat: np.ndarray, net: RoadNetwork) -> None:
    n = net.n
    allowed = np.eye(n, dtype=bool)
    for i, j in net.edges:
        allowed[i, j] = True
        allowed[j, i] = True
    if np.any((np.asarray(mat) != 0.0) & ~allowed):
        raise AggregationError("matrix has support beyond the 1-hop neighborhood")


def aggregate_step(mat: np.ndarray, signal: np.ndarray, net: RoadNetwork | None = None) -> np.ndarray:
    """One neighbor-local aggregation: out_i = sum_{j in N_i ∪ {i}} mat[i,j] signal_j.

    When ``net`` is given, each row is computed from the agent's own entry
    plus its immediate neighbors' entries only (entries of ``mat`` outside
    that support are ignored), matching what a single message exchange can
    deliver. Without a network the dense product is used.
    """
    mat = np.asarray(mat, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise AggregationError("aggregation matrix must be square")
    if signal.shape[0] != mat.shape[0]:
        raise AggregationError(
            f"signal has {signal.shape[0]} rows, matrix expects {mat.shape[0]}")
    if net is None:
        return mat @ signal
    if net.n != mat.shape[0]:
        raise AggregationError("network size does not match matrix")
    out = np.zeros_like(signal, dtype=float)
    for i in net.nodes:
        reachable = [i] + net.neighbors(i)
        for j in reachable:
            if mat[i, j] != 0.0:
                out[i] = out[i] + mat[i, j] * signal[j]
    return out


class SequenceBuilder:
    """Stateful recursive builder of per-agent aggregation sequences.

    ``push`` consumes the current (N, F) node signal and returns the
    (N, K, F) array of per-agent sequences for this tick. The exchange
    counter tracks how many neighbor reads the tick required: one per
    (agent, undirected neighbor) pair, independent of K.
    """

    def __init__(
        self,
        op: DiffusionOperator,
        K: int = 3,
        mode: str = "fixed",
        single_identity: bool = False,
    ):
        if K < 1:
            raise AggregationError("K must be >= 1")
        if mode not in ("fixed", "time_varying"):
            raise AggregationError(f"unknown mode {mode!r}")
        self.op = op
        self.net = op.net
        self.K = K
        self.mode = mode
        self.single_identity = single_identity
        self.exchange_count = 0
        self.last_tick_exchanges = 0
        self._deg_total = sum(len(self.net.neighbors(i)) for i in self.net.nodes)
        self.reset()

    def reset(self) -> None:
        self.t = -1
        self._feat: int | None = None
        # fixed mode: per remembered signal (newest first), the staged
        # power terms fwd^j y0 / rev^j y0 for j = 0..age, capped at K-2.
        self._stages: list[dict] = []
        # time-varying mode: previous tick's entries (N, K, F).
        self._prev_entries: np.ndarray | None = None

    def _count_tick(self) -> None:
        if self.K > 1:
            self.last_tick_exchanges = self._deg_total
        else:
            self.last_tick_exchanges = 0
        self.exchange_count += self.last_tick_exchanges

    def push(self, y0: np.ndarray, mat_t: np.ndarray | None = None) -> np.ndarray:
        y0 = np.asarray(y0, dtype=float)
        if y0.ndim == 1:
            y0 = y0[:, np.newaxis]
        if y0.shape[0] != self.net.n:
            raise AggregationError("signal row count does not match network")
        if self._feat is None:
            self._feat = y0.shape[1]
        elif y0.shape[1] != self._feat:
            raise AggregationError("signal feature width changed mid-episode")
        self.t += 1
        self._count_tick()
        if self.mode == "fixed":
            return self._push_fixed(y0)
        return self._push_time_varying(y0, mat_t)

    # -- fixed bidirectional operator -------------------------------------

    def _push_fixed(self, y0: np.ndarray) -> np.ndarray:
        n, f = self.net.n, self._feat
        # age every remembered signal by one exchange round
        for st in self._stages:
            if len(st["fwd"]) < self.K - 1:
                st["fwd"].append(self.op.fwd @ st["fwd"][-1])
                st["rev"].append(self.op.rev @ st["rev"][-1])
        self._stages.insert(0, {"fwd": [y0], "rev": [y0]})
        del self._stages[self.K:]

        out = np.zeros((n, self.K, f))
        out[:, 0, :] = y0
        for k in range(1, self.K):
            if k >= len(self._stages):
                break  # zero padding before enough history exists
            st = self._stages[k]   # signal from k ticks ago
            ent = np.zeros((n, f))
            for j in range(k):
                ent += st["fwd"][j] + st["rev"][j]
            if self.single_identity:
                ent -= st["fwd"][0]
            out[:, k, :] = ent
        return out

    # -- time-varying per-tick matrices ------------------------------------

    def _push_time_varying(self, y0: np.ndarray, mat_t: np.ndarray | None) -> np.ndarray:
        if mat_t is None:
            mat_t = self.op.walk_base()
        mat_t = np.asarray(mat_t, dtype=float)
        if mat_t.shape != (self.net.n, self.net.n):
            raise AggregationError("per-tick matrix has wrong shape")
        _check_one_hop_support(mat_t, self.net)
        n, f = self.net.n, self._feat
        out = np.zeros((n, self.K, f))
        out[:, 0, :] = y0
        if self._prev_entries is not None:
            for k in range(1, self.K):
                out[:, k, :] = mat_t @ self._prev_entries[:, k - 1, :]
        self._prev_entries = out
        return out

    # -- conveniences -------------------------------------------------------

    def sequences(self, entries: np.ndarray) -> list[AggSequence]:
        return [AggSequence(owner=i, entries=entries[i].copy(), t=self.t)
                for i in self.net.nodes]

    def dump_json(self, entries: np.ndarray, path) -> None:
        payload = {
            "t": self.t,
            "K": self.K,
            "mode": self.mode,
            "sequences": {str(i): entries[i].tolist() for i in self.net.nodes},
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)


def dense_fixed_oracle(
    op: DiffusionOperator, history: list[np.ndarray], K: int, single_identity: bool = False
) -> np.ndarray:
    """Direct matrix-product evaluation of the fixed-operator sequence.

    ``history`` is the signal list ending at the current tick
    (history[-1] = y0_t); earlier missing entries are zero. Used as the
    reference the recursive builder is checked against.
    """
    n = op.n
    f = history[-1].shape[1] if history[-1].ndim > 1 else 1
    out = np.zeros((n, K, f))
    out[:, 0, :] = history[-1].reshape(n, f)
    for k in range(1, K):
        if k >= len(history):
            continue
        sig = history[-1 - k].reshape(n, f)
        mat = np.zeros((n, n))
        for j in range(k):
            mat += op.power("fwd", j) + op.power("rev", j)
        if single_identity:
            mat -= np.eye(n)
        out[:, k, :] = mat @ sig
    return out


def dense_time_varying_oracle(
    mats: list[np.ndarray], history: list[np.ndarray], K: int
) -> np.ndarray:
    """Direct product-chain evaluation of the time-varying sequence.

    ``mats[m]`` is the one-hop matrix of the tick at which ``history[m]``
    arrived; entry k of the final tick applies
    ``mats[-1] @ mats[-2] @ ... @ mats[-k]`` to ``history[-1-k]``.
    """
    n = history[-1].shape[0]
    f = history[-1].shape[1] if history[-1].ndim > 1 else 1
    out = np.zeros((n, K, f))
    out[:, 0, :] = history[-1].reshape(n, f)
    for k in range(1, K):
        if k >= len(history):
            continue
        prod = np.eye(n)
        for step in range(k):
            prod = prod @ mats[len(mats) - 1 - step]
        out[:, k, :] = prod @ history[-1 - k].reshape(n, f)
    return out


def locality_check(
    op: DiffusionOperator,
    history: list[np.ndarray],
    perturbed_node: int,
    agent: int,
    K: int = 3,
    mode: str = "fixed",
    delta: float = 1.0,
) -> bool:
    """True iff perturbing node j's raw signal leaves agent i's sequence
    entries below the communication hop distance d(i, j) unchanged.

    Entry k aggregates at most k exchange rounds of information, so nodes
    farther than k undirected hops cannot influence it.
    """
    net = op.net
    d = net.comm_hop_dist[agent, perturbed_node]

    def run(hist):
        b = SequenceBuilder(op, K=K, mode=mode)
        out = None
        for sig in hist:
            out = b.push(sig)
        return out

    base = run(history)
    pert_hist = [h.copy() for h in history]
    for h in pert_hist:
        h[perturbed_node] += delta
    pert = run(pert_hist)
    limit = min(K, int(d) if np.isfinite(d) else K)
    for k in range(limit):
        if not np.array_equal(base[agent, k], pert[agent, k]):
            return False
    return True
