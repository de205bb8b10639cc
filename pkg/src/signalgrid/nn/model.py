"""Per-agent policy/value model: encoder -> recurrent trunk -> heads.

The trunk unrolls two graph-recurrent layers over the K entries of the
aggregation sequence (hop index as the recurrence axis), joined by a
rectifier; the final hidden state feeds a softmax actor over the phase
set and a linear critic. The critic additionally sees the raw
neighbor-action block.

Two execution modes share all code paths:

  * ``decentralized`` (default): the model runs per agent; gate filters
    are node-local (identity operator, single tap) and the sequence
    entries beyond the agent's own current encoding are treated as
    received data.
  * ``graph``: one parameter set is evaluated over every node at once;
    gate filters are multi-tap polynomials in the walk matrices and the
    whole pipeline (encoding, aggregation, recurrence) is differentiable
    end to end.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..network import DiffusionOperator
from . import autodiff as ad
from .autodiff import Tensor
from .layers import DiffusionGRUCell, Encoder, HeadPair


@dataclass(frozen=True)
class ModelConfig:
    wave_dim: int
    nbr_dim: int
    n_actions: int = 5
    encoder_units: int = 64
    hidden: int = 64
    K: int = 3
    k_tap: int = 2
    mode: str = "decentralized"
    literal_candidate_gate: bool = False
    single_identity: bool = False


def fixed_entry_matrices(op: DiffusionOperator, K: int, single_identity: bool = False) -> list[np.ndarray]:
    """Dense matrices turning raw node encodings into sequence entries.

    Entry 0 is the identity (own signal); entry k sums powers 0..k-1 of
    both walk matrices, optionally deduplicating the identity.
    """
    n = op.n
    mats = [np.eye(n)]
    for k in range(1, K):
        m = np.zeros((n, n))
        for j in range(k):
            m += op.power("fwd", j) + op.power("rev", j)
        if single_identity:
            m -= np.eye(n)
        mats.append(m)
    return mats


class AgentModel:
    """Holder of the full parameter set plus the frozen critic target."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator,
                 op: DiffusionOperator | None = None):
        self.config = config
        self.op = op
        if config.mode == "graph":
            if op is None:
                raise ValueError("graph mode needs a diffusion operator")
            pf = [op.power("fwd", k) for k in range(config.k_tap)]
            pr = [op.power("rev", k) for k in range(config.k_tap)]
            powers = (pf, pr)
        elif config.mode == "decentralized":
            powers = None
        else:
            raise ValueError(f"unknown model mode {config.mode!r}")
        feat = 2 * config.encoder_units
        self.encoder = Encoder(config.wave_dim, config.nbr_dim, config.encoder_units, rng)
        self.gru1 = DiffusionGRUCell("gru1", feat, config.hidden, powers, rng,
                                     literal_candidate_gate=config.literal_candidate_gate)
        self.gru2 = DiffusionGRUCell("gru2", config.hidden, config.hidden, powers, rng,
                                     literal_candidate_gate=config.literal_candidate_gate)
        self.heads = HeadPair(config.hidden, config.nbr_dim, config.n_actions)
        self.target_critic: tuple[np.ndarray, np.ndarray] | None = None
        self.optimizer = None  # attached by the trainer

    # -- parameters ---------------------------------------------------------

    def params(self) -> list[tuple[str, Tensor]]:
        return (self.encoder.params() + self.gru1.params() + self.gru2.params()
                + self.heads.params())

    def param(self, name: str) -> Tensor:
        for n, t in self.params():
            if n == name:
                return t
        raise KeyError(name)

    def critic_param_names(self) -> set[str]:
        return {"critic.W", "critic.b"}

    def zero_grad(self) -> None:
        for _, t in self.params():
            t.zero_grad()

    def sync_target(self) -> None:
        """Freeze the current critic head as the bootstrap target."""
        self.target_critic = (self.heads.critic_W.data.copy(),
                              self.heads.critic_b.data.copy())

    def copy_params_from(self, other: "AgentModel") -> None:
        for (_, mine), (_, theirs) in zip(self.params(), other.params()):
            mine.data = theirs.data.copy()

    # -- forward passes -------------------------------------------------------

    def encode(self, wave, nbr_actions) -> Tensor:
        return self.encoder(wave, nbr_actions)

    def _unroll(self, entries: list[Tensor]) -> Tensor:
        cfg = self.config
        if len(entries) != cfg.K:
            raise ValueError(f"sequence length {len(entries)} != configured K={cfg.K}")
        lead = entries[0].shape[:-1]
        h1 = Tensor(np.zeros(lead + (cfg.hidden,)))
        h2 = Tensor(np.zeros(lead + (cfg.hidden,)))
        for x in entries:
            h1 = self.gru1.step(x, h1)
            h2 = self.gru2.step(ad.relu(h1), h2)
        return h2

    def forward_decentralized(self, seq: np.ndarray, wave: np.ndarray, acts: np.ndarray,
                              target_critic: bool = False, reuse_entry0: bool = False):
        """Per-agent trunk over stored sequences.

        ``seq`` is (..., K, F); entry 0 is recomputed from the raw
        (wave, acts) inputs so the encoder receives gradient, the
        remaining entries are data (``reuse_entry0=True`` skips the
        recomputation on gradient-free rollout passes). Returns
        (log-probs, value).
        """
        cfg = self.config
        seq = np.asarray(seq, dtype=float)
        if seq.shape[-2] != cfg.K:
            raise ValueError(f"sequence length {seq.shape[-2]} != configured K={cfg.K}")
        first = Tensor(seq[..., 0, :]) if reuse_entry0 else self.encode(wave, acts)
        entries: list[Tensor] = [first]
        for k in range(1, cfg.K):
            entries.append(Tensor(seq[..., k, :]))
        trunk = self._unroll(entries)
        logp = ad.log_softmax(self.heads.actor_logits(trunk), axis=-1)
        weights = self.target_critic if target_critic else None
        if target_critic and weights is None:
            raise RuntimeError("target critic requested before any sync")
        value = self.heads.critic_value(trunk, np.asarray(acts, dtype=float), weights=weights)
        return logp, value

    def forward_graph(self, wave_hist: list[np.ndarray], act_hist: list[np.ndarray],
                      entry_mats: list[np.ndarray], target_critic: bool = False):
        """Whole-graph trunk, differentiable through the aggregation.

        ``wave_hist``/``act_hist`` are the last K raw observations, oldest
        first; ``entry_mats`` come from :func:`fixed_entry_matrices`.
        Returns per-node (log-probs, value).
        """
        cfg = self.config
        if len(wave_hist) != cfg.K or len(act_hist) != cfg.K:
            raise ValueError(f"need exactly K={cfg.K} observation frames")
        encodings = [self.encode(w, a) for w, a in zip(wave_hist, act_hist)]
        entries: list[Tensor] = []
        for k in range(cfg.K):
            enc = encodings[cfg.K - 1 - k]
            entries.append(enc if k == 0 else ad.gso_apply(entry_mats[k], enc))
        trunk = self._unroll(entries)
        logp = ad.log_softmax(self.heads.actor_logits(trunk), axis=-1)
        weights = self.target_critic if target_critic else None
        if target_critic and weights is None:
            raise RuntimeError("target critic requested before any sync")
        value = self.heads.critic_value(trunk, np.asarray(act_hist[-1], dtype=float),
                                        weights=weights)
        return logp, value

    def policy(self, seq: np.ndarray, wave: np.ndarray, acts: np.ndarray) -> np.ndarray:
        """Action probabilities, no taping."""
        with ad.no_grad():
            logp, _ = self.forward_decentralized(seq, wave, acts, reuse_entry0=True)
        return np.exp(logp.data)

    def policy_and_value(self, seq: np.ndarray, wave: np.ndarray, acts: np.ndarray
                         ) -> tuple[np.ndarray, np.ndarray]:
        """(probabilities, live value) in one gradient-free pass."""
        with ad.no_grad():
            logp, v = self.forward_decentralized(seq, wave, acts, reuse_entry0=True)
        return np.exp(logp.data), v.data

    def value_estimate(self, seq: np.ndarray, wave: np.ndarray, acts: np.ndarray,
                       target: bool = False) -> np.ndarray:
        with ad.no_grad():
            _, v = self.forward_decentralized(seq, wave, acts, target_critic=target,
                                              reuse_entry0=True)
        return v.data


class RolloutCache:
    """Stacked per-agent parameters for fast gradient-free rollouts.

    Decentralized models share an architecture but not parameters;
    stacking the parameter tensors lets one batched einsum evaluate every
    agent per step. ``refresh()`` must run after any parameter update
    (the trainer does this after each optimization round); outputs match
    the per-agent tape forward bit for bit.
    """

    def __init__(self, models: list[AgentModel]):
        cfg = models[0].config
        if cfg.mode != "decentralized":
            raise ValueError("rollout cache covers decentralized models only")
        if any(m.config != cfg for m in models):
            raise ValueError("models must share one configuration")
        self.models = models
        self.cfg = cfg
        self.refresh()

    def refresh(self) -> None:
        ms = self.models

        def stack(get):
            return np.stack([get(m) for m in ms])

        self.A1 = stack(lambda m: m.encoder.A1.data)
        self.c1 = stack(lambda m: m.encoder.c1.data)
        self.A2 = stack(lambda m: m.encoder.A2.data)
        self.c2 = stack(lambda m: m.encoder.c2.data)
        self.cells = []
        for cell_of in (lambda m: m.gru1, lambda m: m.gru2):
            self.cells.append({
                "Wz": stack(lambda m: cell_of(m).theta_z.psi_fwd[0].data
                            + cell_of(m).theta_z.psi_rev[0].data),
                "Wr": stack(lambda m: cell_of(m).theta_r.psi_fwd[0].data
                            + cell_of(m).theta_r.psi_rev[0].data),
                "Wc": stack(lambda m: cell_of(m).theta_c.psi_fwd[0].data
                            + cell_of(m).theta_c.psi_rev[0].data),
                "bz": stack(lambda m: cell_of(m).b_z.data),
                "br": stack(lambda m: cell_of(m).b_r.data),
                "bc": stack(lambda m: cell_of(m).b_c.data),
            })
        self.Wa = stack(lambda m: m.heads.actor_W.data)
        self.ba = stack(lambda m: m.heads.actor_b.data)
        self.Wv = stack(lambda m: m.heads.critic_W.data)
        self.bv = stack(lambda m: m.heads.critic_b.data)

    @staticmethod
    def _bmv(W: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.einsum("nij,ni->nj", W, x)

    @staticmethod
    def _sigmoid(x: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + np.exp(-x))

    def encode(self, waves: np.ndarray, blocks: np.ndarray) -> np.ndarray:
        e1 = np.maximum(self._bmv(self.A1, waves) + self.c1, 0.0)
        e2 = np.maximum(self._bmv(self.A2, blocks) + self.c2, 0.0)
        return np.concatenate([e1, e2], axis=-1)

    def _cell_step(self, idx: int, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        c = self.cells[idx]
        xh = np.concatenate([x, h], axis=-1)
        z = self._sigmoid(self._bmv(c["Wz"], xh) + c["bz"])
        r = self._sigmoid(self._bmv(c["Wr"], xh) + c["br"])
        gate = z if self.cfg.literal_candidate_gate else r
        xg = np.concatenate([x, gate * h], axis=-1)
        cand = np.tanh(self._bmv(c["Wc"], xg) + c["bc"])
        return (1.0 - z) * h + z * cand

    def policy_values(self, seqs: np.ndarray, blocks: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
        """All agents' action probabilities and live values for one tick.

        ``seqs`` is (N, K, F) with entry 0 already encoded; ``blocks`` is
        the (N, nbr_dim) neighbor-action input.
        """
        n = seqs.shape[0]
        h1 = np.zeros((n, self.cfg.hidden))
        h2 = np.zeros((n, self.cfg.hidden))
        for k in range(self.cfg.K):
            h1 = self._cell_step(0, seqs[:, k, :], h1)
            h2 = self._cell_step(1, np.maximum(h1, 0.0), h2)
        logits = self._bmv(self.Wa, h2) + self.ba
        shifted = logits - logits.max(axis=-1, keepdims=True)
        expv = np.exp(shifted)
        probs = expv / expv.sum(axis=-1, keepdims=True)
        vin = np.concatenate([h2, blocks], axis=-1)
        values = (self._bmv(self.Wv, vin) + self.bv)[:, 0]
        return probs, values


# -- checkpoint serialization ---------------------------------------------
#
# A checkpoint is a single JSON header line (model config plus the param
# manifest in declaration order) followed by the raw little-endian
# float64 buffers concatenated in that same order.

MAGIC = "signalgrid-model"


def save_checkpoint(model: AgentModel, path) -> None:
    manifest = [{"name": n, "shape": list(t.shape)} for n, t in model.params()]
    header = {"format": MAGIC, "version": 1,
              "config": asdict(model.config), "params": manifest}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for _, t in model.params():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path, op: DiffusionOperator | None = None) -> AgentModel:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    if header.get("format") != MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    config = ModelConfig(**header["config"])
    model = AgentModel(config, np.random.default_rng(0), op=op)
    offset = 0
    for spec, (name, t) in zip(header["params"], model.params()):
        if spec["name"] != name or tuple(spec["shape"]) != t.shape:
            raise ValueError(f"{path}: parameter mismatch at {name}")
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        t.data = arr.reshape(tuple(spec["shape"])).astype(np.float64).copy()
        offset += count * 8
    if offset != len(blob):
        raise ValueError(f"{path}: trailing bytes in parameter blob")
    return model
