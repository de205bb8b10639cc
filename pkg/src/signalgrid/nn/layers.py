"""Differentiable building blocks: encoder, graph filter banks, recurrent cell.

The graph filter applies a bank of learnable taps to powers of the two
walk matrices (forward and reverse); with the identity operator and a
single tap it degenerates to an ordinary dense layer, which is the
per-agent execution path. The recurrent cell swaps the dense gate
products of a GRU for these graph filters.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Encoder:
    """Two 64-unit branches over the wave state and the neighbor-action
    one-hot block, rectified and concatenated."""

    def __init__(self, wave_dim: int, nbr_dim: int, units: int, rng: np.random.Generator):
        self.wave_dim = wave_dim
        self.nbr_dim = nbr_dim
        self.units = units
        self.A1 = ad.parameter(glorot(rng, wave_dim, units))
        self.c1 = ad.parameter(np.zeros(units))
        self.A2 = ad.parameter(glorot(rng, nbr_dim, units))
        self.c2 = ad.parameter(np.zeros(units))

    @property
    def out_dim(self) -> int:
        return 2 * self.units

    def __call__(self, wave, nbr_actions) -> Tensor:
        wave = ad.as_tensor(wave)
        nbr_actions = ad.as_tensor(nbr_actions)
        if wave.shape[-1] != self.wave_dim:
            raise ValueError(f"wave dim {wave.shape[-1]} != expected {self.wave_dim}")
        if nbr_actions.shape[-1] != self.nbr_dim:
            raise ValueError(
                f"neighbor-action dim {nbr_actions.shape[-1]} != expected {self.nbr_dim}")
        h1 = ad.relu(ad.matmul(wave, self.A1) + self.c1)
        h2 = ad.relu(ad.matmul(nbr_actions, self.A2) + self.c2)
        return ad.concat([h1, h2], axis=-1)

    def params(self) -> list[tuple[str, Tensor]]:
        return [("enc.A1", self.A1), ("enc.c1", self.c1),
                ("enc.A2", self.A2), ("enc.c2", self.c2)]


class GraphFilterBank:
    """Learnable polynomial in the two walk matrices.

    ``powers`` is a pair of matched lists (forward powers, reverse powers)
    including the identity at index 0, or None for the node-local case
    where the filter is a plain dense map. One coefficient matrix per
    (tap, direction).
    """

    def __init__(
        self,
        name: str,
        in_dim: int,
        out_dim: int,
        powers: tuple[list[np.ndarray], list[np.ndarray]] | None,
        rng: np.random.Generator,
    ):
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.powers = powers
        n_taps = 1 if powers is None else len(powers[0])
        self.psi_fwd = [ad.parameter(glorot(rng, in_dim, out_dim)) for _ in range(n_taps)]
        self.psi_rev = [ad.parameter(glorot(rng, in_dim, out_dim)) for _ in range(n_taps)]

    @property
    def n_taps(self) -> int:
        return len(self.psi_fwd)

    def __call__(self, z) -> Tensor:
        z = ad.as_tensor(z)
        if z.shape[-1] != self.in_dim:
            raise ValueError(f"filter {self.name}: input dim {z.shape[-1]} != {self.in_dim}")
        if self.powers is None:
            return ad.matmul(z, self.psi_fwd[0]) + ad.matmul(z, self.psi_rev[0])
        pf, pr = self.powers
        if pf[0].shape[0] != z.shape[-2]:
            raise ValueError(
                f"filter {self.name}: operator is {pf[0].shape[0]}-node, signal has "
                f"{z.shape[-2]} nodes")
        out = None
        for k in range(self.n_taps):
            term = ad.matmul(ad.gso_apply(pf[k], z), self.psi_fwd[k])
            term = term + ad.matmul(ad.gso_apply(pr[k], z), self.psi_rev[k])
            out = term if out is None else out + term
        return out

    def params(self) -> list[tuple[str, Tensor]]:
        out = []
        for k in range(self.n_taps):
            out.append((f"{self.name}.fwd{k}", self.psi_fwd[k]))
            out.append((f"{self.name}.rev{k}", self.psi_rev[k]))
        return out


def graph_filter(bank: GraphFilterBank, z) -> Tensor:
    """Filter application followed by the layer nonlinearity (rectifier)."""
    return ad.relu(bank(z))


class DiffusionGRUCell:
    """GRU cell whose gate transforms are graph filter banks.

    Gates follow the standard form: the candidate mixes the reset gate
    into the previous hidden state. ``literal_candidate_gate=True``
    switches the candidate to use the update gate instead (reproducing a
    published variant of the cell verbatim).
    """

    def __init__(
        self,
        name: str,
        in_dim: int,
        hidden: int,
        powers: tuple[list[np.ndarray], list[np.ndarray]] | None,
        rng: np.random.Generator,
        literal_candidate_gate: bool = False,
    ):
        self.name = name
        self.in_dim = in_dim
        self.hidden = hidden
        self.literal_candidate_gate = literal_candidate_gate
        cat = in_dim + hidden
        self.theta_z = GraphFilterBank(f"{name}.z", cat, hidden, powers, rng)
        self.theta_r = GraphFilterBank(f"{name}.r", cat, hidden, powers, rng)
        self.theta_c = GraphFilterBank(f"{name}.c", cat, hidden, powers, rng)
        self.b_z = ad.parameter(np.zeros(hidden))
        self.b_r = ad.parameter(np.zeros(hidden))
        self.b_c = ad.parameter(np.zeros(hidden))

    def step(self, x, h_prev) -> Tensor:
        x = ad.as_tensor(x)
        h_prev = ad.as_tensor(h_prev)
        xh = ad.concat([x, h_prev], axis=-1)
        z = ad.sigmoid(self.theta_z(xh) + self.b_z)
        r = ad.sigmoid(self.theta_r(xh) + self.b_r)
        gate = z if self.literal_candidate_gate else r
        xg = ad.concat([x, ad.mul(gate, h_prev)], axis=-1)
        c = ad.tanh(self.theta_c(xg) + self.b_c)
        return ad.mul(1.0 - z, h_prev) + ad.mul(z, c)

    def params(self) -> list[tuple[str, Tensor]]:
        out = self.theta_z.params() + self.theta_r.params() + self.theta_c.params()
        out += [(f"{self.name}.b_z", self.b_z),
                (f"{self.name}.b_r", self.b_r),
                (f"{self.name}.b_c", self.b_c)]
        return out


class HeadPair:
    """Softmax actor over the phase set and a scalar linear critic.

    Head weights start at zero so a fresh policy is exactly uniform and
    fresh values are exactly zero.
    """

    def __init__(self, trunk_dim: int, critic_extra_dim: int, n_actions: int):
        self.n_actions = n_actions
        self.actor_W = ad.parameter(np.zeros((trunk_dim, n_actions)))
        self.actor_b = ad.parameter(np.zeros(n_actions))
        self.critic_W = ad.parameter(np.zeros((trunk_dim + critic_extra_dim, 1)))
        self.critic_b = ad.parameter(np.zeros(1))

    def actor_logits(self, trunk_out) -> Tensor:
        return ad.matmul(trunk_out, self.actor_W) + self.actor_b

    def critic_value(self, trunk_out, extra, weights=None) -> Tensor:
        x = ad.concat([ad.as_tensor(trunk_out), ad.as_tensor(extra)], axis=-1)
        if weights is None:
            v = ad.matmul(x, self.critic_W) + self.critic_b
        else:
            w, b = weights
            v = ad.matmul(x, ad.Tensor(w)) + ad.Tensor(b)
        return ad.reshape(v, v.shape[:-1])

    def params(self) -> list[tuple[str, Tensor]]:
        return [("actor.W", self.actor_W), ("actor.b", self.actor_b),
                ("critic.W", self.critic_W), ("critic.b", self.critic_b)]
