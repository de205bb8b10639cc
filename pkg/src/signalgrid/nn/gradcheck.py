"""Finite-difference verification of the reverse-mode gradients.

``grad_check`` compares analytic parameter gradients of a scalar loss
against central differences. ``entrywise`` perturbs every scalar entry
(exhaustive; use for small models), ``directional`` perturbs each
parameter tensor along one random unit direction and compares the
directional derivative (two function evaluations per tensor, suitable
for full-size trunks).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..network import build_network, build_operator
from . import autodiff as ad
from .model import AgentModel, ModelConfig, fixed_entry_matrices


@dataclass
class GradCheckResult:
    max_rel_err: float
    worst_param: str
    per_param: dict[str, float] = field(default_factory=dict)
    threshold: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.threshold


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def grad_check(model: AgentModel, loss_fn, h: float = 1e-5,
               mode: str = "entrywise", rng: np.random.Generator | None = None,
               threshold: float = 1e-4) -> GradCheckResult:
    """Compare reverse-mode gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must be a pure function of the model parameters (it is
    re-evaluated after in-place parameter perturbation). Raises on any
    non-finite analytic gradient, naming the parameter.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    model.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {}
    for name, t in model.params():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name}")
        analytic[name] = g.copy()

    def eval_loss() -> float:
        with ad.no_grad():
            return float(loss_fn().data)

    per_param: dict[str, float] = {}
    for name, t in model.params():
        if mode == "entrywise":
            worst = 0.0
            flat = t.data.reshape(-1)
            gflat = analytic[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                lp = eval_loss()
                flat[i] = orig - h
                lm = eval_loss()
                flat[i] = orig
                worst = max(worst, _rel_err(gflat[i], (lp - lm) / (2 * h)))
            per_param[name] = worst
        elif mode == "directional":
            v = rng.standard_normal(t.data.shape)
            norm = np.linalg.norm(v)
            v = v / norm if norm > 0 else v
            t.data += h * v
            lp = eval_loss()
            t.data -= 2 * h * v
            lm = eval_loss()
            t.data += h * v
            per_param[name] = _rel_err(float((analytic[name] * v).sum()),
                                       (lp - lm) / (2 * h))
        else:
            raise ValueError(f"unknown grad-check mode {mode!r}")

    worst_param = max(per_param, key=per_param.get)
    return GradCheckResult(max_rel_err=per_param[worst_param], worst_param=worst_param,
                           per_param=per_param, threshold=threshold)


def make_two_agent_harness(seed: int = 0, config: ModelConfig | None = None):
    """Full graph-mode trunk on a 2-node bidirectional network plus a
    scalar loss exercising every parameter (encoder, both recurrent
    layers, both heads). Returns (model, loss_fn)."""
    rng = np.random.default_rng(seed)
    net = build_network(edges=[(0, 1), (1, 0)])
    op = build_operator(net)
    if config is None:
        config = ModelConfig(wave_dim=4, nbr_dim=5, mode="graph")
    model = AgentModel(config, rng, op=op)
    # zero-initialized heads would hide head gradients; randomize them
    for name in ("actor.W", "critic.W"):
        t = model.param(name)
        t.data = rng.standard_normal(t.data.shape) * 0.3
    mats = fixed_entry_matrices(op, config.K, config.single_identity)
    wave_hist = [rng.standard_normal((2, config.wave_dim)) for _ in range(config.K)]
    act_hist = [rng.standard_normal((2, config.nbr_dim)) for _ in range(config.K)]
    actions = rng.integers(0, config.n_actions, size=2)
    adv = rng.standard_normal(2)
    targets = rng.standard_normal(2)

    def loss_fn():
        logp, value = model.forward_graph(wave_hist, act_hist, mats)
        picked = ad.take_along_last(logp, actions)
        policy_term = ad.tmean(ad.mul(picked, adv))
        diff = ad.sub(value, targets)
        value_term = ad.tmean(ad.mul(diff, diff))
        probs = ad.exp(logp)
        entropy = ad.tmean(ad.tsum(ad.mul(probs, logp), axis=-1))
        return policy_term + value_term + entropy

    return model, loss_fn
