"""Spatially discounted returns, advantages, and the two loss functions.

The sampled return of agent i at batch slot tau accumulates every
agent's reward, discounted by gamma over time and by alpha per hop of
graph distance, plus a bootstrap from the frozen target critic at the
state following the batch:

    R_hat[i, tau] = sum_{tau' >= tau} gamma^(tau' - tau)
                        * sum_j alpha^d(i, j) * r[j, tau']
                  + gamma^(|B| - tau) * V_target(i)

The hop sum is truncated at ``max_hops`` by default (contributions decay
as alpha^d); ``max_hops=None`` keeps every reachable agent.
"""

from __future__ import annotations

import numpy as np

from ..network import RoadNetwork
from ..nn import autodiff as ad
from ..nn.model import AgentModel

LOG_PROB_FLOOR = 1e-12


def spatial_weight_matrix(net: RoadNetwork, alpha: float,
                          max_hops: int | None = None) -> np.ndarray:
    """W[i, j] = alpha ** hop(i, j); unreachable pairs (and pairs beyond
    ``max_hops``) contribute zero."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("spatial discount must be in (0, 1]")
    d = net.hop_dist
    w = np.zeros_like(d, dtype=float)
    finite = np.isfinite(d)
    if max_hops is not None:
        finite = finite & (d <= max_hops)
    w[finite] = alpha ** d[finite]
    return w


def sampled_returns(rewards: np.ndarray, spatial_w: np.ndarray, gamma: float,
                    bootstrap: np.ndarray | None) -> np.ndarray:
    """All agents' sampled returns for one batch.

    ``rewards`` is (|B|, N); ``bootstrap`` is the per-agent target value
    of the state after the batch, or None when the batch ended an
    episode. Returns (|B|, N).
    """
    rewards = np.asarray(rewards, dtype=float)
    B, n = rewards.shape
    combined = rewards @ spatial_w.T        # combined[tau, i] = sum_j w[i,j] r[tau,j]
    out = np.zeros_like(combined)
    carry = np.zeros(n) if bootstrap is None else np.asarray(bootstrap, dtype=float)
    for tau in range(B - 1, -1, -1):
        carry = combined[tau] + gamma * carry
        out[tau] = carry
    return out


def advantages(returns: np.ndarray, target_values: np.ndarray) -> np.ndarray:
    """R_hat minus the frozen-target critic value of the stored inputs."""
    return np.asarray(returns, dtype=float) - np.asarray(target_values, dtype=float)


def actor_critic_losses(model: AgentModel, seqs: np.ndarray, waves: np.ndarray,
                        blocks: np.ndarray, actions: np.ndarray,
                        advantages_i: np.ndarray, returns_i: np.ndarray,
                        beta: float):
    """Both losses for one agent over its stored batch.

    Actor:  -(1/|B|) * sum_tau [ log pi(a_tau) * A_tau
                                 - beta * sum_a pi(a) log pi(a) ]
    Critic:  (1/|B|) * sum_tau ( R_tau - V(inputs_tau) )^2

    Advantages and returns enter as constants. Log-probabilities are
    floored at log(1e-12); the number of floored entries is reported.
    Returns (actor_loss, critic_loss, stats).
    """
    logp, value = model.forward_decentralized(seqs, waves, blocks)
    clamped = int((logp.data < np.log(LOG_PROB_FLOOR)).sum())
    logp = ad.clamp_min(logp, float(np.log(LOG_PROB_FLOOR)))
    picked = ad.take_along_last(logp, np.asarray(actions, dtype=np.intp))
    probs = ad.exp(logp)
    neg_entropy = ad.tsum(ad.mul(probs, logp), axis=-1)        # sum_a pi log pi
    per_sample = ad.sub(ad.mul(picked, np.asarray(advantages_i, dtype=float)),
                        ad.mul(neg_entropy, beta))
    actor_loss = -ad.tmean(per_sample)
    diff = ad.sub(np.asarray(returns_i, dtype=float), value)
    critic_loss = ad.tmean(ad.mul(diff, diff))
    stats = {
        "entropy": float(-neg_entropy.data.mean()),
        "clamped_logs": clamped,
        "mean_value": float(value.data.mean()),
    }
    return actor_loss, critic_loss, stats
