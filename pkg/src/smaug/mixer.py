"""Subtask-conditioned monotonic mixing network and the TD objective.

Hypernetworks conditioned on (global state, concatenated per-agent subtask
vectors) emit the weights of a two-layer mix of the agents' chosen Q
values. Taking the absolute value of the emitted weights makes Q_total
monotone in every agent Q, so per-agent greedy actions maximize the joint
value (IGM sufficiency). The TD target adds the stored intrinsic and
future-reward bonuses to the environment reward and bootstraps through
frozen target copies of the policy and mixer; episode-horizon ends are
treated as terminal (no bootstrap), and padded steps carry zero weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    Dense,
    Mlp,
    ShapeMismatchError,
    Tensor,
    as_tensor,
    concat,
    no_grad,
    take_along_axis,
)
from .window import SubtaskPolicy

__all__ = ["MixingNet", "TdConfig", "td_loss", "sync_params", "batch_inputs"]


class MixingNet:
    def __init__(self, state_dim: int, n_agents: int, z_dim: int,
                 rng: np.random.Generator, mix_dim: int = 32,
                 hyper_hidden: int = 64, dtype=np.float32):
        self.n_agents = n_agents
        self.mix_dim = mix_dim
        in_dim = state_dim + n_agents * z_dim
        self.hyper_w1 = Mlp([in_dim, hyper_hidden, n_agents * mix_dim], rng,
                            dtype=dtype, name="mix_w1")
        self.hyper_b1 = Dense(in_dim, mix_dim, rng, dtype=dtype, name="mix_b1")
        self.hyper_w2 = Mlp([in_dim, hyper_hidden, mix_dim], rng,
                            dtype=dtype, name="mix_w2")
        self.hyper_b2 = Mlp([in_dim, hyper_hidden, 1], rng,
                            dtype=dtype, name="mix_b2")

    def named_parameters(self) -> dict:
        out = {}
        for m in (self.hyper_w1, self.hyper_b1, self.hyper_w2, self.hyper_b2):
            out.update(m.named_parameters())
        return out

    def __call__(self, agent_qs: Tensor, state: Tensor, z_cat: Tensor) -> Tensor:
        """agent_qs [..., n], state [..., s], z_cat [..., n*z_dim] -> [...]."""
        agent_qs = as_tensor(agent_qs)
        if agent_qs.shape[-1] != self.n_agents:
            raise ShapeMismatchError(
                f"mixer built for {self.n_agents} agents, got Q vector shape "
                f"{agent_qs.shape}"
            )
        lead = agent_qs.shape[:-1]
        hyper_in = concat([as_tensor(state), as_tensor(z_cat)], axis=-1)
        w1 = self.hyper_w1(hyper_in).abs().reshape(lead + (self.n_agents, self.mix_dim))
        b1 = self.hyper_b1(hyper_in)
        w2 = self.hyper_w2(hyper_in).abs().reshape(lead + (self.mix_dim, 1))
        b2 = self.hyper_b2(hyper_in)
        hidden = (agent_qs.reshape(lead + (1, self.n_agents)) @ w1).reshape(
            lead + (self.mix_dim,)
        )
        hidden = (hidden + b1).elu()
        out = (hidden.reshape(lead + (1, self.mix_dim)) @ w2).reshape(lead + (1,))
        return (out + b2).reshape(lead)


@dataclass(frozen=True)
class TdConfig:
    gamma: float = 0.99
    beta_mi: float = 5e-2
    beta_f: float = 1e-2
    use_mixer: bool = True   # False = independent per-agent TD (IQL mode)

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0,1], got {self.gamma}")
        if self.beta_mi < 0 or self.beta_f < 0:
            raise ValueError("reward weights must be non-negative")


def batch_inputs(obs: np.ndarray, actions: np.ndarray, n_actions: int,
                 dtype=np.float32) -> np.ndarray:
    """(observation, previous-action one-hot) inputs for slots 0..T.

    obs [B, T+1, n, obs_dim]; actions [B, T, n]. Slot 0 has a zero
    previous-action block.
    """
    b, t1, n, od = obs.shape
    prev = np.zeros((b, t1, n, n_actions), dtype=dtype)
    onehot = np.eye(n_actions, dtype=dtype)[actions]        # [B, T, n, A]
    prev[:, 1:] = onehot
    return np.concatenate([obs.astype(dtype), prev], axis=-1)


def td_loss(policy: SubtaskPolicy, mixer: MixingNet | None,
            target_policy: SubtaskPolicy, target_mixer: MixingNet | None,
            batch: dict, cfg: TdConfig):
    """Masked mean squared TD error over a padded episode batch.

    batch keys: obs [B,T+1,n,o], state [B,T+1,s], actions [B,T,n],
    avail [B,T+1,n,A], reward/r_mi/r_f/terminated/mask [B,T].
    Returns (loss Tensor, metrics dict, live z values [B,T+1,n,z_dim]).
    """
    obs, state = batch["obs"], batch["state"]
    actions, avail = batch["actions"], batch["avail"]
    reward, mask = batch["reward"], batch["mask"]
    terminated = batch["terminated"]
    b, t1, n, _ = obs.shape
    t = t1 - 1

    x = batch_inputs(obs, actions, policy.n_actions, dtype=policy.dtype)
    q_all, z_all, _, _ = policy.training_forward(as_tensor(x))
    chosen = take_along_axis(q_all[:, :t], actions[..., None], axis=-1)
    chosen = chosen.reshape((b, t, n))

    with no_grad():
        tq_all, tz_all, _, _ = target_policy.training_forward(as_tensor(x))
    # padded slots must keep at least one available action or the masked
    # max turns into -inf and poisons the target even at zero loss weight
    tq_next = np.where(avail[:, 1:], tq_all.data[:, 1:], -np.inf)
    tq_max = tq_next.max(axis=-1)                            # [B, T, n]

    if cfg.use_mixer:
        if mixer is None or target_mixer is None:
            raise ValueError("mixer networks required when use_mixer is set")
        z_cat = z_all[:, :t].reshape((b, t, n * policy.z_dim))
        q_total = mixer(chosen, as_tensor(state[:, :t]), z_cat)
        with no_grad():
            tz_cat = tz_all[:, 1:].reshape((b, t, n * policy.z_dim))
            tq_total = target_mixer(as_tensor(tq_max.astype(policy.dtype)),
                                    as_tensor(state[:, 1:]), tz_cat).data
        bonus = cfg.beta_mi * batch["r_mi"] + cfg.beta_f * batch["r_f"]
        target = reward + bonus + cfg.gamma * (1.0 - terminated) * tq_total
        diff = q_total - as_tensor(target.astype(policy.dtype))
        weight = mask
    else:
        bonus = cfg.beta_mi * batch["r_mi"] + cfg.beta_f * batch["r_f"]
        target = (reward + bonus)[..., None] + cfg.gamma * (
            1.0 - terminated[..., None]
        ) * tq_max
        diff = chosen - as_tensor(target.astype(policy.dtype))
        weight = np.repeat(mask[..., None], n, axis=-1)

    weight = weight.astype(policy.dtype)
    loss = (diff.square() * as_tensor(weight)).sum() * (1.0 / max(weight.sum(), 1.0))
    metrics = {
        "mean_q": float((chosen.data * mask[..., None]).sum()
                        / max(mask.sum() * n, 1.0)),
        "mean_target": float((target * weight).sum() / max(weight.sum(), 1.0)),
    }
    return loss, metrics, z_all.data


def sync_params(src: dict, dst: dict):
    """Hard-copy parameter payloads from src into same-named dst tensors."""
    if set(src) != set(dst):
        raise ValueError("parameter name sets differ between live and target")
    for name, p in src.items():
        dst[name].data[...] = p.data
