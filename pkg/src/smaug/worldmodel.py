"""One-step inference network and imagined rollouts.

A shared encoder embeds (observation, action one-hot); two decoder heads
predict the next observation and the team reward of the transition. During
acting the model and the greedy policy alternate for up to n_f_step
imagined steps: the policy picks an action from the (cloned) recurrent
state, the model predicts the next observation and reward, the clone
advances on the predicted step, and so on. The executed action is then
chosen from the imagination frontier, and the discounted sum of predicted
rewards becomes the future-reward bonus r_f. Real environment state and
the live recurrent state are never touched.

Imagination never runs past the episode horizon: with cap
min(n_f_step, episode_limit - 1 - t) every frontier the Q head sees has a
length that also occurs in training data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import Mlp, Tensor, as_tensor, concat, no_grad
from .window import RecurrentState, SubtaskPolicy, greedy_action

__all__ = [
    "InferenceNet",
    "InferenceRecord",
    "InferenceBuffer",
    "RolloutResult",
    "rollout",
    "future_reward",
    "inference_loss",
]

_SQRT_EPS = 1e-16


class InferenceNet:
    """Shared encoder with observation and reward decoder heads."""

    def __init__(self, obs_dim: int, n_actions: int, rng: np.random.Generator,
                 enc_hidden: int = 64, emb_dim: int = 32, dec_hidden: int = 64,
                 dtype=np.float32):
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.encoder = Mlp([obs_dim + n_actions, enc_hidden, emb_dim], rng,
                           dtype=dtype, name="wm_enc")
        self.obs_decoder = Mlp([emb_dim, dec_hidden, obs_dim], rng,
                               dtype=dtype, name="wm_dec_obs")
        self.reward_decoder = Mlp([emb_dim, dec_hidden, 1], rng,
                                  dtype=dtype, name="wm_dec_rew")
        self.dtype = dtype

    def named_parameters(self) -> dict:
        out = {}
        for m in (self.encoder, self.obs_decoder, self.reward_decoder):
            out.update(m.named_parameters())
        return out

    def predict(self, obs: Tensor, action_onehot: Tensor):
        """Decode (next observation, transition reward) from the embedding."""
        emb = self.encoder(concat([as_tensor(obs), as_tensor(action_onehot)], axis=-1))
        return self.obs_decoder(emb), self.reward_decoder(emb)

    def predict_step(self, obs: np.ndarray, actions: np.ndarray):
        """Numpy convenience: obs [..., obs_dim], integer actions [...]."""
        onehot = np.zeros(actions.shape + (self.n_actions,), dtype=self.dtype)
        np.put_along_axis(onehot, np.asarray(actions)[..., None], 1.0, axis=-1)
        with no_grad():
            o_hat, r_hat = self.predict(as_tensor(obs.astype(self.dtype)),
                                        as_tensor(onehot))
        return o_hat.data, r_hat.data[..., 0]


@dataclass
class InferenceRecord:
    """Real transition stored at the first rollout step of each env step."""

    obs: np.ndarray        # [n_agents, obs_dim]
    actions: np.ndarray    # [n_agents]
    next_obs: np.ndarray   # [n_agents, obs_dim]
    reward: float          # team reward of the transition


class InferenceBuffer:
    """FIFO ring of transitions for world-model training."""

    def __init__(self, capacity: int = 20000):
        self.capacity = capacity
        self._items: list[InferenceRecord] = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def add(self, record: InferenceRecord):
        if len(self._items) < self.capacity:
            self._items.append(record)
        else:
            self._items[self._next] = record
            self._next = (self._next + 1) % self.capacity

    def sample(self, rng: np.random.Generator, batch_size: int):
        idx = rng.integers(len(self._items), size=batch_size)
        obs = np.stack([self._items[i].obs for i in idx])
        actions = np.stack([self._items[i].actions for i in idx])
        next_obs = np.stack([self._items[i].next_obs for i in idx])
        reward = np.array([self._items[i].reward for i in idx], dtype=obs.dtype)
        return obs, actions, next_obs, reward


@dataclass
class RolloutResult:
    r_f: np.ndarray                   # [E] discounted sum of predicted rewards
    frontier: RecurrentState          # cloned state advanced through imagination
    predicted_obs: list               # m entries of [E, n_agents, obs_dim]
    imagined_actions: list            # m entries of [E, n_agents]
    predicted_rewards: np.ndarray     # [m, E]


def future_reward(predicted_rewards: Sequence[float] | np.ndarray,
                  gamma: float) -> float | np.ndarray:
    """Discounted sum over the leading axis; empty input gives 0."""
    arr = np.asarray(predicted_rewards, dtype=np.float64)
    if arr.shape[0] == 0:
        return 0.0 if arr.ndim <= 1 else np.zeros(arr.shape[1:])
    weights = gamma ** np.arange(arr.shape[0])
    out = np.tensordot(weights, arr, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out


def rollout(net: InferenceNet, policy: SubtaskPolicy, state: RecurrentState,
            obs: np.ndarray, agent_onehot: np.ndarray, n_steps: int,
            gamma: float) -> RolloutResult:
    """Imagine up to n_steps future steps on a cloned recurrent state.

    obs is [E, n_agents, obs_dim], the real observations at the current
    step; agent_onehot is [E*n_agents, n_agents]. Every action is treated
    as available inside imagination.
    """
    e, n, od = obs.shape
    clone = state.clone()
    cur_obs = obs
    predicted_obs: list[np.ndarray] = []
    imagined_actions: list[np.ndarray] = []
    rewards = []
    with no_grad():
        for _ in range(n_steps):
            q, _, _ = policy.act_features(clone, agent_onehot)
            acts = np.argmax(q.data, axis=-1).reshape(e, n)
            o_hat, r_hat = net.predict_step(cur_obs.reshape(e * n, od),
                                            acts.reshape(-1))
            o_hat = o_hat.reshape(e, n, od)
            rewards.append(r_hat.reshape(e, n).mean(axis=1))
            onehot = np.eye(policy.n_actions, dtype=policy.dtype)[acts.reshape(-1)]
            x = policy.build_input(o_hat.reshape(e * n, od), onehot)
            clone = policy.advance_state(clone, x)
            predicted_obs.append(o_hat)
            imagined_actions.append(acts)
            cur_obs = o_hat
    stacked = (np.stack(rewards) if rewards
               else np.zeros((0, e), dtype=np.float64))
    r_f = future_reward(stacked, gamma)
    if np.ndim(r_f) == 0:
        r_f = np.zeros(e, dtype=np.float64)
    return RolloutResult(r_f=np.asarray(r_f, dtype=np.float64), frontier=clone,
                         predicted_obs=predicted_obs,
                         imagined_actions=imagined_actions,
                         predicted_rewards=stacked)


def inference_loss(net: InferenceNet, obs: np.ndarray, actions: np.ndarray,
                   next_obs: np.ndarray, reward: np.ndarray,
                   beta_o: float = 1.0, beta_r: float = 1.0) -> Tensor:
    """Mean over samples of per-agent Euclidean prediction errors.

    obs/next_obs [B, n, obs_dim], actions [B, n], reward [B] (team scalar;
    every agent's reward head targets it).
    """
    b, n, od = obs.shape
    onehot = np.eye(net.n_actions, dtype=net.dtype)[actions.reshape(-1)]
    pred_o, pred_r = net.predict(as_tensor(obs.reshape(b * n, od).astype(net.dtype)),
                                 as_tensor(onehot))
    target_o = next_obs.reshape(b * n, od).astype(net.dtype)
    target_r = np.repeat(reward.astype(net.dtype), n)[:, None]
    err_o = ((pred_o - as_tensor(target_o)).square().sum(axis=-1) + _SQRT_EPS).sqrt()
    err_r = ((pred_r - as_tensor(target_r)).square().sum(axis=-1) + _SQRT_EPS).sqrt()
    per_sample = (err_o * beta_o + err_r * beta_r).reshape((b, n)).sum(axis=-1)
    return per_sample.mean()
