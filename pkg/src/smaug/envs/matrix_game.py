"""Tiny tabular cooperative games with an exact brute-force optimum.

An episode is a fixed number of simultaneous-move stages. The payoff of
stage t is a dense table over the joint action; observations are the stage
index one-hot, so the latent "subtask" is simply which stage the team is
in. Small enough to enumerate every joint-action sequence exactly.
"""

from __future__ import annotations

import itertools

import numpy as np

from .base import DecPomdpSpec, Env, StepResult

__all__ = [
    "MatrixGameEnv",
    "EnumerationCapError",
    "matrix_game_oracle",
    "default_two_step_payoffs",
    "random_payoffs",
]

ENUMERATION_CAP = 1_000_000


class EnumerationCapError(ValueError):
    """The game is too large for exhaustive sequence enumeration."""


def default_two_step_payoffs() -> np.ndarray:
    """Two agents, three actions, two stages; optimum moves between stages.

    Each stage is additive across agents plus a small aligned bonus on the
    optimal joint action, so the per-stage maximum is 8: stage 0 peaks at
    (0,0), stage 1 at (1,2).
    """
    u0, v0 = np.array([3.0, 1.0, 0.0]), np.array([3.0, 2.0, 0.0])
    u1, v1 = np.array([0.0, 3.0, 1.0]), np.array([1.0, 0.0, 3.0])
    stage0 = u0[:, None] + v0[None, :]
    stage0[0, 0] += 2.0
    stage1 = u1[:, None] + v1[None, :]
    stage1[1, 2] += 2.0
    return np.stack([stage0, stage1])


def random_payoffs(rng: np.random.Generator, n_agents: int = 2,
                   n_actions: int = 3, n_steps: int = 2,
                   high: float = 8.0) -> np.ndarray:
    shape = (n_steps,) + (n_actions,) * n_agents
    return rng.uniform(0.0, high, size=shape)


def matrix_game_oracle(payoffs: np.ndarray, gamma: float = 0.99,
                       cap: int = ENUMERATION_CAP) -> float:
    """Exact optimal discounted return by enumerating joint-action sequences."""
    payoffs = np.asarray(payoffs, dtype=np.float64)
    n_steps = payoffs.shape[0]
    n_agents = payoffs.ndim - 1
    n_actions = payoffs.shape[1]
    joints = n_actions ** n_agents
    total = joints ** n_steps
    if total > cap:
        raise EnumerationCapError(
            f"{total} joint-action sequences exceed the enumeration cap {cap}"
        )
    joint_actions = list(itertools.product(range(n_actions), repeat=n_agents))
    best = -np.inf
    for seq in itertools.product(joint_actions, repeat=n_steps):
        value = sum(gamma ** t * payoffs[(t,) + joint] for t, joint in enumerate(seq))
        best = max(best, value)
    return float(best)


class MatrixGameEnv(Env):
    name = "matrix_game"

    def __init__(self, payoffs: np.ndarray | None = None, gamma: float = 0.99):
        super().__init__()
        if payoffs is None:
            payoffs = default_two_step_payoffs()
        self.payoffs = np.asarray(payoffs, dtype=np.float64)
        n_steps = self.payoffs.shape[0]
        n_agents = self.payoffs.ndim - 1
        n_actions = self.payoffs.shape[1]
        self.spec = DecPomdpSpec(
            n_agents=n_agents,
            state_dim=n_steps + 1,
            obs_dim=n_steps + 1,
            n_actions=n_actions,
            episode_limit=n_steps,
            gamma=gamma,
        )
        self.max_step_reward = float(self.payoffs.max())
        self._stage_max = self.payoffs.reshape(n_steps, -1).max(axis=1)
        self._optimal_stages = 0

    def _stage_onehot(self) -> np.ndarray:
        onehot = np.zeros(self.spec.state_dim, dtype=np.float32)
        onehot[self._t] = 1.0
        return onehot

    def _do_reset(self):
        self._optimal_stages = 0
        state = self._stage_onehot()
        obs = np.tile(state, (self.spec.n_agents, 1))
        return obs, state, self.available_actions()

    def _do_step(self, actions: np.ndarray) -> StepResult:
        t = self._t
        reward = float(self.payoffs[(t,) + tuple(actions)])
        if reward >= self._stage_max[t] - 1e-12:
            self._optimal_stages += 1
        terminated = t + 1 >= self.spec.episode_limit
        state = np.zeros(self.spec.state_dim, dtype=np.float32)
        state[t + 1] = 1.0
        obs = np.tile(state, (self.spec.n_agents, 1))
        return StepResult(
            next_observations=obs,
            global_state=state,
            reward=reward,
            terminated=terminated,
            truncated=False,
            available_actions=self.available_actions(),
        )

    def ground_truth_label(self) -> int:
        return min(self._t, self.spec.episode_limit)

    def episode_success(self) -> bool:
        return self._optimal_stages == self.spec.episode_limit

    def oracle_return(self) -> float:
        return matrix_game_oracle(self.payoffs, self.spec.gamma)
