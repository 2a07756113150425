"""Deterministic 1D chain: the smallest dynamics-model testbed.

One agent walks left/right on a line of cells; transitions and rewards are
exact functions of (position, action), so a one-step predictor can drive
its error to zero. Used to verify world-model learnability.
"""

from __future__ import annotations

import numpy as np

from .base import DecPomdpSpec, Env, StepResult

__all__ = ["ChainEnv"]


class ChainEnv(Env):
    name = "chain"

    def __init__(self, length: int = 8, episode_limit: int | None = None,
                 goal_reward: float = 1.0):
        super().__init__()
        if length < 3:
            raise ValueError("chain length must be >= 3")
        self.length = length
        self.goal_reward = float(goal_reward)
        self.spec = DecPomdpSpec(
            n_agents=1, state_dim=length, obs_dim=length, n_actions=2,
            episode_limit=episode_limit or 2 * length,
        )
        self.max_step_reward = self.goal_reward
        self.pos = 0

    def _onehot(self) -> np.ndarray:
        v = np.zeros(self.length, dtype=np.float32)
        v[self.pos] = 1.0
        return v

    def _do_reset(self):
        self.pos = int(self._rng.integers(self.length - 1))
        state = self._onehot()
        return state[None, :].copy(), state, self.available_actions()

    def _do_step(self, actions: np.ndarray) -> StepResult:
        delta = 1 if actions[0] == 1 else -1
        self.pos = int(np.clip(self.pos + delta, 0, self.length - 1))
        reached = self.pos == self.length - 1
        state = self._onehot()
        return StepResult(
            next_observations=state[None, :].copy(),
            global_state=state,
            reward=self.goal_reward if reached else 0.0,
            terminated=bool(reached),
            truncated=False,
            available_actions=self.available_actions(),
        )

    def ground_truth_label(self) -> int:
        return self.pos

    def episode_success(self) -> bool:
        return self.pos == self.length - 1
