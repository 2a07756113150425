"""Lockstep driver for E independent environment instances.

Semantics are element-wise identical to stepping the instances one by one.
Finished instances auto-reset inside the same step() call (continuing their
own RNG stream) and the step result flags the episode boundary; the
observations for the *next* action selection always come from
current_observations(), which already reflects any reset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .base import ContractViolationError, Env

__all__ = ["VectorEnv", "VectorStepResult"]


@dataclass
class VectorStepResult:
    observations: np.ndarray       # [E, n_agents, obs_dim] (terminal obs of the step)
    states: np.ndarray             # [E, state_dim]
    rewards: np.ndarray            # [E]
    terminated: np.ndarray         # [E] bool
    truncated: np.ndarray          # [E] bool
    available_actions: np.ndarray  # [E, n_agents, n_actions]
    episode_boundary: np.ndarray   # [E] bool, True where the instance auto-reset


class VectorEnv:
    def __init__(self, envs: Sequence[Env], auto_reset: bool = True):
        if len(envs) < 1:
            raise ValueError("need at least one environment instance")
        specs = {e.spec for e in envs}
        if len(specs) != 1:
            raise ValueError("all instances must share one DecPomdpSpec")
        self.envs = list(envs)
        self.auto_reset = auto_reset
        self.spec = self.envs[0].spec
        e, spec = len(self.envs), self.spec
        self._obs = np.zeros((e, spec.n_agents, spec.obs_dim), dtype=np.float32)
        self._state = np.zeros((e, spec.state_dim), dtype=np.float32)
        self._avail = np.ones((e, spec.n_agents, spec.n_actions), dtype=bool)

    def __len__(self):
        return len(self.envs)

    def reset(self, seeds: Sequence[int | None] | None = None):
        if seeds is None:
            seeds = [None] * len(self.envs)
        if len(seeds) != len(self.envs):
            raise ValueError(f"got {len(seeds)} seeds for {len(self.envs)} instances")
        for i, (env, seed) in enumerate(zip(self.envs, seeds)):
            obs, state, avail = env.reset(seed)
            self._obs[i], self._state[i], self._avail[i] = obs, state, avail
        return self._obs.copy(), self._state.copy(), self._avail.copy()

    def step(self, actions: np.ndarray) -> VectorStepResult:
        actions = np.asarray(actions)
        e, spec = len(self.envs), self.spec
        if actions.shape != (e, spec.n_agents):
            raise ValueError(
                f"expected actions of shape {(e, spec.n_agents)}, got {actions.shape}"
            )
        obs = np.zeros_like(self._obs)
        states = np.zeros_like(self._state)
        rewards = np.zeros(e, dtype=np.float64)
        terminated = np.zeros(e, dtype=bool)
        truncated = np.zeros(e, dtype=bool)
        avail = np.ones_like(self._avail)
        boundary = np.zeros(e, dtype=bool)
        for i, env in enumerate(self.envs):
            try:
                result = env.step(actions[i])
            except ContractViolationError as exc:
                raise ContractViolationError(f"instance {i}: {exc}") from exc
            obs[i], states[i] = result.next_observations, result.global_state
            rewards[i] = result.reward
            terminated[i] = result.terminated
            truncated[i] = result.truncated
            avail[i] = result.available_actions
            if result.terminated or result.truncated:
                boundary[i] = True
                if self.auto_reset:
                    new_obs, new_state, new_avail = env.reset(None)
                    self._obs[i], self._state[i], self._avail[i] = (
                        new_obs, new_state, new_avail,
                    )
                    continue
            self._obs[i], self._state[i], self._avail[i] = obs[i], states[i], avail[i]
        return VectorStepResult(
            observations=obs, states=states, rewards=rewards,
            terminated=terminated, truncated=truncated,
            available_actions=avail, episode_boundary=boundary,
        )

    def current_observations(self):
        """(obs, state, avail) to act on next; reflects any auto-reset."""
        return self._obs.copy(), self._state.copy(), self._avail.copy()
