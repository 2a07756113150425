"""Gridworld with a hidden, periodically switching goal site.

A team of agents shares a square grid with a handful of fixed goal sites.
Exactly one site is active at a time; which one is only directly visible to
agents within a small radius, so distant agents must infer the active site
from teammates' behavior. Capturing (all agents standing on the active
site) pays a team reward and activates a new site; otherwise the active
site switches on its own after a randomly drawn interval. The active site
index is the ground-truth subtask label used by diagnostics, never exposed
in observations beyond the radius-gated flags.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import ContractViolationError, DecPomdpSpec, Env, StepResult

__all__ = ["SwitchingGoalsConfig", "SwitchingGoalsEnv"]

STAY, UP, DOWN, LEFT, RIGHT = range(5)
_MOVES = np.array([[0, 0], [-1, 0], [1, 0], [0, -1], [0, 1]])


@dataclass(frozen=True)
class SwitchingGoalsConfig:
    grid_size: int = 7
    n_agents: int = 3
    n_goal_sites: int = 4
    switch_interval_min: int = 5
    switch_interval_max: int = 15
    capture_reward: float = 10.0
    step_penalty: float = -0.01
    episode_limit: int = 60
    visibility_radius: int = 3

    def __post_init__(self):
        if self.n_goal_sites < 2:
            raise ValueError(f"n_goal_sites must be >= 2, got {self.n_goal_sites}")
        if self.n_goal_sites > 9:
            raise ValueError("at most 9 goal sites are supported")
        if self.switch_interval_min < 1:
            raise ValueError("switch intervals must be >= 1")
        if self.switch_interval_max < self.switch_interval_min:
            raise ValueError("switch_interval_max below switch_interval_min")
        if self.grid_size < 3:
            raise ValueError("grid_size must be >= 3")


def _site_positions(grid: int, count: int) -> np.ndarray:
    lo, hi, mid = 1, grid - 2, grid // 2
    candidates = [
        (lo, lo), (lo, hi), (hi, lo), (hi, hi),          # inset corners
        (lo, mid), (hi, mid), (mid, lo), (mid, hi),      # edge midpoints
        (mid, mid),
    ]
    return np.array(candidates[:count])


class SwitchingGoalsEnv(Env):
    name = "switching_goals"

    def __init__(self, config: SwitchingGoalsConfig | None = None, **overrides):
        super().__init__()
        if config is None:
            config = SwitchingGoalsConfig(**overrides)
        elif overrides:
            raise ValueError("pass either a config or keyword overrides, not both")
        self.config = config
        g, n, s = config.grid_size, config.n_agents, config.n_goal_sites
        self.sites = _site_positions(g, s)
        obs_dim = 2 * g + 2 * (n - 1) + s
        state_dim = 2 * n + s + 1
        self.spec = DecPomdpSpec(
            n_agents=n, state_dim=state_dim, obs_dim=obs_dim, n_actions=5,
            episode_limit=config.episode_limit,
        )
        self.max_step_reward = config.capture_reward + n * config.step_penalty
        self.positions = np.zeros((n, 2), dtype=np.int64)
        self.active_site = 0
        self.switch_timer = 0
        self.switch_interval = config.switch_interval_min
        self.captures = 0

    # -- episode dynamics ------------------------------------------------------

    def _sample_interval(self) -> int:
        c = self.config
        return int(self._rng.integers(c.switch_interval_min, c.switch_interval_max + 1))

    def _activate_new_site(self):
        choices = [s for s in range(self.config.n_goal_sites) if s != self.active_site]
        self.active_site = int(self._rng.choice(choices))
        self.switch_timer = 0
        self.switch_interval = self._sample_interval()

    def _do_reset(self):
        g, n = self.config.grid_size, self.config.n_agents
        cells = self._rng.choice(g * g, size=n, replace=False)
        self.positions = np.stack([cells // g, cells % g], axis=1)
        self.active_site = int(self._rng.integers(self.config.n_goal_sites))
        self.switch_timer = 0
        self.switch_interval = self._sample_interval()
        self.captures = 0
        return self._observations(), self._state(), self.available_actions()

    def _do_step(self, actions: np.ndarray) -> StepResult:
        c = self.config
        self.positions = self.positions + _MOVES[actions]
        reward = c.n_agents * c.step_penalty
        on_active = np.all(self.positions == self.sites[self.active_site], axis=1)
        if bool(on_active.all()):
            reward += c.capture_reward
            self.captures += 1
            self._activate_new_site()
        else:
            self.switch_timer += 1
            if self.switch_timer >= self.switch_interval:
                self._activate_new_site()
        return StepResult(
            next_observations=self._observations(),
            global_state=self._state(),
            reward=float(reward),
            terminated=False,
            truncated=False,
            available_actions=self.available_actions(),
        )

    # -- observation machinery ---------------------------------------------------

    def available_actions(self) -> np.ndarray:
        g = self.config.grid_size
        avail = np.ones((self.config.n_agents, 5), dtype=bool)
        avail[:, UP] = self.positions[:, 0] > 0
        avail[:, DOWN] = self.positions[:, 0] < g - 1
        avail[:, LEFT] = self.positions[:, 1] > 0
        avail[:, RIGHT] = self.positions[:, 1] < g - 1
        return avail

    def _observations(self) -> np.ndarray:
        c = self.config
        g, n = c.grid_size, c.n_agents
        scale = 1.0 / (g - 1)
        obs = np.zeros((n, self.spec.obs_dim), dtype=np.float32)
        active_pos = self.sites[self.active_site]
        for i in range(n):
            r, col = self.positions[i]
            obs[i, r] = 1.0
            obs[i, g + col] = 1.0
            k = 2 * g
            for j in range(n):
                if j == i:
                    continue
                obs[i, k] = (self.positions[j, 0] - r) * scale
                obs[i, k + 1] = (self.positions[j, 1] - col) * scale
                k += 2
            # active-site flag, visible only within the manhattan radius
            dist = abs(active_pos[0] - r) + abs(active_pos[1] - col)
            if dist <= c.visibility_radius:
                obs[i, k + self.active_site] = 1.0
        return obs

    def _state(self) -> np.ndarray:
        c = self.config
        scale = 1.0 / (c.grid_size - 1)
        state = np.zeros(self.spec.state_dim, dtype=np.float32)
        state[: 2 * c.n_agents] = (self.positions * scale).reshape(-1)
        state[2 * c.n_agents + self.active_site] = 1.0
        state[-1] = self.switch_timer / c.switch_interval_max
        return state

    # -- diagnostics -----------------------------------------------------------------

    def ground_truth_label(self) -> int:
        return self.active_site

    def episode_success(self) -> bool:
        return self.captures >= 1
