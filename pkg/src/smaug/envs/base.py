"""Dec-POMDP environment contract shared by all bundled tasks.

Environments own their RNG: reset(seed) reseeds it, reset(None) continues
the stream, and every StepResult field is then a pure function of
(seed, action sequence). One scalar team reward per step; per-agent
availability masks always have at least one legal action.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "DecPomdpSpec",
    "StepResult",
    "ContractViolationError",
    "Env",
    "write_episode_trace",
]


class ContractViolationError(RuntimeError):
    """An action violated the availability mask or another env precondition."""


@dataclass(frozen=True)
class DecPomdpSpec:
    n_agents: int
    state_dim: int
    obs_dim: int
    n_actions: int
    episode_limit: int
    gamma: float = 0.99

    def __post_init__(self):
        if self.n_agents < 1:
            raise ValueError(f"n_agents must be >= 1, got {self.n_agents}")
        if self.n_actions < 2:
            raise ValueError(f"n_actions must be >= 2, got {self.n_actions}")
        if self.episode_limit < 1:
            raise ValueError(f"episode_limit must be >= 1, got {self.episode_limit}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0,1], got {self.gamma}")


@dataclass
class StepResult:
    next_observations: np.ndarray        # [n_agents, obs_dim]
    global_state: np.ndarray             # [state_dim]
    reward: float                        # team reward
    terminated: bool
    truncated: bool
    available_actions: np.ndarray        # [n_agents, n_actions] bool


class Env:
    """Base class; subclasses fill in spec, _do_reset and _do_step."""

    spec: DecPomdpSpec
    name: str = "env"
    max_step_reward: float = float("inf")   # documented per-env bound

    def __init__(self):
        self._rng = np.random.default_rng(0)
        self._t = 0
        self._done = True

    # -- subclass hooks ------------------------------------------------------

    def _do_reset(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _do_step(self, actions: np.ndarray) -> StepResult:
        raise NotImplementedError

    # -- public API ------------------------------------------------------------

    def reset(self, seed: int | None = None):
        """Start a fresh episode; same seed reproduces the same layout."""
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._t = 0
        self._done = False
        obs, state, avail = self._do_reset()
        return obs, state, avail

    def step(self, actions: Sequence[int]) -> StepResult:
        actions = np.asarray(actions, dtype=np.int64)
        if self._done:
            raise ContractViolationError(
                f"{self.name}: step() called on a finished episode; reset first"
            )
        if actions.shape != (self.spec.n_agents,):
            raise ContractViolationError(
                f"{self.name}: expected {self.spec.n_agents} actions, got shape "
                f"{actions.shape}"
            )
        avail = self.available_actions()
        for i, a in enumerate(actions):
            if not 0 <= a < self.spec.n_actions:
                raise ContractViolationError(
                    f"{self.name}: agent {i} action {a} out of range "
                    f"[0, {self.spec.n_actions})"
                )
            if not avail[i, a]:
                raise ContractViolationError(
                    f"{self.name}: agent {i} chose unavailable action {a}"
                )
        result = self._do_step(actions)
        self._t += 1
        if not result.terminated and self._t >= self.spec.episode_limit:
            result.truncated = True
        self._done = result.terminated or result.truncated
        return result

    def available_actions(self) -> np.ndarray:
        """[n_agents, n_actions] bool; default all legal."""
        return np.ones((self.spec.n_agents, self.spec.n_actions), dtype=bool)

    def ground_truth_label(self) -> int:
        """Latent subtask id for diagnostics; hidden from agent observations."""
        return 0

    def episode_success(self) -> bool:
        """Task-specific success marker for the finished episode."""
        return False

    @property
    def steps_taken(self) -> int:
        return self._t


def write_episode_trace(records: Sequence[dict], path: str):
    """Dump one episode as newline-delimited JSON records."""
    import os
    import tempfile

    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".trace-")
    try:
        with os.fdopen(fd, "w") as f:
            for rec in records:
                f.write(json.dumps(rec) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_record(t: int, state, obs, actions, reward: float,
                 terminated: bool, truncated: bool) -> dict:
    return {
        "t": int(t),
        "state": np.asarray(state, dtype=float).round(6).tolist(),
        "observations": np.asarray(obs, dtype=float).round(6).tolist(),
        "actions": np.asarray(actions, dtype=int).tolist(),
        "reward": float(reward),
        "terminated": bool(terminated),
        "truncated": bool(truncated),
    }
