"""Desk-scale Dec-POMDP environments and the vectorized driver."""

from .base import (
    ContractViolationError,
    DecPomdpSpec,
    Env,
    StepResult,
    trace_record,
    write_episode_trace,
)
from .chain import ChainEnv
from .matrix_game import (
    EnumerationCapError,
    MatrixGameEnv,
    default_two_step_payoffs,
    matrix_game_oracle,
    random_payoffs,
)
from .switching_goals import SwitchingGoalsConfig, SwitchingGoalsEnv
from .vector import VectorEnv, VectorStepResult

_ENV_BUILDERS = {
    "switching_goals": SwitchingGoalsEnv,
    "matrix_game": MatrixGameEnv,
    "chain": ChainEnv,
}


def make_env(name: str, **params) -> Env:
    if name not in _ENV_BUILDERS:
        raise ValueError(
            f"unknown environment {name!r}; known: {sorted(_ENV_BUILDERS)}"
        )
    return _ENV_BUILDERS[name](**params)


__all__ = [
    "ContractViolationError", "DecPomdpSpec", "Env", "StepResult",
    "trace_record", "write_episode_trace",
    "ChainEnv", "MatrixGameEnv", "EnumerationCapError",
    "default_two_step_payoffs", "matrix_game_oracle", "random_payoffs",
    "SwitchingGoalsConfig", "SwitchingGoalsEnv",
    "VectorEnv", "VectorStepResult",
    "make_env",
]
