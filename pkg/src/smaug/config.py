"""Experiment configuration: flat key=value text with section prefixes.

A config is a set of dotted keys (run.*, env.*, train.*, ablate.*) with
typed defaults. Resolution order: defaults, then presets, then the config
file, then SMAUG_* environment variables, then explicit overrides. Unknown
keys are rejected with the offending name; so are malformed values. The
serialized echo of a resolved config parses back to the identical config.

Environment variables map double underscores to dots:
SMAUG_TRAIN__LR=1e-3 sets train.lr.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any, Mapping

from .trainer import EpsilonSchedule, TrainerConfig

__all__ = ["ConfigError", "ExperimentConfig", "PRESETS", "ENV_VAR_PREFIX",
           "parse_config_text", "resolve_config"]

ENV_VAR_PREFIX = "SMAUG_"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _parse_seeds(text: str) -> tuple:
    try:
        return tuple(int(s) for s in str(text).replace(" ", "").split(",") if s != "")
    except ValueError as exc:
        raise ConfigError(f"run.seeds: expected comma-separated integers, got {text!r}") from exc


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (default, type). Types: int, float, bool, str, "seeds".
DEFAULTS: dict[str, tuple[Any, Any]] = {
    "run.id": ("run", str),
    "run.out_dir": ("runs", str),
    "run.seeds": ((0,), "seeds"),
    "run.total_env_steps": (50_000, int),
    "run.eval_interval": (5_000, int),
    "run.eval_episodes": (16, int),
    "run.checkpoint_interval": (0, int),
    "run.metrics_flush_every": (25, int),
    "env.name": ("", str),
    "train.n_parallel_envs": (8, int),
    "train.n_window": (5, int),
    "train.n_f_step": (3, int),
    "train.per_window_grus": (False, bool),
    "train.rnn_hidden": (64, int),
    "train.attn_heads": (4, int),
    "train.attn_head_dim": (4, int),
    "train.temperature": (1.0, float),
    "train.mix_dim": (32, int),
    "train.hyper_hidden": (64, int),
    "train.vnet_hidden": (64, int),
    "train.wm_enc_hidden": (64, int),
    "train.wm_emb_dim": (32, int),
    "train.wm_dec_hidden": (64, int),
    "train.lr": (5e-4, float),
    "train.rmsprop_alpha": (0.99, float),
    "train.rmsprop_eps": (1e-5, float),
    "train.grad_clip": (10.0, float),
    "train.gamma": (0.99, float),
    "train.beta_mi": (5e-2, float),
    "train.beta_f": (1e-2, float),
    "train.beta1": (1.0, float),
    "train.beta2": (1.0, float),
    "train.beta_o": (1.0, float),
    "train.beta_r": (1.0, float),
    "train.batch_size": (32, int),
    "train.buffer_capacity": (5000, int),
    "train.inference_buffer_capacity": (20_000, int),
    "train.inference_batch": (64, int),
    "train.epsilon_start": (1.0, float),
    "train.epsilon_end": (0.05, float),
    "train.epsilon_anneal_steps": (50_000, int),
    "train.target_update_interval": (200, int),
    "train.train_every_episodes": (8, int),
    "ablate.disable_window": (False, bool),
    "ablate.disable_intrinsic": (False, bool),
    "ablate.disable_inference": (False, bool),
    "ablate.disable_mixer": (False, bool),
}

# env.<param> keys allowed per environment, with their types
ENV_PARAMS: dict[str, dict[str, Any]] = {
    "switching_goals": {
        "grid_size": int, "n_agents": int, "n_goal_sites": int,
        "switch_interval_min": int, "switch_interval_max": int,
        "capture_reward": float, "step_penalty": float,
        "episode_limit": int, "visibility_radius": int,
    },
    "matrix_game": {"gamma": float},
    "chain": {"length": int, "episode_limit": int, "goal_reward": float},
}

# named presets applied before file/env/override values; several may be
# combined comma-separated, later ones win
PRESETS: dict[str, dict[str, Any]] = {
    "full": {},
    "qmix-ablation": {
        "train.beta_mi": 0.0, "train.n_f_step": 0, "train.n_window": 1,
        "ablate.disable_intrinsic": True, "ablate.disable_inference": True,
    },
    "iql-ablation": {
        "train.beta_mi": 0.0, "train.n_f_step": 0, "train.n_window": 1,
        "ablate.disable_intrinsic": True, "ablate.disable_inference": True,
        "ablate.disable_mixer": True,
    },
    "no-window": {"train.n_window": 1, "ablate.disable_window": True},
    "no-intrinsic": {"train.beta_mi": 0.0, "ablate.disable_intrinsic": True},
    "no-inference": {"train.n_f_step": 0, "ablate.disable_inference": True},
    # desk-scale environment presets
    "matrix-game": {
        "env.name": "matrix_game",
        "run.total_env_steps": 50_000,
        "run.eval_interval": 2_000,
        "run.eval_episodes": 16,
        "train.rnn_hidden": 32,
        "train.epsilon_anneal_steps": 15_000,
        "train.target_update_interval": 200,
    },
    "switching-goals": {
        "env.name": "switching_goals",
        "run.total_env_steps": 100_000,
        "run.eval_interval": 5_000,
        "run.eval_episodes": 8,
        "train.rnn_hidden": 32,
    },
    "chain": {
        "env.name": "chain",
        "run.total_env_steps": 20_000,
        "run.eval_interval": 2_000,
        "run.eval_episodes": 8,
        "train.rnn_hidden": 32,
    },
}


def _convert(key: str, raw, typ) -> Any:
    if typ == "seeds":
        if isinstance(raw, (tuple, list)):
            return tuple(int(s) for s in raw)
        return _parse_seeds(raw)
    try:
        if typ is bool:
            return _parse_bool(raw)
        return typ(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from exc


def _key_type(key: str, env_name: str | None):
    if key in DEFAULTS:
        return DEFAULTS[key][1]
    if key.startswith("env.") and key != "env.name":
        param = key[len("env."):]
        if env_name and env_name in ENV_PARAMS and param in ENV_PARAMS[env_name]:
            return ENV_PARAMS[env_name][param]
        known = sorted(ENV_PARAMS.get(env_name or "", {}))
        raise ConfigError(
            f"{key}: unknown parameter for environment {env_name!r}; known: {known}"
        )
    raise ConfigError(f"unknown config key {key!r}")


def parse_config_text(text: str) -> dict[str, str]:
    """Parse key=value lines into a raw (untyped) mapping."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _env_var_overrides() -> dict[str, str]:
    out = {}
    for name, value in os.environ.items():
        if not name.startswith(ENV_VAR_PREFIX):
            continue
        key = name[len(ENV_VAR_PREFIX):].lower().replace("__", ".")
        out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    values: tuple   # sorted tuple of (key, value) pairs; hashable, immutable

    @property
    def _map(self) -> dict:
        return dict(self.values)

    def get(self, key: str):
        return self._map[key]

    # -- convenience views ----------------------------------------------------

    @property
    def run_id(self) -> str:
        return self.get("run.id")

    @property
    def out_dir(self) -> str:
        return self.get("run.out_dir")

    @property
    def seeds(self) -> tuple:
        return self.get("run.seeds")

    @property
    def env_name(self) -> str:
        return self.get("env.name")

    def env_params(self) -> dict:
        prefix = "env."
        return {
            k[len(prefix):]: v for k, v in self._map.items()
            if k.startswith(prefix) and k != "env.name"
        }

    def trainer_config(self) -> TrainerConfig:
        g = self.get
        n_window = 1 if g("ablate.disable_window") else g("train.n_window")
        use_intrinsic = not g("ablate.disable_intrinsic")
        use_inference = not g("ablate.disable_inference")
        return TrainerConfig(
            n_parallel_envs=g("train.n_parallel_envs"),
            n_window=n_window,
            n_f_step=g("train.n_f_step") if use_inference else 0,
            use_inference=use_inference,
            use_intrinsic=use_intrinsic,
            use_mixer=not g("ablate.disable_mixer"),
            per_window_grus=g("train.per_window_grus"),
            rnn_hidden=g("train.rnn_hidden"),
            attn_heads=g("train.attn_heads"),
            attn_head_dim=g("train.attn_head_dim"),
            temperature=g("train.temperature"),
            mix_dim=g("train.mix_dim"),
            hyper_hidden=g("train.hyper_hidden"),
            vnet_hidden=g("train.vnet_hidden"),
            wm_enc_hidden=g("train.wm_enc_hidden"),
            wm_emb_dim=g("train.wm_emb_dim"),
            wm_dec_hidden=g("train.wm_dec_hidden"),
            lr=g("train.lr"),
            rmsprop_alpha=g("train.rmsprop_alpha"),
            rmsprop_eps=g("train.rmsprop_eps"),
            grad_clip=g("train.grad_clip"),
            gamma=g("train.gamma"),
            beta_mi=0.0 if not use_intrinsic else g("train.beta_mi"),
            beta_f=g("train.beta_f"),
            beta1=g("train.beta1"),
            beta2=g("train.beta2"),
            beta_o=g("train.beta_o"),
            beta_r=g("train.beta_r"),
            batch_size=g("train.batch_size"),
            buffer_capacity=g("train.buffer_capacity"),
            inference_buffer_capacity=g("train.inference_buffer_capacity"),
            inference_batch=g("train.inference_batch"),
            epsilon=EpsilonSchedule(
                start=g("train.epsilon_start"),
                end=g("train.epsilon_end"),
                anneal_steps=g("train.epsilon_anneal_steps"),
            ),
            target_update_interval=g("train.target_update_interval"),
            train_every_episodes=g("train.train_every_episodes"),
        )

    def serialize(self) -> str:
        """Echo as key=value text; parsing it back reproduces this config."""
        lines = []
        ordered = [k for k in DEFAULTS] + sorted(
            k for k, _ in self.values if k not in DEFAULTS
        )
        m = self._map
        for key in ordered:
            value = m[key]
            if key == "run.seeds":
                value = ",".join(str(s) for s in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = format(value, ".12g")
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"


def resolve_config(file_text: str | None = None,
                   preset: str | None = None,
                   overrides: Mapping[str, Any] | None = None,
                   use_env_vars: bool = True) -> ExperimentConfig:
    """Layer defaults, presets, file, environment and overrides into a config."""
    raw: dict[str, Any] = {k: v for k, (v, _) in DEFAULTS.items()}
    if preset:
        for name in str(preset).split(","):
            name = name.strip()
            if name not in PRESETS:
                raise ConfigError(
                    f"preset: unknown preset {name!r}; known: {sorted(PRESETS)}"
                )
            raw.update(PRESETS[name])
    layers: list[Mapping[str, Any]] = []
    if file_text is not None:
        layers.append(parse_config_text(file_text))
    if use_env_vars:
        layers.append(_env_var_overrides())
    if overrides:
        layers.append(dict(overrides))
    for layer in layers:
        raw.update(layer)

    env_name = str(raw.get("env.name", "")) or None
    typed: dict[str, Any] = {}
    for key, value in raw.items():
        typ = _key_type(key, env_name)
        typed[key] = _convert(key, value, typ)

    if not typed["env.name"]:
        raise ConfigError("env.name: an environment name is required")
    if typed["env.name"] not in ENV_PARAMS:
        raise ConfigError(
            f"env.name: unknown environment {typed['env.name']!r}; "
            f"known: {sorted(ENV_PARAMS)}"
        )
    if not typed["run.seeds"]:
        raise ConfigError("run.seeds: at least one seed is required")
    for key in ("run.total_env_steps", "run.eval_interval", "run.eval_episodes",
                "train.n_parallel_envs", "train.n_window", "train.batch_size"):
        if typed[key] < 1:
            raise ConfigError(f"{key}: must be >= 1, got {typed[key]}")
    if typed["train.n_f_step"] < 0:
        raise ConfigError(f"train.n_f_step: must be >= 0, got {typed['train.n_f_step']}")
    return ExperimentConfig(values=tuple(sorted(typed.items())))
