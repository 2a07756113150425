"""Experiment orchestration: seeded runs, metrics files, diagnostics.

One experiment = one resolved config run once per seed. Each seed writes
its own metrics CSV (one row per gradient step) and a final checkpoint
into <out_dir>/<run_id>/seed<k>/; the run directory carries the config
echo and a cross-seed summary. All file writes go through temp + rename,
so an interrupted run never leaves a truncated file.
"""

from __future__ import annotations

import os
import tempfile
import traceback
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import adjusted_mutual_info, curve_area, kmeans
from .config import ExperimentConfig
from .envs import make_env
from .nn import load_checkpoint, load_into, save_checkpoint
from .trainer import EvalStats, Trainer, epsilon_at
from .worldmodel import rollout

__all__ = [
    "METRICS_COLUMNS",
    "ExperimentError",
    "SeedResult",
    "RunResult",
    "DiagnoseResult",
    "run_experiment",
    "evaluate_checkpoint",
    "diagnose_checkpoint",
    "atomic_write_text",
]

METRICS_COLUMNS = [
    "step", "episodes", "td_loss", "inference_loss", "variational_loss",
    "mean_r_mi", "mean_r_f", "eval_return", "eval_success_rate", "eval_std",
    "epsilon", "td_grad_norm", "mean_q", "vnet_traj_acc", "vnet_act_acc",
    "wm_obs_mse", "wm_reward_mse",
]


class ExperimentError(RuntimeError):
    pass


def atomic_write_text(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


@dataclass
class SeedResult:
    seed: int
    final_return: float
    final_success_rate: float
    final_std: float
    auc_return: float
    env_steps: int
    episodes: int
    train_steps: int
    metrics_path: str
    checkpoint_path: str


@dataclass
class RunResult:
    run_dir: str
    seed_results: list = field(default_factory=list)

    @property
    def final_returns(self) -> np.ndarray:
        return np.array([s.final_return for s in self.seed_results])

    @property
    def mean_final_return(self) -> float:
        return float(self.final_returns.mean())

    @property
    def std_final_return(self) -> float:
        return float(self.final_returns.std())


def _env_factory(config: ExperimentConfig) -> Callable:
    name = config.env_name
    params = config.env_params()
    return lambda: make_env(name, **params)


def _metrics_text(rows: list[dict]) -> str:
    lines = [",".join(METRICS_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(col)) for col in METRICS_COLUMNS))
    return "\n".join(lines) + "\n"


def run_seed(config: ExperimentConfig, seed: int, seed_dir: str,
             progress: Callable[[dict], None] | None = None) -> SeedResult:
    """Train one seed to the configured step budget, writing its outputs."""
    os.makedirs(seed_dir, exist_ok=True)
    trainer = Trainer(_env_factory(config), config.trainer_config(), seed=seed)
    total_steps = config.get("run.total_env_steps")
    eval_interval = config.get("run.eval_interval")
    eval_episodes = config.get("run.eval_episodes")
    flush_every = config.get("run.metrics_flush_every")
    ckpt_interval = config.get("run.checkpoint_interval")
    train_every = trainer.cfg.train_every_episodes

    metrics_path = os.path.join(seed_dir, "metrics.csv")
    ckpt_path = os.path.join(seed_dir, "checkpoint.ckpt")
    rows: list[dict] = []
    eval_points: list[tuple[int, EvalStats]] = []
    latest_eval: EvalStats | None = None
    next_eval = 0
    next_ckpt = ckpt_interval if ckpt_interval > 0 else None
    episodes_since_train = 0

    def maybe_eval():
        nonlocal latest_eval, next_eval
        while trainer.env_steps >= next_eval:
            latest_eval = trainer.evaluate(eval_episodes)
            eval_points.append((trainer.env_steps, latest_eval))
            next_eval += eval_interval
        if progress is not None:
            progress({
                "seed": seed, "env_steps": trainer.env_steps,
                "episodes": trainer.episodes_seen,
                "eval_return": latest_eval.mean_return if latest_eval else None,
            })

    maybe_eval()
    while trainer.env_steps < total_steps:
        eps = epsilon_at(trainer.cfg.epsilon, trainer.env_steps)
        collected = trainer.collect_batch(eps)
        episodes_since_train += len(collected)
        while episodes_since_train >= train_every:
            episodes_since_train -= train_every
            metrics = trainer.train_step()
            if metrics is None:
                break
            row = {
                "step": trainer.env_steps,
                "episodes": trainer.episodes_seen,
                "epsilon": eps,
                "eval_return": latest_eval.mean_return if latest_eval else None,
                "eval_success_rate": latest_eval.success_rate if latest_eval else None,
                "eval_std": latest_eval.std_return if latest_eval else None,
                **metrics,
            }
            rows.append(row)
            if len(rows) % flush_every == 0:
                atomic_write_text(metrics_path, _metrics_text(rows))
        maybe_eval()
        if next_ckpt is not None and trainer.env_steps >= next_ckpt:
            save_checkpoint(trainer.named_parameters(),
                            os.path.join(seed_dir, f"checkpoint_{trainer.env_steps}.ckpt"))
            next_ckpt += ckpt_interval

    final_eval = trainer.evaluate(eval_episodes)
    eval_points.append((trainer.env_steps, final_eval))
    atomic_write_text(metrics_path, _metrics_text(rows))
    save_checkpoint(trainer.named_parameters(), ckpt_path)

    steps = [p for p, _ in eval_points]
    rets = [e.mean_return for _, e in eval_points]
    return SeedResult(
        seed=seed,
        final_return=final_eval.mean_return,
        final_success_rate=final_eval.success_rate,
        final_std=final_eval.std_return,
        auc_return=curve_area(steps, rets),
        env_steps=trainer.env_steps,
        episodes=trainer.episodes_seen,
        train_steps=trainer.train_steps,
        metrics_path=metrics_path,
        checkpoint_path=ckpt_path,
    )


def run_experiment(config: ExperimentConfig,
                   progress: Callable[[dict], None] | None = None) -> RunResult:
    run_dir = os.path.join(config.out_dir, config.run_id)
    os.makedirs(run_dir, exist_ok=True)
    atomic_write_text(os.path.join(run_dir, "config.txt"), config.serialize())
    result = RunResult(run_dir=run_dir)
    for seed in config.seeds:
        seed_dir = os.path.join(run_dir, f"seed{seed}")
        try:
            result.seed_results.append(run_seed(config, seed, seed_dir, progress))
        except Exception as exc:
            atomic_write_text(os.path.join(run_dir, "error.log"),
                              f"seed {seed} failed: {exc}\n{traceback.format_exc()}")
            _write_summary(run_dir, result)
            raise ExperimentError(f"seed {seed} failed: {exc}") from exc
    _write_summary(run_dir, result)
    return result


def _write_summary(run_dir: str, result: RunResult):
    lines = ["seed,final_return,final_success_rate,final_std,auc_return,"
             "env_steps,episodes,train_steps"]
    for s in result.seed_results:
        lines.append(
            f"{s.seed},{_fmt(s.final_return)},{_fmt(s.final_success_rate)},"
            f"{_fmt(s.final_std)},{_fmt(s.auc_return)},{s.env_steps},"
            f"{s.episodes},{s.train_steps}"
        )
    if result.seed_results:
        lines.append(f"mean,{_fmt(result.mean_final_return)},,,,,,")
        lines.append(f"std,{_fmt(result.std_final_return)},,,,,,")
    atomic_write_text(os.path.join(run_dir, "summary.csv"), "\n".join(lines) + "\n")


def _load_trainer(config: ExperimentConfig, checkpoint_path: str,
                  seed: int) -> Trainer:
    trainer = Trainer(_env_factory(config), config.trainer_config(), seed=seed)
    loaded = load_checkpoint(checkpoint_path)
    try:
        load_into(trainer.named_parameters(), loaded)
    except Exception as exc:
        raise ExperimentError(
            f"checkpoint {checkpoint_path!r} does not match the configured "
            f"networks: {exc}"
        ) from exc
    trainer.sync_targets()
    return trainer


def evaluate_checkpoint(config: ExperimentConfig, checkpoint_path: str,
                        episodes: int, seed: int = 0,
                        trace_path: str | None = None) -> EvalStats:
    trainer = _load_trainer(config, checkpoint_path, seed)
    sink: list | None = [] if trace_path else None
    stats = trainer.evaluate(episodes, seed=seed + 1, trace_sink=sink)
    if trace_path:
        from .envs import write_episode_trace
        write_episode_trace(sink, trace_path)
    return stats


@dataclass
class DiagnoseResult:
    alignment_score: float
    csv_path: str
    episodes: int
    rows: int


def diagnose_checkpoint(config: ExperimentConfig, checkpoint_path: str,
                        episodes: int, out_path: str,
                        seed: int = 0) -> DiagnoseResult:
    """Dump per-step attention weights and subtask vectors with ground truth.

    Runs greedy episodes, records one CSV row per (step, agent) holding the
    environment's hidden goal id, the head-averaged attention weight per
    window size, and the fused z vector; then clusters the z vectors
    (k-means, k = number of goal labels) and scores adjusted mutual
    information against the goal ids.
    """
    trainer = _load_trainer(config, checkpoint_path, seed)
    policy, spec = trainer.policy, trainer.spec
    n = spec.n_agents
    ids = np.eye(n, dtype=policy.dtype)
    env = trainer.eval_env_factory()
    rng = np.random.default_rng(seed + 12345)

    header = (["t", "agent", "goal_id"]
              + [f"alpha_{k}" for k in range(1, policy.n_window + 1)]
              + [f"z_{d}" for d in range(policy.z_dim)])
    lines = [",".join(header)]
    z_rows, goal_rows = [], []
    from .nn import no_grad
    for _ in range(episodes):
        o, s, avail = env.reset(int(rng.integers(2**31 - 1)))
        obs = o[None, :, :]
        state = policy.init_state(n)
        prev_actions = np.zeros((1, n), dtype=np.int64)
        t = 0
        while True:
            onehot = np.eye(spec.n_actions, dtype=policy.dtype)[prev_actions]
            if t == 0:
                onehot[:] = 0.0
            x = policy.build_input(obs.reshape(n, -1), onehot.reshape(n, -1))
            state = policy.advance_state(state, x)
            cap = trainer._rollout_cap(t)
            if cap > 0:
                ro = rollout(trainer.worldmodel, policy, state, obs,
                             ids, cap, trainer.cfg.gamma)
                key_state = ro.frontier
            else:
                key_state = state
            with no_grad():
                q, z, w = policy.act_features(key_state, ids, query_state=state)
            alpha = w.data.mean(axis=-2)                    # head-averaged [n, K]
            goal = env.ground_truth_label()
            for agent in range(n):
                row = ([str(t), str(agent), str(goal)]
                       + [_fmt(float(v)) for v in alpha[agent]]
                       + [_fmt(float(v)) for v in z.data[agent]])
                lines.append(",".join(row))
                z_rows.append(z.data[agent].copy())
                goal_rows.append(goal)
            from .window import masked_q
            actions = np.argmax(masked_q(q.data, avail), axis=-1)
            result = env.step(actions)
            obs = result.next_observations[None, :, :]
            avail = result.available_actions
            prev_actions = actions[None, :]
            t += 1
            if result.terminated or result.truncated:
                break
    atomic_write_text(out_path, "\n".join(lines) + "\n")

    goals = np.asarray(goal_rows)
    n_clusters = max(2, len(np.unique(goals)))
    clusters = kmeans(np.asarray(z_rows), n_clusters, np.random.default_rng(seed))
    score = adjusted_mutual_info(clusters, goals)
    return DiagnoseResult(alignment_score=float(score), csv_path=out_path,
                          episodes=episodes, rows=len(z_rows))
