"""End-to-end training loop: collect, replay, and the three updates.

Episode collection drives E environment instances in lockstep with one
shared-parameter policy, epsilon-greedy over availability masks. When the
inference network is enabled, every step first imagines up to n_f_step
future steps (capped at the episode horizon) and acts from the imagination
frontier; the discounted predicted rewards (r_f) and the per-step intrinsic
rewards (r_MI) are computed at collection time and frozen into the episode
record, so replayed targets stay stationary.

One gradient step runs per collected episode batch once the replay buffer
holds a full sample: TD loss into the policy and mixer, the variational
cross-entropies into the classifier nets only (the subtask vectors they
consume are detached), and the prediction loss into the inference net.
Everything is driven by explicit numpy Generators so a (config, seed) pair
fixes the entire metrics stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .envs import Env
from .intrinsic import IntrinsicConfig, VariationalNets, intrinsic_reward, variational_loss
from .mixer import MixingNet, TdConfig, sync_params, td_loss
from .nn import RmsProp, as_tensor, clip_grad_norm, no_grad
from .window import SubtaskPolicy, greedy_action, masked_q
from .worldmodel import InferenceBuffer, InferenceNet, InferenceRecord, inference_loss, rollout

__all__ = [
    "EpsilonSchedule",
    "epsilon_at",
    "TrainerConfig",
    "EpisodeBatch",
    "ReplayBuffer",
    "EvalStats",
    "Trainer",
]


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.05
    anneal_steps: int = 50_000


def epsilon_at(schedule: EpsilonSchedule, step: int) -> float:
    """Linear anneal from start to end over anneal_steps, then constant."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    frac = min(step / schedule.anneal_steps, 1.0)
    return schedule.start + (schedule.end - schedule.start) * frac


@dataclass(frozen=True)
class TrainerConfig:
    n_parallel_envs: int = 8
    n_window: int = 5
    n_f_step: int = 3
    use_inference: bool = True
    use_intrinsic: bool = True
    use_mixer: bool = True
    per_window_grus: bool = False
    rnn_hidden: int = 64
    attn_heads: int = 4
    attn_head_dim: int = 4
    temperature: float = 1.0
    mix_dim: int = 32
    hyper_hidden: int = 64
    vnet_hidden: int = 64
    wm_enc_hidden: int = 64
    wm_emb_dim: int = 32
    wm_dec_hidden: int = 64
    lr: float = 5e-4
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-5
    grad_clip: float = 10.0
    gamma: float = 0.99
    beta_mi: float = 5e-2
    beta_f: float = 1e-2
    beta1: float = 1.0
    beta2: float = 1.0
    beta_o: float = 1.0
    beta_r: float = 1.0
    batch_size: int = 32
    buffer_capacity: int = 5000
    inference_buffer_capacity: int = 20_000
    inference_batch: int = 64
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    target_update_interval: int = 200   # episodes between hard target syncs
    train_every_episodes: int = 8


@dataclass
class EpisodeBatch:
    """Fixed-layout record of one episode, padded to the horizon."""

    obs: np.ndarray          # [T+1, n, obs_dim]
    state: np.ndarray        # [T+1, state_dim]
    avail: np.ndarray        # [T+1, n, n_actions] (all-true at padding)
    actions: np.ndarray      # [T, n]
    reward: np.ndarray       # [T]
    terminated: np.ndarray   # [T] 1.0 where the episode ended (incl. horizon)
    mask: np.ndarray         # [T] 1.0 for executed steps
    z: np.ndarray            # [T, n, z_dim] subtask vectors used for acting
    r_mi: np.ndarray         # [T]
    r_f: np.ndarray          # [T]
    length: int = 0
    discounted_return: float = 0.0
    undiscounted_return: float = 0.0
    success: bool = False


class ReplayBuffer:
    """FIFO ring of whole episodes with uniform batch sampling."""

    def __init__(self, capacity: int = 5000):
        self.capacity = capacity
        self._items: list[EpisodeBatch] = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def add(self, episode: EpisodeBatch):
        if len(self._items) < self.capacity:
            self._items.append(episode)
        else:
            self._items[self._next] = episode
            self._next = (self._next + 1) % self.capacity

    def can_sample(self, batch_size: int) -> bool:
        return len(self._items) >= batch_size

    def sample(self, rng: np.random.Generator, batch_size: int) -> dict:
        if not self.can_sample(batch_size):
            raise ValueError(
                f"buffer holds {len(self._items)} episodes, need {batch_size}"
            )
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        eps = [self._items[i] for i in idx]
        return {
            "obs": np.stack([e.obs for e in eps]),
            "state": np.stack([e.state for e in eps]),
            "avail": np.stack([e.avail for e in eps]),
            "actions": np.stack([e.actions for e in eps]),
            "reward": np.stack([e.reward for e in eps]),
            "terminated": np.stack([e.terminated for e in eps]),
            "mask": np.stack([e.mask for e in eps]),
            "z": np.stack([e.z for e in eps]),
            "r_mi": np.stack([e.r_mi for e in eps]),
            "r_f": np.stack([e.r_f for e in eps]),
        }


@dataclass
class EvalStats:
    mean_return: float        # discounted, comparable to exact game oracles
    success_rate: float
    std_return: float
    mean_length: float
    n_episodes: int


class Trainer:
    def __init__(self, env_factory: Callable[[], Env], cfg: TrainerConfig,
                 seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.envs = [env_factory() for _ in range(cfg.n_parallel_envs)]
        self.eval_env_factory = env_factory
        self.spec = self.envs[0].spec
        root = np.random.SeedSequence(seed)
        init_ss, explore_ss, sample_ss, env_ss, eval_ss = root.spawn(5)
        self.init_rng = np.random.default_rng(init_ss)
        self.explore_rng = np.random.default_rng(explore_ss)
        self.sample_rng = np.random.default_rng(sample_ss)
        self.env_seed_rng = np.random.default_rng(env_ss)
        self.eval_seed_rng = np.random.default_rng(eval_ss)

        spec = self.spec
        self.policy = SubtaskPolicy(
            spec.obs_dim, spec.n_actions, spec.n_agents, self.init_rng,
            rnn_hidden=cfg.rnn_hidden, n_window=cfg.n_window,
            attn_heads=cfg.attn_heads, attn_head_dim=cfg.attn_head_dim,
            temperature=cfg.temperature, per_window_grus=cfg.per_window_grus,
            dtype=dtype,
        )
        self.target_policy = SubtaskPolicy(
            spec.obs_dim, spec.n_actions, spec.n_agents, self.init_rng,
            rnn_hidden=cfg.rnn_hidden, n_window=cfg.n_window,
            attn_heads=cfg.attn_heads, attn_head_dim=cfg.attn_head_dim,
            temperature=cfg.temperature, per_window_grus=cfg.per_window_grus,
            dtype=dtype,
        )
        self.mixer = MixingNet(spec.state_dim, spec.n_agents, self.policy.z_dim,
                               self.init_rng, mix_dim=cfg.mix_dim,
                               hyper_hidden=cfg.hyper_hidden, dtype=dtype)
        self.target_mixer = MixingNet(spec.state_dim, spec.n_agents,
                                      self.policy.z_dim, self.init_rng,
                                      mix_dim=cfg.mix_dim,
                                      hyper_hidden=cfg.hyper_hidden, dtype=dtype)
        self.vnets = VariationalNets(spec.obs_dim, self.policy.z_dim,
                                     spec.n_agents, spec.n_actions,
                                     self.init_rng, hidden=cfg.vnet_hidden,
                                     dtype=dtype)
        self.worldmodel = InferenceNet(spec.obs_dim, spec.n_actions,
                                       self.init_rng,
                                       enc_hidden=cfg.wm_enc_hidden,
                                       emb_dim=cfg.wm_emb_dim,
                                       dec_hidden=cfg.wm_dec_hidden, dtype=dtype)
        self.sync_targets()

        self.intrinsic_cfg = IntrinsicConfig(beta1=cfg.beta1, beta2=cfg.beta2,
                                             beta_mi=cfg.beta_mi,
                                             hidden=cfg.vnet_hidden)
        self.td_cfg = TdConfig(gamma=cfg.gamma, beta_mi=cfg.beta_mi,
                               beta_f=cfg.beta_f, use_mixer=cfg.use_mixer)

        self._policy_params = dict(self.policy.named_parameters())
        self._mixer_params = dict(self.mixer.named_parameters()) if cfg.use_mixer else {}
        td_params = dict(self._policy_params)
        td_params.update(self._mixer_params)
        self._td_params = td_params
        self.opt_policy = RmsProp(td_params.values(), lr=cfg.lr,
                                  alpha=cfg.rmsprop_alpha, eps=cfg.rmsprop_eps)
        self.opt_vnets = RmsProp(self.vnets.named_parameters().values(),
                                 lr=cfg.lr, alpha=cfg.rmsprop_alpha,
                                 eps=cfg.rmsprop_eps)
        self.opt_wm = RmsProp(self.worldmodel.named_parameters().values(),
                              lr=cfg.lr, alpha=cfg.rmsprop_alpha,
                              eps=cfg.rmsprop_eps)

        self.replay = ReplayBuffer(cfg.buffer_capacity)
        self.inference_buffer = InferenceBuffer(cfg.inference_buffer_capacity)
        self.env_steps = 0
        self.episodes_seen = 0
        self.train_steps = 0
        self._episodes_at_last_sync = 0

    # -- target handling -------------------------------------------------------

    def sync_targets(self):
        sync_params(dict(self.policy.named_parameters()),
                    dict(self.target_policy.named_parameters()))
        sync_params(dict(self.mixer.named_parameters()),
                    dict(self.target_mixer.named_parameters()))

    def named_parameters(self) -> dict:
        out = dict(self.policy.named_parameters())
        out.update(self.mixer.named_parameters())
        out.update(self.vnets.named_parameters())
        out.update(self.worldmodel.named_parameters())
        return out

    # -- acting ---------------------------------------------------------------------

    def _rollout_cap(self, t: int) -> int:
        if not self.cfg.use_inference:
            return 0
        return max(0, min(self.cfg.n_f_step, self.spec.episode_limit - 1 - t))

    def _select(self, state, obs_grid, avail, epsilon: float, rng, t: int):
        """Greedy/epsilon action selection, optionally from the imagination
        frontier. Returns (actions [E,n], z [E,n,z], r_f [E])."""
        e, n = obs_grid.shape[:2]
        ids = np.tile(np.eye(n, dtype=self.dtype), (e, 1))
        cap = self._rollout_cap(t)
        if cap > 0:
            ro = rollout(self.worldmodel, self.policy, state, obs_grid, ids,
                         cap, self.cfg.gamma)
            key_state, r_f = ro.frontier, ro.r_f
        else:
            key_state, r_f = state, np.zeros(e)
        with no_grad():
            # subtask keys may include imagined steps; the query and the Q
            # head stay on the real trajectory at the current step
            q, z, _ = self.policy.act_features(key_state, ids, query_state=state)
        q = q.data.reshape(e, n, -1)
        flat_avail = avail.reshape(e * n, -1)
        greedy = greedy_action(q.reshape(e * n, -1), flat_avail)
        if epsilon > 0.0:
            coins = rng.random(e * n)
            u = rng.random(e * n)
            probs = flat_avail / flat_avail.sum(-1, keepdims=True)
            cum = np.cumsum(probs, axis=-1)
            randoms = np.argmax(cum > u[:, None], axis=-1)
            actions = np.where(coins < epsilon, randoms, greedy)
        else:
            actions = greedy
        return actions.reshape(e, n), z.data.reshape(e, n, -1), r_f

    # -- collection -------------------------------------------------------------------

    def collect_batch(self, epsilon: float) -> list[EpisodeBatch]:
        """Run one episode on each parallel env instance, in lockstep."""
        cfg, spec = self.cfg, self.spec
        e, n, limit = len(self.envs), spec.n_agents, spec.episode_limit
        seeds = [int(self.env_seed_rng.integers(2**31 - 1)) for _ in range(e)]
        records = [self._empty_episode() for _ in range(e)]
        obs = np.zeros((e, n, spec.obs_dim), dtype=self.dtype)
        state_g = np.zeros((e, spec.state_dim), dtype=self.dtype)
        avail = np.ones((e, n, spec.n_actions), dtype=bool)
        for i, env in enumerate(self.envs):
            o, s, a = env.reset(seeds[i])
            obs[i], state_g[i], avail[i] = o, s, a
            records[i].obs[0], records[i].state[0], records[i].avail[0] = o, s, a
        rec_state = self.policy.init_state(e * n)
        prev_actions = np.zeros((e, n), dtype=np.int64)
        alive = np.ones(e, dtype=bool)
        labels = np.tile(np.arange(n), e)
        t = 0
        while alive.any() and t < limit:
            onehot = np.eye(spec.n_actions, dtype=self.dtype)[prev_actions]
            if t == 0:
                onehot[:] = 0.0
            x = self.policy.build_input(obs.reshape(e * n, -1),
                                        onehot.reshape(e * n, -1))
            rec_state = self.policy.advance_state(rec_state, x)
            actions, z, r_f = self._select(rec_state, obs, avail, epsilon,
                                           self.explore_rng, t)
            if cfg.use_intrinsic:
                r_mi = intrinsic_reward(
                    self.vnets, obs.reshape(e * n, -1), z.reshape(e * n, -1),
                    labels, actions.reshape(-1), self.intrinsic_cfg,
                ).reshape(e, n).sum(axis=1)
            else:
                r_mi = np.zeros(e)
            for i, env in enumerate(self.envs):
                if not alive[i]:
                    continue
                result = env.step(actions[i])
                rec = records[i]
                rec.actions[t] = actions[i]
                rec.reward[t] = result.reward
                rec.mask[t] = 1.0
                done = result.terminated or result.truncated
                rec.terminated[t] = 1.0 if done else 0.0
                rec.z[t] = z[i]
                rec.r_mi[t] = r_mi[i]
                rec.r_f[t] = r_f[i]
                rec.obs[t + 1] = result.next_observations
                rec.state[t + 1] = result.global_state
                rec.avail[t + 1] = result.available_actions
                self.inference_buffer.add(InferenceRecord(
                    obs=obs[i].copy(), actions=actions[i].copy(),
                    next_obs=result.next_observations.copy(),
                    reward=float(result.reward),
                ))
                obs[i] = result.next_observations
                state_g[i] = result.global_state
                avail[i] = result.available_actions
                if done:
                    alive[i] = False
                    rec.length = t + 1
                    rec.success = env.episode_success()
            prev_actions = actions
            t += 1
        for rec in records:
            steps = int(rec.mask.sum())
            rec.length = steps
            gammas = self.cfg.gamma ** np.arange(steps)
            rec.discounted_return = float((rec.reward[:steps] * gammas).sum())
            rec.undiscounted_return = float(rec.reward[:steps].sum())
            self.env_steps += steps
        self.episodes_seen += len(records)
        for rec in records:
            self.replay.add(rec)
        return records

    def _empty_episode(self) -> EpisodeBatch:
        spec = self.spec
        t, n = spec.episode_limit, spec.n_agents
        return EpisodeBatch(
            obs=np.zeros((t + 1, n, spec.obs_dim), dtype=self.dtype),
            state=np.zeros((t + 1, spec.state_dim), dtype=self.dtype),
            avail=np.ones((t + 1, n, spec.n_actions), dtype=bool),
            actions=np.zeros((t, n), dtype=np.int64),
            reward=np.zeros(t, dtype=np.float64),
            terminated=np.zeros(t, dtype=np.float64),
            mask=np.zeros(t, dtype=np.float64),
            z=np.zeros((t, n, self.policy.z_dim), dtype=self.dtype),
            r_mi=np.zeros(t, dtype=np.float64),
            r_f=np.zeros(t, dtype=np.float64),
        )

    # -- learning ------------------------------------------------------------------------

    def train_step(self, batch: dict | None = None) -> dict | None:
        """One gradient step on a sampled episode batch; None while warming up."""
        cfg = self.cfg
        if batch is None:
            if not self.replay.can_sample(cfg.batch_size):
                return None
            batch = self.replay.sample(self.sample_rng, cfg.batch_size)

        loss, td_metrics, z_live = td_loss(
            self.policy, self.mixer if cfg.use_mixer else None,
            self.target_policy, self.target_mixer if cfg.use_mixer else None,
            batch, self.td_cfg,
        )
        self.opt_policy.zero_grad()
        loss.backward()
        td_grad_norm = clip_grad_norm(list(self._td_params.values()), cfg.grad_clip)
        self.opt_policy.step()
        metrics = {
            "td_loss": loss.item(),
            "td_grad_norm": td_grad_norm,
            **td_metrics,
        }

        if cfg.use_intrinsic:
            metrics.update(self._train_vnets(batch, z_live))
        else:
            metrics.update({"variational_loss": float("nan"),
                            "vnet_traj_acc": float("nan"),
                            "vnet_act_acc": float("nan")})
        if cfg.use_inference and len(self.inference_buffer) >= cfg.inference_batch:
            metrics.update(self._train_worldmodel())
        else:
            metrics.update({"inference_loss": float("nan"),
                            "wm_obs_mse": float("nan"),
                            "wm_reward_mse": float("nan")})

        self.train_steps += 1
        if (self.episodes_seen - self._episodes_at_last_sync
                >= cfg.target_update_interval):
            self.sync_targets()
            self._episodes_at_last_sync = self.episodes_seen
        metrics["mean_r_mi"] = float((batch["r_mi"] * batch["mask"]).sum()
                                     / max(batch["mask"].sum(), 1.0))
        metrics["mean_r_f"] = float((batch["r_f"] * batch["mask"]).sum()
                                    / max(batch["mask"].sum(), 1.0))
        return metrics

    def _train_vnets(self, batch: dict, z_live: np.ndarray) -> dict:
        mask = batch["mask"].astype(bool)                      # [B, T]
        obs = batch["obs"][:, :-1][mask]                       # [M, n, obs]
        actions = batch["actions"][mask]                       # [M, n]
        # subtask vectors from the TD forward's live encoders, detached so
        # only the classifier parameters train here
        z = z_live[:, :-1][mask]                               # [M, n, z_dim]
        m, n = actions.shape
        labels = np.tile(np.arange(n), m)
        loss, traj_acc, act_acc = variational_loss(
            self.vnets, obs.reshape(m * n, -1), z.reshape(m * n, -1),
            labels, actions.reshape(-1),
        )
        self.opt_vnets.zero_grad()
        loss.backward()
        clip_grad_norm(list(self.vnets.named_parameters().values()),
                       self.cfg.grad_clip)
        self.opt_vnets.step()
        return {"variational_loss": loss.item(), "vnet_traj_acc": traj_acc,
                "vnet_act_acc": act_acc}

    def _train_worldmodel(self) -> dict:
        cfg = self.cfg
        obs, actions, next_obs, reward = self.inference_buffer.sample(
            self.sample_rng, cfg.inference_batch,
        )
        loss = inference_loss(self.worldmodel, obs, actions, next_obs, reward,
                              beta_o=cfg.beta_o, beta_r=cfg.beta_r)
        self.opt_wm.zero_grad()
        loss.backward()
        clip_grad_norm(list(self.worldmodel.named_parameters().values()),
                       cfg.grad_clip)
        self.opt_wm.step()
        with no_grad():
            b, n, od = obs.shape
            pred_o, pred_r = self.worldmodel.predict(
                as_tensor(obs.reshape(b * n, od).astype(self.dtype)),
                as_tensor(np.eye(self.spec.n_actions, dtype=self.dtype)[
                    actions.reshape(-1)]),
            )
        obs_mse = float(np.mean((pred_o.data - next_obs.reshape(b * n, od)) ** 2))
        rew_mse = float(np.mean((pred_r.data[:, 0]
                                 - np.repeat(reward, n)) ** 2))
        return {"inference_loss": loss.item(), "wm_obs_mse": obs_mse,
                "wm_reward_mse": rew_mse}

    # -- evaluation -----------------------------------------------------------------------

    def evaluate(self, n_episodes: int, seed: int | None = None,
                 action_override: Callable | None = None,
                 trace_sink: list | None = None) -> EvalStats:
        """Greedy rollouts on fresh episodes; returns discounted-return stats."""
        rng = (np.random.default_rng(seed) if seed is not None
               else self.eval_seed_rng)
        env = self.eval_env_factory()
        spec = self.spec
        n = spec.n_agents
        returns, lengths, successes = [], [], []
        ids = np.eye(n, dtype=self.dtype)
        for _ in range(n_episodes):
            ep_seed = int(rng.integers(2**31 - 1))
            o, s, avail = env.reset(ep_seed)
            obs = o[None, :, :]
            rec_state = self.policy.init_state(n)
            prev_actions = np.zeros((1, n), dtype=np.int64)
            total, disc, t = 0.0, 0.0, 0
            while True:
                onehot = np.eye(spec.n_actions, dtype=self.dtype)[prev_actions]
                if t == 0:
                    onehot[:] = 0.0
                x = self.policy.build_input(obs.reshape(n, -1),
                                            onehot.reshape(n, -1))
                rec_state = self.policy.advance_state(rec_state, x)
                if action_override is not None:
                    actions = np.asarray(action_override(obs[0], avail, t))[None, :]
                else:
                    actions, _, _ = self._select(rec_state, obs,
                                                 avail[None, :, :], 0.0, rng, t)
                result = env.step(actions[0])
                if trace_sink is not None:
                    from .envs import trace_record
                    trace_sink.append(trace_record(
                        t, result.global_state, result.next_observations,
                        actions[0], result.reward, result.terminated,
                        result.truncated))
                total += result.reward
                disc += (self.cfg.gamma ** t) * result.reward
                obs = result.next_observations[None, :, :]
                avail = result.available_actions
                prev_actions = actions
                t += 1
                if result.terminated or result.truncated:
                    break
            returns.append(disc)
            lengths.append(t)
            successes.append(env.episode_success())
        returns = np.asarray(returns, dtype=np.float64)
        return EvalStats(
            mean_return=float(returns.mean()),
            success_rate=float(np.mean(successes)),
            std_return=float(returns.std()),
            mean_length=float(np.mean(lengths)),
            n_episodes=n_episodes,
        )
