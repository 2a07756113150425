"""Monotonic mixing, TD loss fixtures, target-network semantics."""

import itertools

import numpy as np
import pytest

from smaug.mixer import MixingNet, TdConfig, batch_inputs, sync_params, td_loss
from smaug.nn import ShapeMismatchError, as_tensor, no_grad
from smaug.window import SubtaskPolicy


def make_mixer(seed=0, state_dim=5, n_agents=3, z_dim=4, dtype=np.float64):
    return MixingNet(state_dim, n_agents, z_dim, np.random.default_rng(seed),
                     mix_dim=8, hyper_hidden=8, dtype=dtype)


def make_policy(seed=0, obs_dim=3, n_actions=3, n_agents=2, dtype=np.float64):
    return SubtaskPolicy(obs_dim, n_actions, n_agents,
                         np.random.default_rng(seed), rnn_hidden=4, n_window=2,
                         attn_heads=2, attn_head_dim=2, dtype=dtype)


class TestMix:
    def test_zero_hypernets_output_bias(self):
        mixer = make_mixer()
        for p in mixer.named_parameters().values():
            p.data[...] = 0.0
        mixer.hyper_b2.layers[-1].bias.data[...] = [3.25]
        qs = np.random.default_rng(0).normal(size=(6, 3))
        out = mixer(as_tensor(qs), as_tensor(np.ones((6, 5))),
                    as_tensor(np.ones((6, 12))))
        np.testing.assert_allclose(out.data, 3.25, atol=1e-12)

    def test_monotone_in_every_agent_q(self):
        rng = np.random.default_rng(1)
        mixer = make_mixer(seed=2)
        with no_grad():
            for _ in range(1000):
                qs = rng.normal(size=3)
                state = rng.normal(size=5)
                z = rng.normal(size=12)
                agent = rng.integers(3)
                delta = rng.uniform(0.01, 2.0)
                bumped = qs.copy()
                bumped[agent] += delta
                base = mixer(as_tensor(qs[None]), as_tensor(state[None]),
                             as_tensor(z[None])).data[0]
                up = mixer(as_tensor(bumped[None]), as_tensor(state[None]),
                           as_tensor(z[None])).data[0]
                assert up >= base - 1e-9

    def test_composed_formula_oracle(self):
        mixer = make_mixer(seed=3)
        rng = np.random.default_rng(4)
        qs = rng.normal(size=(2, 3))
        state = rng.normal(size=(2, 5))
        z = rng.normal(size=(2, 12))
        with no_grad():
            got = mixer(as_tensor(qs), as_tensor(state), as_tensor(z)).data
        hyper_in = np.concatenate([state, z], axis=1)

        def mlp(layers, v):
            for layer in layers[:-1]:
                v = np.maximum(v @ layer.weight.data.T + layer.bias.data, 0.0)
            last = layers[-1]
            return v @ last.weight.data.T + last.bias.data

        for i in range(2):
            w1 = np.abs(mlp(mixer.hyper_w1.layers, hyper_in[i])).reshape(3, 8)
            b1 = hyper_in[i] @ mixer.hyper_b1.weight.data.T + mixer.hyper_b1.bias.data
            hidden = qs[i] @ w1 + b1
            hidden = np.where(hidden > 0, hidden, np.expm1(hidden))
            w2 = np.abs(mlp(mixer.hyper_w2.layers, hyper_in[i])).reshape(8)
            b2 = mlp(mixer.hyper_b2.layers, hyper_in[i])[0]
            expect = hidden @ w2 + b2
            assert got[i] == pytest.approx(expect, abs=1e-10)

    def test_arity_mismatch_rejected(self):
        mixer = make_mixer()
        with pytest.raises(ShapeMismatchError, match="3 agents"):
            mixer(as_tensor(np.ones((2, 4))), as_tensor(np.ones((2, 5))),
                  as_tensor(np.ones((2, 12))))

    def test_joint_argmax_consistency_brute_force(self):
        # greedy per-agent actions maximize the mixed value over all joints
        rng = np.random.default_rng(5)
        for trial in range(100):
            n_agents = int(rng.integers(2, 4))
            n_actions = int(rng.integers(2, 6))
            mixer = MixingNet(3, n_agents, 2, np.random.default_rng(trial),
                              mix_dim=4, hyper_hidden=4, dtype=np.float64)
            q = rng.normal(size=(n_agents, n_actions))
            state = rng.normal(size=3)
            z = rng.normal(size=n_agents * 2)
            greedy = tuple(int(a) for a in q.argmax(axis=1))
            with no_grad():
                best_joint, best_val = None, -np.inf
                for joint in itertools.product(range(n_actions), repeat=n_agents):
                    qs = np.array([q[i, a] for i, a in enumerate(joint)])
                    val = mixer(as_tensor(qs[None]), as_tensor(state[None]),
                                as_tensor(z[None])).data[0]
                    if val > best_val:
                        best_val, best_joint = val, joint
                with no_grad():
                    greedy_qs = np.array([q[i, a] for i, a in enumerate(greedy)])
                    greedy_val = mixer(as_tensor(greedy_qs[None]),
                                       as_tensor(state[None]),
                                       as_tensor(z[None])).data[0]
            assert greedy_val >= best_val - 1e-9, (trial, greedy, best_joint)


def zeroed_policy_and_mixers(live_total: float, n_agents=2):
    """Nets whose Q values are 0 everywhere and Q_total == live_total."""
    policy = make_policy(n_agents=n_agents)
    target_policy = make_policy(seed=99, n_agents=n_agents)
    mixer = MixingNet(3, n_agents, policy.z_dim, np.random.default_rng(1),
                      mix_dim=4, hyper_hidden=4, dtype=np.float64)
    target_mixer = MixingNet(3, n_agents, policy.z_dim, np.random.default_rng(2),
                             mix_dim=4, hyper_hidden=4, dtype=np.float64)
    for net in (policy, mixer):
        for p in net.named_parameters().values():
            p.data[...] = 0.0
    mixer.hyper_b2.layers[-1].bias.data[...] = [live_total]
    sync_params(policy.named_parameters(), target_policy.named_parameters())
    sync_params(mixer.named_parameters(), target_mixer.named_parameters())
    return policy, mixer, target_policy, target_mixer


def single_transition_batch(reward, terminated, t_max=1, n_agents=2,
                            n_actions=3, obs_dim=3, state_dim=3):
    batch = {
        "obs": np.zeros((1, t_max + 1, n_agents, obs_dim)),
        "state": np.zeros((1, t_max + 1, state_dim)),
        "avail": np.ones((1, t_max + 1, n_agents, n_actions), dtype=bool),
        "actions": np.zeros((1, t_max, n_agents), dtype=np.int64),
        "reward": np.full((1, t_max), float(reward)),
        "terminated": np.full((1, t_max), float(terminated)),
        "mask": np.ones((1, t_max)),
        "r_mi": np.zeros((1, t_max)),
        "r_f": np.zeros((1, t_max)),
    }
    return batch


class TestTdLoss:
    def test_zero_fixed_point(self):
        policy, mixer, tp, tm = zeroed_policy_and_mixers(0.0)
        batch = single_transition_batch(reward=0.0, terminated=0.0)
        loss, _, _ = td_loss(policy, mixer, tp, tm, batch,
                             TdConfig(gamma=0.99))
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_scalar_hand_fixture(self):
        # r=1, gamma=0.99, target max total=2, live total=2
        # -> (1 + 1.98 - 2)^2 = 0.9604
        policy, mixer, tp, tm = zeroed_policy_and_mixers(2.0)
        batch = single_transition_batch(reward=1.0, terminated=0.0)
        loss, _, _ = td_loss(policy, mixer, tp, tm, batch,
                             TdConfig(gamma=0.99))
        assert loss.item() == pytest.approx(0.9604, abs=1e-6)

    def test_terminal_drops_bootstrap(self):
        # r=1, terminal, live total=1 -> zero loss
        policy, mixer, tp, tm = zeroed_policy_and_mixers(1.0)
        batch = single_transition_batch(reward=1.0, terminated=1.0)
        loss, _, _ = td_loss(policy, mixer, tp, tm, batch,
                             TdConfig(gamma=0.99))
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_bonus_rewards_enter_target(self):
        policy, mixer, tp, tm = zeroed_policy_and_mixers(0.0)
        batch = single_transition_batch(reward=0.0, terminated=1.0)
        batch["r_mi"][...] = 2.0
        batch["r_f"][...] = 3.0
        loss, _, _ = td_loss(policy, mixer, tp, tm, batch,
                             TdConfig(gamma=0.99, beta_mi=0.5, beta_f=0.1))
        # target = 0 + 0.5*2 + 0.1*3 = 1.3; live = 0 -> loss = 1.69
        assert loss.item() == pytest.approx(1.3 ** 2, abs=1e-9)

    def test_batch_order_permutation_invariant(self):
        rng = np.random.default_rng(6)
        policy = make_policy(seed=7)
        tp = make_policy(seed=8)
        mixer = MixingNet(3, 2, policy.z_dim, np.random.default_rng(9),
                          mix_dim=4, hyper_hidden=4, dtype=np.float64)
        tm = MixingNet(3, 2, policy.z_dim, np.random.default_rng(10),
                       mix_dim=4, hyper_hidden=4, dtype=np.float64)
        b, t, n, a = 6, 4, 2, 3
        batch = {
            "obs": rng.normal(size=(b, t + 1, n, 3)),
            "state": rng.normal(size=(b, t + 1, 3)),
            "avail": np.ones((b, t + 1, n, a), dtype=bool),
            "actions": rng.integers(a, size=(b, t, n)),
            "reward": rng.normal(size=(b, t)),
            "terminated": np.zeros((b, t)),
            "mask": np.ones((b, t)),
            "r_mi": rng.normal(size=(b, t)),
            "r_f": rng.normal(size=(b, t)),
        }
        cfg = TdConfig()
        base, _, _ = td_loss(policy, mixer, tp, tm, batch, cfg)
        perm = rng.permutation(b)
        shuffled = {k: v[perm] for k, v in batch.items()}
        out, _, _ = td_loss(policy, mixer, tp, tm, shuffled, cfg)
        assert base.item() == pytest.approx(out.item(), abs=1e-10)

    def test_padding_contributes_exactly_zero(self):
        rng = np.random.default_rng(11)
        policy = make_policy(seed=12)
        tp = make_policy(seed=13)
        mixer = MixingNet(3, 2, policy.z_dim, np.random.default_rng(14),
                          mix_dim=4, hyper_hidden=4, dtype=np.float64)
        tm = MixingNet(3, 2, policy.z_dim, np.random.default_rng(15),
                       mix_dim=4, hyper_hidden=4, dtype=np.float64)

        def build(t_total):
            t_real = 3
            batch = {
                "obs": np.zeros((2, t_total + 1, 2, 3)),
                "state": np.zeros((2, t_total + 1, 3)),
                "avail": np.ones((2, t_total + 1, 2, 3), dtype=bool),
                "actions": np.zeros((2, t_total, 2), dtype=np.int64),
                "reward": np.zeros((2, t_total)),
                "terminated": np.zeros((2, t_total)),
                "mask": np.zeros((2, t_total)),
                "r_mi": np.zeros((2, t_total)),
                "r_f": np.zeros((2, t_total)),
            }
            real = {
                "obs": rng.normal(size=(2, t_real + 1, 2, 3)),
                "state": rng.normal(size=(2, t_real + 1, 3)),
                "actions": rng.integers(3, size=(2, t_real, 2)),
                "reward": rng.normal(size=(2, t_real)),
            }
            batch["obs"][:, :t_real + 1] = real["obs"]
            batch["state"][:, :t_real + 1] = real["state"]
            batch["actions"][:, :t_real] = real["actions"]
            batch["reward"][:, :t_real] = real["reward"]
            batch["terminated"][:, t_real - 1] = 1.0
            batch["mask"][:, :t_real] = 1.0
            return batch

        rng = np.random.default_rng(11)
        short = build(4)
        rng = np.random.default_rng(11)
        long = build(8)                         # doubled padding
        cfg = TdConfig()
        a, _, _ = td_loss(policy, mixer, tp, tm, short, cfg)
        b, _, _ = td_loss(policy, mixer, tp, tm, long, cfg)
        assert a.item() == pytest.approx(b.item(), abs=1e-10)

    def test_iql_mode_no_mixer(self):
        policy = make_policy(seed=16)
        tp = make_policy(seed=16)
        sync_params(policy.named_parameters(), tp.named_parameters())
        batch = single_transition_batch(reward=1.0, terminated=1.0)
        loss, _, _ = td_loss(policy, None, tp, None, batch,
                             TdConfig(use_mixer=False))
        assert np.isfinite(loss.item())
        # zero policy -> per-agent q = 0, target = 1 -> loss = 1
        for p in policy.named_parameters().values():
            p.data[...] = 0.0
        sync_params(policy.named_parameters(), tp.named_parameters())
        loss, _, _ = td_loss(policy, None, tp, None, batch,
                             TdConfig(use_mixer=False))
        assert loss.item() == pytest.approx(1.0, abs=1e-12)


class TestTargetSync:
    def test_sync_copies_outputs(self):
        live = make_policy(seed=17)
        target = make_policy(seed=18)
        sync_params(live.named_parameters(), target.named_parameters())
        x = np.random.default_rng(19).normal(size=(1, 3, 2, live.input_dim))
        with no_grad():
            q_live, _, _, _ = live.training_forward(as_tensor(x))
            q_tgt, _, _, _ = target.training_forward(as_tensor(x))
        np.testing.assert_array_equal(q_live.data, q_tgt.data)

    def test_live_updates_leave_target_fixed(self):
        live = make_policy(seed=20)
        target = make_policy(seed=21)
        sync_params(live.named_parameters(), target.named_parameters())
        x = np.random.default_rng(22).normal(size=(1, 3, 2, live.input_dim))
        with no_grad():
            before, _, _, _ = target.training_forward(as_tensor(x))
            live.q_head.weight.data[...] += 1.0
            after, _, _, _ = target.training_forward(as_tensor(x))
        np.testing.assert_array_equal(before.data, after.data)

    def test_double_sync_idempotent(self):
        live = make_policy(seed=23)
        target = make_policy(seed=24)
        sync_params(live.named_parameters(), target.named_parameters())
        snapshot = {k: v.data.copy() for k, v in target.named_parameters().items()}
        sync_params(live.named_parameters(), target.named_parameters())
        for k, v in target.named_parameters().items():
            np.testing.assert_array_equal(v.data, snapshot[k])

    def test_name_set_mismatch_rejected(self):
        live = make_policy(seed=25)
        with pytest.raises(ValueError, match="differ"):
            sync_params(live.named_parameters(), {"nope": None})
