"""Intrinsic reward: classifier losses, reward bound audit, edge cases."""

import numpy as np
import pytest

from smaug.intrinsic import (
    LOG_FLOOR,
    IntrinsicConfig,
    VariationalNets,
    intrinsic_reward,
    mi_bound_audit,
    trajectory_class_label,
    variational_loss,
)
from smaug.nn import RmsProp, no_grad


def make_nets(seed=0, obs_dim=4, z_dim=3, n_classes=3, n_actions=5, dtype=np.float64):
    return VariationalNets(obs_dim, z_dim, n_classes, n_actions,
                           np.random.default_rng(seed), hidden=8, dtype=dtype)


def uniform_nets(**kw):
    nets = make_nets(**kw)
    for p in nets.named_parameters().values():
        p.data[...] = 0.0                  # zero logits -> uniform softmax
    return nets


class TestLabels:
    def test_direct_mapping(self):
        assert trajectory_class_label(0, 3) == 0
        assert trajectory_class_label(2, 3) == 2

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            trajectory_class_label(3, 3)

    def test_batch_labels_uniform_over_agents(self):
        n_agents, rows = 4, 1000
        labels = trajectory_class_label(np.tile(np.arange(n_agents), rows), n_agents)
        counts = np.bincount(labels, minlength=n_agents)
        assert np.all(counts == rows)


class TestIntrinsicReward:
    def test_uniform_distributions_value(self):
        # log(1/3) - log(1/5) ~ 0.5108
        nets = uniform_nets(n_classes=3, n_actions=5)
        cfg = IntrinsicConfig(beta1=1.0, beta2=1.0)
        r = intrinsic_reward(nets, np.zeros((2, 4)), np.zeros((2, 3)),
                             np.array([0, 2]), np.array([1, 4]), cfg)
        np.testing.assert_allclose(r, np.log(1 / 3) - np.log(1 / 5), atol=1e-9)
        assert r[0] == pytest.approx(0.5108, abs=1e-4)

    def test_disabled_weights_give_zero(self):
        nets = make_nets()
        cfg = IntrinsicConfig(beta1=0.0, beta2=0.0)
        r = intrinsic_reward(nets, np.ones((3, 4)), np.ones((3, 3)),
                             np.array([0, 1, 2]), np.array([0, 0, 0]), cfg)
        np.testing.assert_allclose(r, 0.0)

    def test_direct_formula_oracle(self):
        nets = make_nets(seed=0)
        rng = np.random.default_rng(1)
        obs = rng.normal(size=(6, 4))
        z = rng.normal(size=(6, 3))
        labels = rng.integers(3, size=6)
        actions = rng.integers(5, size=6)
        cfg = IntrinsicConfig(beta1=0.7, beta2=0.4)
        got = intrinsic_reward(nets, obs, z, labels, actions, cfg)
        with no_grad():
            from smaug.nn import as_tensor
            lp_t = nets.traj_log_probs(as_tensor(obs), as_tensor(z)).data
            lp_a = nets.action_log_probs(as_tensor(obs)).data
        for i in range(6):
            expect = (0.7 * max(lp_t[i, labels[i]], LOG_FLOOR)
                      - 0.4 * max(lp_a[i, actions[i]], LOG_FLOOR))
            assert got[i] == pytest.approx(expect, abs=1e-12)

    def test_reward_bounded_by_clamp(self):
        nets = make_nets(seed=2)
        # saturate the classifiers with huge logits
        for p in nets.named_parameters().values():
            p.data *= 200.0
        cfg = IntrinsicConfig(beta1=1.0, beta2=1.0)
        rng = np.random.default_rng(3)
        r = intrinsic_reward(nets, rng.normal(size=(50, 4)),
                             rng.normal(size=(50, 3)),
                             rng.integers(3, size=50), rng.integers(5, size=50),
                             cfg)
        bound = (1.0 + 1.0) * abs(np.log(1e-8))
        assert np.all(np.abs(r) <= bound + 1e-9)


class TestVariationalLoss:
    def test_perfect_classifier_near_zero_traj_term(self):
        nets = uniform_nets()
        # build logits that already pick the right class with huge margin
        nets.traj_net.layers[-1].bias.data[...] = 0.0
        obs = np.zeros((3, 4))
        z = np.eye(3)
        labels = np.arange(3)
        # route z directly: set last layer weight so logits = big * z
        w = nets.traj_net.layers[-1].weight
        w.data[...] = 0.0
        first = nets.traj_net.layers[0]
        first.weight.data[...] = 0.0
        first.bias.data[...] = 0.0
        first.weight.data[:3, 4:7] = np.eye(3) * 50.0
        w.data[:3, :3] = np.eye(3) * 50.0
        loss, traj_acc, _ = variational_loss(nets, obs, z, labels,
                                             np.zeros(3, dtype=int))
        assert traj_acc == 1.0
        # action term stays log(n_actions) for the uniform action net
        assert loss.item() == pytest.approx(np.log(5), abs=1e-6)

    def test_uniform_classifier_gives_log_n(self):
        nets = uniform_nets(n_classes=3, n_actions=5)
        rng = np.random.default_rng(4)
        loss, _, _ = variational_loss(nets, rng.normal(size=(8, 4)),
                                      rng.normal(size=(8, 3)),
                                      rng.integers(3, size=8),
                                      rng.integers(5, size=8))
        assert loss.item() == pytest.approx(np.log(3) + np.log(5), abs=1e-9)

    def test_permutation_consistency(self):
        nets = make_nets(seed=5)
        rng = np.random.default_rng(6)
        obs = rng.normal(size=(10, 4))
        z = rng.normal(size=(10, 3))
        labels = rng.integers(3, size=10)
        actions = rng.integers(5, size=10)
        base, _, _ = variational_loss(nets, obs, z, labels, actions)
        perm = rng.permutation(10)
        shuffled, _, _ = variational_loss(nets, obs[perm], z[perm],
                                          labels[perm], actions[perm])
        assert base.item() == pytest.approx(shuffled.item(), abs=1e-12)

    def test_overfit_decreases_loss(self):
        nets = make_nets(seed=7, dtype=np.float32)
        rng = np.random.default_rng(8)
        obs = rng.normal(size=(16, 4)).astype(np.float32)
        z = rng.normal(size=(16, 3)).astype(np.float32)
        labels = rng.integers(3, size=16)
        actions = rng.integers(5, size=16)
        opt = RmsProp(nets.named_parameters().values(), lr=5e-3)
        losses = []
        for _ in range(50):
            loss, _, _ = variational_loss(nets, obs, z, labels, actions)
            losses.append(loss.item())
            loss.backward()
            opt.step()
        assert losses[-1] < losses[0]
        # strict decrease over the window as a trend
        assert np.mean(losses[-10:]) < np.mean(losses[:10])

    def test_gradients_flow_through_live_z(self):
        from smaug.nn import Parameter
        nets = make_nets(seed=9)
        rng = np.random.default_rng(10)
        z_param = Parameter(rng.normal(size=(4, 3)), name="z")
        loss, _, _ = variational_loss(nets, rng.normal(size=(4, 4)), z_param,
                                      rng.integers(3, size=4),
                                      rng.integers(5, size=4))
        loss.backward()
        assert z_param.grad is not None and np.any(z_param.grad != 0)


class TestMiBoundAudit:
    def test_independent_uniform_case(self):
        n_o, n_t, n_z, n_a = 3, 3, 2, 5
        p = np.ones((n_o, n_t, n_z, n_a)) / (n_o * n_t * n_z * n_a)
        lhs, rhs = mi_bound_audit(p)
        assert lhs == pytest.approx(np.log(n_a), abs=1e-12)
        assert rhs == pytest.approx(np.log(n_a) - np.log(n_t), abs=1e-12)
        assert lhs >= rhs

    def test_deterministic_tau_of_z(self):
        p = np.zeros((2, 3, 3, 2))
        for z in range(3):
            p[:, z, z, :] = 1.0
        p /= p.sum()
        lhs, rhs = mi_bound_audit(p)
        # slack is exactly H(tau) = log 3
        assert lhs - rhs == pytest.approx(np.log(3), abs=1e-12)

    def test_hundred_random_joints_never_violate(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            shape = tuple(rng.integers(2, 7, size=4))
            table = rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)
            lhs, rhs = mi_bound_audit(table)
            assert lhs >= rhs - 1e-9

    def test_unnormalized_table_rejected(self):
        with pytest.raises(ValueError, match="normalized"):
            mi_bound_audit(np.ones((2, 2, 2, 2)))

    def test_wrong_rank_rejected(self):
        with pytest.raises(ValueError, match="4 axes"):
            mi_bound_audit(np.ones((2, 2, 2)) / 8)
