"""Mutual-information intrinsic reward and its variational machinery.

Two classifiers approximate the distributions in the reward lower bound:
one scores which agent a (observation, subtask vector) pair came from
(the discrete trajectory-identity target), the other scores actions given
the observation alone. The per-agent reward is
beta1 * log q_tau(label | o, z) - beta2 * log q_a(a | o), with both
log-probabilities clamped below, and the team-level bonus sums it over
agents. mi_bound_audit checks the underlying inequality exactly on small
tabular joint distributions: the left side (mutual-information and entropy
terms) exceeds the right side (the two expected log-likelihoods) by
exactly the entropy of the trajectory variable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Mlp, Tensor, as_tensor, log_softmax, no_grad, take_along_axis

__all__ = [
    "IntrinsicConfig",
    "VariationalNets",
    "trajectory_class_label",
    "intrinsic_reward",
    "variational_loss",
    "mi_bound_audit",
]

LOG_FLOOR = float(np.log(1e-8))


@dataclass(frozen=True)
class IntrinsicConfig:
    beta1: float = 1.0
    beta2: float = 1.0
    beta_mi: float = 5e-2
    hidden: int = 64

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0 or self.beta_mi < 0:
            raise ValueError("intrinsic reward weights must be non-negative")


class VariationalNets:
    """Trajectory-identity and action classifiers, both ending in softmax."""

    def __init__(self, obs_dim: int, z_dim: int, n_classes: int, n_actions: int,
                 rng: np.random.Generator, hidden: int = 64, dtype=np.float32):
        self.n_classes = n_classes
        self.n_actions = n_actions
        self.traj_net = Mlp([obs_dim + z_dim, hidden, n_classes], rng,
                            dtype=dtype, name="vnet_traj")
        self.action_net = Mlp([obs_dim, hidden, n_actions], rng,
                              dtype=dtype, name="vnet_act")
        self.dtype = dtype

    def named_parameters(self) -> dict:
        out = {}
        out.update(self.traj_net.named_parameters())
        out.update(self.action_net.named_parameters())
        return out

    def traj_log_probs(self, obs: Tensor, z: Tensor) -> Tensor:
        from .nn import concat
        return log_softmax(self.traj_net(concat([as_tensor(obs), as_tensor(z)],
                                                axis=-1)), axis=-1)

    def action_log_probs(self, obs: Tensor) -> Tensor:
        return log_softmax(self.action_net(as_tensor(obs)), axis=-1)


def trajectory_class_label(agent_index: int | np.ndarray,
                           n_agents: int) -> np.ndarray:
    """Contrastive class target: which agent produced this segment."""
    labels = np.asarray(agent_index, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= n_agents):
        raise ValueError(f"agent index out of range [0, {n_agents})")
    return labels


def intrinsic_reward(nets: VariationalNets, obs: np.ndarray, z: np.ndarray,
                     labels: np.ndarray, actions: np.ndarray,
                     cfg: IntrinsicConfig) -> np.ndarray:
    """Per-row reward beta1*log q_tau(label|o,z) - beta2*log q_a(a|o).

    Log-probabilities are clamped below at log(1e-8); rows are whatever
    the caller batched (typically agents at one timestep).
    """
    with no_grad():
        lp_traj = nets.traj_log_probs(as_tensor(obs.astype(nets.dtype)),
                                      as_tensor(z.astype(nets.dtype))).data
        lp_act = nets.action_log_probs(as_tensor(obs.astype(nets.dtype))).data
    lp_traj = np.maximum(lp_traj, LOG_FLOOR)
    lp_act = np.maximum(lp_act, LOG_FLOOR)
    picked_traj = np.take_along_axis(lp_traj, labels[..., None], axis=-1)[..., 0]
    picked_act = np.take_along_axis(lp_act, actions[..., None], axis=-1)[..., 0]
    return cfg.beta1 * picked_traj - cfg.beta2 * picked_act


def variational_loss(nets: VariationalNets, obs: np.ndarray, z,
                     labels: np.ndarray, actions: np.ndarray):
    """Cross-entropy of both classifiers against their targets.

    z may be a live Tensor, in which case gradients flow through it into
    whatever produced it; callers that only want to train the classifiers
    pass a detached array. Returns (loss, traj accuracy, action accuracy).
    """
    z_t = as_tensor(z)
    obs_t = as_tensor(obs.astype(nets.dtype))
    lp_traj = nets.traj_log_probs(obs_t, z_t)
    lp_act = nets.action_log_probs(obs_t)
    ce_traj = -take_along_axis(lp_traj, labels[..., None], axis=-1).mean()
    ce_act = -take_along_axis(lp_act, actions[..., None], axis=-1).mean()
    traj_acc = float(np.mean(np.argmax(lp_traj.data, axis=-1) == labels))
    act_acc = float(np.mean(np.argmax(lp_act.data, axis=-1) == actions))
    return ce_traj + ce_act, traj_acc, act_acc


# -- exact tabular audit of the reward bound ----------------------------------


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log(p[nz])
    return out


def mi_bound_audit(joint: np.ndarray) -> tuple[float, float]:
    """Evaluate both sides of the reward bound on an exact joint table.

    joint is p(o, tau, z, a) with axes in that order. Returns
    (lhs, rhs) where lhs = I(tau;z) + I(o;tau|z) + I(a;tau|o) + H(a|o,tau)
    and rhs = E[log p(tau|o,z)] - E[log p(a|o)]. The identity
    lhs = rhs + H(tau) makes lhs >= rhs with slack exactly H(tau).
    """
    p = np.asarray(joint, dtype=np.float64)
    if p.ndim != 4:
        raise ValueError(f"joint table must have 4 axes (o,tau,z,a), got {p.ndim}")
    if np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
        raise ValueError("joint table must be a normalized distribution")

    p_o = p.sum(axis=(1, 2, 3))
    p_tau = p.sum(axis=(0, 2, 3))
    p_z = p.sum(axis=(0, 1, 3))
    p_tz = p.sum(axis=(0, 3))        # [tau, z]
    p_oz = p.sum(axis=(1, 3))        # [o, z]
    p_otz = p.sum(axis=3)            # [o, tau, z]
    p_ot = p.sum(axis=(2, 3))        # [o, tau]
    p_oa = p.sum(axis=(1, 2))        # [o, a]
    p_ota = p.sum(axis=2)            # [o, tau, a]

    def entropy(table):
        return -_xlogx(table).sum()

    h_tau = entropy(p_tau)
    # I(tau;z)
    i_tz = entropy(p_tau) + entropy(p_z) - entropy(p_tz)
    # I(o;tau|z) = H(o|z) + H(tau|z) - H(o,tau|z)
    h_oz = entropy(p_oz) - entropy(p_z)
    h_tz_given = entropy(p_tz) - entropy(p_z)
    h_otz_given = entropy(p_otz) - entropy(p_z)
    i_ot_given_z = h_oz + h_tz_given - h_otz_given
    # I(a;tau|o) = H(a|o) + H(tau|o) - H(a,tau|o)
    h_a_given_o = entropy(p_oa) - entropy(p_o)
    h_tau_given_o = entropy(p_ot) - entropy(p_o)
    h_ta_given_o = entropy(p_ota) - entropy(p_o)
    i_at_given_o = h_a_given_o + h_tau_given_o - h_ta_given_o
    # H(a|o,tau) = H(o,tau,a) - H(o,tau)
    h_a_given_ot = entropy(p_ota) - entropy(p_ot)

    lhs = i_tz + i_ot_given_z + i_at_given_o + h_a_given_ot

    # rhs expectations under the full joint
    with np.errstate(divide="ignore", invalid="ignore"):
        log_tau_given_oz = np.where(p_otz > 0, np.log(p_otz) - np.log(p_oz[:, None, :]), 0.0)
        log_a_given_o = np.where(p_oa > 0, np.log(p_oa) - np.log(p_o[:, None]), 0.0)
    e_log_tau = float((p_otz * log_tau_given_oz).sum())
    e_log_a = float((p_oa * log_a_given_o).sum())
    rhs = e_log_tau - e_log_a

    # identity check: slack is the trajectory entropy
    assert abs((lhs - rhs) - h_tau) < 1e-9, (lhs, rhs, h_tau)
    return float(lhs), float(rhs)
