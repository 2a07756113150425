"""Finite-difference verification suite over every network type.

Each entry builds a small float64 instance of one network, wires a scalar
loss through it on fixed random inputs, and compares backward() gradients
against central differences. Small widths keep the whole sweep under a
couple of minutes while still exercising every parameter tensor.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .intrinsic import VariationalNets, variational_loss
from .mixer import MixingNet
from .nn import (
    Dense,
    GradCheckReport,
    GruCell,
    MultiHeadAttention,
    Tensor,
    as_tensor,
    grad_check,
)
from .window import SubtaskPolicy
from .worldmodel import InferenceNet, inference_loss

__all__ = ["gradient_integrity_suite"]


def gradient_integrity_suite(tolerance: float = 1e-3,
                             seed: int = 0) -> "OrderedDict[str, GradCheckReport]":
    rng = np.random.default_rng(seed)
    reports: "OrderedDict[str, GradCheckReport]" = OrderedDict()
    f64 = np.float64

    # segment GRU: squared norm of a 4-step encoding
    seg = GruCell(5, 6, rng, dtype=f64, name="seg")
    xs = rng.normal(size=(4, 3, 5))

    def seg_loss():
        h = Tensor(np.zeros((3, 6)))
        for step in range(4):
            h = seg(as_tensor(xs[step]), h)
        return h.square().sum()

    reports["segment_gru"] = grad_check(seg.named_parameters(), seg_loss,
                                        eps=1e-5, tolerance=tolerance)

    # trajectory GRU, separately initialized
    traj = GruCell(5, 6, rng, dtype=f64, name="traj")
    xt = rng.normal(size=(5, 2, 5))

    def traj_loss():
        h = Tensor(np.zeros((2, 6)))
        for step in range(5):
            h = traj(as_tensor(xt[step]), h)
        return h.square().sum()

    reports["trajectory_gru"] = grad_check(traj.named_parameters(), traj_loss,
                                           eps=1e-5, tolerance=tolerance)

    # attention fusion: fused output plus weights
    attn = MultiHeadAttention(6, 6, n_heads=2, head_dim=3, rng=rng, dtype=f64)
    q_in = rng.normal(size=(4, 6))
    k_in = rng.normal(size=(4, 5, 6))

    def attn_loss():
        fused, weights = attn(as_tensor(q_in), as_tensor(k_in), as_tensor(k_in))
        return fused.square().sum() + (weights * weights).sum()

    reports["attention_fusion"] = grad_check(attn.named_parameters(), attn_loss,
                                             eps=1e-5, tolerance=tolerance)

    # agent Q head
    q_head = Dense(9, 4, rng, dtype=f64, name="q_head")
    feats = rng.normal(size=(6, 9))

    def q_loss():
        return q_head(as_tensor(feats)).square().sum()

    reports["agent_q_head"] = grad_check(q_head.named_parameters(), q_loss,
                                         eps=1e-5, tolerance=tolerance)

    # both variational nets through the cross-entropy objective
    vnets = VariationalNets(obs_dim=4, z_dim=3, n_classes=3, n_actions=4,
                            rng=rng, hidden=8, dtype=f64)
    v_obs = rng.normal(size=(6, 4))
    v_z = rng.normal(size=(6, 3))
    v_labels = rng.integers(3, size=6)
    v_actions = rng.integers(4, size=6)

    def v_loss():
        loss, _, _ = variational_loss(vnets, v_obs, v_z, v_labels, v_actions)
        return loss

    reports["variational_nets"] = grad_check(vnets.named_parameters(), v_loss,
                                             eps=1e-5, tolerance=tolerance)

    # inference encoder + decoders through the prediction loss
    wm = InferenceNet(obs_dim=4, n_actions=3, rng=rng, enc_hidden=8,
                      emb_dim=5, dec_hidden=8, dtype=f64)
    w_obs = rng.normal(size=(5, 2, 4))
    w_actions = rng.integers(3, size=(5, 2))
    w_next = rng.normal(size=(5, 2, 4))
    w_rew = rng.normal(size=5)

    def wm_loss():
        return inference_loss(wm, w_obs, w_actions, w_next, w_rew)

    reports["inference_net"] = grad_check(wm.named_parameters(), wm_loss,
                                          eps=1e-5, tolerance=tolerance)

    # mixing hypernetworks
    mixer = MixingNet(state_dim=5, n_agents=3, z_dim=2, rng=rng, mix_dim=4,
                      hyper_hidden=6, dtype=f64)
    m_qs = rng.normal(size=(7, 3))
    m_state = rng.normal(size=(7, 5))
    m_z = rng.normal(size=(7, 6))

    def mix_loss():
        return mixer(as_tensor(m_qs), as_tensor(m_state), as_tensor(m_z)).square().sum()

    reports["mixing_hypernets"] = grad_check(mixer.named_parameters(), mix_loss,
                                             eps=1e-5, tolerance=tolerance)

    # full policy path: windowed scan, attention, Q head in one graph
    policy = SubtaskPolicy(obs_dim=3, n_actions=3, n_agents=2, rng=rng,
                           rnn_hidden=4, n_window=3, attn_heads=2,
                           attn_head_dim=2, dtype=f64)
    p_x = rng.normal(size=(2, 5, 2, policy.input_dim))

    def policy_loss():
        q, z, w, h = policy.training_forward(as_tensor(p_x))
        return q.square().sum() + z.square().sum()

    reports["policy_full_path"] = grad_check(policy.named_parameters(),
                                             policy_loss, eps=1e-5,
                                             tolerance=tolerance)
    return reports
