"""Sliding multidimensional task-window subtask recognition.

Every step, each agent's trailing trajectory is re-sliced into segments of
lengths 1..n_window (a window of size k spans steps t-k..t). A segment GRU
encodes each slice from a zero state, a trajectory GRU encodes the full
history, and multi-head attention over the per-window encodings, queried by
the trajectory encoding, fuses them into the subtask vector z. The Q head
scores actions from (trajectory encoding, z, agent id one-hot).

Two equivalent computation paths are provided: an incremental recurrent
state for acting (one batched GRU step per environment step covers every
window size, because the suffix encodings of depth j at time t extend the
depth j-1 encodings at time t-1), and a whole-batch scan over
[episode, time, agent] used for training. Tests pin their equality to the
explicit extract/encode reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import Dense, GruCell, MultiHeadAttention, Tensor, as_tensor, concat, stack

__all__ = [
    "TrajectorySegment",
    "extract_segments",
    "encode_segment",
    "RecurrentState",
    "SubtaskPolicy",
    "masked_q",
    "greedy_action",
]

NEG_INF = float("-inf")


@dataclass
class TrajectorySegment:
    """Steps t-k..t of one agent's (observation, previous-action) inputs.

    ``steps`` always has k+1 rows; rows reaching before the episode start
    are zero and flagged invalid. Invalid rows are skipped, not consumed,
    by the encoder.
    """

    window_size: int
    steps: np.ndarray   # [k+1, input_dim]
    valid: np.ndarray   # [k+1] bool


def extract_segments(history: np.ndarray, t: int, n_window: int) -> list[TrajectorySegment]:
    """Slice segments for window sizes 1..n_window ending at step t."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    history = np.asarray(history)
    if history.shape[0] < t + 1:
        raise ValueError(
            f"history holds {history.shape[0]} steps but t={t} needs {t + 1}"
        )
    segments = []
    for k in range(1, n_window + 1):
        steps = np.zeros((k + 1, history.shape[1]), dtype=history.dtype)
        valid = np.zeros(k + 1, dtype=bool)
        lo = t - k
        for j, s in enumerate(range(lo, t + 1)):
            if s >= 0:
                steps[j] = history[s]
                valid[j] = True
        segments.append(TrajectorySegment(window_size=k, steps=steps, valid=valid))
    return segments


def encode_segment(gru: GruCell, segment: TrajectorySegment) -> Tensor:
    """Run the segment GRU over the valid steps from a zero state."""
    h = Tensor(np.zeros((1, gru.hidden_dim), dtype=segment.steps.dtype))
    for row, ok in zip(segment.steps, segment.valid):
        if ok:
            h = gru(as_tensor(row[None, :]), h)
    return h.reshape((gru.hidden_dim,))


@dataclass
class RecurrentState:
    """Incremental window encodings for a batch of agent rows.

    ``suffix[j-1]`` holds, per row, the segment-GRU encoding of the last j
    steps (depth j); the encoding for window size k is depth k+1. With
    per-window GRUs there is one such stack per window size.
    """

    h_traj: np.ndarray            # [rows, hidden]
    suffix: list[np.ndarray]      # each [depth_max, rows, hidden]

    def clone(self) -> "RecurrentState":
        return RecurrentState(
            h_traj=self.h_traj.copy(),
            suffix=[s.copy() for s in self.suffix],
        )


class SubtaskPolicy:
    """Window encoders + attention fusion + per-agent Q head (shared weights)."""

    def __init__(self, obs_dim: int, n_actions: int, n_agents: int,
                 rng: np.random.Generator, rnn_hidden: int = 64,
                 n_window: int = 5, attn_heads: int = 4, attn_head_dim: int = 4,
                 temperature: float = 1.0, per_window_grus: bool = False,
                 dtype=np.float32):
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.n_agents = n_agents
        self.n_window = n_window
        self.rnn_hidden = rnn_hidden
        self.per_window_grus = per_window_grus
        self.dtype = dtype
        self.input_dim = obs_dim + n_actions
        n_cells = n_window if per_window_grus else 1
        self.segment_grus = [
            GruCell(self.input_dim, rnn_hidden, rng, dtype=dtype,
                    name=f"seg_gru{k if per_window_grus else ''}")
            for k in range(n_cells)
        ]
        self.traj_gru = GruCell(self.input_dim, rnn_hidden, rng, dtype=dtype,
                                name="traj_gru")
        self.attn = MultiHeadAttention(rnn_hidden, rnn_hidden, attn_heads,
                                       attn_head_dim, rng,
                                       temperature=temperature, dtype=dtype,
                                       name="attn")
        self.z_dim = self.attn.out_dim
        self.q_head = Dense(rnn_hidden + self.z_dim + n_agents, n_actions,
                            rng, dtype=dtype, name="q_head")

    @property
    def depth(self) -> int:
        return self.n_window + 1

    def segment_gru_for(self, k: int) -> GruCell:
        """Cell used for window size k (1-based)."""
        return self.segment_grus[k - 1] if self.per_window_grus else self.segment_grus[0]

    def named_parameters(self) -> dict:
        out = {}
        for cell in self.segment_grus:
            out.update(cell.named_parameters())
        out.update(self.traj_gru.named_parameters())
        out.update(self.attn.named_parameters())
        out.update(self.q_head.named_parameters())
        return out

    def build_input(self, obs: np.ndarray, prev_action_onehot: np.ndarray) -> np.ndarray:
        return np.concatenate(
            [np.asarray(obs, dtype=self.dtype),
             np.asarray(prev_action_onehot, dtype=self.dtype)], axis=-1,
        )

    # -- incremental acting path ---------------------------------------------

    def init_state(self, rows: int) -> RecurrentState:
        h = self.rnn_hidden
        n_stacks = self.n_window if self.per_window_grus else 1
        return RecurrentState(
            h_traj=np.zeros((rows, h), dtype=self.dtype),
            suffix=[np.zeros((self.depth, rows, h), dtype=self.dtype)
                    for _ in range(n_stacks)],
        )

    def advance_state(self, state: RecurrentState, x: np.ndarray) -> RecurrentState:
        """Consume one step of inputs x [rows, input_dim] for every row."""
        rows = x.shape[0]
        h = self.rnn_hidden
        new_suffix = []
        for idx, stack_arr in enumerate(state.suffix):
            cell = self.segment_grus[idx if self.per_window_grus else 0]
            prev = np.concatenate([np.zeros((1, rows, h), dtype=self.dtype),
                                   stack_arr[:-1]], axis=0)
            tiled_x = np.broadcast_to(x, (self.depth,) + x.shape).reshape(-1, x.shape[-1])
            out = cell(as_tensor(tiled_x), as_tensor(prev.reshape(-1, h)))
            new_suffix.append(out.data.reshape(self.depth, rows, h))
        h_traj = self.traj_gru(as_tensor(x), as_tensor(state.h_traj)).data
        return RecurrentState(h_traj=h_traj, suffix=new_suffix)

    def window_encodings(self, state: RecurrentState) -> np.ndarray:
        """[rows, n_window, hidden]: encoding of window k at index k-1."""
        if self.per_window_grus:
            per_k = [state.suffix[k - 1][k] for k in range(1, self.n_window + 1)]
        else:
            per_k = [state.suffix[0][k] for k in range(1, self.n_window + 1)]
        return np.stack(per_k, axis=1)

    def recognize(self, state: RecurrentState,
                  query_state: RecurrentState | None = None):
        """Fuse window encodings into (z, attention weights).

        Keys come from ``state``; the query is the trajectory encoding of
        ``query_state`` (defaults to ``state``). When imagination extends
        the trajectory, the keys slide over the concatenated
        real-plus-predicted steps while the query stays at the real
        current step.
        """
        keys = as_tensor(self.window_encodings(state))
        query = as_tensor((query_state or state).h_traj)
        z, weights = self.attn(query, keys, keys)
        return z, weights

    def q_values(self, state: RecurrentState, z: Tensor,
                 agent_onehot: np.ndarray) -> Tensor:
        feats = concat([as_tensor(state.h_traj), z, as_tensor(agent_onehot)], axis=-1)
        return self.q_head(feats)

    def act_features(self, state: RecurrentState, agent_onehot: np.ndarray,
                     query_state: RecurrentState | None = None):
        """(q, z, weights) for acting now; see recognize for the state split."""
        query_state = query_state or state
        z, weights = self.recognize(state, query_state)
        q = self.q_values(query_state, z, agent_onehot)
        return q, z, weights

    # -- whole-batch training path ------------------------------------------------

    def training_forward(self, x: Tensor):
        """Per-step outputs for a padded episode batch.

        x: [B, T, n_agents, input_dim] inputs (observation, previous-action
        one-hot) for steps 0..T-1. Returns q [B,T,n,A], z [B,T,n,z_dim],
        attention weights [B,T,n,heads,n_window], h_traj [B,T,n,hidden].
        """
        x = as_tensor(x)
        b, t, n, d = x.shape
        h = self.rnn_hidden
        rows = b * t * n
        x_flat = x.reshape((rows, d))
        zero_col = Tensor(np.zeros((b, 1, n, h), dtype=self.dtype))
        # depths beyond the sequence length collapse onto the full-history
        # encoding (the zero start state clips every longer window), so the
        # scan never needs more than t levels
        scan_depth = min(self.depth, t)

        def scan(cell: GruCell) -> list[Tensor]:
            """Suffix encodings S_j for depth j=1..scan_depth; S_j[b,t]
            encodes inputs t-j+1..t from a zero state (clipped at t=0)."""
            outs = []
            s_prev = None
            for j in range(1, scan_depth + 1):
                if s_prev is None:
                    prev = Tensor(np.zeros((rows, h), dtype=self.dtype))
                else:
                    shifted = concat([zero_col, s_prev[:, :-1]], axis=1)
                    prev = shifted.reshape((rows, h))
                s_j = cell(x_flat, prev)
                s_prev = s_j.reshape((b, t, n, h))
                outs.append(s_prev)
            return outs

        def pick(suffix: list[Tensor], k: int) -> Tensor:
            return suffix[min(k, scan_depth - 1)]

        if self.per_window_grus:
            encodings = [pick(scan(self.segment_gru_for(k)), k)
                         for k in range(1, self.n_window + 1)]
        else:
            suffix = scan(self.segment_grus[0])
            encodings = [pick(suffix, k) for k in range(1, self.n_window + 1)]
        keys = stack(encodings, axis=-2)                       # [B,T,n,K,h]

        h_prev = Tensor(np.zeros((b * n, h), dtype=self.dtype))
        hs = []
        for step in range(t):
            x_t = x[:, step].reshape((b * n, d))
            h_prev = self.traj_gru(x_t, h_prev)
            hs.append(h_prev.reshape((b, n, h)))
        h_traj = stack(hs, axis=1)                             # [B,T,n,h]

        z, weights = self.attn(h_traj, keys, keys)
        ids = np.broadcast_to(
            np.eye(self.n_agents, dtype=self.dtype), (b, t, n, n)
        ).copy()
        feats = concat([h_traj, z, as_tensor(ids)], axis=-1)
        q = self.q_head(feats)
        return q, z, weights, h_traj


def masked_q(q: np.ndarray, avail: np.ndarray) -> np.ndarray:
    """Q values with unavailable actions forced to -inf."""
    return np.where(avail, q, NEG_INF)


def greedy_action(q: np.ndarray, avail: np.ndarray) -> np.ndarray:
    """Greedy argmax over available actions; ties break to the lowest index."""
    return np.argmax(masked_q(q, avail), axis=-1)
