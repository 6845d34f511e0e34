"""Experience storage: transitions, prioritized sampling, episode segments.

Priorities follow the loss-adjusted scheme: new transitions enter at the
running maximum priority (floored at the minimum), and updates apply
max(|td|^alpha, min_priority). Sampling is proportional to priority via a
sum tree. Segment sampling extends an anchor forward up to a horizon,
stopping at episode boundaries; short segments are kept and masked rather
than resampled so terminal-adjacent transitions stay in the data.

Single writer, single reader; not safe for concurrent mutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation, SamplingError

LAP_ALPHA = 0.4
MIN_PRIORITY = 1.0

SNAPSHOT_VERSION = 1


@dataclass
class Transition:
    """One environment step. ``terminal`` marks true termination (d = 1);
    ``truncated`` marks a time-limit cutoff and never coincides with it."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    terminal: int
    truncated: int
    next_state: np.ndarray

    def __post_init__(self):
        if self.terminal and self.truncated:
            raise ContractViolation("terminal and truncated cannot both be set")


@dataclass
class SegmentBatch:
    """Length-H slices of episodes, padded and masked past valid_length.

    states[:, t] is the state before step t (so states has H+1 entries);
    rewards[:, t] and terminals[:, t] describe transition t. next_actions
    holds the action taken at states[:, t+1] when it exists in the same
    episode (mask in next_action_valid); only the state-action dynamics
    target variant consumes it.
    """

    states: np.ndarray        # [B, H+1, *obs]
    actions: np.ndarray       # [B, H, action_dim]
    rewards: np.ndarray       # [B, H]
    terminals: np.ndarray     # [B, H]
    next_actions: np.ndarray  # [B, H, action_dim]
    next_action_valid: np.ndarray  # [B, H]
    valid_length: np.ndarray  # [B]

    @property
    def batch_size(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.rewards.shape[1]

    def step_mask(self) -> np.ndarray:
        """mask[b, t] = 1 iff unroll step t+1 (transition index t) is valid."""
        t = np.arange(self.horizon)[None, :]
        return (t < self.valid_length[:, None]).astype(np.float32)


class SumTree:
    """Binary sum tree over leaf priorities for proportional sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.leaf_base = 1
        while self.leaf_base < capacity:
            self.leaf_base *= 2
        self.nodes = np.zeros(2 * self.leaf_base, dtype=np.float64)

    def set(self, indices, priorities) -> None:
        indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        priorities = np.broadcast_to(np.asarray(priorities, dtype=np.float64), indices.shape)
        pos = indices + self.leaf_base
        self.nodes[pos] = priorities
        # rebuild affected ancestors level by level
        pos = np.unique(pos // 2)
        while pos.size and pos[0] >= 1:
            self.nodes[pos] = self.nodes[2 * pos] + self.nodes[2 * pos + 1]
            pos = np.unique(pos // 2)
            pos = pos[pos >= 1]

    def get(self, indices) -> np.ndarray:
        return self.nodes[np.asarray(indices, dtype=np.int64) + self.leaf_base]

    def total(self) -> float:
        return float(self.nodes[1])

    def find(self, prefix_sums) -> np.ndarray:
        """Leaf indices whose cumulative priority interval contains each value."""
        values = np.atleast_1d(np.asarray(prefix_sums, dtype=np.float64)).copy()
        pos = np.ones(values.shape, dtype=np.int64)
        while pos[0] < self.leaf_base:
            left = 2 * pos
            left_sum = self.nodes[left]
            go_right = values >= left_sum
            values = np.where(go_right, values - left_sum, values)
            pos = np.where(go_right, left + 1, left)
        return pos - self.leaf_base


class ReplayBuffer:
    """FIFO ring of transitions with prioritized segment sampling."""

    def __init__(
        self,
        capacity: int,
        obs_shape: tuple[int, ...],
        action_dim: int,
        obs_dtype=np.float32,
        discrete_actions: bool = False,
        alpha: float = LAP_ALPHA,
        min_priority: float = MIN_PRIORITY,
    ):
        if capacity < 1:
            raise ConfigurationError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs_shape = tuple(obs_shape)
        self.action_dim = int(action_dim)
        self.discrete_actions = discrete_actions
        self.alpha = alpha
        self.min_priority = min_priority

        self.states = np.zeros((capacity, *obs_shape), dtype=obs_dtype)
        self.next_states = np.zeros((capacity, *obs_shape), dtype=obs_dtype)
        self.actions = np.zeros((capacity, action_dim), dtype=np.float32)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.terminals = np.zeros(capacity, dtype=np.uint8)
        self.truncateds = np.zeros(capacity, dtype=np.uint8)
        self.episode_ids = np.full(capacity, -1, dtype=np.int64)

        self.tree = SumTree(capacity)
        self.max_priority = min_priority
        self.size = 0
        self.insert_at = 0
        self._episode_id = 0
        self._episode_open = False
        self.terminal_seen = False

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition) -> int:
        """Store a transition at the running-max priority; returns its slot."""
        state = np.asarray(t.state)
        if state.shape != self.obs_shape:
            raise ConfigurationError(
                f"observation shape {state.shape} does not match buffer spec "
                f"{self.obs_shape}"
            )
        action = np.asarray(t.action, dtype=np.float32)
        if action.shape != (self.action_dim,):
            raise ConfigurationError(
                f"action shape {action.shape} does not match dim {self.action_dim}"
            )
        if self.discrete_actions:
            ones = action == 1.0
            if ones.sum() != 1 or np.any((action != 0.0) & ~ones):
                raise ContractViolation("discrete actions must be exact one-hot")

        i = self.insert_at
        self.states[i] = state
        self.next_states[i] = np.asarray(t.next_state)
        self.actions[i] = action
        self.rewards[i] = t.reward
        self.terminals[i] = 1 if t.terminal else 0
        self.truncateds[i] = 1 if t.truncated else 0
        if not self._episode_open:
            self._episode_id += 1
            self._episode_open = True
        self.episode_ids[i] = self._episode_id
        if t.terminal or t.truncated:
            self._episode_open = False
        if t.terminal:
            self.terminal_seen = True

        self.tree.set(i, self.max_priority)
        self.insert_at = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def reward_abs_mean(self) -> float:
        if self.size == 0:
            return 1.0
        return float(np.abs(self.rewards[: self.size]).mean())

    def mean_priority(self) -> float:
        if self.size == 0:
            return 0.0
        return self.tree.total() / self.size

    def update_priorities(self, indices, td_abs) -> None:
        td_abs = np.asarray(td_abs, dtype=np.float64)
        if np.any(td_abs < 0):
            raise ContractViolation("absolute TD errors must be nonnegative")
        priorities = np.maximum(td_abs**self.alpha, self.min_priority)
        self.tree.set(indices, priorities)
        self.max_priority = max(self.max_priority, float(priorities.max()))

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        """Anchor indices drawn with probability proportional to priority."""
        if self.size == 0:
            raise SamplingError("cannot sample from an empty buffer")
        total = self.tree.total()
        return self.tree.find(rng.random(batch) * total)

    def sample_segments(
        self, batch: int, horizon: int, rng: np.random.Generator
    ) -> tuple[SegmentBatch, np.ndarray]:
        """Prioritized anchors extended forward up to ``horizon`` steps.

        Extension stops when the next slot belongs to a different episode,
        has been overwritten, or is beyond the first terminal transition.
        """
        if horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        anchors = self.sample_indices(batch, rng)
        seg = self._build_segments(anchors, horizon)
        return seg, anchors

    def _build_segments(self, anchors: np.ndarray, horizon: int) -> SegmentBatch:
        B = len(anchors)
        states = np.zeros((B, horizon + 1, *self.obs_shape), dtype=self.states.dtype)
        actions = np.zeros((B, horizon, self.action_dim), dtype=np.float32)
        rewards = np.zeros((B, horizon), dtype=np.float32)
        terminals = np.zeros((B, horizon), dtype=np.float32)
        next_actions = np.zeros((B, horizon, self.action_dim), dtype=np.float32)
        next_action_valid = np.zeros((B, horizon), dtype=np.float32)
        valid_length = np.zeros(B, dtype=np.int64)

        for b, anchor in enumerate(anchors):
            episode = self.episode_ids[anchor]
            states[b, 0] = self.states[anchor]
            length = 0
            idx = int(anchor)
            for t in range(horizon):
                actions[b, t] = self.actions[idx]
                rewards[b, t] = self.rewards[idx]
                terminals[b, t] = self.terminals[idx]
                states[b, t + 1] = self.next_states[idx]
                length = t + 1
                nxt = (idx + 1) % self.capacity
                # nxt is the chronological successor iff it holds data and is
                # not the write head (the head is empty, or the oldest slot).
                stored = self.size == self.capacity or nxt < self.size
                can_extend = (
                    stored
                    and nxt != self.insert_at
                    and self.episode_ids[nxt] == episode
                    and not self.terminals[idx]
                )
                if stored and nxt != self.insert_at and self.episode_ids[nxt] == episode:
                    next_actions[b, t] = self.actions[nxt]
                    next_action_valid[b, t] = 1.0
                if not can_extend:
                    break
                idx = nxt
            valid_length[b] = length
        return SegmentBatch(
            states, actions, rewards, terminals, next_actions, next_action_valid,
            valid_length,
        )

    def snapshot(self, path) -> None:
        """Versioned binary snapshot for resumable runs."""
        np.savez_compressed(
            path,
            version=np.int64(SNAPSHOT_VERSION),
            states=self.states[: self.size],
            next_states=self.next_states[: self.size],
            actions=self.actions[: self.size],
            rewards=self.rewards[: self.size],
            terminals=self.terminals[: self.size],
            truncateds=self.truncateds[: self.size],
            episode_ids=self.episode_ids[: self.size],
            priorities=self.tree.get(np.arange(self.size)),
            max_priority=self.max_priority,
            insert_at=self.insert_at,
            size=self.size,
            episode_counter=self._episode_id,
            episode_open=self._episode_open,
            terminal_seen=self.terminal_seen,
            capacity=self.capacity,
        )

    @classmethod
    def restore(cls, path, **kwargs) -> "ReplayBuffer":
        data = np.load(path)
        if int(data["version"]) != SNAPSHOT_VERSION:
            raise ConfigurationError(
                f"snapshot version {int(data['version'])} not supported"
            )
        size = int(data["size"])
        buf = cls(
            int(data["capacity"]),
            tuple(data["states"].shape[1:]),
            int(data["actions"].shape[1]),
            obs_dtype=data["states"].dtype,
            **kwargs,
        )
        buf.states[:size] = data["states"]
        buf.next_states[:size] = data["next_states"]
        buf.actions[:size] = data["actions"]
        buf.rewards[:size] = data["rewards"]
        buf.terminals[:size] = data["terminals"]
        buf.truncateds[:size] = data["truncateds"]
        buf.episode_ids[:size] = data["episode_ids"]
        buf.tree.set(np.arange(size), data["priorities"])
        buf.max_priority = float(data["max_priority"])
        buf.insert_at = int(data["insert_at"])
        buf.size = size
        buf._episode_id = int(data["episode_counter"])
        buf._episode_open = bool(data["episode_open"])
        buf.terminal_seen = bool(data["terminal_seen"])
        return buf
