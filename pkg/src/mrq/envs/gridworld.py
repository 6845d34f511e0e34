"""Gridworld navigation: one-hot vector or rendered pixel observations.

A single agent starts in one corner of an n x n grid and must reach the
opposite corner. Reward is 1 on the transition into the goal cell and 0
otherwise; reaching the goal terminates the episode. The pixel variant
renders the grid to a single-channel image and also offers velocity control
(continuous actions) so every observation/action pairing is covered.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from .base import Env, EnvSpec
from .tabular import TabularMDP

# up, down, left, right as (row, col) deltas
MOVES = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]], dtype=np.int64)


class GridWorld(Env):
    """Discrete n x n gridworld with one-hot state observations."""

    def __init__(self, size: int = 5, max_episode_steps: int = 100, seed: int = 0):
        super().__init__()
        if size < 2:
            raise ConfigurationError("grid size must be at least 2")
        self.size = size
        self.start = (0, 0)
        self.goal = (size - 1, size - 1)
        self.spec = EnvSpec(
            obs_kind="vector",
            obs_shape=(size * size,),
            action_kind="discrete",
            action_dim=4,
            max_episode_steps=max_episode_steps,
        )
        self._rng = np.random.default_rng(seed)
        self.pos = self.start

    def _obs(self) -> np.ndarray:
        obs = np.zeros(self.size * self.size, dtype=np.float32)
        obs[self.pos[0] * self.size + self.pos[1]] = 1.0
        return obs

    def _reset(self) -> np.ndarray:
        self.pos = self.start
        return self._obs()

    def _step(self, action):
        a = int(action)
        if not 0 <= a < 4:
            raise ConfigurationError(f"discrete action {a} out of range")
        move = MOVES[a]
        row = int(np.clip(self.pos[0] + move[0], 0, self.size - 1))
        col = int(np.clip(self.pos[1] + move[1], 0, self.size - 1))
        self.pos = (row, col)
        reached = self.pos == self.goal
        return self._obs(), 1.0 if reached else 0.0, 1 if reached else 0

    def as_tabular(self, gamma: float = 0.99) -> TabularMDP:
        """Exact MDP with the goal modeled as an absorbing zero-reward state."""
        S = self.size * self.size
        P = np.zeros((S, 4, S))
        R = np.zeros((S, 4))
        goal = self.goal[0] * self.size + self.goal[1]
        for s in range(S):
            row, col = divmod(s, self.size)
            for a in range(4):
                if s == goal:
                    P[s, a, s] = 1.0
                    continue
                r2 = int(np.clip(row + MOVES[a][0], 0, self.size - 1))
                c2 = int(np.clip(col + MOVES[a][1], 0, self.size - 1))
                s2 = r2 * self.size + c2
                P[s, a, s2] = 1.0
                R[s, a] = 1.0 if s2 == goal else 0.0
        init = np.zeros(S)
        init[self.start[0] * self.size + self.start[1]] = 1.0
        return TabularMDP(S, 4, P, R, gamma, init)


class PixelGridWorld(Env):
    """Gridworld rendered as a single-channel image.

    Discrete mode reuses the four grid moves. Continuous mode ("velocity
    control") holds a real-valued position in cell units and moves it by
    half a cell per unit action; the goal counts as reached within half a
    cell of the goal center.
    """

    AGENT_BRIGHTNESS = 255
    GOAL_BRIGHTNESS = 128

    def __init__(
        self,
        size: int = 5,
        image_size: int = 40,
        continuous: bool = False,
        max_episode_steps: int = 100,
        seed: int = 0,
    ):
        super().__init__()
        if image_size < size:
            raise ConfigurationError("image_size must be at least the grid size")
        self.size = size
        self.image_size = image_size
        self.continuous = continuous
        self.start = np.array([0.0, 0.0])
        self.goal = np.array([size - 1.0, size - 1.0])
        self.spec = EnvSpec(
            obs_kind="pixel",
            obs_shape=(1, image_size, image_size),
            action_kind="continuous" if continuous else "discrete",
            action_dim=2 if continuous else 4,
            max_episode_steps=max_episode_steps,
        )
        self._rng = np.random.default_rng(seed)
        self.pos = self.start.copy()

    def _cell_bounds(self, coord: float) -> tuple[int, int]:
        cell = self.image_size / self.size
        lo = int(round(coord * cell))
        hi = int(round((coord + 1) * cell))
        return max(lo, 0), min(hi, self.image_size)

    def _render(self) -> np.ndarray:
        img = np.zeros((1, self.image_size, self.image_size), dtype=np.uint8)
        gr = self._cell_bounds(self.goal[0])
        gc = self._cell_bounds(self.goal[1])
        img[0, gr[0]: gr[1], gc[0]: gc[1]] = self.GOAL_BRIGHTNESS
        ar = self._cell_bounds(self.pos[0])
        ac = self._cell_bounds(self.pos[1])
        img[0, ar[0]: ar[1], ac[0]: ac[1]] = self.AGENT_BRIGHTNESS
        return img

    def _reset(self) -> np.ndarray:
        self.pos = self.start.copy()
        return self._render()

    def _step(self, action):
        if self.continuous:
            delta = 0.5 * np.asarray(action, dtype=np.float64)
        else:
            a = int(action)
            if not 0 <= a < 4:
                raise ConfigurationError(f"discrete action {a} out of range")
            delta = MOVES[a].astype(np.float64)
        self.pos = np.clip(self.pos + delta, 0.0, self.size - 1.0)
        reached = bool(np.max(np.abs(self.pos - self.goal)) < 0.5)
        return self._render(), 1.0 if reached else 0.0, 1 if reached else 0

    def as_tabular(self, gamma: float = 0.99) -> TabularMDP:
        if self.continuous:
            raise ConfigurationError("no tabular form for the continuous variant")
        return GridWorld(self.size, self.spec.max_episode_steps).as_tabular(gamma)
