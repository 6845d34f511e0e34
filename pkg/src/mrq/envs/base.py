"""Environment interface shared by the built-in desk-scale tasks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation


@dataclass(frozen=True)
class EnvSpec:
    """Observation/action signature of an environment.

    Pixel observations are channel-first unsigned bytes in [0, 255]; vector
    observations are finite float32. Continuous actions live in the symmetric
    box [-1, 1]^action_dim.
    """

    obs_kind: str              # 'vector' | 'pixel'
    obs_shape: tuple[int, ...]
    action_kind: str           # 'discrete' | 'continuous'
    action_dim: int
    max_episode_steps: int
    action_low: float = -1.0
    action_high: float = 1.0


class Env:
    """reset/step lifecycle with explicit terminal vs. truncated signals."""

    spec: EnvSpec

    def __init__(self):
        self._done = True
        self._steps = 0
        self.clipped_action_count = 0

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._done = False
        self._steps = 0
        return self._reset()

    def step(self, action):
        if self._done:
            raise ContractViolation("step() called on a finished episode; reset first")
        if self.spec.action_kind == "continuous":
            action = np.asarray(action, dtype=np.float64)
            if np.any(action < self.spec.action_low) or np.any(action > self.spec.action_high):
                self.clipped_action_count += 1
                action = np.clip(action, self.spec.action_low, self.spec.action_high)
        next_obs, reward, terminal = self._step(action)
        self._steps += 1
        truncated = 0
        if not terminal and self._steps >= self.spec.max_episode_steps:
            truncated = 1
        if terminal or truncated:
            self._done = True
        return next_obs, float(reward), int(terminal), truncated

    def _reset(self) -> np.ndarray:
        raise NotImplementedError

    def _step(self, action):
        raise NotImplementedError
