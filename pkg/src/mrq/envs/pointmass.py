"""Planar point mass with acceleration control and a goal region.

State is (position, velocity) in the unit box; the 2-dim action is an
acceleration in [-1, 1]^2. Velocity integrates the action and is capped in
L2 norm; position integrates velocity. Each step costs between 0.5 and 1
(half fixed time cost, half proportional to distance from the goal), so
rewards lie in [-1, 0]. Entering the goal radius terminates the episode.
"""

from __future__ import annotations

import numpy as np

from .base import Env, EnvSpec

DT = 0.1
V_MAX = 0.3
D_MAX = 2.0 * np.sqrt(2.0)  # diameter of the position box [-1, 1]^2


class PointMass(Env):
    def __init__(self, max_episode_steps: int = 100, seed: int = 0):
        super().__init__()
        self.start = np.array([-0.7, -0.7])
        self.goal = np.array([0.7, 0.7])
        self.goal_radius = 0.2
        self.spec = EnvSpec(
            obs_kind="vector",
            obs_shape=(4,),
            action_kind="continuous",
            action_dim=2,
            max_episode_steps=max_episode_steps,
        )
        self._rng = np.random.default_rng(seed)
        self.pos = self.start.copy()
        self.vel = np.zeros(2)

    def _obs(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel]).astype(np.float32)

    def _reset(self) -> np.ndarray:
        self.pos = self.start.copy()
        self.vel = np.zeros(2)
        return self._obs()

    def _step(self, action):
        accel = np.asarray(action, dtype=np.float64)
        vel = self.vel + DT * accel
        speed = np.linalg.norm(vel)
        if speed > V_MAX:
            vel = vel * (V_MAX / speed)
        self.vel = vel
        self.pos = np.clip(self.pos + DT * self.vel, -1.0, 1.0)
        dist = float(np.linalg.norm(self.pos - self.goal))
        reward = -(0.5 + 0.5 * dist / D_MAX)
        terminal = 1 if dist <= self.goal_radius else 0
        return self._obs(), reward, terminal


def return_upper_bound(env: PointMass) -> float:
    """Analytic upper bound on the episode return.

    Per step the distance to the goal can shrink by at most DT * |v|, and the
    speed after t steps is at most min(V_MAX, t * DT * sqrt(2)) (acceleration
    norm is at most sqrt(2) in the [-1, 1]^2 action box). Hence the distance
    after t steps is at least

        d_lb(t) = max(0, d0 - sum_{k<=t} DT * min(V_MAX, k * DT * sqrt(2)))

    and no policy can terminate before the first step T_lb at which d_lb(t)
    falls to the goal radius. Since the per-step reward
    -(0.5 + 0.5 d / D_MAX) is strictly decreasing in d, the return of any
    terminating policy is at most -sum_{t=1..T_lb} (0.5 + 0.5 d_lb(t) / D_MAX);
    a non-terminating episode runs for max_episode_steps >= T_lb steps, each
    costing at least 0.5, so the same sum bounds it as well.
    """
    d0 = float(np.linalg.norm(env.start - env.goal))
    bound = 0.0
    dist = d0
    t = 0
    while dist > env.goal_radius and t < env.spec.max_episode_steps:
        t += 1
        speed = min(V_MAX, t * DT * np.sqrt(2.0))
        dist = max(0.0, dist - DT * speed)
        bound -= 0.5 + 0.5 * dist / D_MAX
    return bound
