"""Built-in desk-scale environments and their exact-solution oracles.

Registry names:
  gridworld-discrete   one-hot vector observations, 4 discrete actions
  pointmass-continuous 4-dim vector observations, 2-dim continuous actions
  pixel-gridworld      single-channel image observations, discrete actions
                       (``continuous=True`` switches to velocity control)
  linear-random-mdp    sampled episodes of a random enumerable MDP
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from .base import Env, EnvSpec
from .gridworld import GridWorld, PixelGridWorld
from .pointmass import PointMass, return_upper_bound
from .tabular import (
    FeatureMap,
    TabularMDP,
    exact_policy_q,
    random_linear_mdp,
    random_tabular_mdp,
    tabular_features,
    transition_under_policy,
    value_iteration,
)

__all__ = [
    "Env",
    "EnvSpec",
    "GridWorld",
    "PixelGridWorld",
    "PointMass",
    "TabularMDP",
    "FeatureMap",
    "make_env",
    "optimal_return",
    "return_upper_bound",
    "random_linear_mdp",
    "random_tabular_mdp",
    "tabular_features",
    "exact_policy_q",
    "transition_under_policy",
    "value_iteration",
]


class TabularEnv(Env):
    """Sampling wrapper around a TabularMDP with one-hot observations."""

    def __init__(self, mdp: TabularMDP, max_episode_steps: int = 100, seed: int = 0):
        super().__init__()
        self.mdp = mdp
        self.spec = EnvSpec(
            obs_kind="vector",
            obs_shape=(mdp.n_states,),
            action_kind="discrete",
            action_dim=mdp.n_actions,
            max_episode_steps=max_episode_steps,
        )
        self._rng = np.random.default_rng(seed)
        self.state = 0

    def _obs(self) -> np.ndarray:
        obs = np.zeros(self.mdp.n_states, dtype=np.float32)
        obs[self.state] = 1.0
        return obs

    def _reset(self) -> np.ndarray:
        self.state = int(self._rng.choice(self.mdp.n_states, p=self.mdp.initial_dist))
        return self._obs()

    def _step(self, action):
        a = int(action)
        if not 0 <= a < self.mdp.n_actions:
            raise ConfigurationError(f"discrete action {a} out of range")
        reward = float(self.mdp.R[self.state, a])
        self.state = int(self._rng.choice(self.mdp.n_states, p=self.mdp.P[self.state, a]))
        return self._obs(), reward, 0


ENV_NAMES = (
    "gridworld-discrete",
    "pointmass-continuous",
    "pixel-gridworld",
    "linear-random-mdp",
)


def make_env(name: str, config: dict | None = None, seed: int = 0) -> Env:
    """Construct a registered environment deterministically from a seed."""
    config = dict(config or {})
    if name == "gridworld-discrete":
        return GridWorld(
            size=int(config.get("grid_size", 5)),
            max_episode_steps=int(config.get("max_episode_steps", 100)),
            seed=seed,
        )
    if name == "pointmass-continuous":
        return PointMass(
            max_episode_steps=int(config.get("max_episode_steps", 100)),
            seed=seed,
        )
    if name == "pixel-gridworld":
        return PixelGridWorld(
            size=int(config.get("grid_size", 5)),
            image_size=int(config.get("image_size", 40)),
            continuous=bool(config.get("continuous", False)),
            max_episode_steps=int(config.get("max_episode_steps", 100)),
            seed=seed,
        )
    if name == "linear-random-mdp":
        mdp, _ = random_linear_mdp(
            d=int(config.get("feature_dim", 6)),
            n_states=int(config.get("n_states", 10)),
            n_actions=int(config.get("n_actions", 3)),
            seed=seed,
            gamma=float(config.get("gamma", 0.99)),
        )
        return TabularEnv(
            mdp,
            max_episode_steps=int(config.get("max_episode_steps", 100)),
            seed=seed,
        )
    raise ConfigurationError(
        f"unknown environment {name!r}; known names: {', '.join(ENV_NAMES)}"
    )


def optimal_return(env) -> float:
    """Exact optimal episode return for enumerable environments.

    Gridworlds: undiscounted return of the greedy-optimal policy (value
    iteration on the exact MDP, greedy rollout from the start state).
    TabularMDP / TabularEnv: discounted optimal value of the initial
    distribution, value iteration to residual 1e-10.
    Continuous environments are unsupported; the point mass documents an
    analytic bound (``return_upper_bound``).
    """
    if isinstance(env, TabularMDP):
        V, _ = value_iteration(env, tol=1e-10)
        return float(env.initial_dist @ V)
    if isinstance(env, TabularEnv):
        return optimal_return(env.mdp)
    if isinstance(env, (GridWorld, PixelGridWorld)) and not getattr(env, "continuous", False):
        mdp = env.as_tabular()
        _, Q = value_iteration(mdp, tol=1e-10)
        greedy = Q.argmax(axis=1)
        size = env.size
        pos = (0, 0)
        total = 0.0
        goal = (size - 1, size - 1)
        from .gridworld import MOVES

        for _ in range(env.spec.max_episode_steps):
            s = pos[0] * size + pos[1]
            move = MOVES[greedy[s]]
            pos = (
                int(np.clip(pos[0] + move[0], 0, size - 1)),
                int(np.clip(pos[1] + move[1], 0, size - 1)),
            )
            if pos == goal:
                total += 1.0
                break
        return total
    raise ConfigurationError(
        "optimal_return supports gridworlds and tabular MDPs only; "
        "the point mass documents an analytic bound in return_upper_bound()"
    )
