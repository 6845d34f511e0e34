"""Enumerable MDPs with explicit transition/reward tensors and exact solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, ContractViolation, TheoryError

ROW_SUM_TOL = 1e-12


@dataclass
class TabularMDP:
    """Finite MDP (S, A, P, R, gamma) with an initial-state distribution.

    P has shape [S, A, S] with rows summing to one; R is the expected-reward
    matrix [S, A].
    """

    n_states: int
    n_actions: int
    P: np.ndarray
    R: np.ndarray
    gamma: float
    initial_dist: np.ndarray = field(default=None)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        if self.P.shape != (self.n_states, self.n_actions, self.n_states):
            raise ConfigurationError(f"P has shape {self.P.shape}")
        if self.R.shape != (self.n_states, self.n_actions):
            raise ConfigurationError(f"R has shape {self.R.shape}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if np.any(self.P < 0) or np.any(np.abs(self.P.sum(axis=2) - 1.0) > ROW_SUM_TOL):
            raise ContractViolation("each P[s, a, :] must be a probability vector")
        if self.initial_dist is None:
            self.initial_dist = np.full(self.n_states, 1.0 / self.n_states)
        self.initial_dist = np.asarray(self.initial_dist, dtype=np.float64)


@dataclass
class FeatureMap:
    """Feature matrix over state-action pairs, row index (s, a) -> s * A + a."""

    phi: np.ndarray  # [S * A, d]
    n_states: int
    n_actions: int

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.shape[0] != self.n_states * self.n_actions:
            raise ConfigurationError("feature matrix must have S*A rows")
        if np.linalg.matrix_rank(self.phi) != self.phi.shape[1]:
            raise ConfigurationError("feature matrix must have full column rank")

    @property
    def dim(self) -> int:
        return self.phi.shape[1]

    def row(self, s: int, a: int) -> np.ndarray:
        return self.phi[s * self.n_actions + a]


def value_iteration(mdp: TabularMDP, tol: float = 1e-10, max_iter: int = 1_000_000):
    """Optimal V and Q by value iteration to the given Bellman residual."""
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        Q = mdp.R + mdp.gamma * mdp.P @ V
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) <= tol:
            return V_new, Q
        V = V_new
    raise TheoryError(f"value iteration did not reach residual {tol}")


def transition_under_policy(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """State-action transition matrix P^pi[(s,a) -> (s',a')] of shape [SA, SA]."""
    policy = _check_policy(mdp, policy)
    S, A = mdp.n_states, mdp.n_actions
    # P_pi[(s,a), (s',a')] = P(s'|s,a) * pi(a'|s')
    P_pi = mdp.P.reshape(S * A, S)[:, :, None] * policy[None, :, :]
    return P_pi.reshape(S * A, S * A)


def exact_policy_q(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """Q^pi of shape [S, A] from the linear system (I - gamma P^pi) q = r."""
    P_pi = transition_under_policy(mdp, policy)
    r = mdp.R.reshape(-1)
    q = np.linalg.solve(np.eye(len(r)) - mdp.gamma * P_pi, r)
    return q.reshape(mdp.n_states, mdp.n_actions)


def _check_policy(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise ContractViolation(f"policy has shape {policy.shape}")
    if np.any(policy < 0) or np.any(np.abs(policy.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise ContractViolation("policy rows must be probability vectors")
    return policy


def random_tabular_mdp(
    rng: np.random.Generator,
    n_states: int,
    n_actions: int,
    gamma: float = 0.99,
    sparsity: float = 0.0,
) -> TabularMDP:
    """Random dense MDP with Dirichlet-like transition rows and U(-1,1) rewards."""
    raw = rng.exponential(1.0, size=(n_states, n_actions, n_states))
    if sparsity > 0:
        mask = rng.random(raw.shape) < sparsity
        raw = np.where(mask, 0.0, raw)
        raw[..., 0] += (raw.sum(axis=2) == 0)  # keep rows stochastic
    P = raw / raw.sum(axis=2, keepdims=True)
    R = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    init = rng.exponential(1.0, size=n_states)
    return TabularMDP(n_states, n_actions, P, R, gamma, init / init.sum())


def random_linear_mdp(
    d: int, n_states: int, n_actions: int, seed: int, gamma: float = 0.99
) -> tuple[TabularMDP, FeatureMap]:
    """Random MDP plus a full-column-rank feature matrix of width d.

    Rank deficiency after generation triggers up to three perturbed retries.
    """
    if d > n_states * n_actions:
        raise ConfigurationError("feature dim cannot exceed S * A")
    rng = np.random.default_rng(seed)
    mdp = random_tabular_mdp(rng, n_states, n_actions, gamma)
    phi = rng.standard_normal((n_states * n_actions, d))
    for attempt in range(4):
        if np.linalg.matrix_rank(phi) == d:
            return mdp, FeatureMap(phi, n_states, n_actions)
        if attempt == 3:
            break
        phi = phi + 1e-6 * rng.standard_normal(phi.shape)
    raise ConfigurationError("could not generate a full-rank feature matrix")


def tabular_features(n_states: int, n_actions: int) -> FeatureMap:
    """One-hot (identity) features: d = S * A."""
    return FeatureMap(np.eye(n_states * n_actions), n_states, n_actions)
