"""Exact linear-algebra checks for the model-based/model-free equivalence.

Given an enumerable MDP, a stochastic policy, and a full-rank feature matrix,
this module builds the exact expectation matrices, solves the model-free TD
fixed point and the model-based rollout solution, evaluates the value-error
bound, and verifies value equality under reward/transition-preserving state
abstractions. Everything is float64 and deterministic; least squares go
through rank-revealing SVD rather than normal equations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs.tabular import (
    FeatureMap,
    TabularMDP,
    _check_policy,
    exact_policy_q,
    random_linear_mdp,
    tabular_features,
    transition_under_policy,
)
from .errors import AbstractionError, TheoryError

AGGREGATION_TOL = 1e-12


def build_matrices(
    mdp: TabularMDP, policy: np.ndarray, features: FeatureMap
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feature matrix Z, exact next-feature expectations Z', expected rewards R.

    Row (s, a) of Z' is sum_{s', a'} P(s'|s,a) pi(a'|s') phi(s', a').
    """
    policy = _check_policy(mdp, policy)
    Z = features.phi
    P_pi = transition_under_policy(mdp, policy)
    Zn = P_pi @ features.phi
    R = mdp.R.reshape(-1).copy()
    return Z, Zn, R


@dataclass
class LinearSolution:
    w_r: np.ndarray
    W_p: np.ndarray
    w_mb: np.ndarray
    w_mf: np.ndarray
    A: np.ndarray
    B: np.ndarray
    cond_A: float
    spectral_radius: float


def model_based_weights(Z, Zn, R, gamma: float):
    """Least-squares reward/dynamics weights and their infinite rollout.

    w_r solves min ||Z w - R||, W_p solves min ||Z W - Z'||, and the rollout
    sum_t gamma^t W_p^t w_r collapses to (I - gamma W_p)^{-1} w_r.
    """
    w_r, *_ = np.linalg.lstsq(Z, R, rcond=None)
    W_p, *_ = np.linalg.lstsq(Z, Zn, rcond=None)
    eigenvalues = np.linalg.eigvals(gamma * W_p)
    radius = float(np.abs(eigenvalues).max())
    M = np.eye(len(w_r)) - gamma * W_p
    if np.linalg.matrix_rank(M) < M.shape[0]:
        raise TheoryError(
            f"I - gamma W_p is singular (spectral radius of gamma W_p: {radius:.6g})"
        )
    w_mb = np.linalg.solve(M, w_r)
    return w_r, W_p, w_mb, radius


def truncated_rollout(W_p, w_r, gamma: float, horizon: int) -> np.ndarray:
    """Partial sum sum_{t<=horizon} gamma^t W_p^t w_r (series cross-check)."""
    acc = np.zeros_like(w_r)
    term = w_r.copy()
    for _ in range(horizon + 1):
        acc += term
        term = gamma * (W_p @ term)
    return acc


def td_fixed_point(Z, Zn, R, gamma: float) -> tuple[np.ndarray, LinearSolution]:
    """Fixed point w = A^{-1} B of semi-gradient TD, A = Z'Z - gamma Z'Z', B = Z'R."""
    A = Z.T @ Z - gamma * Z.T @ Zn
    B = Z.T @ R
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > 1e14:
        raise TheoryError(f"A is numerically singular (condition number {cond:.3g})")
    w_mf = np.linalg.solve(A, B)
    w_r, W_p, w_mb, radius = model_based_weights(Z, Zn, R, gamma)
    return w_mf, LinearSolution(w_r, W_p, w_mb, w_mf, A, B, cond, radius)


def semi_gradient_iteration(
    Z, Zn, R, gamma: float, alpha: float = None, tol: float = 1e-12, max_iter: int = 10_000_000
) -> np.ndarray:
    """Iterate w <- w - alpha (A w - B) until the update stalls below tol.

    Only converges when the iteration contracts; used as an independent
    verification path for the closed-form fixed point.
    """
    A = Z.T @ Z - gamma * Z.T @ Zn
    B = Z.T @ R
    if alpha is None:
        alpha = 0.9 / float(np.abs(np.linalg.eigvals(A)).max())
    w = np.zeros(Z.shape[1])
    for _ in range(max_iter):
        delta = alpha * (A @ w - B)
        w = w - delta
        if np.max(np.abs(delta)) <= tol:
            return w
    raise TheoryError("semi-gradient iteration did not converge")


def value_error_bound(
    mdp: TabularMDP, policy: np.ndarray, features: FeatureMap, gamma: float = None
):
    """Max |VE| of the linear solution vs. its reward/dynamics-residual bound.

    VE = Z w - Q^pi. The bound is 1/(1-gamma) times the worst row of
    |Z w_r - R| + max_i |w_i| * sum_j |Z W_p - Z'|_j (dimension-wise absolute
    sum of the dynamics residual).
    """
    gamma = mdp.gamma if gamma is None else gamma
    Z, Zn, R = build_matrices(mdp, policy, features)
    w_mf, sol = td_fixed_point(Z, Zn, R, gamma)
    q_pi = exact_policy_q(mdp, policy).reshape(-1)
    ve = Z @ w_mf - q_pi
    reward_residual = np.abs(Z @ sol.w_r - R)
    dynamics_residual = np.abs(Z @ sol.W_p - Zn).sum(axis=1)
    per_pair = reward_residual + np.abs(w_mf).max() * dynamics_residual
    bound = per_pair.max() / (1.0 - gamma)
    max_ve = float(np.abs(ve).max())
    return max_ve, float(bound), max_ve <= bound + 1e-12


@dataclass
class StateAbstraction:
    """Action-preserving state aggregation.

    state_map[s] gives the abstract class of state s; the induced
    state-action class of (s, a) is (state_map[s], a).
    """

    state_map: np.ndarray

    def __post_init__(self):
        self.state_map = np.asarray(self.state_map, dtype=np.int64)
        self.n_classes = int(self.state_map.max()) + 1
        if set(np.unique(self.state_map)) != set(range(self.n_classes)):
            raise AbstractionError("state_map classes must be 0..K-1 without gaps")

    @classmethod
    def identity(cls, n_states: int) -> "StateAbstraction":
        return cls(np.arange(n_states))


def check_homomorphism(mdp: TabularMDP, abstraction: StateAbstraction) -> None:
    """Verify aggregated rewards and transition mass agree within each class.

    All (s, a) in one state-action class must share the expected reward and
    the total transition probability into every abstract state class; the
    worst violating pair is reported otherwise.
    """
    sm = abstraction.state_map
    if len(sm) != mdp.n_states:
        raise AbstractionError("state_map length must equal the state count")
    K = abstraction.n_classes
    # aggregated transition mass onto classes, [S, A, K]
    mass = np.zeros((mdp.n_states, mdp.n_actions, K))
    for k in range(K):
        mass[:, :, k] = mdp.P[:, :, sm == k].sum(axis=2)
    worst = (0.0, None)
    for k in range(K):
        members = np.where(sm == k)[0]
        for a in range(mdp.n_actions):
            r_dev = float(np.ptp(mdp.R[members, a])) if len(members) > 1 else 0.0
            m_dev = (
                float(np.ptp(mass[members, a, :], axis=0).max())
                if len(members) > 1
                else 0.0
            )
            dev = max(r_dev, m_dev)
            if dev > worst[0]:
                worst = (dev, (k, a))
    if worst[0] > AGGREGATION_TOL:
        k, a = worst[1]
        raise AbstractionError(
            f"class {k}, action {a}: aggregation mismatch {worst[0]:.3g} "
            f"exceeds {AGGREGATION_TOL}"
        )


def abstract_mdp(mdp: TabularMDP, abstraction: StateAbstraction) -> TabularMDP:
    """Quotient MDP over state classes (requires check_homomorphism to pass)."""
    check_homomorphism(mdp, abstraction)
    sm = abstraction.state_map
    K = abstraction.n_classes
    P_hat = np.zeros((K, mdp.n_actions, K))
    R_hat = np.zeros((K, mdp.n_actions))
    init_hat = np.zeros(K)
    for k in range(K):
        rep = int(np.where(sm == k)[0][0])
        R_hat[k] = mdp.R[rep]
        for k2 in range(K):
            P_hat[k, :, k2] = mdp.P[rep][:, sm == k2].sum(axis=1)
        init_hat[k] = mdp.initial_dist[sm == k].sum()
    return TabularMDP(K, mdp.n_actions, P_hat, R_hat, mdp.gamma, init_hat)


def homomorphism_value_gap(
    mdp: TabularMDP, abstraction: StateAbstraction, abstract_policy: np.ndarray
) -> float:
    """max |Q_hat(class(s), a) - Q^pi(s, a)| for the lifted policy.

    The abstract policy is lifted to pi(a|s) = pi_hat(a|class(s)); exact
    policy evaluation runs on both the original and the quotient MDP.
    """
    quotient = abstract_mdp(mdp, abstraction)
    q_hat = exact_policy_q(quotient, abstract_policy)
    lifted = abstract_policy[abstraction.state_map]
    q_pi = exact_policy_q(mdp, lifted)
    gap = np.abs(q_hat[abstraction.state_map] - q_pi)
    return float(gap.max())


@dataclass
class TheoremReport:
    instances: int
    skipped: int
    max_fixed_point_gap: float
    max_series_gap: float
    bound_failures: int
    max_bound_margin: float
    max_value_gap_identity: float
    failed_seeds: list

    @property
    def ok(self) -> bool:
        return (
            self.max_fixed_point_gap <= 1e-8
            and self.bound_failures == 0
            and self.max_value_gap_identity <= 1e-10
            and not self.failed_seeds
        )


def verify_theorems(
    count: int = 100,
    d: int = 6,
    n_states: int = 10,
    n_actions: int = 3,
    gamma: float = 0.99,
    seed: int = 0,
    series_horizon: int = 10_000,
) -> TheoremReport:
    """Run the three checks on random instances; singular systems are skipped."""
    rng = np.random.default_rng(seed)
    max_gap = 0.0
    max_series = 0.0
    bound_failures = 0
    max_margin = -np.inf
    max_identity = 0.0
    skipped = 0
    failed = []
    for i in range(count):
        inst_seed = int(rng.integers(0, 2**31 - 1))
        mdp, feats = random_linear_mdp(d, n_states, n_actions, inst_seed, gamma)
        raw = np.random.default_rng(inst_seed + 1).random((n_states, n_actions))
        policy = raw / raw.sum(axis=1, keepdims=True)
        Z, Zn, R = build_matrices(mdp, policy, feats)
        try:
            w_mf, sol = td_fixed_point(Z, Zn, R, gamma)
        except TheoryError:
            skipped += 1
            continue
        gap = float(np.abs(w_mf - sol.w_mb).max())
        max_gap = max(max_gap, gap)
        if gap > 1e-8:
            failed.append(inst_seed)
        if sol.spectral_radius < 1.0:
            series = truncated_rollout(sol.W_p, sol.w_r, gamma, series_horizon)
            max_series = max(max_series, float(np.abs(series - sol.w_mb).max()))
        max_ve, bound, holds = value_error_bound(mdp, policy, feats, gamma)
        if not holds:
            bound_failures += 1
            failed.append(inst_seed)
        max_margin = max(max_margin, max_ve - bound)
        identity = StateAbstraction.identity(n_states)
        max_identity = max(
            max_identity, homomorphism_value_gap(mdp, identity, policy)
        )
    return TheoremReport(
        instances=count,
        skipped=skipped,
        max_fixed_point_gap=max_gap,
        max_series_gap=max_series,
        bound_failures=bound_failures,
        max_bound_margin=max_margin,
        max_value_gap_identity=max_identity,
        failed_seeds=failed,
    )
