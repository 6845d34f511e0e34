"""The RL learner: twin value networks, policy, targets, and the schedule.

Value learning follows clipped double Q-learning with multi-step scaled
targets and a Huber loss whose per-sample absolute errors feed the replay
priorities. The policy maximizes the average of both value networks through
its action head (Tanh for continuous actions, soft Gumbel-Softmax for
discrete ones) with a small squared pre-activation penalty. Targets, reward
scales, and the encoder are refreshed together every ``target_update_freq``
gradient steps, keeping the value/policy inputs stationary in between.
"""

from __future__ import annotations

import copy
import io
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .buffer import ReplayBuffer, SegmentBatch, Transition
from .codec import RewardCodec
from .config import RunConfig
from .encoder import Encoder, encoder_loss, make_target, sync_target
from .envs.base import EnvSpec
from .errors import ConfigurationError, NumericError
from .nets import OptimizerSpec, gumbel_softmax, huber, linear, ln_activ

CHECKPOINT_VERSION = 1


class ValueNet(nn.Module):
    """Four dense layers, LayerNorm + ELU on the first three."""

    def __init__(self, zsa_dim: int, hidden_dim: int, dtype=torch.float32):
        super().__init__()
        self.l1 = linear(zsa_dim, hidden_dim, dtype)
        self.l2 = linear(hidden_dim, hidden_dim, dtype)
        self.l3 = linear(hidden_dim, hidden_dim, dtype)
        self.l4 = linear(hidden_dim, 1, dtype)

    def forward(self, zsa: torch.Tensor) -> torch.Tensor:
        q = ln_activ(self.l1(zsa))
        q = ln_activ(self.l2(q))
        q = ln_activ(self.l3(q))
        return self.l4(q).squeeze(-1)


class LinearValueNet(nn.Module):
    """Ablation: a single linear readout of the state-action embedding."""

    def __init__(self, zsa_dim: int, hidden_dim: int = 0, dtype=torch.float32):
        super().__init__()
        self.l1 = linear(zsa_dim, 1, dtype)

    def forward(self, zsa: torch.Tensor) -> torch.Tensor:
        return self.l1(zsa).squeeze(-1)


class PolicyNet(nn.Module):
    """Three dense layers, LayerNorm + ReLU on the first two; the final
    activation is Tanh (continuous) or a soft Gumbel-Softmax (discrete)."""

    def __init__(
        self,
        zs_dim: int,
        action_dim: int,
        hidden_dim: int,
        discrete: bool,
        tau: float,
        dtype=torch.float32,
    ):
        super().__init__()
        self.l1 = linear(zs_dim, hidden_dim, dtype)
        self.l2 = linear(hidden_dim, hidden_dim, dtype)
        self.l3 = linear(hidden_dim, action_dim, dtype)
        self.discrete = discrete
        self.tau = tau

    def preactivations(self, zs: torch.Tensor) -> torch.Tensor:
        x = ln_activ(self.l1(zs), torch.relu)
        x = ln_activ(self.l2(x), torch.relu)
        return self.l3(x)

    def forward(self, zs: torch.Tensor, generator=None, gumbel=None):
        """(action vector, pre-activations). For discrete heads the action is
        the soft Gumbel sample; pass ``gumbel`` zeros for a noiseless head."""
        pre = self.preactivations(zs)
        if self.discrete:
            if gumbel is None and generator is None:
                gumbel = torch.zeros_like(pre)
            action = gumbel_softmax(pre, self.tau, generator=generator, noise=gumbel)
        else:
            action = torch.tanh(pre)
        return action, pre


def one_hot(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.float32)
    v[index] = 1.0
    return v


def add_exploration_noise(action_vec: np.ndarray, noise: np.ndarray, discrete: bool):
    """Apply per-dimension Gaussian exploration noise to an action vector.

    Discrete: the noised one-hot resolves back to an argmax index.
    Continuous: the noised vector is clipped to [-1, 1].
    """
    noised = action_vec + noise
    if discrete:
        return int(np.argmax(noised))
    return np.clip(noised, -1.0, 1.0)


def noised_target_action(base: torch.Tensor, noise: torch.Tensor, discrete: bool):
    """Clipped-noise smoothing of the target policy's action."""
    if discrete:
        onehot = torch.zeros_like(base)
        onehot.scatter_(-1, base.argmax(dim=-1, keepdim=True), 1.0)
        flipped = (onehot + noise).argmax(dim=-1, keepdim=True)
        out = torch.zeros_like(base)
        out.scatter_(-1, flipped, 1.0)
        return out
    return torch.clamp(base + noise, -1.0, 1.0)


@dataclass
class UpdateStats:
    loss_encoder: float | None = None
    loss_reward: float | None = None
    loss_dynamics: float | None = None
    loss_terminal: float | None = None
    loss_value: float | None = None
    loss_policy: float | None = None
    synced: bool = False
    encoder_updates: int = 0


class MRQAgent:
    """Owns all learnable state and the synchronized update schedule."""

    def __init__(self, cfg: RunConfig, spec: EnvSpec, dtype=torch.float32):
        if cfg.dynamics_target_sa and cfg.zs_dim != cfg.zsa_dim:
            raise ConfigurationError(
                "the state-action dynamics target needs zs_dim == zsa_dim"
            )
        self.cfg = cfg
        self.spec = spec
        self.dtype = dtype
        self.discrete = spec.action_kind == "discrete"
        self.codec = RewardCodec(cfg.reward_bins, cfg.reward_half_range)

        self.encoder = Encoder(cfg, spec.obs_shape, spec.obs_kind, spec.action_dim, dtype)
        value_cls = LinearValueNet if cfg.linear_value else ValueNet
        self.q1 = value_cls(cfg.zsa_dim, cfg.hidden_dim, dtype)
        self.q2 = value_cls(cfg.zsa_dim, cfg.hidden_dim, dtype)
        self.policy = PolicyNet(
            cfg.zs_dim, spec.action_dim, cfg.hidden_dim, self.discrete, cfg.gumbel_tau, dtype
        )
        self.encoder_target = make_target(self.encoder)
        self.q1_target = copy.deepcopy(self.q1)
        self.q2_target = copy.deepcopy(self.q2)
        self.policy_target = copy.deepcopy(self.policy)
        for net in (self.q1_target, self.q2_target, self.policy_target):
            for p in net.parameters():
                p.requires_grad_(False)

        self.encoder_opt = OptimizerSpec(cfg.encoder_lr, cfg.encoder_weight_decay).build(
            self.encoder.parameters()
        )
        self.value_opt = OptimizerSpec(cfg.value_lr, 0.0).build(
            list(self.q1.parameters()) + list(self.q2.parameters())
        )
        self.policy_opt = OptimizerSpec(cfg.policy_lr, 0.0).build(self.policy.parameters())

        self.reward_scale = 1.0
        self.target_reward_scale = 1.0
        self.env_steps = 0
        self.gradient_steps = 0
        self.terminal_seen = False
        self.generator = torch.Generator().manual_seed(cfg.seed)
        self.noise_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))

    # ------------------------------------------------------------------ acting

    def action_to_vector(self, action) -> np.ndarray:
        if self.discrete:
            return one_hot(int(action), self.spec.action_dim)
        return np.asarray(action, dtype=np.float32)

    def select_action(self, obs: np.ndarray, explore: bool):
        """Environment-facing action: index for discrete, vector otherwise.

        During the initial random phase exploration is uniform; afterwards the
        policy acts on the current state embedding, with Gaussian noise (and
        Gumbel head sampling for discrete actions) while exploring and the
        noiseless argmax / raw Tanh output during evaluation.
        """
        if explore and self.env_steps < self.cfg.initial_random_steps:
            if self.discrete:
                return int(self.noise_rng.integers(self.spec.action_dim))
            return self.noise_rng.uniform(-1.0, 1.0, self.spec.action_dim).astype(np.float32)

        with torch.no_grad():
            state = torch.as_tensor(np.asarray(obs)[None], dtype=self.dtype)
            zs = self.encoder.encode_state(state)
            action_vec, _ = self.policy(
                zs, generator=self.generator if explore and self.discrete else None
            )
            action_vec = action_vec[0].numpy()

        if not explore:
            return int(np.argmax(action_vec)) if self.discrete else action_vec
        noise = self.noise_rng.normal(0.0, self.cfg.exploration_noise, self.spec.action_dim)
        half_range = (self.spec.action_high - self.spec.action_low) / 2.0
        if self.discrete:
            base = one_hot(int(np.argmax(action_vec)), self.spec.action_dim)
            return add_exploration_noise(base, noise.astype(np.float32), True)
        return add_exploration_noise(
            action_vec, (noise * half_range).astype(np.float32), False
        ).astype(np.float32)

    def target_actions(self, zs: torch.Tensor) -> torch.Tensor:
        """Target-policy actions smoothed with clipped Gaussian noise."""
        base, _ = self.policy_target(zs, gumbel=None)
        half_range = (self.spec.action_high - self.spec.action_low) / 2.0
        noise = (
            torch.randn(base.shape, generator=self.generator, dtype=self.dtype)
            * self.cfg.target_noise
            * half_range
        )
        clip = self.cfg.target_noise_clip * half_range
        noise = torch.clamp(noise, -clip, clip)
        return noised_target_action(base, noise, self.discrete)

    # ------------------------------------------------------------------ losses

    def value_targets(self, batch: SegmentBatch) -> torch.Tensor:
        """Scaled multi-step bootstrap targets, one per segment."""
        cfg = self.cfg
        B = batch.batch_size
        horizon = np.minimum(cfg.q_horizon, batch.valid_length)
        ended_by_terminal = batch.terminals[np.arange(B), horizon - 1] > 0.5

        returns = np.zeros(B, dtype=np.float64)
        for t in range(int(horizon.max())):
            active = t < horizon
            returns[active] += (cfg.gamma**t) * batch.rewards[active, t]

        with torch.no_grad():
            boot_states = torch.as_tensor(
                np.asarray(batch.states[np.arange(B), horizon]), dtype=self.dtype
            )
            zs = self.encoder_target.encode_state(boot_states)
            actions = self.target_actions(zs)
            zsa = self.encoder_target.encode_state_action(zs, actions)
            q1 = self.q1_target(zsa)
            q2 = self.q2_target(zsa)
            bootstrap = (q1 + q2) / 2.0 if cfg.no_min else torch.minimum(q1, q2)
            bootstrap = bootstrap.numpy().astype(np.float64)

        discount = cfg.gamma**horizon * (~ended_by_terminal)
        scale, target_scale = self.scales()
        y = (returns + discount * target_scale * bootstrap) / scale
        if not np.all(np.isfinite(y)):
            raise NumericError(
                f"non-finite value target (reward scale {scale}, "
                f"target scale {target_scale}, max |Q'| {np.abs(bootstrap).max()})"
            )
        return torch.as_tensor(y, dtype=self.dtype)

    def scales(self) -> tuple[float, float]:
        if self.cfg.no_reward_scaling:
            return 1.0, 1.0
        return self.reward_scale, self.target_reward_scale

    def value_update(self, batch: SegmentBatch, indices, buffer: ReplayBuffer) -> float:
        cfg = self.cfg
        y = self.value_targets(batch)
        states = torch.as_tensor(np.asarray(batch.states[:, 0]), dtype=self.dtype)
        actions = torch.as_tensor(batch.actions[:, 0], dtype=self.dtype)

        if cfg.no_mr:
            zsa = self.encoder.encode_state_action(self.encoder.encode_state(states), actions)
        else:
            with torch.no_grad():
                zsa = self.encoder.encode_state_action(
                    self.encoder.encode_state(states), actions
                )
        q1 = self.q1(zsa)
        q2 = self.q2(zsa)
        e1 = q1 - y
        e2 = q2 - y
        if cfg.no_lap:
            loss = (e1**2).mean() + (e2**2).mean()
        else:
            loss = huber(e1).mean() + huber(e2).mean()

        self.value_opt.zero_grad()
        if cfg.no_mr:
            self.encoder_opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(
            list(self.q1.parameters()) + list(self.q2.parameters()), cfg.value_grad_clip
        )
        self.value_opt.step()
        if cfg.no_mr:
            self.encoder_opt.step()

        if not cfg.no_lap:
            with torch.no_grad():
                if cfg.priority_td_mode == "max":
                    td_abs = torch.maximum(e1.abs(), e2.abs())
                else:
                    td_abs = (e1.abs() + e2.abs()) / 2.0
            buffer.update_priorities(indices, td_abs.numpy().astype(np.float64))
        return float(loss.detach())

    def policy_update(self, batch: SegmentBatch) -> float:
        cfg = self.cfg
        states = torch.as_tensor(np.asarray(batch.states[:, 0]), dtype=self.dtype)
        with torch.no_grad():
            zs = self.encoder.encode_state(states)

        for p in self._frozen_in_policy_pass():
            p.requires_grad_(False)
        try:
            action, pre = self.policy(
                zs, generator=self.generator if self.discrete else None
            )
            zsa = self.encoder.encode_state_action(zs, action)
            q_sum = self.q1(zsa) + self.q2(zsa)
            loss = (-0.5 * q_sum + cfg.preactiv_weight * (pre**2).mean(dim=-1)).mean()
            self.policy_opt.zero_grad()
            loss.backward()
            self.policy_opt.step()
        finally:
            for p in self._frozen_in_policy_pass():
                p.requires_grad_(True)
        return float(loss.detach())

    def _frozen_in_policy_pass(self):
        yield from self.q1.parameters()
        yield from self.q2.parameters()
        yield from self.encoder.parameters()

    def encoder_update(self, batch: SegmentBatch) -> dict:
        total, components = encoder_loss(
            self.encoder, self.encoder_target, self.codec, batch, self.cfg,
            self.terminal_seen, self.dtype,
        )
        if not torch.isfinite(total):
            raise NumericError(f"non-finite encoder loss {float(total)!r}")
        self.encoder_opt.zero_grad()
        total.backward()
        self.encoder_opt.step()
        components["loss_encoder"] = float(total.detach())
        return components

    # ---------------------------------------------------------------- schedule

    def sync_targets(self) -> None:
        sync_target(self.encoder, self.encoder_target)
        self.q1_target.load_state_dict(self.q1.state_dict())
        self.q2_target.load_state_dict(self.q2.state_dict())
        self.policy_target.load_state_dict(self.policy.state_dict())

    def refresh_reward_scale(self, buffer: ReplayBuffer) -> None:
        self.target_reward_scale = self.reward_scale
        if self.cfg.reward_stat == "signed_mean":
            stat = abs(float(buffer.rewards[: buffer.size].mean())) if len(buffer) else 1.0
        else:
            stat = buffer.reward_abs_mean()
        self.reward_scale = max(stat, self.cfg.reward_scale_floor)

    def gradient_step(self, buffer: ReplayBuffer, rng: np.random.Generator) -> UpdateStats:
        """One scheduled step: periodic sync + encoder block, then one value
        and one policy update on a fresh prioritized batch."""
        cfg = self.cfg
        stats = UpdateStats()
        if len(buffer) < cfg.batch_size:
            return stats

        boundary = self.gradient_steps % cfg.target_update_freq == 0
        if boundary:
            self.sync_targets()
            self.refresh_reward_scale(buffer)
            stats.synced = True
        if not cfg.no_mr:
            block = cfg.target_update_freq if boundary and not cfg.amortize_encoder_updates else (
                1 if cfg.amortize_encoder_updates else 0
            )
            enc_stats = None
            for _ in range(block):
                seg, _ = buffer.sample_segments(cfg.batch_size, cfg.enc_horizon, rng)
                enc_stats = self.encoder_update(seg)
                stats.encoder_updates += 1
            if enc_stats is not None:
                stats.loss_encoder = enc_stats["loss_encoder"]
                stats.loss_reward = enc_stats["loss_reward"]
                stats.loss_dynamics = enc_stats["loss_dynamics"]
                stats.loss_terminal = enc_stats["loss_terminal"]

        seg, indices = buffer.sample_segments(cfg.batch_size, cfg.q_horizon, rng)
        stats.loss_value = self.value_update(seg, indices, buffer)
        stats.loss_policy = self.policy_update(seg)
        self.gradient_steps += 1
        return stats

    def observe(self, transition: Transition) -> None:
        if transition.terminal:
            self.terminal_seen = True
        self.env_steps += 1

    # ------------------------------------------------------------- persistence

    def state_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "encoder": self.encoder.state_dict(),
            "encoder_target": self.encoder_target.state_dict(),
            "q1": self.q1.state_dict(),
            "q2": self.q2.state_dict(),
            "q1_target": self.q1_target.state_dict(),
            "q2_target": self.q2_target.state_dict(),
            "policy": self.policy.state_dict(),
            "policy_target": self.policy_target.state_dict(),
            "encoder_opt": self.encoder_opt.state_dict(),
            "value_opt": self.value_opt.state_dict(),
            "policy_opt": self.policy_opt.state_dict(),
            "reward_scale": self.reward_scale,
            "target_reward_scale": self.target_reward_scale,
            "env_steps": self.env_steps,
            "gradient_steps": self.gradient_steps,
            "terminal_seen": self.terminal_seen,
            "torch_generator": self.generator.get_state(),
            "noise_rng": self.noise_rng.bit_generator.state,
        }

    def load_state_dict(self, state: dict) -> None:
        if state.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError(
                f"checkpoint version {state.get('version')!r} not supported"
            )
        self.encoder.load_state_dict(state["encoder"])
        self.encoder_target.load_state_dict(state["encoder_target"])
        self.q1.load_state_dict(state["q1"])
        self.q2.load_state_dict(state["q2"])
        self.q1_target.load_state_dict(state["q1_target"])
        self.q2_target.load_state_dict(state["q2_target"])
        self.policy.load_state_dict(state["policy"])
        self.policy_target.load_state_dict(state["policy_target"])
        self.encoder_opt.load_state_dict(state["encoder_opt"])
        self.value_opt.load_state_dict(state["value_opt"])
        self.policy_opt.load_state_dict(state["policy_opt"])
        self.reward_scale = state["reward_scale"]
        self.target_reward_scale = state["target_reward_scale"]
        self.env_steps = state["env_steps"]
        self.gradient_steps = state["gradient_steps"]
        self.terminal_seen = state["terminal_seen"]
        self.generator.set_state(state["torch_generator"])
        self.noise_rng.bit_generator.state = state["noise_rng"]

    def save(self, path) -> None:
        torch.save(self.state_dict(), path)

    def load(self, path) -> None:
        self.load_state_dict(torch.load(path, weights_only=False))
