"""Representation learning: state/state-action encoders and the latent model.

The state encoder maps observations (vector or pixel) to an embedding; the
state-action encoder fuses it with an action embedding; a single linear head
predicts the next state embedding, categorical reward logits, and a scalar
terminal signal from the state-action embedding. Training unrolls these
predictions over a short horizon through the encoder's own outputs (never
re-encoding intermediate true states) and regresses each step against
two-hot rewards, target-network state embeddings, and terminal flags.
"""

from __future__ import annotations

import copy

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .buffer import SegmentBatch
from .codec import RewardCodec, reward_cross_entropy
from .config import RunConfig
from .errors import NumericError
from .nets import conv_chain_output_size, linear, ln_activ, pixel_conv_chain


class VectorStateEncoder(nn.Module):
    """Three dense layers, LayerNorm + ELU after each."""

    def __init__(self, state_dim: int, zs_dim: int, hidden_dim: int, dtype=torch.float32):
        super().__init__()
        self.l1 = linear(state_dim, hidden_dim, dtype)
        self.l2 = linear(hidden_dim, hidden_dim, dtype)
        self.l3 = linear(hidden_dim, zs_dim, dtype)

    def forward(self, state: torch.Tensor) -> torch.Tensor:
        zs = ln_activ(self.l1(state))
        zs = ln_activ(self.l2(zs))
        return ln_activ(self.l3(zs))


def normalize_pixels(state: torch.Tensor) -> torch.Tensor:
    """Map byte images into [-0.5, 0.5]."""
    return state / 255.0 - 0.5


class PixelStateEncoder(nn.Module):
    """Four 32-channel convs (strides 2,2,2,1) + dense head with LayerNorm+ELU."""

    def __init__(self, in_channels: int, image_size: int, zs_dim: int, dtype=torch.float32):
        super().__init__()
        self.convs = pixel_conv_chain(in_channels, dtype)
        self.flat_size = conv_chain_output_size(image_size)
        self.head = linear(self.flat_size, zs_dim, dtype)

    def forward(self, state: torch.Tensor) -> torch.Tensor:
        x = normalize_pixels(state)
        for conv in self.convs:
            x = F.elu(conv(x))
        return ln_activ(self.head(x.reshape(x.shape[0], -1)))


class StateActionEncoder(nn.Module):
    """Action embed + ELU, concatenated with the state embedding, three dense
    layers (LayerNorm + ELU on the first two, plain final output)."""

    def __init__(
        self,
        action_dim: int,
        zs_dim: int,
        za_dim: int,
        zsa_dim: int,
        hidden_dim: int,
        dtype=torch.float32,
    ):
        super().__init__()
        self.za = linear(action_dim, za_dim, dtype)
        self.l1 = linear(zs_dim + za_dim, hidden_dim, dtype)
        self.l2 = linear(hidden_dim, hidden_dim, dtype)
        self.l3 = linear(hidden_dim, zsa_dim, dtype)

    def forward(self, zs: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        za = F.elu(self.za(action))
        zsa = torch.cat([zs, za], dim=-1)
        zsa = ln_activ(self.l1(zsa))
        zsa = ln_activ(self.l2(zsa))
        return self.l3(zsa)


class LinearPredictor(nn.Module):
    """Single linear map from the state-action embedding to all predictions."""

    def __init__(self, zsa_dim: int, zs_dim: int, reward_dim: int, dtype=torch.float32):
        super().__init__()
        self.zs_dim = zs_dim
        self.reward_dim = reward_dim
        self.head = linear(zsa_dim, zs_dim + reward_dim + 1, dtype)

    def forward(self, zsa: torch.Tensor):
        out = self.head(zsa)
        return (
            out[..., : self.zs_dim],
            out[..., self.zs_dim: self.zs_dim + self.reward_dim],
            out[..., -1],
        )


class NonLinearPredictor(nn.Module):
    """Ablation head: separate one-hidden-layer networks per component."""

    def __init__(
        self, zsa_dim: int, zs_dim: int, reward_dim: int, hidden_dim: int, dtype=torch.float32
    ):
        super().__init__()
        self.next_z = nn.ModuleList([linear(zsa_dim, hidden_dim, dtype), linear(hidden_dim, zs_dim, dtype)])
        self.reward = nn.ModuleList([linear(zsa_dim, hidden_dim, dtype), linear(hidden_dim, reward_dim, dtype)])
        self.terminal = nn.ModuleList([linear(zsa_dim, hidden_dim, dtype), linear(hidden_dim, 1, dtype)])

    @staticmethod
    def _mlp(layers, x):
        return layers[1](ln_activ(layers[0](x)))

    def forward(self, zsa: torch.Tensor):
        return (
            self._mlp(self.next_z, zsa),
            self._mlp(self.reward, zsa),
            self._mlp(self.terminal, zsa).squeeze(-1),
        )


class Encoder(nn.Module):
    """State encoder, state-action encoder, and the latent-model head."""

    def __init__(self, cfg: RunConfig, obs_shape, obs_kind: str, action_dim: int, dtype=torch.float32):
        super().__init__()
        self.obs_kind = obs_kind
        if obs_kind == "pixel":
            self.f = PixelStateEncoder(obs_shape[0], obs_shape[1], cfg.zs_dim, dtype)
        else:
            self.f = VectorStateEncoder(obs_shape[0], cfg.zs_dim, cfg.hidden_dim, dtype)
        self.g = StateActionEncoder(
            action_dim, cfg.zs_dim, cfg.za_dim, cfg.zsa_dim, cfg.hidden_dim, dtype
        )
        reward_dim = 1 if cfg.mse_reward_loss else cfg.reward_bins
        if cfg.nonlinear_model:
            self.model = NonLinearPredictor(cfg.zsa_dim, cfg.zs_dim, reward_dim, cfg.hidden_dim, dtype)
        else:
            self.model = LinearPredictor(cfg.zsa_dim, cfg.zs_dim, reward_dim, dtype)

    def encode_state(self, state: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(state).all():
            raise NumericError("non-finite values in observation")
        return self.f(state)

    def encode_state_action(self, zs: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return self.g(zs, action)

    def predict(self, zsa: torch.Tensor):
        """(next state embedding, reward logits, terminal signal)."""
        return self.model(zsa)

    def unroll(self, first_state: torch.Tensor, actions: torch.Tensor):
        """Latent rollout from the first state through the model's own outputs.

        actions has shape [B, H, action_dim]; returns per-step predictions
        ([B, H, zs], [B, H, reward_dim], [B, H]).
        """
        z = self.encode_state(first_state)
        zs_preds, reward_preds, terminal_preds = [], [], []
        for t in range(actions.shape[1]):
            zsa = self.encode_state_action(z, actions[:, t])
            z, reward_logits, terminal = self.predict(zsa)
            zs_preds.append(z)
            reward_preds.append(reward_logits)
            terminal_preds.append(terminal)
        return (
            torch.stack(zs_preds, dim=1),
            torch.stack(reward_preds, dim=1),
            torch.stack(terminal_preds, dim=1),
        )


def encoder_loss(
    encoder: Encoder,
    target_encoder: Encoder,
    codec: RewardCodec,
    batch: SegmentBatch,
    cfg: RunConfig,
    terminal_seen: bool,
    dtype=torch.float32,
):
    """Unrolled reward/dynamics/terminal loss with boundary masking.

    Every component is a masked mean over batch entries and unroll steps
    (dynamics squared errors are summed over embedding dimensions first).
    The terminal component is weighted zero until a terminal transition has
    been observed, so it contributes neither loss nor gradient before then.
    """

    states = torch.as_tensor(np.asarray(batch.states), dtype=dtype)
    actions = torch.as_tensor(batch.actions, dtype=dtype)
    horizon = min(cfg.enc_horizon, actions.shape[1])
    actions = actions[:, :horizon]
    mask = torch.as_tensor(batch.step_mask()[:, :horizon], dtype=dtype)
    denom = mask.sum().clamp_min(1.0)

    zs_pred, reward_pred, terminal_pred = encoder.unroll(states[:, 0], actions)

    # dynamics targets: state embeddings of the observed next states
    flat_next = states[:, 1: horizon + 1].reshape(-1, *states.shape[2:])
    if cfg.no_target_encoder:
        target_z = encoder.encode_state(flat_next)  # jointly optimized
        if cfg.dynamics_target_sa:
            target_z = _sa_targets(encoder, target_z, batch, horizon, dtype)
    else:
        with torch.no_grad():
            target_z = target_encoder.encode_state(flat_next)
            if cfg.dynamics_target_sa:
                target_z = _sa_targets(target_encoder, target_z, batch, horizon, dtype)
    target_z = target_z.reshape(zs_pred.shape[0], horizon, -1)

    dyn_mask = mask
    if cfg.dynamics_target_sa:
        # the state-action target needs the next action, absent at segment ends
        dyn_mask = mask * torch.as_tensor(
            batch.next_action_valid[:, :horizon], dtype=dtype
        )
    dyn_denom = dyn_mask.sum().clamp_min(1.0)
    dynamics = ((zs_pred - target_z) ** 2).sum(-1)
    loss_dynamics = (dynamics * dyn_mask).sum() / dyn_denom

    rewards = torch.as_tensor(batch.rewards[:, :horizon], dtype=dtype)
    if cfg.mse_reward_loss:
        reward_terms = (reward_pred.squeeze(-1) - rewards) ** 2
    else:
        targets = torch.as_tensor(
            codec.encode(batch.rewards[:, :horizon].astype(np.float64)), dtype=dtype
        )
        reward_terms = reward_cross_entropy(reward_pred, targets)
    loss_reward = (reward_terms * mask).sum() / denom

    terminals = torch.as_tensor(batch.terminals[:, :horizon], dtype=dtype)
    terminal_weight = cfg.terminal_weight if terminal_seen else 0.0
    if terminal_weight > 0.0:
        loss_terminal = (((terminal_pred - terminals) ** 2) * mask).sum() / denom
    else:
        loss_terminal = torch.zeros((), dtype=dtype)

    total = (
        cfg.reward_weight * loss_reward
        + cfg.dynamics_weight * loss_dynamics
        + terminal_weight * loss_terminal
    )
    components = {
        "loss_reward": float(loss_reward.detach()),
        "loss_dynamics": float(loss_dynamics.detach()),
        "loss_terminal": float(loss_terminal.detach()),
    }
    return total, components


def _sa_targets(enc: Encoder, target_z: torch.Tensor, batch: SegmentBatch, horizon: int, dtype):
    """State-action embeddings of (next state, next action) for the ablated target."""
    next_actions = torch.as_tensor(
        batch.next_actions[:, :horizon], dtype=dtype
    ).reshape(-1, batch.next_actions.shape[-1])
    return enc.encode_state_action(target_z, next_actions)


def make_target(encoder: Encoder) -> Encoder:
    """Frozen deep copy used for dynamics and bootstrap targets."""
    target = copy.deepcopy(encoder)
    for p in target.parameters():
        p.requires_grad_(False)
    return target


def sync_target(encoder: Encoder, target: Encoder) -> None:
    target.load_state_dict(encoder.state_dict())
