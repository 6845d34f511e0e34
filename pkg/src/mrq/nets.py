"""Differentiable building blocks shared by every network in the package.

Reverse-mode differentiation is supplied by torch autograd; this module owns
the layer construction contract (Xavier-uniform weights, zero biases, the
fixed pixel conv chain), the Gumbel-Softmax operator, optimizer construction
with the canonical learning rates, and a finite-difference checker used to
validate analytic gradients. Training-path tensors are float32; gradient
checks rebuild the same graphs in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, NumericError

ACTIVATIONS = {"elu": F.elu, "relu": F.relu, "tanh": torch.tanh}

# Pixel conv chain: exactly four conv layers, 32 output channels each,
# kernel 3, strides (2, 2, 2, 1).
CONV_CHANNELS = 32
CONV_KERNEL = 3
CONV_STRIDES = (2, 2, 2, 1)

ENCODER_LR = 1e-4
ENCODER_WEIGHT_DECAY = 1e-4
VALUE_LR = 3e-4
VALUE_GRAD_CLIP = 20.0
POLICY_LR = 3e-4


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a feedforward stack.

    kind: 'dense', 'conv2d', 'layer-norm' or 'activation'.
    For dense: in_size/out_size. For conv2d: in_size = input channels,
    out_size = output channels (32), kernel/stride per the fixed chain.
    For activation: name in ACTIVATIONS or 'gumbel-softmax'.
    """

    kind: str
    in_size: int = 0
    out_size: int = 0
    kernel: int = CONV_KERNEL
    stride: int = 2
    activation: str = ""

    def __post_init__(self):
        if self.kind not in ("dense", "conv2d", "layer-norm", "activation"):
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("dense", "conv2d") and (self.in_size <= 0 or self.out_size <= 0):
            raise ConfigurationError(f"{self.kind} layer needs positive in/out sizes")
        if self.kind == "conv2d" and self.stride not in (1, 2):
            raise ConfigurationError("conv2d stride must be 1 or 2")
        if self.kind == "activation" and self.activation not in (*ACTIVATIONS, "gumbel-softmax"):
            raise ConfigurationError(f"unknown activation {self.activation!r}")


def xavier_uniform_bound(fan_in: int, fan_out: int) -> float:
    """Half-width of the Xavier-uniform range U(-b, b)."""
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_linear(layer: nn.Linear) -> nn.Linear:
    nn.init.xavier_uniform_(layer.weight)
    nn.init.zeros_(layer.bias)
    return layer


def init_conv(layer: nn.Conv2d) -> nn.Conv2d:
    nn.init.xavier_uniform_(layer.weight)
    nn.init.zeros_(layer.bias)
    return layer


def linear(in_size: int, out_size: int, dtype=torch.float32) -> nn.Linear:
    """Dense layer with Xavier-uniform weight and zero bias."""
    return init_linear(nn.Linear(in_size, out_size, dtype=dtype))


def conv2d(in_channels: int, stride: int, dtype=torch.float32) -> nn.Conv2d:
    return init_conv(
        nn.Conv2d(in_channels, CONV_CHANNELS, CONV_KERNEL, stride=stride, dtype=dtype)
    )


def pixel_conv_chain(in_channels: int, dtype=torch.float32) -> nn.ModuleList:
    """The fixed 4-conv chain for pixel inputs."""
    chains = [in_channels, CONV_CHANNELS, CONV_CHANNELS, CONV_CHANNELS]
    return nn.ModuleList(
        conv2d(c, stride=s, dtype=dtype) for c, s in zip(chains, CONV_STRIDES)
    )


def conv_chain_output_size(image_size: int) -> int:
    """Flattened size after the 4-conv chain on a square single-plane image."""
    size = image_size
    for stride in CONV_STRIDES:
        size = (size - CONV_KERNEL) // stride + 1
        if size < 1:
            raise ConfigurationError(
                f"image size {image_size} too small for the conv chain"
            )
    return size * size * CONV_CHANNELS


def ln_activ(x: torch.Tensor, activation=F.elu) -> torch.Tensor:
    """LayerNorm over the last dimension followed by an activation."""
    return activation(F.layer_norm(x, (x.shape[-1],)))


def build_stack(specs: list[LayerSpec], dtype=torch.float32) -> nn.ModuleList:
    """Materialize a list of LayerSpecs into torch modules."""
    modules = []
    for spec in specs:
        if spec.kind == "dense":
            modules.append(linear(spec.in_size, spec.out_size, dtype=dtype))
        elif spec.kind == "conv2d":
            modules.append(conv2d(spec.in_size, spec.stride, dtype=dtype))
        elif spec.kind == "layer-norm":
            modules.append(nn.LayerNorm(spec.in_size, dtype=dtype))
        else:
            modules.append(_Activation(spec.activation))
    return nn.ModuleList(modules)


class _Activation(nn.Module):
    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def forward(self, x):
        if self.name == "gumbel-softmax":
            raise ConfigurationError("gumbel-softmax needs an explicit tau and rng")
        return ACTIVATIONS[self.name](x)


def forward_dense_stack(x: torch.Tensor, layers) -> torch.Tensor:
    """Apply layers in order; raises ConfigurationError on dimension mismatch."""
    for layer in layers:
        if isinstance(layer, nn.Linear) and x.shape[-1] != layer.in_features:
            raise ConfigurationError(
                f"input of size {x.shape[-1]} fed to dense layer expecting "
                f"{layer.in_features}"
            )
        x = layer(x)
    return x


def gumbel_noise(shape, generator=None, dtype=torch.float32) -> torch.Tensor:
    """Standard Gumbel draws g = -log(-log(u)), u ~ U(0, 1)."""
    u = torch.rand(shape, generator=generator, dtype=dtype)
    inner = -torch.log(u.clamp_min(1e-20))
    return -torch.log(inner.clamp_min(1e-20))


def gumbel_softmax(logits: torch.Tensor, tau: float, generator=None, noise=None):
    """softmax((logits + g) / tau) with g standard Gumbel.

    Soft relaxation only (no straight-through hard sample); callers take the
    argmax when a concrete action is needed. ``noise`` overrides the sampled
    Gumbel variables, e.g. zeros for a noiseless evaluation.
    """
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    if noise is None:
        noise = gumbel_noise(logits.shape, generator=generator, dtype=logits.dtype)
    return torch.softmax((logits + noise) / tau, dim=-1)


def gradient(loss: torch.Tensor, params) -> list[torch.Tensor]:
    """Reverse-mode gradients of a scalar loss for each parameter."""
    if not torch.isfinite(loss):
        raise NumericError(f"non-finite loss {loss.item()!r}")
    return list(torch.autograd.grad(loss, list(params), allow_unused=False))


def finite_difference_gradients(loss_fn, params, eps: float = 1e-5):
    """Central-difference gradients of loss_fn() w.r.t. each parameter tensor.

    loss_fn must read the current values of ``params`` and return a scalar
    tensor. Parameters are perturbed in place and restored. Use float64
    parameters for meaningful comparisons.
    """
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            gflat = g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = float(loss_fn())
                flat[i] = orig - eps
                down = float(loss_fn())
                flat[i] = orig
                gflat[i] = (up - down) / (2 * eps)
            grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Worst elementwise |a - n| / max(|a|, |n|, floor) over parameter lists."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = torch.maximum(torch.maximum(a.abs(), n.abs()), torch.full_like(a, floor))
        worst = max(worst, ((a - n).abs() / denom).max().item())
    return worst


def huber(residual: torch.Tensor, threshold: float = 1.0) -> torch.Tensor:
    """Elementwise Huber penalty of a residual, quadratic inside the threshold."""
    a = residual.abs()
    return torch.where(a <= threshold, 0.5 * residual**2, threshold * (a - 0.5 * threshold))


@dataclass
class OptimizerSpec:
    """AdamW-style decoupled weight decay plus optional global-norm clipping."""

    learning_rate: float
    weight_decay: float = 0.0
    grad_clip_norm: float | None = None

    def build(self, params) -> torch.optim.AdamW:
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be positive")
        if self.weight_decay < 0:
            raise ConfigurationError("weight decay must be nonnegative")
        return torch.optim.AdamW(
            params, lr=self.learning_rate, weight_decay=self.weight_decay
        )


ENCODER_OPTIMIZER = OptimizerSpec(ENCODER_LR, ENCODER_WEIGHT_DECAY)
VALUE_OPTIMIZER = OptimizerSpec(VALUE_LR, 0.0, grad_clip_norm=VALUE_GRAD_CLIP)
POLICY_OPTIMIZER = OptimizerSpec(POLICY_LR, 0.0)
