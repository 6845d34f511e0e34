"""Two-hot categorical reward representation over symexp-spaced bins.

Scalar rewards are mapped to interpolation weights on the two bracketing
locations of a fixed grid. Grid locations are symexp-transformed from a
uniform grid, so they are dense near zero and sparse at large magnitudes.
Interpolation is linear in reward space, which makes ``decode`` an exact
inverse of ``encode`` (up to float rounding) via a dot product with the
bin locations.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation

NUM_BINS = 65
HALF_RANGE = 10.0


def symexp(x):
    """sign(x) * (exp(|x|) - 1); odd and strictly increasing."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.expm1(np.abs(x))


def symlog(y):
    """Inverse of :func:`symexp`: sign(y) * log(1 + |y|)."""
    y = np.asarray(y, dtype=np.float64)
    return np.sign(y) * np.log1p(np.abs(y))


class RewardCodec:
    """Fixed grid of symexp-spaced bin locations plus encode/decode.

    The uniform grid is built as ``(i - center) * (half_range / center)`` so
    that the locations are exactly odd-symmetric in floating point.
    Immutable after construction; safe to share between threads.
    """

    def __init__(self, num_bins: int = NUM_BINS, half_range: float = HALF_RANGE):
        if num_bins < 2 or num_bins % 2 == 0:
            raise ContractViolation(f"num_bins must be odd and >= 3, got {num_bins}")
        center = (num_bins - 1) // 2
        u = (np.arange(num_bins, dtype=np.float64) - center) * (half_range / center)
        self.bins = symexp(u)
        self.num_bins = num_bins

    def encode(self, rewards) -> np.ndarray:
        """Two-hot weights for scalar rewards, shape (..., num_bins).

        Out-of-range rewards are clamped to the extreme bins. Output rows are
        nonnegative, have at most two adjacent nonzeros, and sum to one.
        """
        r = np.asarray(rewards, dtype=np.float64)
        if not np.all(np.isfinite(r)):
            raise ContractViolation("rewards must be finite")
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        r = np.clip(r, self.bins[0], self.bins[-1])
        # index of the left bracketing bin; exact hits land on their own bin
        lo = np.clip(np.searchsorted(self.bins, r, side="right") - 1, 0, self.num_bins - 2)
        width = self.bins[lo + 1] - self.bins[lo]
        w_lo = (self.bins[lo + 1] - r) / width
        out = np.zeros(r.shape + (self.num_bins,), dtype=np.float64)
        idx = np.arange(r.size).reshape(r.shape)
        flat = out.reshape(-1, self.num_bins)
        flat[idx.ravel(), lo.ravel()] = w_lo.ravel()
        flat[idx.ravel(), lo.ravel() + 1] = 1.0 - w_lo.ravel()
        return out[0] if scalar else out

    def decode(self, weights) -> np.ndarray:
        """Expected bin location under a weight simplex: sum_i w_i * b_i."""
        w = np.asarray(weights, dtype=np.float64)
        if w.shape[-1] != self.num_bins:
            raise ContractViolation(f"expected {self.num_bins} weights, got {w.shape[-1]}")
        if np.any(w < -1e-12) or np.any(np.abs(w.sum(axis=-1) - 1.0) > 1e-6):
            raise ContractViolation("weights must be a simplex (nonnegative, sum 1)")
        return w @ self.bins


def reward_cross_entropy(logits, target_weights):
    """CE(softmax(logits), target) = -sum_i target_i * log_softmax(logits)_i.

    Accepts torch tensors (keeps the graph) or numpy arrays.
    """
    import torch

    if isinstance(logits, torch.Tensor):
        logp = torch.log_softmax(logits, dim=-1)
        if not isinstance(target_weights, torch.Tensor):
            target_weights = torch.as_tensor(target_weights, dtype=logits.dtype)
        return -(target_weights * logp).sum(dim=-1)
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return -(np.asarray(target_weights) * logp).sum(axis=-1)
