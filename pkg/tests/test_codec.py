"""Two-hot reward codec: grid geometry, encode/decode, and the loss."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from mrq.codec import RewardCodec, reward_cross_entropy, symexp, symlog
from mrq.errors import ContractViolation


@pytest.fixture(scope="module")
def codec():
    return RewardCodec()


class TestSymexp:
    def test_zero(self):
        assert symexp(0.0) == 0.0

    def test_one(self):
        assert math.isclose(float(symexp(1.0)), math.e - 1, rel_tol=1e-12)

    def test_ten_matches_effective_range(self):
        # direct evaluation: e^10 - 1
        assert math.isclose(float(symexp(10.0)), math.exp(10.0) - 1.0, rel_tol=1e-15)
        assert 22_000 < float(symexp(10.0)) < 22_100

    def test_odd_and_increasing(self):
        x = np.linspace(-10, 10, 401)
        y = symexp(x)
        np.testing.assert_allclose(y, -symexp(-x), rtol=0, atol=0)
        assert np.all(np.diff(y) > 0)

    def test_symlog_inverse(self):
        x = np.linspace(-10, 10, 401)
        np.testing.assert_allclose(symlog(symexp(x)), x, atol=1e-12)


class TestGrid:
    def test_extreme_bins(self, codec):
        assert math.isclose(codec.bins[0], -(math.exp(10) - 1), rel_tol=1e-15)
        assert math.isclose(codec.bins[-1], math.exp(10) - 1, rel_tol=1e-15)

    def test_strictly_increasing_and_odd_symmetric(self, codec):
        assert np.all(np.diff(codec.bins) > 0)
        # exact negation symmetry, not just approximate
        assert (codec.bins == -codec.bins[::-1]).all()

    def test_center_is_zero(self, codec):
        assert codec.bins[32] == 0.0


class TestEncode:
    def test_zero_is_one_hot_center(self, codec):
        w = codec.encode(0.0)
        assert w[32] == 1.0
        assert w.sum() == 1.0
        assert np.count_nonzero(w) == 1

    def test_exact_bin_hit(self, codec):
        w = codec.encode(codec.bins[40])
        assert w[40] == 1.0
        assert np.count_nonzero(w) == 1

    def test_midpoint_splits_evenly(self, codec):
        # recompute the bracketing locations from the grid definition
        u32, u33 = 0.0, 10.0 / 32
        b32 = math.copysign(math.expm1(abs(u32)), u32)
        b33 = math.copysign(math.expm1(abs(u33)), u33)
        w = codec.encode((b32 + b33) / 2.0)
        np.testing.assert_allclose([w[32], w[33]], [0.5, 0.5], atol=1e-12)

    def test_out_of_range_clamps(self, codec):
        w = codec.encode(1e9)
        assert w[-1] == 1.0
        w = codec.encode(-1e9)
        assert w[0] == 1.0

    def test_nonfinite_rejected(self, codec):
        with pytest.raises(ContractViolation):
            codec.encode(float("nan"))

    @given(st.floats(-25_000, 25_000, allow_nan=False))
    @settings(max_examples=300, deadline=None)
    def test_simplex_structure(self, r):
        codec = RewardCodec()
        w = codec.encode(r)
        nz = np.nonzero(w)[0]
        assert 1 <= len(nz) <= 2
        if len(nz) == 2:
            assert nz[1] == nz[0] + 1
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-9

    def test_odd_symmetry_of_encoding(self, codec):
        rng = np.random.default_rng(7)
        r = symexp(rng.uniform(-10, 10, size=1000))
        np.testing.assert_allclose(
            codec.encode(-r), codec.encode(r)[:, ::-1], atol=1e-12
        )


class TestDecode:
    def test_roundtrip_exact_for_in_range(self, codec):
        for r in (0.0, 1.5, -3.25, 1000.0, -20_000.0):
            assert math.isclose(codec.decode(codec.encode(r)), r, rel_tol=1e-12, abs_tol=1e-12)

    def test_one_hot_center_decodes_to_zero(self, codec):
        w = np.zeros(65)
        w[32] = 1.0
        assert codec.decode(w) == 0.0

    def test_roundtrip_sweep(self, codec):
        # brute-force sweep: 1e4 points log-spaced over the effective range
        mags = np.geomspace(1e-3, 22_000, 5_000)
        r = np.concatenate([-mags[::-1], mags])
        back = codec.decode(codec.encode(r))
        rel = np.abs(back - r) / np.maximum(1.0, np.abs(r))
        assert rel.max() <= 1e-6

    def test_malformed_simplex_rejected(self, codec):
        w = np.zeros(65)
        w[0] = 0.4
        with pytest.raises(ContractViolation):
            codec.decode(w)


class TestRewardLoss:
    def test_uniform_logits_give_log_bins(self, codec):
        logits = torch.zeros(65, dtype=torch.float64)
        target = codec.encode(3.7)
        loss = reward_cross_entropy(logits, target)
        assert math.isclose(float(loss), math.log(65), rel_tol=1e-12)

    def test_one_hot_target_is_negative_log_peak(self, codec):
        logits = torch.zeros(65, dtype=torch.float64)
        logits[32] = 4.0
        target = codec.encode(0.0)  # one-hot at 32
        loss = reward_cross_entropy(logits, target)
        peak = torch.softmax(logits, -1)[32]
        assert math.isclose(float(loss), -math.log(float(peak)), rel_tol=1e-12)
        # more peak mass -> lower loss
        sharper = logits.clone()
        sharper[32] = 8.0
        assert reward_cross_entropy(sharper, target) < loss

    def test_gradient_is_softmax_minus_target(self, codec):
        rng = np.random.default_rng(0)
        logits = torch.tensor(rng.standard_normal(65), dtype=torch.float64, requires_grad=True)
        target = torch.tensor(codec.encode(-7.3), dtype=torch.float64)
        loss = reward_cross_entropy(logits, target)
        loss.backward()
        analytic = torch.softmax(logits.detach(), -1) - target
        np.testing.assert_allclose(logits.grad.numpy(), analytic.numpy(), atol=1e-12)

        # independent finite-difference check of a few coordinates
        base = logits.detach().clone()
        eps = 1e-6
        for i in (0, 17, 32, 64):
            up, down = base.clone(), base.clone()
            up[i] += eps
            down[i] -= eps
            fd = (
                float(reward_cross_entropy(up, target))
                - float(reward_cross_entropy(down, target))
            ) / (2 * eps)
            assert math.isclose(fd, float(logits.grad[i]), rel_tol=1e-4, abs_tol=1e-8)
