"""Layer construction, Gumbel-Softmax, optimizers, and gradient checking."""

import math

import numpy as np
import pytest
import torch

from mrq.errors import ConfigurationError, NumericError
from mrq.nets import (
    LayerSpec,
    OptimizerSpec,
    build_stack,
    conv_chain_output_size,
    finite_difference_gradients,
    forward_dense_stack,
    gradient,
    gumbel_softmax,
    huber,
    linear,
    max_relative_error,
    xavier_uniform_bound,
)


class TestForwardStack:
    def test_zero_input_zero_bias_elu_gives_zero(self):
        layer = linear(4, 4, torch.float64)
        stack = [layer, torch.nn.ELU()]
        out = forward_dense_stack(torch.zeros(4, dtype=torch.float64), stack)
        assert torch.all(out == 0)

    def test_identity_weights_relu_on_positive(self):
        layer = linear(5, 5, torch.float64)
        with torch.no_grad():
            layer.weight.copy_(torch.eye(5, dtype=torch.float64))
        x = torch.tensor([0.5, 1.0, 2.0, 0.1, 3.0], dtype=torch.float64)
        out = forward_dense_stack(x, [layer, torch.nn.ReLU()])
        np.testing.assert_allclose(out.detach().numpy(), x.numpy())

    def test_matches_explicit_matrix_product(self):
        rng = np.random.default_rng(3)
        W = rng.standard_normal((8, 8))
        b = rng.standard_normal(8)
        x = rng.standard_normal(8)
        layer = linear(8, 8, torch.float64)
        with torch.no_grad():
            layer.weight.copy_(torch.tensor(W))
            layer.bias.copy_(torch.tensor(b))
        out = forward_dense_stack(torch.tensor(x), [layer])
        np.testing.assert_allclose(out.detach().numpy(), W @ x + b, atol=1e-12)

    def test_dimension_mismatch_raises(self):
        layer = linear(4, 4)
        with pytest.raises(ConfigurationError):
            forward_dense_stack(torch.zeros(5), [layer])

    def test_layer_spec_validation(self):
        with pytest.raises(ConfigurationError):
            LayerSpec("conv3d")
        with pytest.raises(ConfigurationError):
            LayerSpec("dense", in_size=0, out_size=4)
        with pytest.raises(ConfigurationError):
            LayerSpec("conv2d", in_size=1, out_size=32, stride=3)
        with pytest.raises(ConfigurationError):
            LayerSpec("activation", activation="swish")

    def test_build_stack_roundtrip(self):
        specs = [
            LayerSpec("dense", in_size=6, out_size=8),
            LayerSpec("layer-norm", in_size=8),
            LayerSpec("activation", activation="elu"),
            LayerSpec("dense", in_size=8, out_size=3),
        ]
        stack = build_stack(specs, torch.float64)
        out = forward_dense_stack(torch.zeros(2, 6, dtype=torch.float64), stack)
        assert out.shape == (2, 3)

    def test_conv_chain_sizes(self):
        assert conv_chain_output_size(84) == 1568
        with pytest.raises(ConfigurationError):
            conv_chain_output_size(8)


class TestGradient:
    def test_quadratic(self):
        w = torch.tensor([1.0, -2.0, 3.0], dtype=torch.float64, requires_grad=True)
        (g,) = gradient((w**2).sum() / 2, [w])
        np.testing.assert_allclose(g.numpy(), w.detach().numpy())

    def test_huber_branches(self):
        x = torch.tensor(0.5, dtype=torch.float64, requires_grad=True)
        (g,) = gradient(huber(x), [x])
        assert math.isclose(float(g), 0.5)
        x = torch.tensor(2.0, dtype=torch.float64, requires_grad=True)
        (g,) = gradient(huber(x), [x])
        assert math.isclose(float(g), 1.0)

    def test_nonfinite_loss_raises(self):
        w = torch.tensor(1.0, requires_grad=True)
        with pytest.raises(NumericError):
            gradient(w / 0.0, [w])

    def test_small_network_matches_finite_differences(self):
        torch.manual_seed(0)
        net = torch.nn.Sequential(
            linear(6, 8, torch.float64),
            torch.nn.ELU(),
            linear(8, 1, torch.float64),
        )
        x = torch.randn(10, 6, dtype=torch.float64)

        def loss_fn():
            return huber(net(x).squeeze(-1) - 1.0).mean()

        params = list(net.parameters())
        analytic = gradient(loss_fn(), params)
        numeric = finite_difference_gradients(loss_fn, params)
        assert max_relative_error(analytic, numeric) <= 1e-4


class TestGumbelSoftmax:
    def test_symmetric_logits_zero_noise(self):
        out = gumbel_softmax(torch.zeros(2), tau=3.0, noise=torch.zeros(2))
        np.testing.assert_allclose(out.numpy(), [0.5, 0.5], atol=1e-7)

    def test_simplex_output(self):
        gen = torch.Generator().manual_seed(5)
        logits = torch.randn(64, 6, generator=gen)
        out = gumbel_softmax(logits, tau=10.0, generator=gen)
        assert torch.all(out > 0) and torch.all(out < 1)
        np.testing.assert_allclose(out.sum(-1).numpy(), 1.0, atol=1e-6)

    def test_tau_ten_known_value(self):
        out = gumbel_softmax(
            torch.tensor([10.0, 0.0], dtype=torch.float64), tau=10.0,
            noise=torch.zeros(2, dtype=torch.float64),
        )
        expected = np.exp([1.0, 0.0]) / np.exp([1.0, 0.0]).sum()
        np.testing.assert_allclose(out.numpy(), expected, atol=1e-9)
        np.testing.assert_allclose(out.numpy(), [0.7311, 0.2689], atol=5e-5)

    def test_invalid_tau(self):
        with pytest.raises(ConfigurationError):
            gumbel_softmax(torch.zeros(2), tau=0.0)


class TestInitialization:
    def test_xavier_bound_respected(self):
        torch.manual_seed(11)
        fan_in, fan_out = 100, 1000
        layer = linear(fan_in, fan_out)  # 1e5 weights
        bound = xavier_uniform_bound(fan_in, fan_out)
        w = layer.weight.detach().numpy()
        assert w.min() >= -bound and w.max() <= bound
        # draws should nearly fill the interval
        assert w.max() > 0.95 * bound and w.min() < -0.95 * bound
        assert torch.all(layer.bias == 0)


class TestOptimizers:
    def test_decoupled_weight_decay_shrinks_multiplicatively(self):
        p = torch.nn.Parameter(torch.tensor([2.0, -4.0], dtype=torch.float64))
        opt = OptimizerSpec(learning_rate=0.1, weight_decay=0.5).build([p])
        p.grad = torch.zeros_like(p)
        opt.step()
        np.testing.assert_allclose(
            p.detach().numpy(), np.array([2.0, -4.0]) * (1 - 0.1 * 0.5), atol=1e-12
        )

    def test_invalid_specs(self):
        p = torch.nn.Parameter(torch.zeros(1))
        with pytest.raises(ConfigurationError):
            OptimizerSpec(learning_rate=0.0).build([p])
        with pytest.raises(ConfigurationError):
            OptimizerSpec(learning_rate=0.1, weight_decay=-1.0).build([p])

    def test_canonical_rates(self):
        from mrq.nets import ENCODER_OPTIMIZER, POLICY_OPTIMIZER, VALUE_OPTIMIZER

        assert ENCODER_OPTIMIZER.learning_rate == 1e-4
        assert ENCODER_OPTIMIZER.weight_decay == 1e-4
        assert VALUE_OPTIMIZER.learning_rate == 3e-4
        assert VALUE_OPTIMIZER.grad_clip_norm == 20.0
        assert POLICY_OPTIMIZER.learning_rate == 3e-4
