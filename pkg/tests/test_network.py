"""Tests for the part-based network, forward/backward and initialization."""

import numpy as np
import pytest

from s2sreid.errors import ConfigurationError, UsageError
from s2sreid.nn import layers
from s2sreid.nn.gradcheck import gradient_check, network_loss_closure
from s2sreid.nn.network import (
    ScaleConfig,
    SequentialConfig,
    backward,
    build_linear_network,
    build_part_network,
    build_sequential_network,
    forward,
    init_params,
)
from tests.fixtures import TINY_SCALE, small_mlp, tiny_part_network


class TestBuilder:
    def test_full_scale_embedding_is_800(self):
        net = build_part_network(ScaleConfig.full())
        assert net.output_dim == 800
        assert net.input_shape == (3, 230, 80)
        assert net.weight("global_conv").shape == (64, 3, 7, 7)
        assert net.weight("local0_conv1").shape[0] == 32

    def test_desk_scale_embedding_is_64(self):
        net = build_part_network(ScaleConfig())
        assert net.input_shape == (1, 24, 8)
        assert net.output_dim == 64

    def test_single_stripe(self):
        net = build_part_network(ScaleConfig(stripes=1, d_fc=5))
        assert net.output_dim == 10

    def test_local_branches_do_not_share_parameters(self):
        net = build_part_network(ScaleConfig())
        owned = [
            {(s.offset, s.stop) for s in net.group_slices(f"local{i}")} for i in range(4)
        ]
        for i in range(4):
            assert owned[i]
            for j in range(i + 1, 4):
                assert not owned[i] & owned[j]

    @pytest.mark.parametrize("branch", [0, 2])
    def test_perturbing_one_branch_leaves_other_stripes(self, branch):
        net = tiny_part_network(seed=6)
        x = np.random.default_rng(6).normal(size=(3,) + TINY_SCALE.input_shape)
        params = net.params.copy()
        for s in net.group_slices(f"local{branch}"):
            params[s.offset:s.stop] += 0.5

        def branch_outputs(network):
            _, tape = forward(network, x)
            caches = {entry.node: entry.cache for entry in tape}
            return [caches[f"fusion{k}_fc1"]["flat"] for k in range(TINY_SCALE.stripes)]

        before, after = branch_outputs(net), branch_outputs(net.with_params(params))
        for k in range(TINY_SCALE.stripes):
            if k == branch:
                assert not np.array_equal(after[k], before[k])
            else:
                np.testing.assert_array_equal(after[k], before[k])

    def test_input_extents_must_be_positive_integers(self):
        for shape in [(-3,), (0,), (2, 0, 2)]:
            with pytest.raises(ConfigurationError, match="positive integers"):
                build_sequential_network(SequentialConfig(shape, (layers.fully_connected(2),)))

    def test_parameter_slices_tile_the_vector(self):
        net = build_part_network(ScaleConfig())
        slices = sorted(
            (s.offset, s.stop) for n in net.nodes for s in (n.weight, n.bias) if s is not None
        )
        assert slices[0][0] == 0
        assert slices[-1][1] == net.param_count
        for (_, stop), (start, _) in zip(slices, slices[1:]):
            assert stop == start

    def test_indivisible_pooled_height(self):
        with pytest.raises(ConfigurationError, match="stripe"):
            build_part_network(ScaleConfig(input_height=23))

    def test_empty_sequential(self):
        with pytest.raises(ConfigurationError):
            build_sequential_network(SequentialConfig((3,), ()))


class TestInit:
    def test_same_seed_is_bitwise_identical(self):
        a = init_params(build_part_network(), 42)
        b = init_params(build_part_network(), 42)
        assert a.params.tobytes() == b.params.tobytes()

    def test_biases_are_zero(self):
        net = init_params(build_part_network(), 3)
        for node in net.nodes:
            if node.bias is not None:
                assert np.all(net.bias(node.name) == 0.0)

    def test_conv_weight_std(self):
        big = init_params(
            build_sequential_network(SequentialConfig((1, 102, 102), (layers.conv(1, 100),))), 0
        )
        sample = big.weight("layer0_conv2d").ravel()
        assert sample.size == 10_000
        assert 0.008 <= sample.std() <= 0.012

    def test_params_are_read_only(self):
        net = init_params(build_part_network(), 0)
        with pytest.raises(ValueError):
            net.params[0] = 1.0


class TestForwardBackward:
    def test_single_sample_and_batch(self):
        net = tiny_part_network()
        x = np.random.default_rng(0).normal(size=(3,) + TINY_SCALE.input_shape)
        batch, _ = forward(net, x)
        single, _ = forward(net, x[1])
        assert batch.shape == (3, net.output_dim)
        np.testing.assert_allclose(single, batch[1])

    def test_shape_mismatch_names_input(self):
        net = tiny_part_network()
        with pytest.raises(ConfigurationError, match="input"):
            forward(net, np.zeros((2, 1, 10, 4)))

    def test_zero_gradient_gives_zero_params_gradient(self):
        net = tiny_part_network()
        x = np.random.default_rng(1).normal(size=(2,) + TINY_SCALE.input_shape)
        emb, tape = forward(net, x)
        grad, grad_input = backward(net, tape, np.zeros_like(emb))
        assert grad.shape == net.params.shape
        assert not grad.any()
        assert grad_input.shape == x.shape

    def test_backward_is_linear(self):
        net = tiny_part_network()
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2,) + TINY_SCALE.input_shape)
        g1, g2 = rng.normal(size=(2, 2, net.output_dim))
        _, t1 = forward(net, x)
        _, t2 = forward(net, x)
        _, t3 = forward(net, x)
        a, _ = backward(net, t1, g1)
        b, _ = backward(net, t2, g2)
        c, _ = backward(net, t3, 2.0 * g1 + g2)
        np.testing.assert_allclose(c, 2.0 * a + b, atol=1e-12)

    def test_single_fc_gradients(self):
        net = build_linear_network(2, 1).with_params(np.array([0.5, -1.0, 0.25]))
        x = np.array([1.0, 2.0])
        y, tape = forward(net, x)
        np.testing.assert_allclose(y, [0.5 - 2.0 + 0.25])
        grad, grad_x = backward(net, tape, np.array([3.0]))
        np.testing.assert_allclose(grad, [3.0, 6.0, 3.0])
        np.testing.assert_allclose(grad_x, [1.5, -3.0])

    def test_tape_is_consumed_once(self):
        net = tiny_part_network()
        x = np.zeros(TINY_SCALE.input_shape)
        emb, tape = forward(net, x)
        backward(net, tape, emb)
        with pytest.raises(UsageError, match="consumed"):
            backward(net, tape, emb)

    def test_tape_from_other_parameters_is_stale(self):
        net = tiny_part_network()
        emb, tape = forward(net, np.zeros(TINY_SCALE.input_shape))
        moved = net.with_params(net.params + 1.0)
        with pytest.raises(UsageError, match="different network"):
            backward(moved, tape, emb)

    def test_gradient_shape_mismatch(self):
        net = tiny_part_network()
        _, tape = forward(net, np.zeros((2,) + TINY_SCALE.input_shape))
        with pytest.raises(UsageError, match="shape"):
            backward(net, tape, np.zeros((3, net.output_dim)))


class TestGradientCheck:
    def test_zero_network_quadratic_loss(self):
        net = build_linear_network(3, 2)
        closure = network_loss_closure(
            net, np.zeros((1, 3)), lambda e: (float(np.sum(e ** 2)), 2.0 * e)
        )
        assert gradient_check(net, closure, floor=1e-6) < 1e-8

    def test_random_three_layer_net(self):
        net = small_mlp(seed=5)
        inputs = np.random.default_rng(5).normal(size=(4, 6))
        target = np.random.default_rng(6).normal(size=(4, 4))
        closure = network_loss_closure(
            net, inputs, lambda e: (float(np.sum(e * target)), target)
        )
        assert gradient_check(net, closure, floor=1e-4) < 1e-4

    def test_part_network(self):
        net = tiny_part_network(seed=3)
        inputs = np.random.default_rng(3).normal(size=(2,) + TINY_SCALE.input_shape)
        target = np.random.default_rng(4).normal(size=(2, net.output_dim))
        closure = network_loss_closure(
            net, inputs, lambda e: (float(0.5 * np.sum((e - target) ** 2)), e - target)
        )
        assert gradient_check(net, closure, floor=1e-4) < 1e-4

    def test_zero_eps_rejected(self):
        net = build_linear_network(3, 2)
        closure = network_loss_closure(net, np.zeros((1, 3)), lambda e: (0.0, np.zeros_like(e)))
        with pytest.raises(UsageError):
            gradient_check(net, closure, eps=0.0)
