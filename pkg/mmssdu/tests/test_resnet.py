from __future__ import annotations

import math

import numpy as np
import pytest

from mmssdu.api.schemas import NetworkConfig
from mmssdu.core.kspace import ComplexImage
from mmssdu.errors import DimensionError
from mmssdu.nn.resnet import (
    MU,
    NetworkParams,
    expected_shapes,
    identity_params,
    init_params,
    layer_plan,
    resnet_regularizer,
    zero_params,
)
from mmssdu.tests.fixtures import random_image

NETWORK = NetworkConfig(channels=4, blocks=2)


def test_layer_plan_names_and_shapes():
    plan = dict(layer_plan(NETWORK))
    assert list(plan) == ["conv_in", "blocks.0.conv1", "blocks.0.conv2", "blocks.1.conv1", "blocks.1.conv2", "conv_out"]
    assert plan["conv_in"] == (4, 2, 3, 3)
    assert plan["conv_out"] == (2, 4, 3, 3)
    shapes = expected_shapes(NETWORK)
    assert len(shapes) == 2 * 6 + 1
    assert shapes[MU] == ()
    assert shapes["blocks.1.conv2.bias"] == (4,)


def test_init_is_seeded_per_layer():
    a = init_params(NETWORK, 0.05, seed=1)
    b = init_params(NETWORK, 0.05, seed=1)
    c = init_params(NETWORK, 0.05, seed=2)
    for name in a.names():
        np.testing.assert_array_equal(a.arrays[name], b.arrays[name])
    assert not np.array_equal(a.arrays["conv_in.weight"], c.arrays["conv_in.weight"])
    assert a.mu == pytest.approx(0.05)


def test_init_glorot_bounds_zero_bias_and_damped_output():
    damped = init_params(NETWORK, 0.05, seed=0)
    plain = init_params(NetworkConfig(channels=4, blocks=2, out_scale=1.0), 0.05, seed=0)
    for layer, (c_out, c_in, kh, kw) in layer_plan(NETWORK):
        bound = math.sqrt(6.0 / ((c_in + c_out) * kh * kw))
        assert np.all(np.abs(plain.arrays[f"{layer}.weight"]) <= bound)
        assert not np.any(damped.arrays[f"{layer}.bias"])
    np.testing.assert_allclose(damped.arrays["conv_out.weight"], 0.01 * plain.arrays["conv_out.weight"])
    np.testing.assert_array_equal(damped.arrays["conv_in.weight"], plain.arrays["conv_in.weight"])


def test_params_validate_names_shapes_and_values():
    arrays = dict(zero_params(NETWORK, 0.1).arrays)
    with pytest.raises(DimensionError):
        NetworkParams(arrays={k: v for k, v in arrays.items() if k != "conv_out.bias"}, network=NETWORK)
    with pytest.raises(DimensionError):
        NetworkParams(arrays={**arrays, "conv_in.bias": np.zeros(3)}, network=NETWORK)
    with pytest.raises(DimensionError):
        NetworkParams(arrays={**arrays, MU: np.asarray(np.nan)}, network=NETWORK)


def test_params_are_frozen_copies():
    source = np.zeros((4,))
    arrays = {**zero_params(NETWORK, 0.1).arrays, "conv_in.bias": source}
    params = NetworkParams(arrays=arrays, network=NETWORK)
    source[0] = 5.0
    assert params.arrays["conv_in.bias"][0] == 0.0
    with pytest.raises(ValueError):
        params.arrays["conv_in.bias"][0] = 1.0


def test_tensors_and_trainable_names_follow_mu_flag():
    params = init_params(NETWORK, 0.05)
    assert params.tensors()[MU].requires_grad
    frozen = params.tensors(mu_trainable=False)
    assert not frozen[MU].requires_grad
    assert frozen["conv_in.weight"].requires_grad
    assert MU not in params.trainable_names(mu_trainable=False)
    assert params.n_weights() == sum(a.size for a in params.arrays.values()) - 1


def test_identity_params_pass_image_through():
    x = random_image(8, seed=12)
    out = resnet_regularizer(x, identity_params(NETWORK, 0.1))
    np.testing.assert_allclose(out.data, x.data, atol=1e-14)


def test_zero_params_give_zero_output():
    out = resnet_regularizer(random_image(8), zero_params(NETWORK, 0.1))
    assert not np.any(out.data)


def test_regularizer_output_shape():
    x = random_image(16, seed=2)
    params = init_params(NetworkConfig(channels=4, blocks=1, out_scale=1.0), 0.05)
    out = resnet_regularizer(x, params)
    assert out.shape == (16, 16)
    assert np.linalg.norm(out.data) > 0


def test_kernel_larger_than_image_rejected():
    params = init_params(NetworkConfig(channels=2, blocks=0, kernel=5), 0.05)
    with pytest.raises(DimensionError):
        resnet_regularizer(ComplexImage(np.ones((4, 4))), params)


def _random_params(network, seed):
    gen = np.random.default_rng(seed)
    arrays = {name: 0.3 * gen.standard_normal(shape) for name, shape in expected_shapes(network).items()}
    arrays[MU] = np.asarray(0.05)
    return NetworkParams(arrays=arrays, network=network)


def _conv_loops(x, w, b):
    c_out, c_in, k, _ = w.shape
    pad = k // 2
    h, wd = x.shape[1:]
    padded = np.zeros((c_in, h + 2 * pad, wd + 2 * pad))
    padded[:, pad : pad + h, pad : pad + wd] = x
    out = np.empty((c_out, h, wd))
    for o in range(c_out):
        for i in range(h):
            for j in range(wd):
                total = b[o]
                for c in range(c_in):
                    for di in range(k):
                        for dj in range(k):
                            total += w[o, c, di, dj] * padded[c, i + di, j + dj]
                out[o, i, j] = total
    return out


def _straight_line_forward(z, arrays, blocks):
    h = _conv_loops(np.stack([z.real, z.imag]), arrays["conv_in.weight"], arrays["conv_in.bias"])
    for b in range(blocks):
        branch = np.maximum(_conv_loops(h, arrays[f"blocks.{b}.conv1.weight"], arrays[f"blocks.{b}.conv1.bias"]), 0.0)
        h = h + _conv_loops(branch, arrays[f"blocks.{b}.conv2.weight"], arrays[f"blocks.{b}.conv2.bias"])
    out = _conv_loops(h, arrays["conv_out.weight"], arrays["conv_out.bias"])
    return out[0] + 1j * out[1]


def test_regularizer_matches_straight_line_forward():
    params = _random_params(NETWORK, seed=31)
    x = random_image(8, seed=32)
    expected = _straight_line_forward(x.data, params.arrays, NETWORK.blocks)
    got = resnet_regularizer(x, params).data
    assert np.max(np.abs(got - expected)) <= 1e-12 * np.max(np.abs(expected))


def test_regularizer_is_shift_equivariant_away_from_borders():
    params = _random_params(NETWORK, seed=33)
    x = random_image(24, seed=34)
    shifted = ComplexImage(np.roll(x.data, (2, 3), axis=(0, 1)))
    out = resnet_regularizer(x, params).data
    out_shifted = resnet_regularizer(shifted, params).data
    # six 3x3 layers see 6 pixels out; keep windows clear of the zero padding and the roll seam
    diff = out_shifted[8:18, 9:18] - np.roll(out, (2, 3), axis=(0, 1))[8:18, 9:18]
    assert np.max(np.abs(diff)) <= 1e-12 * np.max(np.abs(out))
