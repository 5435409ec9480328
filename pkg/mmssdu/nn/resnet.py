"""Shared-weight ResNet regularizer acting on 2-channel (real, imag) images."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Tuple

import numpy as np

from mmssdu.api.schemas import NetworkConfig
from mmssdu.core.kspace import ComplexImage
from mmssdu.core.rng import make_rng
from mmssdu.errors import DimensionError
from mmssdu.nn.autodiff import Tensor, constant, conv2d, from_channels, parameter, relu, to_channels

logger = logging.getLogger(__name__)

MU = "mu"
IMAGE_CHANNELS = 2


def layer_plan(network: NetworkConfig) -> List[Tuple[str, Tuple[int, int, int, int]]]:
    """(layer name, kernel shape) in forward order."""
    c, k = network.channels, network.kernel
    plan = [("conv_in", (c, IMAGE_CHANNELS, k, k))]
    for b in range(network.blocks):
        plan.append((f"blocks.{b}.conv1", (c, c, k, k)))
        plan.append((f"blocks.{b}.conv2", (c, c, k, k)))
    plan.append(("conv_out", (IMAGE_CHANNELS, c, k, k)))
    return plan


def expected_shapes(network: NetworkConfig) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for layer, shape in layer_plan(network):
        shapes[f"{layer}.weight"] = shape
        shapes[f"{layer}.bias"] = (shape[0],)
    shapes[MU] = ()
    return shapes


@dataclass(frozen=True)
class NetworkParams:
    """Network weights θ plus the DC penalty μ, all float64."""

    arrays: Mapping[str, np.ndarray]
    network: NetworkConfig

    def __post_init__(self) -> None:
        shapes = expected_shapes(self.network)
        if set(self.arrays) != set(shapes):
            missing = sorted(set(shapes) - set(self.arrays))
            extra = sorted(set(self.arrays) - set(shapes))
            raise DimensionError(f"parameter names do not match the channel plan (missing {missing}, extra {extra})")
        frozen = {}
        for name in shapes:
            array = np.array(self.arrays[name], dtype=np.float64, copy=True)
            if array.shape != shapes[name]:
                raise DimensionError(f"{name}: expected shape {shapes[name]}, got {array.shape}")
            if not np.all(np.isfinite(array)):
                raise DimensionError(f"{name}: non-finite values")
            array.setflags(write=False)
            frozen[name] = array
        object.__setattr__(self, "arrays", frozen)

    @property
    def mu(self) -> float:
        return float(self.arrays[MU])

    def names(self) -> List[str]:
        return list(self.arrays)

    def replace(self, arrays: Mapping[str, np.ndarray]) -> "NetworkParams":
        return NetworkParams(arrays={**self.arrays, **arrays}, network=self.network)

    def tensors(self, mu_trainable: bool = True) -> Dict[str, Tensor]:
        """Graph leaves; μ becomes a constant when it is not trained."""
        out = {name: parameter(array, name) for name, array in self.arrays.items() if name != MU}
        out[MU] = parameter(self.arrays[MU], MU) if mu_trainable else constant(self.arrays[MU])
        return out

    def trainable_names(self, mu_trainable: bool = True) -> List[str]:
        return [name for name in self.arrays if mu_trainable or name != MU]

    def n_weights(self) -> int:
        return int(sum(a.size for name, a in self.arrays.items() if name != MU))


def init_params(network: NetworkConfig, mu_init: float, seed: int = 0) -> NetworkParams:
    """Glorot-uniform kernels seeded per layer index, zero biases, damped output layer."""
    arrays: Dict[str, np.ndarray] = {}
    plan = layer_plan(network)
    for index, (layer, shape) in enumerate(plan):
        c_out, c_in, kh, kw = shape
        bound = math.sqrt(6.0 / ((c_in + c_out) * kh * kw))
        weight = make_rng(seed, index).uniform(-bound, bound, size=shape)
        if index == len(plan) - 1:
            weight = weight * network.out_scale
        arrays[f"{layer}.weight"] = weight
        arrays[f"{layer}.bias"] = np.zeros(c_out)
    arrays[MU] = np.asarray(float(mu_init))
    params = NetworkParams(arrays=arrays, network=network)
    logger.debug("Initialised %d network weights (seed %d, mu %.4g)", params.n_weights(), seed, mu_init)
    return params


def zero_params(network: NetworkConfig, mu: float) -> NetworkParams:
    arrays = {name: np.zeros(shape) for name, shape in expected_shapes(network).items()}
    arrays[MU] = np.asarray(float(mu))
    return NetworkParams(arrays=arrays, network=network)


def identity_params(network: NetworkConfig, mu: float) -> NetworkParams:
    """Parameters for which the regularizer returns its input unchanged.

    conv_in copies (real, imag) into the first two feature channels through the
    kernel centre tap, every residual branch is zero and conv_out copies them back.
    """
    params = zero_params(network, mu)
    centre = network.kernel // 2
    conv_in = np.zeros(expected_shapes(network)["conv_in.weight"])
    conv_out = np.zeros(expected_shapes(network)["conv_out.weight"])
    for ch in range(IMAGE_CHANNELS):
        conv_in[ch, ch, centre, centre] = 1.0
        conv_out[ch, ch, centre, centre] = 1.0
    return params.replace({"conv_in.weight": conv_in, "conv_out.weight": conv_out})


def regularizer_graph(x: Tensor, tensors: Mapping[str, Tensor], network: NetworkConfig) -> Tensor:
    """z = R(x; θ) as graph nodes; x is a complex (ny, nz) tensor."""
    h = conv2d(to_channels(x), tensors["conv_in.weight"], tensors["conv_in.bias"])
    for b in range(network.blocks):
        prefix = f"blocks.{b}"
        branch = relu(conv2d(h, tensors[f"{prefix}.conv1.weight"], tensors[f"{prefix}.conv1.bias"]))
        h = h + conv2d(branch, tensors[f"{prefix}.conv2.weight"], tensors[f"{prefix}.conv2.bias"])
    out = conv2d(h, tensors["conv_out.weight"], tensors["conv_out.bias"])
    return from_channels(out)


def resnet_regularizer(x: ComplexImage, params: NetworkParams) -> ComplexImage:
    if params.network.kernel > min(x.shape):
        raise DimensionError(f"kernel {params.network.kernel} larger than image {x.shape}")
    tensors = {name: constant(array) for name, array in params.arrays.items()}
    return ComplexImage(regularizer_graph(constant(x.data), tensors, params.network).data)


__all__ = [
    "MU",
    "NetworkParams",
    "expected_shapes",
    "identity_params",
    "init_params",
    "layer_plan",
    "regularizer_graph",
    "resnet_regularizer",
    "zero_params",
]
