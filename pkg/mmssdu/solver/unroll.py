"""T-step unrolled reconstruction alternating the regularizer and the DC unit."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Mapping, Tuple

import numpy as np

from mmssdu.api.schemas import NetworkConfig, UnrollConfig
from mmssdu.core.kspace import CoilSensitivities, ComplexImage, KSpaceSample, adjoint
from mmssdu.errors import DimensionError
from mmssdu.nn.autodiff import Tensor, constant
from mmssdu.nn.resnet import MU, NetworkParams, regularizer_graph
from mmssdu.solver.cg import dc_solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnrollTrace:
    x: Tuple[ComplexImage, ...]  # x^(0) .. x^(T)
    z: Tuple[ComplexImage, ...]  # z^(0) .. z^(T-1)

    def __post_init__(self) -> None:
        if len(self.x) != len(self.z) + 1:
            raise DimensionError(f"trace holds {len(self.x)} x-iterates for {len(self.z)} z-iterates")

    @property
    def t_unroll(self) -> int:
        return len(self.z)

    @property
    def final(self) -> ComplexImage:
        return self.x[-1]


def unroll_graph(
    y: np.ndarray,
    maps: np.ndarray,
    mask: np.ndarray,
    tensors: Mapping[str, Tensor],
    network: NetworkConfig,
    cfg: UnrollConfig,
) -> Tuple[List[Tensor], List[Tensor]]:
    """Build x^(0..T) and z^(0..T-1) as graph nodes sharing one set of weights.

    The DC units only ever see `y * mask`, so values outside the mask cannot
    enter the reconstruction.
    """
    xs: List[Tensor] = [constant(adjoint(y, maps, mask))]
    zs: List[Tensor] = []
    for i in range(cfg.t_unroll):
        z = regularizer_graph(xs[-1], tensors, network)
        result = dc_solve(z, y * mask, maps, mask, tensors[MU], cfg)
        logger.debug("unroll step %d: CG %d iterations, residual %.3e", i + 1, result.iterations, result.residual)
        zs.append(z)
        xs.append(result.x)
    return xs, zs


def unrolled_forward(
    y: KSpaceSample,
    coils: CoilSensitivities,
    params: NetworkParams,
    cfg: UnrollConfig,
) -> UnrollTrace:
    if y.pattern.shape != coils.shape or y.ncoils != coils.ncoils:
        raise DimensionError(f"k-space {y.data.shape} does not match coil maps {coils.maps.shape}")
    tensors = {name: constant(array) for name, array in params.arrays.items()}
    xs, zs = unroll_graph(y.data, coils.maps, y.pattern.mask, tensors, params.network, cfg)
    return UnrollTrace(
        x=tuple(ComplexImage(t.data) for t in xs),
        z=tuple(ComplexImage(t.data) for t in zs),
    )


__all__ = ["UnrollTrace", "unroll_graph", "unrolled_forward"]
