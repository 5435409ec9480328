"""Conjugate gradient on Hermitian positive definite systems, the DC unit and CG-SENSE.

CG runs on autodiff tensors so that a fixed number of iterations can be
differentiated end to end; with constant inputs it is an ordinary solver.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from mmssdu.api.schemas import UnrollConfig
from mmssdu.core.kspace import COMPLEX_DTYPE, CoilSensitivities, ComplexImage, KSpaceSample, adjoint
from mmssdu.errors import ConfigError, DimensionError, NumericalError
from mmssdu.nn.autodiff import Tensor, as_tensor, constant, gram_op, inner

logger = logging.getLogger(__name__)

LinearOperator = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class CGResult:
    x: Tensor
    iterations: int
    residual: float  # ||r|| / ||rhs||, from the CG recursion


def cg_normal_solve(
    apply_a: LinearOperator,
    rhs,
    iters: int,
    tol: float,
    require_convergence: bool = False,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> CGResult:
    """Solve A x = rhs from x = 0 for at most `iters` iterations or until ||r|| <= tol ||rhs||."""
    rhs = as_tensor(rhs)
    if iters < 1:
        raise ConfigError(f"cg iterations must be >= 1, got {iters}")
    rhs_norm = float(np.linalg.norm(rhs.data.ravel()))
    if not math.isfinite(rhs_norm):
        raise NumericalError("non-finite right-hand side", iteration=0)
    x: Tensor = constant(np.zeros(rhs.data.shape, dtype=np.result_type(rhs.data, COMPLEX_DTYPE)))
    if rhs_norm == 0.0:
        return CGResult(x=x, iterations=0, residual=0.0)

    r = rhs
    p = rhs
    rs = inner(r, r)
    residual = 1.0
    iterations = 0
    for i in range(1, iters + 1):
        ap = apply_a(p)
        curvature = inner(p, ap)
        if not np.isfinite(curvature.data):
            raise NumericalError("non-finite curvature in CG", iteration=i)
        if curvature.data <= 0:
            raise NumericalError("operator is not positive definite", iteration=i)
        alpha = rs / curvature
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = inner(r, r)
        if not (np.isfinite(rs_new.data) and np.all(np.isfinite(x.data))):
            raise NumericalError("non-finite CG iterate", iteration=i)
        iterations = i
        residual = math.sqrt(float(rs_new.data)) / rhs_norm
        if callback is not None:
            callback(i, x.data)
        if residual <= tol:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new

    logger.debug("CG finished after %d iterations, relative residual %.3e", iterations, residual)
    if require_convergence and residual > tol:
        raise NumericalError(f"CG did not reach tol {tol:g} (residual {residual:.3e})", iteration=iterations)
    return CGResult(x=x, iterations=iterations, residual=residual)


def normal_operator(maps: np.ndarray, mask: np.ndarray, mu) -> LinearOperator:
    """p -> (E^H E + mu I) p on the given mask."""
    mu = as_tensor(mu)

    def apply(p: Tensor) -> Tensor:
        return gram_op(p, maps, mask) + mu * p

    return apply


def dc_solve(z, y: np.ndarray, maps: np.ndarray, mask: np.ndarray, mu, cfg: UnrollConfig) -> CGResult:
    """argmin_x ||y - E x||^2 + mu ||x - z||^2 with graph-valued z and mu."""
    z, mu = as_tensor(z), as_tensor(mu)
    if float(mu.data) < 0:
        raise ConfigError(f"mu must be non-negative, got {float(mu.data)}")
    rhs = constant(adjoint(y, maps, mask)) + mu * z
    return cg_normal_solve(
        normal_operator(maps, mask, mu),
        rhs,
        iters=cfg.cg_iters,
        tol=cfg.cg_tol,
        require_convergence=float(mu.data) == 0.0,
    )


def _check(y: KSpaceSample, coils: CoilSensitivities) -> None:
    if y.pattern.shape != coils.shape or y.ncoils != coils.ncoils:
        raise DimensionError(
            f"k-space {y.data.shape} does not match coil maps {coils.maps.shape}"
        )


def dc_unit(z: ComplexImage, y: KSpaceSample, coils: CoilSensitivities, mu: float, cfg: UnrollConfig) -> ComplexImage:
    _check(y, coils)
    if z.shape != coils.shape:
        raise DimensionError(f"image {z.shape} does not match coil maps {coils.shape}")
    result = dc_solve(constant(z.data), y.data, coils.maps, y.pattern.mask, np.asarray(float(mu)), cfg)
    return ComplexImage(result.x.data)


def cg_sense(y: KSpaceSample, coils: CoilSensitivities, l2_weight: float, cfg: UnrollConfig) -> ComplexImage:
    """Tikhonov-regularized SENSE: (E^H E + l2_weight I) x = E^H y."""
    if l2_weight < 0:
        raise ConfigError(f"l2_weight must be non-negative, got {l2_weight}")
    _check(y, coils)
    zeros = np.zeros(coils.shape, dtype=COMPLEX_DTYPE)
    result = dc_solve(constant(zeros), y.data, coils.maps, y.pattern.mask, np.asarray(float(l2_weight)), cfg)
    if result.residual > cfg.cg_tol:
        logger.warning(
            "CG-SENSE stopped at %d iterations with relative residual %.3e", result.iterations, result.residual
        )
    return ComplexImage(result.x.data)


__all__ = [
    "CGResult",
    "cg_normal_solve",
    "cg_sense",
    "dc_solve",
    "dc_unit",
    "normal_operator",
]
