"""Acquisition undersampling patterns and Theta/Lambda partitions of the acquired set."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np

from mmssdu.api.schemas import MaskDistribution, UndersamplingSpec
from mmssdu.core.kspace import SamplingPattern, center_block
from mmssdu.core.rng import derive_seed, make_rng
from mmssdu.errors import ConfigError, PartitionError

logger = logging.getLogger(__name__)

UNIFORM = MaskDistribution(kind="uniform")


@dataclass(frozen=True)
class PartitionSet:
    theta: Tuple[np.ndarray, ...]
    lambda_: Tuple[np.ndarray, ...]
    rho: float
    k: int
    seed: int
    scheme: Literal["random", "cyclic"] = "random"

    def __post_init__(self) -> None:
        if len(self.theta) != self.k or len(self.lambda_) != self.k:
            raise PartitionError(f"expected {self.k} mask pairs, got {len(self.theta)}/{len(self.lambda_)}")

    def pairs(self):
        return zip(self.theta, self.lambda_)

    def validate(self, pattern: SamplingPattern) -> None:
        for j, (theta, lam) in enumerate(self.pairs()):
            check_partition(pattern, theta, lam, index=j)


def check_partition(pattern: SamplingPattern, theta: np.ndarray, lam: np.ndarray, index: int = 0) -> None:
    """Raise PartitionError unless Theta and Lambda are disjoint and cover Omega."""
    if np.any(theta & lam):
        raise PartitionError(f"partition {index}: Theta and Lambda overlap")
    if not np.array_equal(theta | lam, pattern.mask):
        raise PartitionError(f"partition {index}: Theta union Lambda differs from the acquired pattern")
    if np.any(lam & pattern.acs_mask()):
        raise PartitionError(f"partition {index}: ACS points assigned to Lambda")


def round_half_away(value: float) -> int:
    return int(math.floor(value + 0.5)) if value >= 0 else -int(math.floor(-value + 0.5))


def gen_sheared_pattern(ny: int, nz: int, spec: UndersamplingSpec) -> SamplingPattern:
    """Sheared k_y-k_z lattice plus a fully sampled center ACS block."""
    if spec.acs_h > ny or spec.acs_w > nz:
        raise ConfigError(f"ACS block {spec.acs_h}x{spec.acs_w} larger than grid {ny}x{nz}")
    if spec.r_y > ny or spec.r_z > nz:
        raise ConfigError(f"acceleration factors {spec.r_y}x{spec.r_z} exceed grid {ny}x{nz}")
    yy, zz = np.meshgrid(np.arange(ny), np.arange(nz), indexing="ij")
    lattice = (yy % spec.r_y == 0) & (zz % spec.r_z == (spec.shear_step * (yy // spec.r_y)) % spec.r_z)
    mask = lattice.copy()
    mask[center_block((ny, nz), (spec.acs_h, spec.acs_w))] = True
    pattern = SamplingPattern(mask=mask, acs=(spec.acs_h, spec.acs_w))
    logger.debug(
        "Sheared pattern %dx%d R=%d (%dx%d, shear %d): |Omega|=%d, effective R=%.3f",
        ny, nz, spec.r_total, spec.r_y, spec.r_z, spec.shear_step, pattern.n_sampled, pattern.acceleration,
    )
    return pattern


def intersect_patterns(acquired: SamplingPattern, retrospective: SamplingPattern) -> SamplingPattern:
    """Retrospectively undersample an already accelerated acquisition."""
    if acquired.shape != retrospective.shape:
        raise ConfigError(f"pattern shapes differ: {acquired.shape} vs {retrospective.shape}")
    return SamplingPattern(mask=acquired.mask & retrospective.mask, acs=retrospective.acs)


def _selection_weights(shape: Tuple[int, int], candidates: np.ndarray, dist: MaskDistribution) -> np.ndarray:
    ny, nz = shape
    rows, cols = np.unravel_index(candidates, shape)
    sigma = dist.sigma_frac * min(ny, nz)
    log_w = -((rows - ny // 2) ** 2 + (cols - nz // 2) ** 2) / (2.0 * sigma**2)
    # shifted so the candidate nearest the centre has weight 1
    weights = np.exp(log_w - log_w.max())
    return weights / weights.sum()


def selection_weights(pattern: SamplingPattern, dist: MaskDistribution) -> np.ndarray:
    """Per-pixel Lambda selection weights on the grid (zero outside the selectable set)."""
    candidates = np.flatnonzero(pattern.selectable_mask())
    out = np.zeros(pattern.mask.size)
    if dist.kind == "uniform":
        out[candidates] = 1.0 / len(candidates)
    else:
        out[candidates] = _selection_weights(pattern.shape, candidates, dist)
    return out.reshape(pattern.shape)


def split_ssdu(
    pattern: SamplingPattern,
    rho: float,
    dist: MaskDistribution = UNIFORM,
    seed: int = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Split Omega into (Theta, Lambda) with |Lambda| = round(rho * |selectable|)."""
    if not 0 < rho < 1:
        raise ConfigError(f"rho must lie in (0, 1), got {rho}")
    candidates = np.flatnonzero(pattern.selectable_mask())
    n_lambda = round_half_away(rho * len(candidates))
    if n_lambda < 1:
        raise ConfigError(f"rho={rho} on {len(candidates)} selectable points leaves Lambda empty")

    rng = make_rng(seed)
    if dist.kind == "uniform":
        chosen = rng.choice(candidates, size=n_lambda, replace=False)
    else:
        weights = _selection_weights(pattern.shape, candidates, dist)
        reachable = int(np.count_nonzero(weights))
        if reachable < n_lambda:
            raise ConfigError(
                f"gaussian sigma_frac={dist.sigma_frac} leaves {reachable} selectable points with nonzero weight, "
                f"{n_lambda} needed"
            )
        chosen = rng.choice(candidates, size=n_lambda, replace=False, p=weights)

    lam = np.zeros(pattern.mask.size, dtype=bool)
    lam[chosen] = True
    lam = lam.reshape(pattern.shape)
    theta = pattern.mask & ~lam
    return theta, lam


def gen_multi_mask(
    pattern: SamplingPattern,
    k: int,
    rho: float,
    dist: MaskDistribution = UNIFORM,
    seed: int = 0,
) -> PartitionSet:
    """K independent SSDU splits; split j is keyed by derive_seed(seed, j)."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    splits = [split_ssdu(pattern, rho, dist, derive_seed(seed, j)) for j in range(k)]
    return PartitionSet(
        theta=tuple(theta for theta, _ in splits),
        lambda_=tuple(lam for _, lam in splits),
        rho=rho,
        k=k,
        seed=seed,
    )


def gen_cyclic_multi_mask(pattern: SamplingPattern, k: int, seed: int = 0) -> PartitionSet:
    """Deal the shuffled selectable points into K bins so that {Lambda_j} partitions them."""
    if k < 2:
        raise ConfigError(f"cyclic multi-mask needs k >= 2, got {k}")
    candidates = np.flatnonzero(pattern.selectable_mask())
    if k > len(candidates):
        raise ConfigError(f"k={k} exceeds the {len(candidates)} selectable points")
    order = make_rng(seed).permutation(candidates)
    thetas, lambdas = [], []
    # array_split hands the first (n mod k) bins one extra point
    for chunk in np.array_split(order, k):
        lam = np.zeros(pattern.mask.size, dtype=bool)
        lam[chunk] = True
        lam = lam.reshape(pattern.shape)
        lambdas.append(lam)
        thetas.append(pattern.mask & ~lam)
    return PartitionSet(theta=tuple(thetas), lambda_=tuple(lambdas), rho=1.0 / k, k=k, seed=seed, scheme="cyclic")


__all__ = [
    "PartitionSet",
    "check_partition",
    "gen_cyclic_multi_mask",
    "gen_multi_mask",
    "gen_sheared_pattern",
    "intersect_patterns",
    "round_half_away",
    "selection_weights",
    "split_ssdu",
]
