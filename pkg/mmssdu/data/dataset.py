"""Per-scan training records and the phantom benchmark bundle."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from mmssdu.core.kspace import COMPLEX_DTYPE, CoilSensitivities, ComplexImage, KSpaceSample, SamplingPattern
from mmssdu.core.sampling import PartitionSet
from mmssdu.errors import DimensionError, PartitionError


@dataclass(frozen=True)
class TrainingSample:
    """One scan: acquired k-space, its coils and optionally the fully sampled reference.

    `image` is the ground-truth image in physical units (not normalized), kept
    for evaluation only.
    """

    y_omega: KSpaceSample
    coils: CoilSensitivities
    y_ref: Optional[np.ndarray] = None
    partition: Optional[PartitionSet] = None
    image: Optional[ComplexImage] = None

    def __post_init__(self) -> None:
        if self.y_omega.pattern.shape != self.coils.shape or self.y_omega.ncoils != self.coils.ncoils:
            raise DimensionError(
                f"k-space {self.y_omega.data.shape} does not match coil maps {self.coils.maps.shape}"
            )
        if self.y_ref is not None:
            y_ref = np.array(self.y_ref, dtype=COMPLEX_DTYPE, copy=True)
            if y_ref.shape != self.y_omega.data.shape:
                raise DimensionError(f"reference k-space {y_ref.shape} differs from {self.y_omega.data.shape}")
            if not np.array_equal(y_ref * self.y_omega.pattern.mask, self.y_omega.data):
                raise DimensionError("acquired k-space is not the reference restricted to the pattern")
            y_ref.setflags(write=False)
            object.__setattr__(self, "y_ref", y_ref)
        if self.partition is not None:
            for j, (theta, lam) in enumerate(self.partition.pairs()):
                if np.any((theta | lam) & ~self.pattern.mask):
                    raise PartitionError(f"partition {j} reaches outside the acquired pattern")
        if self.image is not None and self.image.shape != self.coils.shape:
            raise DimensionError(f"image {self.image.shape} does not match coil maps {self.coils.shape}")

    @property
    def pattern(self) -> SamplingPattern:
        return self.y_omega.pattern

    @property
    def scale(self) -> float:
        return self.y_omega.scale

    def with_partition(self, partition: Optional[PartitionSet]) -> "TrainingSample":
        return replace(self, partition=partition)


@dataclass(frozen=True)
class DeskDataset:
    pattern: SamplingPattern
    coils: CoilSensitivities
    train: Tuple[TrainingSample, ...]
    test: Tuple[TrainingSample, ...]
    meta: Dict[str, Any] = field(default_factory=dict)

    def split(self, name: str) -> Tuple[TrainingSample, ...]:
        if name not in ("train", "test"):
            raise KeyError(name)
        return getattr(self, name)


__all__ = ["DeskDataset", "TrainingSample"]
