"""Complex images, centered FFTs and the multi-coil encoding operator E_Omega."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from mmssdu.errors import ConfigError, DimensionError

COMPLEX_DTYPE = np.complex128
FFT_AXES = (-2, -1)


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


def center_block(shape: Tuple[int, int], size: Tuple[int, int]) -> Tuple[slice, slice]:
    """Center-anchored (h, w) rectangle of a (ny, nz) grid as index slices."""
    (ny, nz), (h, w) = shape, size
    y0 = ny // 2 - h // 2
    z0 = nz // 2 - w // 2
    return slice(y0, y0 + h), slice(z0, z0 + w)


@dataclass(frozen=True)
class ComplexImage:
    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise DimensionError(f"ComplexImage must be 2-D, got shape {data.shape}")
        if data.shape[0] < 2 or data.shape[1] < 2:
            raise DimensionError(f"ComplexImage needs ny, nz >= 2, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DimensionError("ComplexImage contains non-finite entries")
        object.__setattr__(self, "data", _frozen(data, COMPLEX_DTYPE))

    @property
    def ny(self) -> int:
        return int(self.data.shape[0])

    @property
    def nz(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.ny, self.nz)

    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)


@dataclass(frozen=True)
class SamplingPattern:
    mask: np.ndarray
    acs: Tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask)
        if mask.ndim != 2:
            raise DimensionError(f"sampling mask must be 2-D, got shape {mask.shape}")
        mask = _frozen(mask, bool)
        if not mask.any():
            raise ConfigError("sampling pattern has no sampled locations")
        acs = (int(self.acs[0]), int(self.acs[1]))
        if acs[0] < 0 or acs[1] < 0 or acs[0] > mask.shape[0] or acs[1] > mask.shape[1]:
            raise ConfigError(f"ACS block {acs} does not fit grid {mask.shape}")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "acs", acs)
        if not mask[self.acs_slices()].all():
            raise ConfigError("ACS block is not fully sampled in the mask")

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.mask.shape)  # type: ignore[return-value]

    @property
    def n_sampled(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def acceleration(self) -> float:
        return self.mask.size / self.n_sampled

    def acs_slices(self) -> Tuple[slice, slice]:
        return center_block(self.shape, self.acs)

    def acs_mask(self) -> np.ndarray:
        out = np.zeros(self.mask.shape, dtype=bool)
        out[self.acs_slices()] = True
        return out

    def selectable_mask(self) -> np.ndarray:
        """Sampled points that may enter a loss set (everything outside the ACS block)."""
        return self.mask & ~self.acs_mask()

    def restricted(self, mask: np.ndarray) -> "SamplingPattern":
        """Sub-pattern keeping the same ACS block; mask must be a subset of this pattern."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.mask.shape:
            raise DimensionError(f"mask shape {mask.shape} differs from pattern {self.mask.shape}")
        if np.any(mask & ~self.mask):
            raise ConfigError("sub-pattern contains locations outside the acquired pattern")
        return SamplingPattern(mask=mask, acs=self.acs)


@dataclass(frozen=True)
class CoilSensitivities:
    maps: np.ndarray

    def __post_init__(self) -> None:
        maps = np.asarray(self.maps)
        if maps.ndim != 3 or maps.shape[0] < 1:
            raise DimensionError(f"coil maps must be (ncoils, ny, nz), got shape {maps.shape}")
        if not np.all(np.isfinite(maps)):
            raise DimensionError("coil maps contain non-finite entries")
        object.__setattr__(self, "maps", _frozen(maps, COMPLEX_DTYPE))

    @property
    def ncoils(self) -> int:
        return int(self.maps.shape[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.maps.shape[1:])  # type: ignore[return-value]

    def sum_of_squares(self) -> np.ndarray:
        return np.sum(np.abs(self.maps) ** 2, axis=0)


@dataclass(frozen=True)
class KSpaceSample:
    data: np.ndarray
    pattern: SamplingPattern
    scale: float = 1.0

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[0] < 1:
            raise DimensionError(f"k-space must be (ncoils, ny, nz), got shape {data.shape}")
        if data.shape[1:] != self.pattern.shape:
            raise DimensionError(f"k-space grid {data.shape[1:]} differs from pattern {self.pattern.shape}")
        if not self.scale > 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if np.any(data[:, ~self.pattern.mask] != 0):
            raise DimensionError("k-space has non-zero values outside the sampling pattern")
        object.__setattr__(self, "data", _frozen(data, COMPLEX_DTYPE))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def ncoils(self) -> int:
        return int(self.data.shape[0])

    def restricted(self, mask: np.ndarray) -> "KSpaceSample":
        """Keep only the values on `mask` (a subset of the pattern)."""
        sub = self.pattern.restricted(mask)
        return KSpaceSample(data=self.data * sub.mask, pattern=sub, scale=self.scale)


def check_fft_shape(shape: Tuple[int, ...]) -> None:
    ny, nz = shape[-2], shape[-1]
    if not (_is_power_of_two(ny) and _is_power_of_two(nz)) or ny < 2 or nz < 2:
        raise DimensionError(f"FFT grid must be powers of two >= 2, got {ny}x{nz}")


def fft2c(array: np.ndarray) -> np.ndarray:
    """Orthonormal centered 2-D DFT over the last two axes."""
    check_fft_shape(array.shape)
    shifted = np.fft.ifftshift(array, axes=FFT_AXES)
    return np.fft.fftshift(np.fft.fft2(shifted, axes=FFT_AXES, norm="ortho"), axes=FFT_AXES)


def ifft2c(array: np.ndarray) -> np.ndarray:
    """Inverse of fft2c."""
    check_fft_shape(array.shape)
    shifted = np.fft.ifftshift(array, axes=FFT_AXES)
    return np.fft.fftshift(np.fft.ifft2(shifted, axes=FFT_AXES, norm="ortho"), axes=FFT_AXES)


def fft2_centered(img: ComplexImage) -> np.ndarray:
    return fft2c(img.data)


def ifft2_centered(kspace: np.ndarray) -> ComplexImage:
    return ComplexImage(ifft2c(np.asarray(kspace, dtype=COMPLEX_DTYPE)))


def encode(x: np.ndarray, maps: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """E_Omega on raw arrays: mask * F(map_c * x) for every coil."""
    return fft2c(maps * x[None, :, :]) * mask


def adjoint(y: np.ndarray, maps: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """E_Omega^H on raw arrays: sum_c conj(map_c) * F^-1(mask * y_c)."""
    return np.sum(np.conj(maps) * ifft2c(y * mask), axis=0)


def _check_shapes(grid: Tuple[int, int], coils: CoilSensitivities, pattern: SamplingPattern) -> None:
    if coils.shape != tuple(grid) or pattern.shape != tuple(grid):
        raise DimensionError(
            f"shape mismatch: image {tuple(grid)}, coils {coils.shape}, pattern {pattern.shape}"
        )


def apply_encoding(x: ComplexImage, coils: CoilSensitivities, pattern: SamplingPattern) -> KSpaceSample:
    _check_shapes(x.shape, coils, pattern)
    return KSpaceSample(data=encode(x.data, coils.maps, pattern.mask), pattern=pattern)


def apply_adjoint(y: KSpaceSample, coils: CoilSensitivities) -> ComplexImage:
    _check_shapes(y.pattern.shape, coils, y.pattern)
    if y.ncoils != coils.ncoils:
        raise DimensionError(f"k-space has {y.ncoils} coils, sensitivities have {coils.ncoils}")
    return ComplexImage(adjoint(y.data, coils.maps, y.pattern.mask))


def zero_filled_recon(y: KSpaceSample, coils: CoilSensitivities) -> ComplexImage:
    """Network input x^(0): the adjoint applied to zero-filled k-space."""
    return apply_adjoint(y, coils)


__all__ = [
    "COMPLEX_DTYPE",
    "CoilSensitivities",
    "ComplexImage",
    "KSpaceSample",
    "SamplingPattern",
    "adjoint",
    "center_block",
    "apply_adjoint",
    "apply_encoding",
    "check_fft_shape",
    "encode",
    "fft2_centered",
    "fft2c",
    "ifft2_centered",
    "ifft2c",
    "zero_filled_recon",
]
