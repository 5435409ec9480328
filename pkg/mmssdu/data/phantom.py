"""Synthetic phantoms, analytic coil sensitivities and simulated acquisitions."""

from __future__ import annotations

import logging
import math
from typing import Tuple

import numpy as np

from mmssdu.api.schemas import DatasetConfig, NoiseSpec
from mmssdu.core.kspace import (
    COMPLEX_DTYPE,
    CoilSensitivities,
    ComplexImage,
    KSpaceSample,
    SamplingPattern,
    apply_encoding,
    check_fft_shape,
)
from mmssdu.core.rng import derive_seed, make_rng
from mmssdu.core.sampling import gen_sheared_pattern
from mmssdu.data.dataset import DeskDataset, TrainingSample
from mmssdu.errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)

MIN_PHANTOM_SIZE = 16

# (intensity, semi-axis x, semi-axis y, centre x, centre y, angle in degrees)
SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)

COIL_RADIUS = 1.2
COIL_WIDTH = 1.0
COIL_PHASE_SLOPE = math.pi / 4

# stream ids under a dataset seed
_PHANTOM, _NOISE = 0, 1
_SPLITS = {"train": 0, "test": 1}


def grid_coordinates(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """(x, y) in [-1, 1) with x along columns and y along rows, index j -> (j - n/2) / (n/2)."""
    axis = (np.arange(n) - n / 2) / (n / 2)
    y, x = np.meshgrid(axis, axis, indexing="ij")
    return x, y


def _ellipse(x: np.ndarray, y: np.ndarray, a: float, b: float, x0: float, y0: float, angle_deg: float) -> np.ndarray:
    theta = math.radians(angle_deg)
    dx, dy = x - x0, y - y0
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def phantom_support(n: int) -> np.ndarray:
    """Outer ellipse of the phantom; the image is exactly zero outside it."""
    x, y = grid_coordinates(n)
    _, a, b, x0, y0, angle = SHEPP_LOGAN[0]
    return _ellipse(x, y, a, b, x0, y0, angle)


def make_phantom(n: int, variant_seed: int) -> ComplexImage:
    """Shepp-Logan style phantom with jittered inner ellipses and a smooth phase."""
    if n < MIN_PHANTOM_SIZE:
        raise ConfigError(f"phantom size must be >= {MIN_PHANTOM_SIZE}, got {n}")
    try:
        check_fft_shape((n, n))
    except DimensionError as exc:
        raise ConfigError(str(exc)) from exc

    rng = make_rng(variant_seed, _PHANTOM)
    x, y = grid_coordinates(n)
    support = phantom_support(n)
    magnitude = np.zeros((n, n))
    for index, (intensity, a, b, x0, y0, angle) in enumerate(SHEPP_LOGAN):
        if index >= 2:
            intensity *= rng.uniform(0.8, 1.2)
            a *= rng.uniform(0.9, 1.1)
            b *= rng.uniform(0.9, 1.1)
            x0 += rng.uniform(-0.03, 0.03)
            y0 += rng.uniform(-0.03, 0.03)
            angle += rng.uniform(-5.0, 5.0)
        magnitude += intensity * _ellipse(x, y, a, b, x0, y0, angle)
    magnitude = np.clip(magnitude, 0.0, 1.0) * support

    c = rng.uniform(-math.pi / 4, math.pi / 4, size=4)
    phase = c[0] * x + c[1] * y + c[2] * x * y + c[3] * (x**2 - y**2)
    return ComplexImage(magnitude * np.exp(1j * phase))


def simulate_coils(n: int, ncoils: int) -> CoilSensitivities:
    """Gaussian lobes centred on a ring around the field of view, with linear phase ramps.

    A single coil is the all-ones map, which makes E unitary under full sampling.
    """
    if ncoils < 1:
        raise ConfigError(f"ncoils must be >= 1, got {ncoils}")
    if ncoils == 1:
        return CoilSensitivities(np.ones((1, n, n), dtype=COMPLEX_DTYPE))
    x, y = grid_coordinates(n)
    maps = np.empty((ncoils, n, n), dtype=COMPLEX_DTYPE)
    for c in range(ncoils):
        angle = 2.0 * math.pi * c / ncoils
        cx, cy = COIL_RADIUS * math.cos(angle), COIL_RADIUS * math.sin(angle)
        lobe = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * COIL_WIDTH**2))
        ramp = COIL_PHASE_SLOPE * (math.cos(angle) * x + math.sin(angle) * y)
        maps[c] = lobe * np.exp(1j * ramp)
    return CoilSensitivities(maps)


def simulate_acquisition(
    img: ComplexImage,
    coils: CoilSensitivities,
    pattern: SamplingPattern,
    noise: NoiseSpec = NoiseSpec(),
) -> KSpaceSample:
    """y = E_Omega x + mask * sigma * (g1 + i g2) / sqrt(2).

    Noise is drawn on the full grid before masking, so the same seed under a
    sub-pattern yields exactly the restriction of the full-grid acquisition.
    """
    clean = apply_encoding(img, coils, pattern)
    if noise.sigma == 0:
        return clean
    rng = make_rng(noise.seed)
    shape = clean.data.shape
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    data = clean.data + pattern.mask * (noise.sigma / math.sqrt(2.0)) * g
    return KSpaceSample(data=data, pattern=pattern)


def full_pattern(n: int) -> SamplingPattern:
    return SamplingPattern(mask=np.ones((n, n), dtype=bool))


def make_sample(
    image: ComplexImage,
    coils: CoilSensitivities,
    pattern: SamplingPattern,
    noise: NoiseSpec,
) -> TrainingSample:
    """Noisy fully sampled reference plus its restriction to the pattern."""
    y_ref = simulate_acquisition(image, coils, full_pattern(image.ny), noise)
    y_omega = KSpaceSample(data=y_ref.data * pattern.mask, pattern=pattern)
    return TrainingSample(y_omega=y_omega, coils=coils, y_ref=y_ref.data, image=image)


def make_desk_dataset(config: DatasetConfig) -> DeskDataset:
    pattern = gen_sheared_pattern(config.n, config.n, config.undersampling())
    coils = simulate_coils(config.n, config.ncoils)
    splits = {}
    for split, count in (("train", config.n_train), ("test", config.n_test)):
        stream = _SPLITS[split]
        samples = []
        for i in range(count):
            image = make_phantom(config.n, derive_seed(config.seed, _PHANTOM, stream, i))
            noise = NoiseSpec(sigma=config.sigma, seed=derive_seed(config.seed, _NOISE, stream, i))
            samples.append(make_sample(image, coils, pattern, noise))
        splits[split] = tuple(samples)
    logger.info(
        "Generated phantom dataset %dx%d, %d coils, R=%d (effective %.2f), %d train / %d test, sigma=%g",
        config.n, config.n, config.ncoils, config.r_total, pattern.acceleration,
        config.n_train, config.n_test, config.sigma,
    )
    return DeskDataset(
        pattern=pattern,
        coils=coils,
        train=splits["train"],
        test=splits["test"],
        meta=config.model_dump(),
    )


__all__ = [
    "full_pattern",
    "grid_coordinates",
    "make_desk_dataset",
    "make_phantom",
    "make_sample",
    "phantom_support",
    "simulate_acquisition",
    "simulate_coils",
]
