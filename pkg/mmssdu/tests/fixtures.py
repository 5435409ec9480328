"""Shared builders and dense-matrix oracles for the test suite."""

from __future__ import annotations

from typing import Callable, Dict, List, Tuple

import numpy as np

from mmssdu.api.schemas import DatasetConfig, NetworkConfig, TrainConfig, UnrollConfig
from mmssdu.core.kspace import CoilSensitivities, ComplexImage, KSpaceSample, SamplingPattern

TINY_DATASET = DatasetConfig(n=16, ncoils=2, n_train=2, n_test=2, r_total=2, acs=4, sigma=0.0, seed=0)
TINY_NETWORK = NetworkConfig(channels=4, blocks=1)
TINY_UNROLL = UnrollConfig(t_unroll=2, cg_iters=5, cg_tol=1e-10)
TINY_TRAIN = TrainConfig(epochs=2, k=2, rho=0.4, unroll=TINY_UNROLL, network=TINY_NETWORK, seed=0)


def rng(seed: int = 1234) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_complex(shape, seed: int = 0) -> np.ndarray:
    gen = rng(seed)
    return gen.standard_normal(shape) + 1j * gen.standard_normal(shape)


def random_image(n: int = 8, seed: int = 0) -> ComplexImage:
    return ComplexImage(random_complex((n, n), seed))


def random_coils(ncoils: int, n: int = 8, seed: int = 1) -> CoilSensitivities:
    return CoilSensitivities(random_complex((ncoils, n, n), seed) * 0.5)


def random_pattern(n: int = 8, fraction: float = 0.5, acs: int = 2, seed: int = 2) -> SamplingPattern:
    mask = rng(seed).random((n, n)) < fraction
    lo = n // 2 - acs // 2
    mask[lo : lo + acs, lo : lo + acs] = True
    return SamplingPattern(mask=mask, acs=(acs, acs))


def random_kspace(pattern: SamplingPattern, ncoils: int, seed: int = 3) -> KSpaceSample:
    data = random_complex((ncoils, *pattern.shape), seed) * pattern.mask
    return KSpaceSample(data=data, pattern=pattern)


def centered_dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)[:, None] - n / 2
    j = np.arange(n)[None, :] - n / 2
    return np.exp(-2j * np.pi * k * j / n) / np.sqrt(n)


def naive_dft2(x: np.ndarray) -> np.ndarray:
    """Centered orthonormal 2-D DFT by explicit double sum."""
    ny, nz = x.shape
    out = np.zeros((ny, nz), dtype=complex)
    for ky in range(ny):
        for kz in range(nz):
            acc = 0j
            for jy in range(ny):
                for jz in range(nz):
                    phase = (ky - ny / 2) * (jy - ny / 2) / ny + (kz - nz / 2) * (jz - nz / 2) / nz
                    acc += x[jy, jz] * np.exp(-2j * np.pi * phase)
            out[ky, kz] = acc / np.sqrt(ny * nz)
    return out


def dense_encoding(maps: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """E_Omega as a (ncoils * N, N) matrix acting on row-major image vectors."""
    ny, nz = mask.shape
    fourier = np.kron(centered_dft_matrix(ny), centered_dft_matrix(nz))
    blocks = [np.diag(mask.ravel().astype(float)) @ fourier @ np.diag(m.ravel()) for m in maps]
    return np.vstack(blocks)


def dense_dc(z: np.ndarray, y: np.ndarray, maps: np.ndarray, mask: np.ndarray, mu: float) -> np.ndarray:
    e = dense_encoding(maps, mask)
    a = e.conj().T @ e + mu * np.eye(e.shape[1])
    b = e.conj().T @ (y * mask).ravel() + mu * z.ravel()
    return np.linalg.solve(a, b).reshape(z.shape)


def directional_check(
    loss_fn: Callable[[Dict[str, np.ndarray]], float],
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    name: str,
    direction: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Relative error between the analytic and central-difference directional derivative."""
    plus = {**params, name: params[name] + eps * direction}
    minus = {**params, name: params[name] - eps * direction}
    numeric = (loss_fn(plus) - loss_fn(minus)) / (2 * eps)
    analytic = float(np.sum(grads[name] * direction))
    scale = max(abs(numeric), abs(analytic), 1e-10)
    return abs(numeric - analytic) / scale


def coordinate_sample(
    shape: Tuple[int, ...], gen: np.random.Generator, small: int = 32, count: int = 24
) -> List[Tuple[int, ...]]:
    """Every index of a tensor with at most `small` entries, otherwise `count` distinct random ones."""
    size = int(np.prod(shape, dtype=int))
    flat = np.arange(size) if size <= small else gen.choice(size, size=count, replace=False)
    return [tuple(int(i) for i in np.unravel_index(int(k), shape)) for k in flat]


def elementwise_check(
    loss_fn: Callable[[Dict[str, np.ndarray]], float],
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    name: str,
    index: Tuple[int, ...],
    eps: float = 1e-5,
) -> float:
    """Relative error of one gradient entry against a central difference on that entry.

    Entries far below the tensor's largest gradient are compared on that tensor's scale.
    """
    plus = np.array(params[name], dtype=np.float64, copy=True)
    minus = plus.copy()
    plus[index] += eps
    minus[index] -= eps
    numeric = (loss_fn({**params, name: plus}) - loss_fn({**params, name: minus})) / (2 * eps)
    grad = np.asarray(grads[name], dtype=np.float64)
    analytic = float(grad[index])
    floor = max(1e-3 * float(np.max(np.abs(grad))), 1e-10)
    return abs(numeric - analytic) / max(abs(numeric), abs(analytic), floor)
