"""Dataset normalization, the supervised / SSDU / multi-mask training loops and test-time recon."""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from mmssdu.api.schemas import TrainConfig, TrainMode, UnrollConfig
from mmssdu.core.kspace import CoilSensitivities, ComplexImage, KSpaceSample
from mmssdu.core.rng import derive_seed, make_rng
from mmssdu.core.sampling import PartitionSet, check_partition, gen_cyclic_multi_mask, gen_multi_mask
from mmssdu.data.dataset import TrainingSample
from mmssdu.errors import ConfigError, ModeError, NormalizationError, PartitionError, TrainingError
from mmssdu.nn.adam import adam_step, init_adam
from mmssdu.nn.autodiff import ComputeGraph, backward, encode_op
from mmssdu.nn.loss import loss_graph
from mmssdu.nn.resnet import MU, NetworkParams, init_params
from mmssdu.solver.unroll import unroll_graph, unrolled_forward

logger = logging.getLogger(__name__)

DEBUG_LEAKAGE = os.getenv("SSDU_DEBUG_LEAKAGE", "false").lower() == "true"
CSV_FLOAT_FORMAT = "%.17g"

# stream ids under the training seed
_PARTITION, _ORDER, _HOLDOUT = 0, 1, 2

LOG_COLUMNS = ["epoch", "step", "mode", "k", "rho", "loss", "wall_time"]


@dataclass(frozen=True)
class LogRow:
    epoch: int
    step: int
    mode: str
    k: int
    rho: float
    loss: float
    wall_time: float


@dataclass(frozen=True)
class TrainResult:
    params: NetworkParams
    epoch_losses: Tuple[float, ...]
    steps: int
    log_rows: Tuple[LogRow, ...] = ()


def normalize_dataset(samples: Sequence[TrainingSample]) -> List[TrainingSample]:
    """Scale every sample so that max |y_omega| = 1; the factor is folded into `scale`."""
    if not samples:
        raise NormalizationError("cannot normalize an empty dataset")
    out = []
    for index, sample in enumerate(samples):
        factor = float(np.max(np.abs(sample.y_omega.data)))
        if factor == 0.0 or not math.isfinite(factor):
            raise NormalizationError(f"sample {index} has no usable k-space signal (max |y| = {factor})")
        y_omega = KSpaceSample(
            data=sample.y_omega.data / factor,
            pattern=sample.pattern,
            scale=sample.scale * factor,
        )
        y_ref = None if sample.y_ref is None else sample.y_ref / factor
        out.append(replace(sample, y_omega=y_omega, y_ref=y_ref))
    return out


def denormalize_sample(sample: TrainingSample) -> TrainingSample:
    """Undo normalize_dataset: back to physical units with scale 1."""
    factor = sample.scale
    y_omega = KSpaceSample(data=sample.y_omega.data * factor, pattern=sample.pattern, scale=1.0)
    y_ref = None if sample.y_ref is None else sample.y_ref * factor
    return replace(sample, y_omega=y_omega, y_ref=y_ref)


def holdout_split(
    samples: Sequence[TrainingSample], n_val: int, seed: int = 0
) -> Tuple[Tuple[TrainingSample, ...], Tuple[TrainingSample, ...]]:
    """Seeded (train, validation) holdout; both keep the original sample order."""
    if not 1 <= n_val < len(samples):
        raise ConfigError(f"n_val must lie in [1, {len(samples) - 1}], got {n_val}")
    chosen = set(make_rng(seed, _HOLDOUT).permutation(len(samples))[:n_val].tolist())
    train = tuple(s for i, s in enumerate(samples) if i not in chosen)
    val = tuple(s for i, s in enumerate(samples) if i in chosen)
    return train, val


def make_partition(sample: TrainingSample, index: int, config: TrainConfig, epoch: Optional[int] = None) -> PartitionSet:
    """Partition set of sample `index`; fixed per sample unless an epoch is given."""
    stream = (_PARTITION, index) if epoch is None else (_PARTITION, index, epoch + 1)
    seed = derive_seed(config.seed, *stream)
    if config.mode is TrainMode.cyclic:
        return gen_cyclic_multi_mask(sample.pattern, config.k, seed)
    return gen_multi_mask(sample.pattern, config.partitions_per_sample, config.rho, config.dist, seed)


def assign_partitions(
    samples: Sequence[TrainingSample], config: TrainConfig, epoch: Optional[int] = None
) -> List[TrainingSample]:
    out = []
    for index, sample in enumerate(samples):
        partition = sample.partition
        if partition is None or epoch is not None:
            partition = make_partition(sample, index, config, epoch)
        elif partition.k != config.partitions_per_sample:
            raise ConfigError(
                f"sample {index} carries {partition.k} partitions, config expects {config.partitions_per_sample}"
            )
        out.append(sample.with_partition(partition))
    return out


def _check_no_leakage(y_theta: np.ndarray, lam: np.ndarray, index: int, j: int) -> None:
    if np.any(y_theta[:, lam] != 0):
        raise PartitionError(f"sample {index}, partition {j}: DC input carries values on the loss set")


def _pair_loss(
    sample: TrainingSample,
    index: int,
    j: Optional[int],
    params: NetworkParams,
    config: TrainConfig,
    debug_leakage: bool,
):
    """Loss graph and trainable leaves for one (sample, partition) pair; j=None is supervised."""
    tensors = params.tensors(config.unroll.mu_trainable)
    maps, y = sample.coils.maps, sample.y_omega.data
    if j is None:
        xs, _ = unroll_graph(y, maps, sample.pattern.mask, tensors, config.network, config.unroll)
        full = np.ones(sample.pattern.shape, dtype=bool)
        loss = loss_graph(sample.y_ref, encode_op(xs[-1], maps, full))
    else:
        theta, lam = sample.partition.theta[j], sample.partition.lambda_[j]
        check_partition(sample.pattern, theta, lam, index=j)
        y_theta = y * theta
        if debug_leakage:
            _check_no_leakage(y_theta, lam, index, j)
        xs, _ = unroll_graph(y_theta, maps, theta, tensors, config.network, config.unroll)
        loss = loss_graph(y * lam, encode_op(xs[-1], maps, lam))
    trainable = {name: tensors[name] for name in params.trainable_names(config.unroll.mu_trainable)}
    return loss, trainable


def _run(samples: Sequence[TrainingSample], config: TrainConfig, init: Optional[NetworkParams]) -> TrainResult:
    supervised = config.mode is TrainMode.supervised
    debug_leakage = config.debug_leakage or DEBUG_LEAKAGE
    params = init if init is not None else init_params(config.network, config.unroll.mu_init, config.seed)
    state = init_adam(params.arrays)
    if not supervised:
        samples = assign_partitions(samples, config)
    pairs = [(i, j) for i in range(len(samples)) for j in range(config.partitions_per_sample)]

    epoch_losses: List[float] = []
    rows: List[LogRow] = []
    step = 0
    started = time.perf_counter()
    for epoch in range(config.epochs):
        if config.resample_masks and not supervised and epoch > 0:
            samples = assign_partitions(samples, config, epoch=epoch)
        order = make_rng(config.seed, _ORDER, epoch).permutation(len(pairs))
        losses = []
        for p in order:
            index, j = pairs[p]
            step += 1
            loss, trainable = _pair_loss(samples[index], index, None if supervised else j, params, config, debug_leakage)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError("non-finite training loss", iteration=step)
            grads = backward(ComputeGraph(loss), params=trainable)
            arrays, state = adam_step(
                params.arrays, grads, state, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps
            )
            if float(arrays[MU]) <= 0:
                raise TrainingError(f"DC penalty left the positive range ({float(arrays[MU]):.3g})", parameter=MU, iteration=step)
            params = params.replace(arrays)
            losses.append(value)
            rows.append(LogRow(epoch + 1, step, config.mode.value, config.partitions_per_sample, config.rho, value,
                               time.perf_counter() - started))
            logger.debug("epoch %d step %d (sample %d, mask %d): loss %.6g", epoch + 1, step, index, j, value)
        epoch_losses.append(float(np.mean(losses)))
        logger.info(
            "%s epoch %d/%d: mean loss %.6g over %d steps, mu %.4g",
            config.mode.value, epoch + 1, config.epochs, epoch_losses[-1], len(losses), params.mu,
        )
    return TrainResult(params=params, epoch_losses=tuple(epoch_losses), steps=step, log_rows=tuple(rows))


def train_supervised(
    samples: Sequence[TrainingSample], config: TrainConfig, init: Optional[NetworkParams] = None
) -> TrainResult:
    if config.mode is not TrainMode.supervised:
        raise ModeError(f"train_supervised called with mode {config.mode.value}")
    missing = [i for i, s in enumerate(samples) if s.y_ref is None]
    if missing:
        raise ModeError(f"supervised training needs fully sampled references; samples {missing} have none")
    return _run(samples, config, init)


def train_ssdu(
    samples: Sequence[TrainingSample], config: TrainConfig, init: Optional[NetworkParams] = None
) -> TrainResult:
    if config.mode is not TrainMode.ssdu:
        raise ModeError(f"train_ssdu called with mode {config.mode.value}")
    return _run(samples, config, init)


def train_multimask(
    samples: Sequence[TrainingSample], config: TrainConfig, init: Optional[NetworkParams] = None
) -> TrainResult:
    if config.mode not in (TrainMode.multimask, TrainMode.cyclic):
        raise ModeError(f"train_multimask called with mode {config.mode.value}")
    return _run(samples, config, init)


def train(samples: Sequence[TrainingSample], config: TrainConfig, init: Optional[NetworkParams] = None) -> TrainResult:
    if not samples:
        raise ConfigError("training set is empty")
    if config.mode is TrainMode.supervised:
        return train_supervised(samples, config, init)
    if config.mode is TrainMode.ssdu:
        return train_ssdu(samples, config, init)
    return train_multimask(samples, config, init)


def reconstruct_test(
    y: KSpaceSample, coils: CoilSensitivities, params: NetworkParams, cfg: UnrollConfig
) -> ComplexImage:
    """Unrolled recon with every acquired point in the DC units, rescaled to physical units."""
    trace = unrolled_forward(y, coils, params, cfg)
    return ComplexImage(trace.final.data * y.scale)


def reconstruct_samples(
    samples: Sequence[TrainingSample], params: NetworkParams, cfg: UnrollConfig
) -> List[ComplexImage]:
    return [reconstruct_test(s.y_omega, s.coils, params, cfg) for s in samples]


def log_frame(rows: Sequence[LogRow]) -> pd.DataFrame:
    return pd.DataFrame([vars(r) for r in rows], columns=LOG_COLUMNS)


def write_training_log(rows: Sequence[LogRow], path: Union[str, Path]) -> None:
    log_frame(rows).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info("Wrote %d training-log rows to %s", len(rows), path)


__all__ = [
    "LogRow",
    "TrainResult",
    "assign_partitions",
    "denormalize_sample",
    "holdout_split",
    "log_frame",
    "make_partition",
    "normalize_dataset",
    "reconstruct_samples",
    "reconstruct_test",
    "train",
    "train_multimask",
    "train_ssdu",
    "train_supervised",
    "write_training_log",
]
