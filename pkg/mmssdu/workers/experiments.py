"""Method comparisons and K / rho sweeps on the phantom benchmark, with CSV tables."""

from __future__ import annotations

import concurrent.futures
import functools
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from mmssdu.api.schemas import (
    CompareConfig,
    MaskDistribution,
    Method,
    MetricReport,
    SweepAxis,
    SweepConfig,
    TrainConfig,
    TrainMode,
    UnrollConfig,
    build_config,
)
from mmssdu.core.kspace import ComplexImage, zero_filled_recon
from mmssdu.data.dataset import DeskDataset, TrainingSample
from mmssdu.errors import ConfigError, SSDUError
from mmssdu.eval.metrics import evaluate_images, metric_report
from mmssdu.nn.resnet import NetworkParams
from mmssdu.solver.cg import cg_sense
from mmssdu.workers.training import CSV_FLOAT_FORMAT, normalize_dataset, reconstruct_samples, train

logger = logging.getLogger(__name__)

SWEEP_WORKERS = int(os.getenv("SSDU_SWEEP_WORKERS", "1"))

METRIC_COLUMNS = [
    "n", "nmse_median", "nmse_q25", "nmse_q75", "nmse_mean",
    "ssim_median", "ssim_q25", "ssim_q75", "ssim_mean",
]

# config JSON -> metrics of a finished run on one prepared dataset
RunCache = Dict[str, MetricReport]

TRAINED_METHODS = {
    Method.supervised: {"mode": TrainMode.supervised},
    Method.ssdu: {"mode": TrainMode.ssdu},
    Method.multimask: {"mode": TrainMode.multimask, "dist": MaskDistribution(kind="uniform")},
    Method.multimask_gaussian: {"mode": TrainMode.multimask, "dist": MaskDistribution(kind="gaussian")},
    Method.cyclic: {"mode": TrainMode.cyclic},
}


@dataclass(frozen=True)
class RunOutcome:
    """Metrics of one (key, seed) run; seed None marks the pooled row of a key."""

    key: Union[str, float]
    seed: Optional[int]
    report: Optional[MetricReport]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.report is not None


@dataclass(frozen=True)
class ExperimentTable:
    key_column: str
    rows: Tuple[RunOutcome, ...]

    def pooled(self, key) -> Optional[MetricReport]:
        for row in self.rows:
            if row.seed is None and row.key == key:
                return row.report
        raise KeyError(key)

    def per_seed(self, key) -> List[RunOutcome]:
        return [row for row in self.rows if row.seed is not None and row.key == key]

    def keys(self) -> List[Union[str, float]]:
        return list(dict.fromkeys(row.key for row in self.rows))

    def to_frame(self) -> pd.DataFrame:
        records = []
        for row in self.rows:
            record: Dict[str, Any] = {self.key_column: row.key, "seed": row.seed}
            report = row.report
            record["n"] = len(report.nmse) if report else 0
            for column in METRIC_COLUMNS[1:]:
                record[column] = getattr(report, column) if report else np.nan
            record["error"] = row.error or ""
            records.append(record)
        frame = pd.DataFrame(records, columns=[self.key_column, "seed", *METRIC_COLUMNS, "error"])
        frame["seed"] = frame["seed"].astype("Int64")
        return frame

    def write_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        logger.info("Wrote %d result rows to %s", len(self.rows), path)


def read_table_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip", keep_default_na=True, dtype={"error": str})


@dataclass(frozen=True)
class PreparedData:
    train: Tuple[TrainingSample, ...]
    test: Tuple[TrainingSample, ...]
    references: Tuple[ComplexImage, ...]


def prepare(dataset: DeskDataset) -> PreparedData:
    missing = [i for i, s in enumerate(dataset.test) if s.image is None]
    if missing:
        raise ConfigError(f"test samples {missing} have no reference image")
    return PreparedData(
        train=tuple(normalize_dataset(dataset.train)),
        test=tuple(normalize_dataset(dataset.test)),
        references=tuple(s.image for s in dataset.test),
    )


def evaluate(params: NetworkParams, data: PreparedData, cfg: UnrollConfig) -> MetricReport:
    return evaluate_images(data.references, reconstruct_samples(data.test, params, cfg))


def derive_config(base: TrainConfig, **update) -> TrainConfig:
    fields = base.model_dump()
    fields.update(update)
    return build_config(TrainConfig, **fields)


def _pool(outcomes: Sequence[RunOutcome]) -> Optional[MetricReport]:
    good = [o.report for o in outcomes if o.ok]
    if not good:
        return None
    return metric_report(
        [v for r in good for v in r.nmse],
        [v for r in good for v in r.ssim],
    )


def _guarded(key, seed: Optional[int], fn: Callable[[], MetricReport]) -> RunOutcome:
    try:
        return RunOutcome(key=key, seed=seed, report=fn())
    except SSDUError as exc:
        logger.exception("Run %s (seed %s) failed", key, seed)
        return RunOutcome(key=key, seed=seed, report=None, error=f"{type(exc).__name__}: {exc}")


def _run_all(jobs: List[Tuple[Any, int, Callable[[], MetricReport]]], workers: int) -> List[RunOutcome]:
    if workers <= 1 or len(jobs) <= 1:
        return [_guarded(key, seed, fn) for key, seed, fn in jobs]
    results: List[Optional[RunOutcome]] = [None] * len(jobs)
    with concurrent.futures.ThreadPoolExecutor(max_workers=min(workers, len(jobs))) as executor:
        future_to_index = {executor.submit(_guarded, key, seed, fn): i for i, (key, seed, fn) in enumerate(jobs)}
        for future in concurrent.futures.as_completed(future_to_index):
            results[future_to_index[future]] = future.result()
    return results  # type: ignore[return-value]


def _assemble(key_column: str, keys: Sequence, outcomes: Sequence[RunOutcome], per_key: int) -> ExperimentTable:
    """Group consecutive runs of `per_key` outcomes under each key (keys may repeat)."""
    rows: List[RunOutcome] = []
    for position, key in enumerate(keys):
        runs = list(outcomes[position * per_key : (position + 1) * per_key])
        rows.extend(runs)
        shared = runs and all(r.report is runs[0].report for r in runs)
        pooled = runs[0].report if shared else _pool(runs)
        error = None if pooled is not None else "all seeds failed"
        rows.append(RunOutcome(key=key, seed=None, report=pooled, error=error))
    return ExperimentTable(key_column=key_column, rows=tuple(rows))


def _trained_run(
    data: PreparedData, make_config: Callable[[], TrainConfig], cache: Optional[RunCache] = None
) -> Callable[[], MetricReport]:
    """Deferred training run; the config is validated inside the guarded job."""

    def run() -> MetricReport:
        config = make_config()
        key = config.model_dump_json()
        if cache is not None and key in cache:
            logger.info("Reusing metrics of an identical %s run (seed %d)", config.mode.value, config.seed)
            return cache[key]
        result = train(data.train, config)
        report = evaluate(result.params, data, config.unroll)
        if cache is not None:
            cache[key] = report
        return report

    return run


def run_sweep(
    cfg: SweepConfig,
    dataset: DeskDataset,
    workers: int = SWEEP_WORKERS,
    cache: Optional[RunCache] = None,
) -> ExperimentTable:
    """Train one model per (value, seed) and report held-out metrics per value.

    A value whose derived config is invalid yields failed rows; the other values still run.
    """
    if len(cfg.values) < 2:
        raise ConfigError("a sweep needs at least two values")
    if cfg.axis is SweepAxis.k and cfg.base.mode not in (TrainMode.multimask, TrainMode.cyclic):
        raise ConfigError(f"K sweep needs a multi-mask base mode, got {cfg.base.mode.value}")
    data = prepare(dataset)
    jobs = []
    for value in cfg.values:
        value = int(value) if cfg.axis is SweepAxis.k else float(value)
        for seed in cfg.seeds:
            make_config = functools.partial(derive_config, cfg.base, **{cfg.axis.value: value, "seed": seed})
            jobs.append((value, seed, _trained_run(data, make_config, cache)))
    logger.info("Sweeping %s over %s with %d seeds (%d runs)", cfg.axis.value, list(cfg.values), len(cfg.seeds), len(jobs))
    outcomes = _run_all(jobs, workers)
    keys = [key for key, _, _ in jobs[:: len(cfg.seeds)]]
    return _assemble("value", keys, outcomes, len(cfg.seeds))


def _baseline_run(method: Method, data: PreparedData, cfg: CompareConfig) -> Callable[[], MetricReport]:
    sense_cfg = cfg.base.unroll.model_copy(update={"cg_iters": cfg.sense_iters})

    def run() -> MetricReport:
        recs = []
        for s in data.test:
            if method is Method.zero_filled:
                image = zero_filled_recon(s.y_omega, s.coils)
            else:
                image = cg_sense(s.y_omega, s.coils, cfg.l2_weight, sense_cfg)
            recs.append(ComplexImage(image.data * s.scale))
        return evaluate_images(data.references, recs)

    return run


def compare_methods(
    cfg: CompareConfig,
    dataset: DeskDataset,
    workers: int = SWEEP_WORKERS,
    cache: Optional[RunCache] = None,
) -> ExperimentTable:
    """Every method on the shared test set under common seeds."""
    data = prepare(dataset)
    jobs = []
    for method in cfg.methods:
        if method in TRAINED_METHODS:
            for seed in cfg.seeds:
                make_config = functools.partial(derive_config, cfg.base, seed=seed, **TRAINED_METHODS[method])
                jobs.append((method.value, seed, _trained_run(data, make_config, cache)))
    logger.info("Comparing %s with %d seeds", [m.value for m in cfg.methods], len(cfg.seeds))
    trained = iter(_run_all(jobs, workers))

    outcomes: List[RunOutcome] = []
    for method in cfg.methods:
        if method in TRAINED_METHODS:
            outcomes.extend(next(trained) for _ in cfg.seeds)
        else:
            baseline = _guarded(method.value, None, _baseline_run(method, data, cfg))
            # seed-independent; repeated so every method has per-seed rows
            outcomes.extend(RunOutcome(method.value, seed, baseline.report, baseline.error) for seed in cfg.seeds)
    return _assemble("method", [m.value for m in cfg.methods], outcomes, len(cfg.seeds))


__all__ = [
    "ExperimentTable",
    "PreparedData",
    "RunCache",
    "RunOutcome",
    "compare_methods",
    "derive_config",
    "evaluate",
    "prepare",
    "read_table_csv",
    "run_sweep",
]
