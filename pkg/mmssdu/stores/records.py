"""Mapping between domain objects and `.ssdu` containers.

Every container carries a `meta` JSON record validated against
metadata_schema.json on write and on read.
"""

from __future__ import annotations

import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from jsonschema import Draft7Validator
from pydantic import ValidationError

from mmssdu.api.schemas import TrainConfig
from mmssdu.core.kspace import CoilSensitivities, ComplexImage, KSpaceSample, SamplingPattern
from mmssdu.core.sampling import PartitionSet
from mmssdu.data.dataset import DeskDataset, TrainingSample
from mmssdu.errors import FormatError
from mmssdu.nn.resnet import NetworkParams
from mmssdu.stores.container import DatasetContainer

logger = logging.getLogger(__name__)

SCHEMA_PATH = Path(__file__).resolve().parent / "metadata_schema.json"
FORMAT_VERSION = 1
META = "meta"
PARAM_PREFIX = "param/"


def load_schema() -> Dict[str, Any]:
    with SCHEMA_PATH.open("r", encoding="utf-8") as handle:
        return json.load(handle)


@lru_cache(maxsize=1)
def _validator() -> Draft7Validator:
    return Draft7Validator(load_schema())


def _validate(meta: Dict[str, Any]) -> None:
    errors = sorted(_validator().iter_errors(meta), key=lambda e: list(e.path))
    if errors:
        where = "/".join(str(p) for p in errors[0].path) or "<root>"
        raise FormatError(f"invalid container metadata at {where}: {errors[0].message}")


def _dump_meta(meta: Dict[str, Any]) -> str:
    meta = {"format_version": FORMAT_VERSION, **meta}
    _validate(meta)
    return json.dumps(meta, sort_keys=True, separators=(",", ":"))


def read_meta(container: DatasetContainer, kind: str) -> Dict[str, Any]:
    raw = container[META]
    if not isinstance(raw, str):
        raise FormatError("meta record is not a utf-8 string")
    try:
        meta = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"meta record is not valid JSON: {exc}") from exc
    _validate(meta)
    if meta["kind"] != kind:
        raise FormatError(f"expected a {kind} container, got {meta['kind']}")
    return meta


def dataset_to_container(dataset: DeskDataset) -> DatasetContainer:
    container = DatasetContainer()
    container.add(
        META,
        _dump_meta({
            "kind": "dataset",
            "config": dataset.meta,
            "splits": {"train": len(dataset.train), "test": len(dataset.test)},
        }),
    )
    _pattern_records(container, dataset.pattern)
    container.add("coils", dataset.coils.maps)
    for split in ("train", "test"):
        samples = dataset.split(split)
        if not samples:
            continue
        container.add(f"{split}/kspace", np.stack([s.y_omega.data for s in samples]))
        container.add(f"{split}/scale", np.asarray([s.scale for s in samples]))
        if all(s.y_ref is not None for s in samples):
            container.add(f"{split}/reference", np.stack([s.y_ref for s in samples]))
        if all(s.image is not None for s in samples):
            container.add(f"{split}/images", np.stack([s.image.data for s in samples]))
    return container


def _split_samples(
    container: DatasetContainer,
    split: str,
    count: int,
    pattern: SamplingPattern,
    coils: CoilSensitivities,
) -> Tuple[TrainingSample, ...]:
    if count == 0:
        return ()
    kspace = container[f"{split}/kspace"]
    scale = container[f"{split}/scale"]
    reference = container[f"{split}/reference"] if f"{split}/reference" in container else None
    images = container[f"{split}/images"] if f"{split}/images" in container else None
    if kspace.shape[0] != count or scale.shape != (count,):
        raise FormatError(f"{split}: record sizes disagree with the declared count {count}")
    return tuple(
        TrainingSample(
            y_omega=KSpaceSample(data=kspace[i], pattern=pattern, scale=float(scale[i])),
            coils=coils,
            y_ref=None if reference is None else reference[i],
            image=None if images is None else ComplexImage(images[i]),
        )
        for i in range(count)
    )


def container_to_dataset(container: DatasetContainer) -> DeskDataset:
    meta = read_meta(container, "dataset")
    pattern = _read_pattern(container)
    coils = CoilSensitivities(container["coils"])
    return DeskDataset(
        pattern=pattern,
        coils=coils,
        train=_split_samples(container, "train", meta["splits"]["train"], pattern, coils),
        test=_split_samples(container, "test", meta["splits"]["test"], pattern, coils),
        meta=meta["config"],
    )


def checkpoint_to_container(
    params: NetworkParams,
    config: TrainConfig,
    epoch_losses: Sequence[float] = (),
    steps: int = 0,
) -> DatasetContainer:
    container = DatasetContainer()
    container.add(
        META,
        _dump_meta({
            "kind": "checkpoint",
            "mode": config.mode.value,
            "config": config.model_dump(mode="json"),
            "epoch_losses": [float(v) for v in epoch_losses],
            "steps": int(steps),
        }),
    )
    for name in sorted(params.arrays):
        container.add(PARAM_PREFIX + name, params.arrays[name])
    return container


def container_to_checkpoint(container: DatasetContainer) -> Tuple[NetworkParams, TrainConfig, Dict[str, Any]]:
    meta = read_meta(container, "checkpoint")
    try:
        config = TrainConfig.model_validate(meta["config"])
    except ValidationError as exc:
        raise FormatError(f"checkpoint carries an invalid training config: {exc}") from exc
    arrays = {
        name[len(PARAM_PREFIX):]: container[name] for name in container.names() if name.startswith(PARAM_PREFIX)
    }
    params = NetworkParams(arrays=arrays, network=config.network)
    return params, config, meta


def recon_to_container(images: Sequence[ComplexImage], mode: str) -> DatasetContainer:
    container = DatasetContainer()
    container.add(META, _dump_meta({"kind": "recon", "mode": mode, "count": len(images)}))
    if images:
        container.add("recon/images", np.stack([img.data for img in images]))
    return container


def container_to_recon(container: DatasetContainer) -> Tuple[List[ComplexImage], Dict[str, Any]]:
    meta = read_meta(container, "recon")
    if meta["count"] == 0:
        return [], meta
    stack = container["recon/images"]
    if stack.shape[0] != meta["count"]:
        raise FormatError(f"recon holds {stack.shape[0]} images, meta declares {meta['count']}")
    return [ComplexImage(img) for img in stack], meta


def _pattern_records(container: DatasetContainer, pattern: SamplingPattern) -> None:
    container.add("pattern/mask", pattern.mask)
    container.add("pattern/acs", np.asarray(pattern.acs, dtype=np.int64))


def _read_pattern(container: DatasetContainer) -> SamplingPattern:
    acs = container["pattern/acs"]
    return SamplingPattern(mask=container["pattern/mask"], acs=(int(acs[0]), int(acs[1])))


def partition_to_container(partition: PartitionSet, pattern: SamplingPattern) -> DatasetContainer:
    """Theta/Lambda stacks of one partition set together with the pattern they split."""
    partition.validate(pattern)
    container = DatasetContainer()
    container.add(
        META,
        _dump_meta({
            "kind": "partition",
            "scheme": partition.scheme,
            "rho": float(partition.rho),
            "k": partition.k,
            "seed": partition.seed,
        }),
    )
    _pattern_records(container, pattern)
    container.add("partition/theta", np.stack(partition.theta))
    container.add("partition/lambda", np.stack(partition.lambda_))
    return container


def container_to_partition(container: DatasetContainer) -> Tuple[PartitionSet, SamplingPattern]:
    meta = read_meta(container, "partition")
    pattern = _read_pattern(container)
    theta, lam = container["partition/theta"], container["partition/lambda"]
    expected = (meta["k"], *pattern.shape)
    if theta.shape != expected or lam.shape != expected:
        raise FormatError(f"partition stacks {theta.shape}/{lam.shape} disagree with k={meta['k']} on {pattern.shape}")
    partition = PartitionSet(
        theta=tuple(theta),
        lambda_=tuple(lam),
        rho=meta["rho"],
        k=meta["k"],
        seed=meta["seed"],
        scheme=meta["scheme"],
    )
    partition.validate(pattern)
    return partition, pattern


def reference_images(dataset: DeskDataset, split: str = "test") -> Optional[List[ComplexImage]]:
    samples = dataset.split(split)
    if any(s.image is None for s in samples):
        return None
    return [s.image for s in samples]


__all__ = [
    "checkpoint_to_container",
    "container_to_checkpoint",
    "container_to_dataset",
    "container_to_partition",
    "container_to_recon",
    "dataset_to_container",
    "load_schema",
    "partition_to_container",
    "read_meta",
    "recon_to_container",
    "reference_images",
]
