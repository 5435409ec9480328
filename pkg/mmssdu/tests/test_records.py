from __future__ import annotations

import json

import numpy as np
import pytest

from mmssdu.core.kspace import ComplexImage
from mmssdu.data.phantom import make_desk_dataset
from mmssdu.core.sampling import gen_cyclic_multi_mask, gen_multi_mask
from mmssdu.errors import DimensionError, FormatError, PartitionError
from mmssdu.nn.resnet import init_params
from mmssdu.stores.container import DatasetContainer, decode_container, encode_container
from mmssdu.stores.records import (
    checkpoint_to_container,
    container_to_checkpoint,
    container_to_dataset,
    container_to_partition,
    container_to_recon,
    dataset_to_container,
    load_schema,
    partition_to_container,
    read_meta,
    recon_to_container,
    reference_images,
)
from mmssdu.tests.fixtures import TINY_DATASET, TINY_TRAIN, random_image


def _through_bytes(container: DatasetContainer) -> DatasetContainer:
    return decode_container(encode_container(container))


@pytest.fixture(scope="module")
def dataset():
    return make_desk_dataset(TINY_DATASET)


def test_dataset_survives_storage(dataset):
    restored = container_to_dataset(_through_bytes(dataset_to_container(dataset)))
    np.testing.assert_array_equal(restored.pattern.mask, dataset.pattern.mask)
    assert restored.pattern.acs == dataset.pattern.acs
    np.testing.assert_array_equal(restored.coils.maps, dataset.coils.maps)
    assert restored.meta == dataset.meta
    for original, loaded in zip(dataset.train + dataset.test, restored.train + restored.test):
        np.testing.assert_array_equal(loaded.y_omega.data, original.y_omega.data)
        np.testing.assert_array_equal(loaded.y_ref, original.y_ref)
        np.testing.assert_array_equal(loaded.image.data, original.image.data)
        assert loaded.scale == original.scale


def test_dataset_bytes_are_reproducible(dataset):
    first = encode_container(dataset_to_container(dataset))
    second = encode_container(dataset_to_container(make_desk_dataset(TINY_DATASET)))
    assert first == second


def test_meta_is_canonical_json(dataset):
    raw = dataset_to_container(dataset)["meta"]
    meta = json.loads(raw)
    assert raw == json.dumps(meta, sort_keys=True, separators=(",", ":"))
    assert meta["format_version"] == 1
    assert meta["splits"] == {"train": 2, "test": 2}


def test_checkpoint_survives_storage():
    params = init_params(TINY_TRAIN.network, TINY_TRAIN.unroll.mu_init, seed=3)
    container = checkpoint_to_container(params, TINY_TRAIN, epoch_losses=[1.5, 1.25], steps=8)
    assert [n for n in container.names() if n.startswith("param/")] == sorted(
        n for n in container.names() if n.startswith("param/")
    )
    loaded, config, meta = container_to_checkpoint(_through_bytes(container))
    assert config == TINY_TRAIN
    assert meta["epoch_losses"] == [1.5, 1.25] and meta["steps"] == 8
    for name in params.names():
        np.testing.assert_array_equal(loaded.arrays[name], params.arrays[name])


def test_checkpoint_with_invalid_config_rejected():
    container = DatasetContainer()
    meta = {
        "kind": "checkpoint", "format_version": 1, "mode": "ssdu",
        "config": {"network": {}, "unroll": {}, "epochs": 0},
        "epoch_losses": [], "steps": 0,
    }
    container.add("meta", json.dumps(meta))
    with pytest.raises(FormatError):
        container_to_checkpoint(container)


def test_checkpoint_with_wrong_parameters_rejected():
    params = init_params(TINY_TRAIN.network, 0.05)
    container = checkpoint_to_container(params, TINY_TRAIN)
    other = TINY_TRAIN.model_copy(update={"network": TINY_TRAIN.network.model_copy(update={"channels": 6})})
    meta = json.loads(container["meta"])
    meta["config"] = other.model_dump(mode="json")
    rebuilt = DatasetContainer({"meta": json.dumps(meta)})
    for record in container:
        if record.name != "meta":
            rebuilt.add(record.name, record.value)
    with pytest.raises(DimensionError):
        container_to_checkpoint(rebuilt)


def test_recon_survives_storage():
    images = [random_image(8, seed=s) for s in range(3)]
    restored, meta = container_to_recon(_through_bytes(recon_to_container(images, "multimask")))
    assert meta["mode"] == "multimask" and meta["count"] == 3
    for a, b in zip(images, restored):
        np.testing.assert_array_equal(a.data, b.data)
    empty, _ = container_to_recon(recon_to_container([], "ssdu"))
    assert empty == []


def test_recon_count_mismatch_rejected():
    container = DatasetContainer({
        "meta": json.dumps({"kind": "recon", "format_version": 1, "mode": "ssdu", "count": 2}),
        "recon/images": np.zeros((3, 4, 4), dtype=complex),
    })
    with pytest.raises(FormatError):
        container_to_recon(container)


@pytest.mark.parametrize(
    "raw",
    [
        "not json",
        json.dumps({"kind": "dataset", "format_version": 1}),
        json.dumps({"kind": "dataset", "format_version": 2, "config": {}, "splits": {}}),
        json.dumps({"kind": "archive", "format_version": 1}),
    ],
    ids=["invalid-json", "missing-fields", "bad-version", "unknown-kind"],
)
def test_invalid_meta_rejected(raw):
    with pytest.raises(FormatError):
        read_meta(DatasetContainer({"meta": raw}), "dataset")


def test_meta_must_be_text_and_match_kind():
    with pytest.raises(FormatError):
        read_meta(DatasetContainer({"meta": np.ones(3)}), "dataset")
    recon = recon_to_container([random_image(8)], "ssdu")
    with pytest.raises(FormatError):
        read_meta(recon, "dataset")
    with pytest.raises(FormatError):
        container_to_dataset(recon)


def test_schema_lists_every_kind():
    assert load_schema()["properties"]["kind"]["enum"] == ["dataset", "checkpoint", "recon", "partition"]


def test_reference_images(dataset):
    refs = reference_images(dataset)
    assert len(refs) == 2 and all(isinstance(r, ComplexImage) for r in refs)
    restored = container_to_dataset(dataset_to_container(dataset))
    assert reference_images(restored, "train") is not None


@pytest.mark.parametrize("scheme", ["random", "cyclic"])
def test_partition_survives_storage(dataset, scheme):
    if scheme == "cyclic":
        partition = gen_cyclic_multi_mask(dataset.pattern, 3, seed=4)
    else:
        partition = gen_multi_mask(dataset.pattern, 3, 0.4, seed=4)
    restored, pattern = container_to_partition(_through_bytes(partition_to_container(partition, dataset.pattern)))
    np.testing.assert_array_equal(pattern.mask, dataset.pattern.mask)
    assert (restored.scheme, restored.k, restored.seed) == (scheme, 3, 4)
    assert restored.rho == pytest.approx(partition.rho)
    for (theta, lam), (theta0, lam0) in zip(restored.pairs(), partition.pairs()):
        np.testing.assert_array_equal(theta, theta0)
        np.testing.assert_array_equal(lam, lam0)


def test_partition_records_are_checked_on_read(dataset):
    partition = gen_multi_mask(dataset.pattern, 2, 0.4, seed=5)
    good = partition_to_container(partition, dataset.pattern)

    def replaced(name, value):
        container = DatasetContainer()
        for other in good.names():
            container.add(other, value if other == name else good[other])
        return container

    with pytest.raises(PartitionError):
        container_to_partition(replaced("partition/theta", np.stack([dataset.pattern.mask] * 2)))
    with pytest.raises(FormatError):
        container_to_partition(replaced("partition/lambda", good["partition/lambda"][:1]))

    with pytest.raises(FormatError):
        container_to_dataset(good)
