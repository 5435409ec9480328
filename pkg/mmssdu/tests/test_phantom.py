from __future__ import annotations

import numpy as np
import pytest

from mmssdu.api.schemas import DatasetConfig, NoiseSpec
from mmssdu.core.kspace import apply_encoding
from mmssdu.data.phantom import (
    full_pattern,
    make_desk_dataset,
    make_phantom,
    phantom_support,
    simulate_acquisition,
    simulate_coils,
)
from mmssdu.errors import ConfigError
from mmssdu.tests.fixtures import TINY_DATASET, random_pattern


def test_phantom_is_seeded_and_supported():
    a = make_phantom(32, 4)
    b = make_phantom(32, 4)
    c = make_phantom(32, 5)
    np.testing.assert_array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    support = phantom_support(32)
    assert not np.any(a.data[~support])
    magnitude = a.magnitude()
    assert magnitude.max() <= 1.0 + 1e-12
    assert magnitude[support].max() > 0.1


@pytest.mark.parametrize("n", [8, 24])
def test_phantom_size_checked(n):
    with pytest.raises(ConfigError):
        make_phantom(n, 0)


def test_single_coil_is_all_ones():
    coils = simulate_coils(16, 1)
    np.testing.assert_array_equal(coils.maps, np.ones((1, 16, 16)))


def test_coil_maps_are_smooth_lobes():
    coils = simulate_coils(32, 4)
    assert coils.maps.shape == (4, 32, 32)
    assert np.all(np.abs(coils.maps) <= 1.0)
    assert np.all(coils.sum_of_squares() > 0)
    # each lobe peaks towards its own edge of the field of view
    peaks = [np.unravel_index(np.argmax(np.abs(m)), (32, 32)) for m in coils.maps]
    assert len(set(peaks)) == 4
    with pytest.raises(ConfigError):
        simulate_coils(16, 0)


def test_noiseless_acquisition_is_encoding():
    img = make_phantom(16, 1)
    coils = simulate_coils(16, 2)
    pattern = random_pattern(16, seed=3)
    y = simulate_acquisition(img, coils, pattern)
    np.testing.assert_array_equal(y.data, apply_encoding(img, coils, pattern).data)


def test_noise_under_sub_pattern_is_restriction_of_full_grid():
    img = make_phantom(16, 1)
    coils = simulate_coils(16, 2)
    pattern = random_pattern(16, seed=4)
    noise = NoiseSpec(sigma=0.05, seed=9)
    full = simulate_acquisition(img, coils, full_pattern(16), noise)
    sub = simulate_acquisition(img, coils, pattern, noise)
    np.testing.assert_allclose(sub.data, full.data * pattern.mask, atol=1e-15)
    clean = apply_encoding(img, coils, full_pattern(16)).data
    residual = (full.data - clean).ravel()
    assert np.std(residual) == pytest.approx(0.05, rel=0.2)


def test_desk_dataset_layout():
    dataset = make_desk_dataset(TINY_DATASET)
    assert len(dataset.train) == 2 and len(dataset.test) == 2
    assert dataset.coils.ncoils == 2
    assert dataset.pattern.acs == (4, 4)
    for sample in dataset.train + dataset.test:
        assert sample.pattern is dataset.pattern
        assert sample.image is not None
        np.testing.assert_array_equal(sample.y_ref * dataset.pattern.mask, sample.y_omega.data)
    assert dataset.meta == TINY_DATASET.model_dump()
    assert dataset.split("test") is dataset.test
    with pytest.raises(KeyError):
        dataset.split("val")


def test_desk_dataset_is_reproducible_and_seed_dependent():
    first = make_desk_dataset(TINY_DATASET)
    second = make_desk_dataset(TINY_DATASET)
    other = make_desk_dataset(TINY_DATASET.model_copy(update={"seed": 1}))
    for a, b in zip(first.train + first.test, second.train + second.test):
        np.testing.assert_array_equal(a.y_omega.data, b.y_omega.data)
    assert not np.array_equal(first.train[0].image.data, other.train[0].image.data)
    assert not np.array_equal(first.train[0].image.data, first.test[0].image.data)


def test_dataset_config_validation():
    with pytest.raises(ValueError):
        DatasetConfig(n=48)
    with pytest.raises(ValueError):
        DatasetConfig(n=16, acs=32)
