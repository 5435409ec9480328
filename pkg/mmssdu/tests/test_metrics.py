from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

from mmssdu.api.schemas import MetricReport
from mmssdu.core.kspace import ComplexImage
from mmssdu.errors import DimensionError, MetricError, UndefinedReferenceError
from mmssdu.eval.metrics import aggregate, evaluate_images, metric_report, nmse, ssim
from mmssdu.tests.fixtures import random_image, rng


def _gaussian_window(sigma=1.5, radius=5):
    x = np.arange(-radius, radius + 1)
    g = np.exp(-(x**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _interior_ssim(ref, rec):
    """Windowed SSIM averaged over pixels whose 11x11 window lies inside the image."""
    w = _gaussian_window()
    c1, c2 = (0.01 * ref.max()) ** 2, (0.03 * ref.max()) ** 2
    values = []
    for i in range(5, ref.shape[0] - 5):
        for j in range(5, ref.shape[1] - 5):
            a = ref[i - 5 : i + 6, j - 5 : j + 6]
            b = rec[i - 5 : i + 6, j - 5 : j + 6]
            ma, mb = np.sum(w * a), np.sum(w * b)
            va = np.sum(w * a * a) - ma**2
            vb = np.sum(w * b * b) - mb**2
            cov = np.sum(w * a * b) - ma * mb
            values.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(values))


def test_ssim_of_identical_images_is_one():
    img = np.abs(rng(1).standard_normal((16, 16)))
    assert ssim(img, img) == pytest.approx(1.0)


@pytest.mark.parametrize("shape", [(16, 16), (20, 24)])
def test_ssim_matches_windowed_oracle(shape):
    gen = rng(sum(shape))
    ref = np.abs(gen.standard_normal(shape)) + 0.5
    rec = np.abs(ref + 0.3 * gen.standard_normal(shape))
    assert ssim(ref, rec) == pytest.approx(_interior_ssim(ref, rec), abs=1e-10)


def test_ssim_input_checks():
    img = np.ones((16, 16))
    with pytest.raises(DimensionError):
        ssim(np.ones((8, 8)), np.ones((8, 8)))
    with pytest.raises(DimensionError):
        ssim(img, np.ones((16, 12)))
    with pytest.raises(MetricError):
        ssim(img, -img)
    with pytest.raises(MetricError):
        ssim(np.zeros((16, 16)), img)


def test_nmse_values():
    ref = random_image(8, seed=2)
    assert nmse(ref, ref) == 0.0
    assert nmse(ref, ComplexImage(np.zeros((8, 8)))) == pytest.approx(1.0)
    assert nmse(ref, ComplexImage(1.1 * ref.data)) == pytest.approx(0.01)
    with pytest.raises(UndefinedReferenceError):
        nmse(ComplexImage(np.zeros((8, 8))), ref)
    with pytest.raises(DimensionError):
        nmse(ref, random_image(16))


def _sorted_quantile(values, q):
    ordered = sorted(values)
    position = q * (len(ordered) - 1)
    lo = math.floor(position)
    hi = min(lo + 1, len(ordered) - 1)
    return ordered[lo] + (position - lo) * (ordered[hi] - ordered[lo])


@pytest.mark.parametrize("values", [[3.0], [2.0, 1.0], [5.0, 1.0, 4.0, 2.0, 3.0], list(rng(3).random(10))])
def test_aggregate_matches_sorted_interpolation(values):
    median, q25, q75 = aggregate(values)
    assert median == pytest.approx(_sorted_quantile(values, 0.5))
    assert q25 == pytest.approx(_sorted_quantile(values, 0.25))
    assert q75 == pytest.approx(_sorted_quantile(values, 0.75))


def test_aggregate_rejects_empty():
    with pytest.raises(MetricError):
        aggregate([])


def test_metric_report_fields():
    report = metric_report([0.1, 0.3, 0.2], [0.9, 0.8, 0.7])
    assert report.nmse_median == pytest.approx(0.2)
    assert report.ssim_q75 == pytest.approx(0.85)
    assert report.nmse_mean == pytest.approx(0.2)
    assert report.nmse == [0.1, 0.3, 0.2]


def test_metric_report_rejects_inconsistent_values():
    with pytest.raises(ValidationError):
        MetricReport(
            nmse=[0.1], ssim=[0.5], nmse_median=0.1, nmse_q25=0.2, nmse_q75=0.3,
            ssim_median=0.5, ssim_q25=0.5, ssim_q75=0.5,
        )
    with pytest.raises(ValidationError):
        MetricReport(
            nmse=[-0.1], ssim=[0.5], nmse_median=0.1, nmse_q25=0.1, nmse_q75=0.1,
            ssim_median=0.5, ssim_q25=0.5, ssim_q75=0.5,
        )


def test_evaluate_images():
    refs = [random_image(16, seed=s) for s in range(3)]
    report = evaluate_images(refs, refs)
    assert report.nmse == [0.0, 0.0, 0.0]
    assert report.ssim_median == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        evaluate_images(refs, refs[:2])


@pytest.mark.parametrize("alpha", [0.01, 3.0, 250.0])
def test_metrics_invariant_to_joint_scaling(alpha):
    ref = random_image(16, seed=40)
    rec = ComplexImage(ref.data + 0.2 * random_image(16, seed=41).data)
    assert nmse(ComplexImage(alpha * ref.data), ComplexImage(alpha * rec.data)) == pytest.approx(
        nmse(ref, rec), rel=1e-12
    )
    mag_ref, mag_rec = np.abs(ref.data), np.abs(rec.data)
    assert ssim(alpha * mag_ref, alpha * mag_rec) == pytest.approx(ssim(mag_ref, mag_rec), rel=1e-9)


def test_ssim_of_half_scaled_image():
    ref = np.abs(rng(42).standard_normal((16, 16))) + 0.5
    value = ssim(ref, 0.5 * ref)
    assert value < 1.0
    assert value == pytest.approx(_interior_ssim(ref, 0.5 * ref), abs=1e-10)


def test_ssim_stays_within_unit_interval():
    gen = rng(43)
    for _ in range(100):
        ref = np.abs(gen.standard_normal((12, 12)))
        rec = np.abs(gen.standard_normal((12, 12))) * gen.uniform(0.1, 5.0)
        assert -1.0 <= ssim(ref, rec) <= 1.0
