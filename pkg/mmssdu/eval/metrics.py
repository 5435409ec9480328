"""Image quality metrics and median/IQR aggregation."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np
from skimage.metrics import structural_similarity

from mmssdu.api.schemas import MetricReport
from mmssdu.core.kspace import ComplexImage
from mmssdu.errors import DimensionError, MetricError, UndefinedReferenceError

SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11


def nmse(ref: ComplexImage, rec: ComplexImage) -> float:
    """||ref - rec||^2 / ||ref||^2 on complex values."""
    if ref.shape != rec.shape:
        raise DimensionError(f"image shapes differ: {ref.shape} vs {rec.shape}")
    denom = float(np.sum(np.abs(ref.data) ** 2))
    if denom == 0.0:
        raise UndefinedReferenceError("NMSE reference image is identically zero")
    return float(np.sum(np.abs(ref.data - rec.data) ** 2) / denom)


def ssim(ref: np.ndarray, rec: np.ndarray) -> float:
    """Mean SSIM over 11x11 Gaussian windows (sigma 1.5) with dynamic range max(ref)."""
    ref = np.asarray(ref, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    if ref.shape != rec.shape or ref.ndim != 2:
        raise DimensionError(f"SSIM needs two 2-D images of equal shape, got {ref.shape} and {rec.shape}")
    if min(ref.shape) < SSIM_WINDOW:
        raise DimensionError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {ref.shape}")
    if np.any(ref < 0) or np.any(rec < 0):
        raise MetricError("SSIM expects non-negative magnitude images")
    data_range = float(ref.max())
    if data_range <= 0:
        raise MetricError("SSIM reference is constant zero")
    return float(
        structural_similarity(
            ref,
            rec,
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
            K1=SSIM_K1,
            K2=SSIM_K2,
            data_range=data_range,
        )
    )


def aggregate(values: Sequence[float]) -> Tuple[float, float, float]:
    """(median, q25, q75) with linear interpolation between order statistics."""
    if len(values) == 0:
        raise MetricError("cannot aggregate an empty metric list")
    q25, median, q75 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75])
    return float(median), float(q25), float(q75)


def metric_report(nmse_values: Sequence[float], ssim_values: Sequence[float]) -> MetricReport:
    nmse_median, nmse_q25, nmse_q75 = aggregate(nmse_values)
    ssim_median, ssim_q25, ssim_q75 = aggregate(ssim_values)
    return MetricReport(
        nmse=[float(v) for v in nmse_values],
        ssim=[float(v) for v in ssim_values],
        nmse_median=nmse_median,
        nmse_q25=nmse_q25,
        nmse_q75=nmse_q75,
        ssim_median=ssim_median,
        ssim_q25=ssim_q25,
        ssim_q75=ssim_q75,
    )


def evaluate_images(refs: Sequence[ComplexImage], recs: Sequence[ComplexImage]) -> MetricReport:
    if len(refs) != len(recs):
        raise DimensionError(f"{len(refs)} references for {len(recs)} reconstructions")
    return metric_report(
        [nmse(r, x) for r, x in zip(refs, recs)],
        [ssim(r.magnitude(), x.magnitude()) for r, x in zip(refs, recs)],
    )


__all__ = ["aggregate", "evaluate_images", "metric_report", "nmse", "ssim"]
