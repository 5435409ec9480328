"""Normalized l1-l2 k-space loss."""

from __future__ import annotations

import numpy as np

from mmssdu.errors import DimensionError, UndefinedReferenceError
from mmssdu.nn.autodiff import Tensor, absolute, as_tensor, constant, inner, sqrt, total


def loss_graph(u: np.ndarray, v: Tensor) -> Tensor:
    """||u - v||_2 / ||u||_2 + ||u - v||_1 / ||u||_1 with u the acquired reference.

    Norms run jointly over every coil and index; u and v are expected to be
    zero outside the loss set so the full-grid sums equal the sums on it.
    """
    u = np.asarray(u)
    v = as_tensor(v)
    if u.shape != v.data.shape:
        raise DimensionError(f"loss operands differ in shape: {u.shape} vs {v.data.shape}")
    norm2 = float(np.linalg.norm(u.ravel()))
    norm1 = float(np.sum(np.abs(u)))
    if norm2 == 0.0:
        raise UndefinedReferenceError("reference k-space on the loss set is identically zero")
    diff = v - constant(u)
    l2 = sqrt(inner(diff, diff))
    l1 = total(absolute(diff))
    return l2 * (1.0 / norm2) + l1 * (1.0 / norm1)


def loss_l1l2(u: np.ndarray, v: np.ndarray) -> float:
    return float(loss_graph(u, constant(np.asarray(v))).data)


__all__ = ["loss_graph", "loss_l1l2"]
