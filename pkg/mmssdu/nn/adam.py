"""Adam optimizer as a pure function of (params, grads, state)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Tuple

import numpy as np

from mmssdu.errors import DimensionError, TrainingError

Arrays = Mapping[str, np.ndarray]


@dataclass(frozen=True)
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0


def init_adam(params: Arrays) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(p, dtype=np.float64) for name, p in params.items()},
        v={name: np.zeros_like(p, dtype=np.float64) for name, p in params.items()},
        t=0,
    )


def adam_step(
    params: Arrays,
    grads: Arrays,
    state: AdamState,
    lr: float = 5e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Parameters without a gradient stay as they are."""
    t = state.t + 1
    for name, g in grads.items():
        if name not in params:
            raise DimensionError(f"gradient for unknown parameter {name}")
        if np.shape(g) != np.shape(params[name]):
            raise DimensionError(f"{name}: gradient shape {np.shape(g)} != parameter shape {np.shape(params[name])}")
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient", parameter=name, iteration=t)

    new_params = dict(params)
    m, v = dict(state.m), dict(state.v)
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = m[name] / (1.0 - beta1**t)
        v_hat = v[name] / (1.0 - beta2**t)
        new_params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m=m, v=v, t=t)


__all__ = ["AdamState", "adam_step", "init_adam"]
