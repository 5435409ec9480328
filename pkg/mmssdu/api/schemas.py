"""Pydantic schemas for configuration and report objects."""

from __future__ import annotations

import math
from enum import Enum
from typing import List, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from mmssdu.errors import ConfigError


class UndersamplingSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    r_total: int = Field(..., ge=1)
    r_y: int = Field(..., ge=1)
    r_z: int = Field(..., ge=1)
    shear_step: int = 1
    acs_h: int = Field(..., ge=1)
    acs_w: int = Field(..., ge=1)

    @model_validator(mode="after")
    def check_factorization(self) -> "UndersamplingSpec":
        if self.r_y * self.r_z != self.r_total:
            raise ValueError(f"r_y * r_z must equal r_total ({self.r_y} * {self.r_z} != {self.r_total})")
        return self

    @classmethod
    def from_rate(cls, r_total: int, acs: int, shear_step: int = 1) -> "UndersamplingSpec":
        """Factor R into r_y * r_z with r_z the largest divisor not above sqrt(R)."""
        r_z = max(d for d in range(1, int(math.isqrt(max(r_total, 1))) + 1) if r_total % d == 0)
        return cls(r_total=r_total, r_y=r_total // r_z, r_z=r_z, shear_step=shear_step, acs_h=acs, acs_w=acs)


class MaskDistribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["uniform", "gaussian"] = "uniform"
    sigma_frac: float = Field(0.25, gt=0)


class NoiseSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0)


class DatasetConfig(BaseModel):
    """Seeded phantom benchmark: one shared pattern and coil set for every sample."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(64, ge=16)
    ncoils: int = Field(4, ge=1)
    n_train: int = Field(20, ge=1)
    n_test: int = Field(8, ge=1)
    r_total: int = Field(4, ge=1)
    acs: int = Field(8, ge=1)
    sigma: float = Field(0.01, ge=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def check_grid(self) -> "DatasetConfig":
        if self.n & (self.n - 1):
            raise ValueError(f"grid size must be a power of two, got {self.n}")
        if self.acs > self.n:
            raise ValueError(f"ACS block {self.acs} larger than grid {self.n}")
        return self

    def undersampling(self) -> UndersamplingSpec:
        return UndersamplingSpec.from_rate(self.r_total, self.acs)


class UnrollConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_unroll: int = Field(5, ge=0, description="Number of regularizer + DC iterations")
    cg_iters: int = Field(10, ge=1)
    cg_tol: float = Field(1e-6, gt=0)
    mu_init: float = Field(0.05, gt=0)
    mu_trainable: bool = True


class NetworkConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    channels: int = Field(16, ge=2)
    blocks: int = Field(3, ge=0)
    kernel: int = Field(3, ge=1)
    out_scale: float = Field(0.01, ge=0)

    @model_validator(mode="after")
    def check_kernel(self) -> "NetworkConfig":
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd for same padding")
        return self


class TrainMode(str, Enum):
    supervised = "supervised"
    ssdu = "ssdu"
    multimask = "multimask"
    cyclic = "cyclic"


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epochs: int = Field(30, ge=1)
    lr: float = Field(5e-4, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    mode: TrainMode = TrainMode.multimask
    k: int = Field(5, ge=1)
    rho: float = Field(0.4, gt=0, lt=1)
    dist: MaskDistribution = MaskDistribution()
    unroll: UnrollConfig = UnrollConfig()
    network: NetworkConfig = NetworkConfig()
    seed: int = Field(0, ge=0)
    resample_masks: bool = False
    debug_leakage: bool = False

    @model_validator(mode="after")
    def check_mode_fields(self) -> "TrainConfig":
        if self.mode is TrainMode.cyclic and self.k < 2:
            raise ValueError("cyclic multi-mask requires k >= 2")
        return self

    @property
    def partitions_per_sample(self) -> int:
        if self.mode in (TrainMode.multimask, TrainMode.cyclic):
            return self.k
        return 1


class SweepAxis(str, Enum):
    k = "k"
    rho = "rho"


class SweepConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    axis: SweepAxis
    values: List[Union[int, float]] = Field(..., min_length=1)
    base: TrainConfig = TrainConfig()
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)

    @model_validator(mode="after")
    def check_values(self) -> "SweepConfig":
        if list(self.values) != sorted(self.values):
            raise ValueError("sweep values must be sorted")
        for value in self.values:
            if self.axis is SweepAxis.k and (int(value) != value or value < 1):
                raise ValueError(f"K sweep values must be integers >= 1, got {value}")
            if self.axis is SweepAxis.rho and not 0 < value < 1:
                raise ValueError(f"rho sweep values must lie in (0, 1), got {value}")
        return self


class Method(str, Enum):
    zero_filled = "zerofilled"
    cg_sense = "cgsense"
    supervised = "supervised"
    ssdu = "ssdu"
    multimask = "multimask"
    multimask_gaussian = "multimask-gaussian"
    cyclic = "cyclic"


class CompareConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    methods: List[Method] = Field(..., min_length=1)
    base: TrainConfig = TrainConfig()
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    l2_weight: float = Field(1e-3, ge=0, description="Tikhonov weight of the CG-SENSE baseline")
    sense_iters: int = Field(30, ge=1)


class MetricReport(BaseModel):
    nmse: List[float]
    ssim: List[float]
    nmse_median: float
    nmse_q25: float
    nmse_q75: float
    ssim_median: float
    ssim_q25: float
    ssim_q75: float

    @model_validator(mode="after")
    def check_ordering(self) -> "MetricReport":
        if not (self.nmse_q25 <= self.nmse_median <= self.nmse_q75):
            raise ValueError("NMSE quartiles out of order")
        if not (self.ssim_q25 <= self.ssim_median <= self.ssim_q75):
            raise ValueError("SSIM quartiles out of order")
        if any(v < 0 for v in self.nmse):
            raise ValueError("NMSE must be non-negative")
        if any(v < -1 or v > 1 for v in self.ssim):
            raise ValueError("SSIM must lie in [-1, 1]")
        return self

    @property
    def nmse_mean(self) -> float:
        return float(sum(self.nmse) / len(self.nmse)) if self.nmse else math.nan

    @property
    def ssim_mean(self) -> float:
        return float(sum(self.ssim) / len(self.ssim)) if self.ssim else math.nan


def build_config(model: type, **fields) -> BaseModel:
    """Construct a schema object, surfacing validation failures as ConfigError."""
    try:
        return model(**fields)
    except ValidationError as exc:
        raise ConfigError(f"invalid {model.__name__}: {exc}") from exc


__all__ = [
    "CompareConfig",
    "DatasetConfig",
    "MaskDistribution",
    "Method",
    "MetricReport",
    "NetworkConfig",
    "NoiseSpec",
    "SweepAxis",
    "SweepConfig",
    "TrainConfig",
    "TrainMode",
    "UndersamplingSpec",
    "UnrollConfig",
    "build_config",
]
