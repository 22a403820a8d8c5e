from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from pothole_rgbd.core.config import settings


class SimAMConfig(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    # Energy compensation term; validated by simam_attend so it surfaces as a ConfigurationError
    lambda_: float = Field(default=settings.SIMAM_LAMBDA, alias="lambda")


class DSConvKernel(BaseModel):
    """
    Snake convolution kernel along one axis.

    weights has shape (C_out, C_in, K); offsets has shape (K, H, W) or (N, K, H, W) and holds one
    per-step displacement per tap and output position. Taps at +c and -c accumulate the clamped
    steps of taps 1..c on their own side; the centre entry is never read.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    axis: Literal["horizontal", "vertical"]
    weights: np.ndarray
    offsets: np.ndarray

    @field_validator("weights", "offsets", mode="before")
    @classmethod
    def _as_float_array(cls, value):
        array = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise ValueError("kernel tensors must be finite")
        return array

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.weights.ndim != 3:
            raise ValueError(f"weights must be (C_out, C_in, K), got shape {self.weights.shape}")
        extent = self.weights.shape[2]
        if extent % 2 != 1:
            raise ValueError(f"kernel_extent must be odd, got {extent}")
        if self.offsets.ndim not in (3, 4) or self.offsets.shape[-3] != extent:
            raise ValueError(
                f"offsets must be (K, H, W) or (N, K, H, W) with K={extent}, got shape {self.offsets.shape}"
            )
        return self

    @property
    def kernel_extent(self) -> int:
        return self.weights.shape[2]

    @property
    def c_max(self) -> int:
        return self.kernel_extent // 2


class DSConvGrads(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    input: np.ndarray
    weights: np.ndarray
    offsets: np.ndarray


class ConvLayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    c_in: int = Field(ge=1)
    c_out: int = Field(ge=1)
    k_h: int = Field(ge=1)
    k_w: int = Field(ge=1)
    h_out: int = Field(ge=1)
    w_out: int = Field(ge=1)

    @classmethod
    def from_input(cls, c_in: int, c_out: int, k_h: int, k_w: int, h_in: int, w_in: int,
                   stride: int = 1, padding: int = 0) -> "ConvLayerSpec":
        """Build a spec from the input map size using floor((H + 2p - K) / s) + 1."""
        h_out = (h_in + 2 * padding - k_h) // stride + 1
        w_out = (w_in + 2 * padding - k_w) // stride + 1
        return cls(c_in=c_in, c_out=c_out, k_h=k_h, k_w=k_w, h_out=h_out, w_out=w_out)
