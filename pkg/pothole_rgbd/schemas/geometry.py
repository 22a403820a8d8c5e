from typing import List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from pothole_rgbd.core.config import settings


class DepthFrame(BaseModel):
    """Per-pixel depth in millimetres with a sensor-validity mask (False where no return)."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    depth_mm: np.ndarray
    valid: np.ndarray

    @field_validator("depth_mm", mode="before")
    @classmethod
    def _as_float(cls, value):
        return np.asarray(value, dtype=np.float64)

    @field_validator("valid", mode="before")
    @classmethod
    def _as_bool(cls, value):
        return np.asarray(value, dtype=bool)

    @model_validator(mode="after")
    def _check(self):
        if self.depth_mm.ndim != 2 or self.depth_mm.shape != self.valid.shape:
            raise ValueError(
                f"depth_mm and valid must be equal 2-D arrays, got {self.depth_mm.shape} and {self.valid.shape}"
            )
        if self.depth_mm.size == 0:
            raise ValueError("depth frame must have positive width and height")
        valid_depths = self.depth_mm[self.valid]
        if not np.all(np.isfinite(valid_depths)) or np.any(valid_depths < 0):
            raise ValueError("valid depth values must be finite and non-negative")
        return self

    @classmethod
    def from_counts(cls, counts: np.ndarray, depth_unit: float = 1.0) -> "DepthFrame":
        """Raw sensor counts to millimetres; a zero count marks a missing return."""
        counts = np.asarray(counts)
        return cls(depth_mm=counts.astype(np.float64) * depth_unit, valid=counts != 0)

    @property
    def width(self) -> int:
        return self.depth_mm.shape[1]

    @property
    def height(self) -> int:
        return self.depth_mm.shape[0]


class InstanceMask(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    member: np.ndarray

    @field_validator("member", mode="before")
    @classmethod
    def _as_bool(cls, value):
        array = np.asarray(value, dtype=bool)
        if array.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {array.shape}")
        return array

    @classmethod
    def empty(cls, width: int, height: int) -> "InstanceMask":
        return cls(member=np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.member.shape[1]

    @property
    def height(self) -> int:
        return self.member.shape[0]

    @property
    def pixel_count(self) -> int:
        return int(self.member.sum())


class BoundaryChain(BaseModel):
    """Ordered 8-connected boundary pixels (x, y) of one mask component."""
    model_config = ConfigDict(frozen=True)

    points: List[Tuple[int, int]]
    closed: bool = True

    @model_validator(mode="after")
    def _check_adjacency(self):
        if len(self.points) < 2:
            return self
        pts = np.asarray(self.points, dtype=np.int64)
        steps = np.abs(np.diff(pts, axis=0)).max(axis=1)
        if np.any(steps == 0):
            raise ValueError("boundary chain has consecutive duplicate points")
        if np.any(steps > 1):
            raise ValueError("consecutive boundary points must be 8-neighbours")
        if self.closed and np.abs(pts[0] - pts[-1]).max() > 1:
            raise ValueError("closed chain must end next to its first point")
        return self

    def __len__(self) -> int:
        return len(self.points)


class CameraIntrinsics(BaseModel):
    model_config = ConfigDict(frozen=True)

    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float
    cy: float
    width: int = Field(default=settings.DEFAULT_WIDTH, gt=0)
    height: int = Field(default=settings.DEFAULT_HEIGHT, gt=0)

    def scaled_to(self, width: int, height: int) -> "CameraIntrinsics":
        """Rescale focal lengths and principal point for a resized frame."""
        if (width, height) == (self.width, self.height):
            return self
        kx = width / self.width
        ky = height / self.height
        return self.model_copy(update={
            "fx": self.fx * kx, "fy": self.fy * ky,
            "cx": self.cx * kx, "cy": self.cy * ky,
            "width": width, "height": height,
        })


class MeasureOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    statistic: str = settings.DEPTH_STATISTIC
    perimeter_mode: Literal["closed", "open"] = settings.PERIMETER_MODE


class PotholeMeasurement(BaseModel):
    model_config = ConfigDict(frozen=True)

    mask_index: int
    perimeter_mm: float = Field(ge=0)
    depth_mm: float
    h_p_mm: float
    h_c_mm: float
    pixel_area: int
    scales: Tuple[float, float]
    component_count: int = 1
    degenerate: bool = False

    @model_validator(mode="after")
    def _bump_is_flagged(self):
        if self.depth_mm < 0 and not self.degenerate:
            raise ValueError("negative depth must be flagged degenerate")
        return self

    @property
    def flags(self) -> str:
        flags = []
        if self.degenerate:
            flags.append("degenerate")
        if self.component_count > 1:
            flags.append(f"components={self.component_count}")
        return ";".join(flags)
