from typing import List, Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from pothole_rgbd.core.config import settings
from pothole_rgbd.schemas.geometry import CameraIntrinsics, InstanceMask


class PotholeSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    center: Tuple[float, float]
    # Semi-axes (a along x, b along y) in pixels; equal for a circle
    radii: Tuple[float, float]
    depression_mm: float = Field(gt=0)
    profile: Literal["flat-bottom", "spherical-cap"] = "flat-bottom"

    @model_validator(mode="after")
    def _check_radii(self):
        if min(self.radii) < 2:
            raise ValueError(f"pothole radii must be at least 2 px, got {self.radii}")
        return self


class SceneSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: int = Field(default=settings.DEFAULT_WIDTH, gt=0)
    height: int = Field(default=settings.DEFAULT_HEIGHT, gt=0)
    plane_depth_mm: float = Field(default=800.0, gt=0)
    potholes: List[PotholeSpec] = []
    noise_sigma_mm: float = Field(default=0.0, ge=0)
    camera_jitter_mm: float = 0.0
    rng_seed: int = 0
    fx: float = Field(default=settings.DEFAULT_FX, gt=0)
    fy: float = Field(default=settings.DEFAULT_FY, gt=0)
    depth_unit: float = Field(default=1.0, gt=0)
    invalid_fraction: float = Field(default=0.0, ge=0, lt=1)

    @model_validator(mode="after")
    def _potholes_inside_frame(self):
        for index, pothole in enumerate(self.potholes):
            (cx, cy), (a, b) = pothole.center, pothole.radii
            if cx - a < 0 or cy - b < 0 or cx + a > self.width or cy + b > self.height:
                raise ValueError(f"pothole {index} extends outside the {self.width}x{self.height} frame")
        if self.plane_depth_mm + self.camera_jitter_mm <= 0:
            raise ValueError("camera jitter pushes the plane behind the camera")
        return self

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(fx=self.fx, fy=self.fy, cx=self.width / 2, cy=self.height / 2,
                                width=self.width, height=self.height)


class PotholeTruth(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    perimeter_mm: float
    depth_mm: float
    mask: InstanceMask


class SceneTruth(BaseModel):
    model_config = ConfigDict(frozen=True)

    potholes: List[PotholeTruth]
    scales: Tuple[float, float]

    @property
    def masks(self) -> List[InstanceMask]:
        return [pothole.mask for pothole in self.potholes]
