from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from pothole_rgbd.core.config import settings
from pothole_rgbd.services.geometry import parse_depth_statistic
from pothole_rgbd.utils.utils import TABLE_SUFFIXES


class RunConfig(BaseModel):
    """Validated command-line options; every path is checked before any work starts."""
    model_config = ConfigDict(frozen=True, extra="ignore")

    command: Literal["measure", "eval", "synth", "gradcheck", "flops", "bench"]

    # Paths
    manifest: Optional[Path] = None
    predictions: Optional[Path] = None
    use_labels: bool = False
    output: Optional[Path] = None
    truth: Optional[Path] = None
    report: Optional[Path] = None
    spec_file: Optional[Path] = None

    # Measurement and evaluation
    iou_threshold: float = Field(default=settings.IOU_THRESHOLD, gt=0, le=1)
    depth_statistic: str = settings.DEPTH_STATISTIC
    perimeter_mode: Literal["closed", "open"] = settings.PERIMETER_MODE
    threads: int = Field(default=1, ge=1)
    repeat: int = Field(default=1, ge=1)

    # Gradient checks
    seed: int = 0
    epsilon: float = Field(default=settings.GRADCHECK_EPSILON, gt=0, le=1e-3)
    trials: int = Field(default=settings.GRADCHECK_TRIALS, ge=0)
    tolerance: float = Field(default=settings.GRADCHECK_TOLERANCE, gt=0)

    # Synthetic scenes
    count: int = Field(default=3, ge=0)
    potholes: int = Field(default=1, ge=0)
    min_radius: float = Field(default=20.0, ge=2)
    max_radius: float = Field(default=60.0, ge=2)
    depression: float = Field(default=50.0, gt=0)
    plane_depth: float = Field(default=800.0, gt=0)
    noise_sigma: float = Field(default=0.0, ge=0)
    jitter: float = 0.0
    profile: Literal["flat-bottom", "spherical-cap"] = "flat-bottom"
    elliptical: bool = False
    width: int = Field(default=settings.DEFAULT_WIDTH, gt=0)
    height: int = Field(default=settings.DEFAULT_HEIGHT, gt=0)
    fx: float = Field(default=settings.DEFAULT_FX, gt=0)
    fy: float = Field(default=settings.DEFAULT_FY, gt=0)

    @field_validator("depth_statistic")
    @classmethod
    def _known_statistic(cls, value):
        parse_depth_statistic(value)
        return value

    @model_validator(mode="after")
    def _check_paths(self):
        def require_file(name: str):
            path = getattr(self, name)
            if path is None:
                raise ValueError(f"--{name.replace('_', '-')} is required for '{self.command}'")
            if not path.is_file():
                raise ValueError(f"{path} does not exist or is not a file")

        if self.command in ("measure", "eval", "bench"):
            require_file("manifest")
        if self.command == "measure":
            if self.use_labels == (self.predictions is not None):
                raise ValueError("measure needs exactly one of --use-labels or --predictions")
            if self.output is None or self.output.suffix.lower() not in TABLE_SUFFIXES:
                raise ValueError(f"measure needs --output ending in {' or '.join(TABLE_SUFFIXES)}")
            if self.truth is not None:
                require_file("truth")
            if self.report is not None and self.truth is None:
                raise ValueError("--report needs --truth")
        if self.command in ("measure", "eval") and self.predictions is not None and not self.predictions.is_dir():
            raise ValueError(f"{self.predictions} is not a directory")
        if self.command == "eval":
            if self.predictions is None:
                raise ValueError("eval needs --predictions")
            if self.output is not None and self.output.suffix.lower() not in TABLE_SUFFIXES:
                raise ValueError(f"eval --output must end in {' or '.join(TABLE_SUFFIXES)}")
        if self.command == "flops":
            require_file("spec_file")
        if self.command == "synth":
            if self.output is None:
                raise ValueError("synth needs --output")
            if self.spec_file is not None:
                require_file("spec_file")
            if self.max_radius < self.min_radius:
                raise ValueError("--max-radius must not be below --min-radius")
        return self
