from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from pothole_rgbd.schemas.geometry import CameraIntrinsics


class PolygonLabel(BaseModel):
    """One YOLO segmentation line: class id and normalised (u, v) vertices."""
    model_config = ConfigDict(frozen=True)

    class_id: int = Field(ge=0)
    vertices: List[Tuple[float, float]]

    @field_validator("vertices")
    @classmethod
    def _check_vertices(cls, vertices):
        if len(vertices) < 3:
            raise ValueError(f"polygon needs at least 3 vertices, got {len(vertices)}")
        for u, v in vertices:
            if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
                raise ValueError(f"normalised coordinate ({u}, {v}) outside [0, 1]")
        return vertices

    def to_pixels(self, img_w: int, img_h: int) -> List[Tuple[float, float]]:
        return [(u * img_w, v * img_h) for u, v in self.vertices]


class ParsedLabel(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: PolygonLabel
    pixels: List[Tuple[float, float]]
    confidence: Optional[float] = Field(default=None, ge=0, le=1)
    line_number: Optional[int] = None


class IntrinsicsFile(CameraIntrinsics):
    depth_unit: float = Field(default=1.0, gt=0)


class DatasetRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    rgb_path: Path
    depth_path: Path
    label_path: Path
    intrinsics_path: Optional[Path] = None

    @property
    def frame_id(self) -> str:
        return self.rgb_path.stem
