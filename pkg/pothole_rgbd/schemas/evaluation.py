from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pothole_rgbd.schemas.geometry import InstanceMask


class ScoredDetection(BaseModel):
    model_config = ConfigDict(frozen=True)

    mask: InstanceMask
    confidence: float = Field(ge=0, le=1)


class ConfusionCounts(BaseModel):
    """Instance-level counts. TN is always 0: background has no countable instances."""
    model_config = ConfigDict(frozen=True)

    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0, le=0)

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(tp=self.tp + other.tp, fp=self.fp + other.fp, fn=self.fn + other.fn)


class MatchResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    counts: ConfusionCounts
    # Per prediction, in input order
    is_tp: List[bool]
    matched_gt: List[Optional[int]]


class PrecisionRecall(BaseModel):
    model_config = ConfigDict(frozen=True)

    precision: float
    recall: float
    degenerate: bool = False


class PRCurve(BaseModel):
    model_config = ConfigDict(frozen=True)

    recall: List[float] = []
    precision: List[float] = []

    @model_validator(mode="after")
    def _check(self):
        if len(self.recall) != len(self.precision):
            raise ValueError("recall and precision must have equal length")
        if np.any(np.diff(np.asarray(self.recall, dtype=float)) < 0):
            raise ValueError("recall must be non-decreasing along the sweep")
        return self


class MeasurementErrorRow(BaseModel):
    """Real versus predicted perimeter and depth, all in centimetres."""
    model_config = ConfigDict(frozen=True)

    real_perimeter: float
    real_depth: float
    predicted_perimeter: float
    predicted_depth: float
    diff_perimeter: float
    diff_depth: float

    @model_validator(mode="after")
    def _diffs_are_signed_errors(self):
        if self.diff_perimeter != self.predicted_perimeter - self.real_perimeter:
            raise ValueError("diff_perimeter must equal predicted - real")
        if self.diff_depth != self.predicted_depth - self.real_depth:
            raise ValueError("diff_depth must equal predicted - real")
        return self

    @classmethod
    def from_pair(cls, real_perimeter: float, real_depth: float,
                  predicted_perimeter: float, predicted_depth: float) -> "MeasurementErrorRow":
        return cls(
            real_perimeter=real_perimeter, real_depth=real_depth,
            predicted_perimeter=predicted_perimeter, predicted_depth=predicted_depth,
            diff_perimeter=predicted_perimeter - real_perimeter,
            diff_depth=predicted_depth - real_depth,
        )


class MeasurementReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: List[MeasurementErrorRow]
    mean_abs_diff_perimeter: float
    mean_abs_diff_depth: float
    labels: List[str] = []

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([row.model_dump() for row in self.rows], columns=list(MeasurementErrorRow.model_fields))
        if self.labels:
            frame.insert(0, "instance", self.labels)
        return frame

    def to_text(self) -> str:
        """Aligned table in centimetres with one decimal and signed differences."""
        frame = self.to_frame()
        unsigned = "{:.1f}".format
        signed = "{:+.1f}".format
        formatters = {column: signed if column.startswith("diff_") else unsigned
                      for column in MeasurementErrorRow.model_fields}
        body = frame.to_string(index=False, formatters=formatters) if len(frame) else "(no rows)"
        summary = (f"mean |diff| perimeter: {self.mean_abs_diff_perimeter:.2f} cm, "
                   f"depth: {self.mean_abs_diff_depth:.2f} cm")
        return f"{body}\n{summary}\n"
