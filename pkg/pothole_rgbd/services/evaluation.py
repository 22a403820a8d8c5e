from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pothole_rgbd.core.config import settings
from pothole_rgbd.core.errors import ConfigurationError, InvalidInputError
from pothole_rgbd.core.logging_config import logger
from pothole_rgbd.schemas.evaluation import (
  ConfusionCounts,
  MatchResult,
  MeasurementErrorRow,
  MeasurementReport,
  PRCurve,
  PrecisionRecall,
  ScoredDetection,
)
from pothole_rgbd.schemas.geometry import InstanceMask

MM_PER_CM = 10.0
JOIN_KEYS = ["frame_id", "instance"]


def mask_iou(a: InstanceMask, b: InstanceMask) -> float:
  """
  Intersection over union of two masks; 0 when both are empty.

  Raises:
    InvalidInputError: If the masks differ in size.
  """
  if a.member.shape != b.member.shape:
    raise InvalidInputError(f"cannot compare a {a.width}x{a.height} mask with a {b.width}x{b.height} mask")
  union = np.count_nonzero(a.member | b.member)
  if union == 0:
    return 0.0
  return np.count_nonzero(a.member & b.member) / union


def iou_matrix(preds: Sequence[InstanceMask], gts: Sequence[InstanceMask]) -> np.ndarray:
  """Pairwise IoU, shape (len(preds), len(gts))."""
  if not preds or not gts:
    return np.zeros((len(preds), len(gts)))
  shapes = {mask.member.shape for mask in list(preds) + list(gts)}
  if len(shapes) > 1:
    raise InvalidInputError(f"masks have different sizes: {sorted(shapes)}")
  p = np.stack([mask.member.ravel() for mask in preds]).astype(np.int64)
  g = np.stack([mask.member.ravel() for mask in gts]).astype(np.int64)
  intersection = p @ g.T
  union = p.sum(axis=1)[:, None] + g.sum(axis=1)[None, :] - intersection
  return np.divide(intersection, union, out=np.zeros(intersection.shape), where=union > 0)


def match_instances(preds: Sequence[ScoredDetection], gts: Sequence[InstanceMask],
                    iou_threshold: float = settings.IOU_THRESHOLD) -> MatchResult:
  """
  Greedy confidence-ordered matching.

  Predictions are visited by descending confidence (stable for ties); each takes the unmatched
  ground truth with the highest IoU at or above the threshold, otherwise it is a false positive.
  Ground truths left unmatched are false negatives.

  Args:
    preds (Sequence[ScoredDetection]): Scored predicted masks.
    gts (Sequence[InstanceMask]): Ground-truth masks.
    iou_threshold (float): Minimum IoU for a match, in (0, 1].

  Returns:
    MatchResult: Counts plus per-prediction TP flags and matched ground-truth indices, in input order.
  """
  if not 0 < iou_threshold <= 1:
    raise ConfigurationError(f"IoU threshold must lie in (0, 1], got {iou_threshold}")

  ious = iou_matrix([pred.mask for pred in preds], gts)
  order = np.argsort(-np.array([pred.confidence for pred in preds], dtype=np.float64), kind="mergesort")
  taken = np.zeros(len(gts), dtype=bool)
  matched_gt: List[Optional[int]] = [None] * len(preds)
  for index in order:
    candidates = np.where(taken, -1.0, ious[index])
    best = int(np.argmax(candidates)) if len(gts) else -1
    if best >= 0 and candidates[best] >= iou_threshold:
      taken[best] = True
      matched_gt[index] = best

  tp = int(taken.sum())
  counts = ConfusionCounts(tp=tp, fp=len(preds) - tp, fn=len(gts) - tp)
  return MatchResult(counts=counts, is_tp=[m is not None for m in matched_gt], matched_gt=matched_gt)


def precision_recall(counts: ConfusionCounts) -> PrecisionRecall:
  """Precision TP/(TP+FP) and recall TP/(TP+FN); an empty denominator gives 0 and flags the result."""
  predicted = counts.tp + counts.fp
  actual = counts.tp + counts.fn
  return PrecisionRecall(
    precision=counts.tp / predicted if predicted else 0.0,
    recall=counts.tp / actual if actual else 0.0,
    degenerate=predicted == 0 or actual == 0,
  )


def average_precision_from_flags(confidences: Sequence[float], tp_flags: Sequence[bool], n_gt: int,
                                 recall_points: int = settings.AP_RECALL_POINTS) -> Tuple[float, PRCurve]:
  """
  Interpolated average precision over pooled detections.

  Detections are swept by descending confidence; the precision envelope (running maximum from
  the right) is sampled at `recall_points` evenly spaced recall thresholds in [0, 1].

  Args:
    confidences (Sequence[float]): Detection confidences.
    tp_flags (Sequence[bool]): Whether each detection matched a ground truth.
    n_gt (int): Number of ground-truth instances.
    recall_points (int): Number of recall thresholds (101 for the COCO convention).

  Returns:
    Tuple[float, PRCurve]: AP in [0, 1] and the raw sweep.
  """
  scores = np.asarray(confidences, dtype=np.float64)
  flags = np.asarray(tp_flags, dtype=bool)
  if scores.shape != flags.shape:
    raise InvalidInputError(f"{scores.size} confidences but {flags.size} flags")

  order = np.argsort(-scores, kind="mergesort")
  tp_sum = np.cumsum(flags[order])
  precision = tp_sum / np.arange(1, len(order) + 1) if len(order) else np.zeros(0)
  if n_gt <= 0:
    logger.warning("No ground-truth instances; average precision is reported as 0")
    return 0.0, PRCurve(recall=[0.0] * len(order), precision=precision.tolist())
  recall = tp_sum / n_gt
  curve = PRCurve(recall=recall.tolist(), precision=precision.tolist())

  envelope = np.maximum.accumulate(precision[::-1])[::-1]
  thresholds = np.linspace(0.0, 1.0, recall_points)
  positions = np.searchsorted(recall, thresholds, side="left")
  sampled = np.zeros(recall_points)
  reached = positions < len(envelope)
  sampled[reached] = envelope[positions[reached]]
  return float(np.mean(sampled)), curve


def average_precision_50(preds: Sequence[ScoredDetection], gts: Sequence[InstanceMask],
                         iou_threshold: float = settings.IOU_THRESHOLD) -> Tuple[float, PRCurve]:
  """Single-class AP at IoU 0.5 for one image (mAP@50 with one class)."""
  result = match_instances(preds, gts, iou_threshold)
  return average_precision_from_flags([pred.confidence for pred in preds], result.is_tp, len(gts))


def confusion_table(counts: ConfusionCounts) -> pd.DataFrame:
  """
  Two-by-two confusion layout: rows are the predicted class, columns the true class.

  The background/background cell is TN, which is always 0 for instance detection.
  """
  return pd.DataFrame(
    [[counts.tp, counts.fp], [counts.fn, counts.tn]],
    index=pd.Index(["pothole", "background"], name="predicted"),
    columns=pd.Index(["pothole", "background"], name="true"),
  )


def measurement_report(pairs: Sequence[Tuple[Tuple[float, float], Tuple[float, float]]],
                       labels: Optional[Sequence[str]] = None) -> MeasurementReport:
  """
  Real versus predicted (perimeter, depth) pairs, in centimetres.

  Args:
    pairs: ((real_perimeter, real_depth), (predicted_perimeter, predicted_depth)) per instance.
    labels: Optional instance names shown as the first report column.

  Returns:
    MeasurementReport: Signed differences (predicted - real) and mean absolute differences.
  """
  rows = [
    MeasurementErrorRow.from_pair(real_p, real_d, pred_p, pred_d)
    for (real_p, real_d), (pred_p, pred_d) in pairs
  ]
  if rows:
    mean_p = float(np.mean([abs(row.diff_perimeter) for row in rows]))
    mean_d = float(np.mean([abs(row.diff_depth) for row in rows]))
  else:
    mean_p = mean_d = 0.0
  return MeasurementReport(rows=rows, mean_abs_diff_perimeter=mean_p, mean_abs_diff_depth=mean_d,
                           labels=list(labels) if labels else [])


def compare_measurements(measured: pd.DataFrame, truth: pd.DataFrame) -> MeasurementReport:
  """
  Join measured rows to truth rows on (frame_id, instance) and report the differences in cm.

  Both frames carry `perimeter_mm` and `depth_mm`; rows present on only one side are skipped
  with a warning.
  """
  for name, frame in (("measured", measured), ("truth", truth)):
    missing = set(JOIN_KEYS + ["perimeter_mm", "depth_mm"]) - set(frame.columns)
    if missing:
      raise InvalidInputError(f"{name} table lacks column(s) {sorted(missing)}")

  keys = {"frame_id": str, "instance": "int64"}
  truth = truth.astype(keys)
  measured = measured.astype(keys)
  merged = truth.merge(measured, on=JOIN_KEYS, how="outer", suffixes=("_real", "_pred"), indicator=True)
  unmatched = merged[merged["_merge"] != "both"]
  if len(unmatched):
    logger.warning(f"{len(unmatched)} instance(s) appear only in the measured or the truth table")
  merged = merged[merged["_merge"] == "both"].sort_values(JOIN_KEYS, kind="mergesort")

  pairs = [
    ((row.perimeter_mm_real / MM_PER_CM, row.depth_mm_real / MM_PER_CM),
     (row.perimeter_mm_pred / MM_PER_CM, row.depth_mm_pred / MM_PER_CM))
    for row in merged.itertuples(index=False)
  ]
  labels = [f"{row.frame_id}#{row.instance}" for row in merged.itertuples(index=False)]
  return measurement_report(pairs, labels)
