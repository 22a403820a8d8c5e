from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Tuple

import pandas as pd
from pydantic import ValidationError

from pothole_rgbd.cli.commands import EXIT_OK, EXIT_PARTIAL_FAILURE, EXIT_USAGE
from pothole_rgbd.core.config import settings
from pothole_rgbd.core.errors import DatasetIOError, PotholeError
from pothole_rgbd.core.logging_config import logger
from pothole_rgbd.schemas.dataset import DatasetRecord, IntrinsicsFile
from pothole_rgbd.schemas.evaluation import ConfusionCounts, MatchResult, ScoredDetection
from pothole_rgbd.schemas.run_config import RunConfig
from pothole_rgbd.services.dataset_io import (
  dataset_intrinsics,
  labels_to_masks,
  parse_label_file,
  rasterize_polygon,
  read_manifest,
  validate_record,
)
from pothole_rgbd.services.evaluation import (
  average_precision_from_flags,
  confusion_table,
  match_instances,
  precision_recall,
)
from pothole_rgbd.utils.utils import write_table


def register(subparsers) -> None:
  parser = subparsers.add_parser("eval", help="Precision, recall and AP@50 of prediction files against labels")
  parser.add_argument("manifest", type=Path, help="Ground-truth dataset manifest")
  parser.add_argument("--predictions", type=Path, required=True, help="Directory of <frame_id>.txt prediction files")
  parser.add_argument("--output", type=Path, help="One-row summary table (.csv or .avro)")
  parser.add_argument("--iou-threshold", type=float, default=settings.IOU_THRESHOLD)
  parser.add_argument("--threads", type=int, default=1)
  parser.set_defaults(func=cmd_eval)


def evaluate_record(record: DatasetRecord, intrinsics: IntrinsicsFile, predictions: Path,
                    iou_threshold: float) -> Tuple[List[float], MatchResult]:
  """Match one frame's predictions to its labels; a missing prediction file means no detections."""
  width, height = validate_record(record, intrinsics)
  gts = labels_to_masks(record.label_path, width, height)
  prediction_file = predictions / f"{record.frame_id}.txt"
  detections = []
  if prediction_file.is_file():
    for parsed in parse_label_file(prediction_file, width, height, with_confidence=True):
      detections.append(ScoredDetection(mask=rasterize_polygon(parsed.pixels, width, height),
                                        confidence=parsed.confidence))
  else:
    logger.warning(f"No prediction file for {record.frame_id}; its {len(gts)} instance(s) count as missed")
  return [d.confidence for d in detections], match_instances(detections, gts, iou_threshold)


def summary_lines(counts: ConfusionCounts, ap50: float) -> List[str]:
  """Human-readable summary: percentages with one decimal and the confusion table."""
  pr = precision_recall(counts)
  precision = f"{100 * pr.precision:.1f}%"
  if pr.degenerate and counts.tp + counts.fp == 0:
    precision += " (degenerate: no detections)"
  recall = f"{100 * pr.recall:.1f}%"
  if pr.degenerate and counts.tp + counts.fn == 0:
    recall += " (degenerate: no ground truth)"
  return [
    f"Precision: {precision}",
    f"Recall:    {recall}",
    f"AP@50:     {100 * ap50:.1f}%",
    "",
    confusion_table(counts).to_string(),
  ]


def cmd_eval(config: RunConfig) -> int:
  """
  Evaluate prediction files against the labels of a manifest.

  Returns:
    int: 0 on success, 1 if some frames could not be evaluated, 2 if the manifest is unreadable.
  """
  try:
    records = read_manifest(config.manifest)
    intrinsics = dataset_intrinsics(records)
  except DatasetIOError as e:
    logger.error(str(e))
    return EXIT_USAGE

  def safe_evaluate(record):
    try:
      return evaluate_record(record, intrinsics, config.predictions, config.iou_threshold), None
    except (PotholeError, ValidationError) as e:
      return None, str(e)

  with ThreadPoolExecutor(max_workers=config.threads) as pool:
    outcomes = list(pool.map(safe_evaluate, records))

  counts = ConfusionCounts()
  confidences, flags, failures = [], [], 0
  for record, (outcome, error) in zip(records, outcomes):
    if error is not None:
      failures += 1
      logger.error(f"Frame {record.frame_id} failed: {error}")
      continue
    frame_confidences, result = outcome
    counts = counts + result.counts
    confidences.extend(frame_confidences)
    flags.extend(result.is_tp)

  n_gt = counts.tp + counts.fn
  ap50, _ = average_precision_from_flags(confidences, flags, n_gt)
  print("\n".join(summary_lines(counts, ap50)))

  if config.output is not None:
    pr = precision_recall(counts)
    summary = pd.DataFrame([{
      "precision": pr.precision, "recall": pr.recall, "ap50": ap50,
      "tp": counts.tp, "fp": counts.fp, "fn": counts.fn, "degenerate": pr.degenerate,
    }])
    try:
      write_table(config.output, summary, name="EvaluationSummary")
    except (OSError, PotholeError) as e:
      logger.error(f"Could not write summary: {e}")
      return EXIT_USAGE

  return EXIT_PARTIAL_FAILURE if failures else EXIT_OK
