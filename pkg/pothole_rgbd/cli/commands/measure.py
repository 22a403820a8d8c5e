import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple

import pandas as pd
from pydantic import ValidationError

from pothole_rgbd.cli.commands import EXIT_OK, EXIT_PARTIAL_FAILURE, EXIT_USAGE
from pothole_rgbd.core.config import settings
from pothole_rgbd.core.errors import DatasetIOError, PotholeError
from pothole_rgbd.core.logging_config import logger
from pothole_rgbd.schemas.dataset import DatasetRecord, IntrinsicsFile
from pothole_rgbd.schemas.geometry import InstanceMask, MeasureOptions
from pothole_rgbd.schemas.run_config import RunConfig
from pothole_rgbd.services.dataset_io import (
  dataset_intrinsics,
  labels_to_masks,
  load_depth_frame,
  read_manifest,
  validate_record,
)
from pothole_rgbd.services.evaluation import compare_measurements
from pothole_rgbd.services.geometry import measure_frame
from pothole_rgbd.utils.utils import read_table, write_table

MEASUREMENT_COLUMNS = ["frame_id", "instance", "perimeter_mm", "depth_mm", "h_p_mm", "h_c_mm",
                       "pixel_area", "component_count", "flags"]


def register(subparsers) -> None:
  parser = subparsers.add_parser("measure", help="Measure pothole perimeter and depth for every frame of a manifest")
  parser.add_argument("manifest", type=Path, help="Dataset manifest")
  source = parser.add_mutually_exclusive_group()
  source.add_argument("--use-labels", action="store_true", help="Take masks from the ground-truth label files")
  source.add_argument("--predictions", type=Path, help="Directory of <frame_id>.txt prediction files")
  parser.add_argument("--output", type=Path, required=True, help="Measurement table (.csv or .avro)")
  parser.add_argument("--truth", type=Path, help="Truth table (frame_id, instance, perimeter_mm, depth_mm)")
  parser.add_argument("--report", type=Path, help="Write the real-versus-predicted report here (needs --truth)")
  parser.add_argument("--depth-statistic", default=settings.DEPTH_STATISTIC, help="max, p95 or p<q>")
  parser.add_argument("--perimeter-mode", choices=["closed", "open"], default=settings.PERIMETER_MODE)
  parser.add_argument("--threads", type=int, default=1, help="Frames measured in parallel")
  parser.set_defaults(func=cmd_measure)


def frame_masks(record: DatasetRecord, size: Tuple[int, int], predictions: Optional[Path]) -> List[InstanceMask]:
  """Instance masks of a frame from its label file, or from its prediction file when a directory is given."""
  width, height = size
  if predictions is None:
    return labels_to_masks(record.label_path, width, height)
  prediction_file = predictions / f"{record.frame_id}.txt"
  if not prediction_file.is_file():
    logger.warning(f"No prediction file for {record.frame_id}; treating it as zero detections")
    return []
  return labels_to_masks(prediction_file, width, height, with_confidence=True)


def measure_record(record: DatasetRecord, intrinsics: IntrinsicsFile, config: RunConfig) -> List[dict]:
  size = validate_record(record, intrinsics, require_labels=config.use_labels)
  frame = load_depth_frame(record.depth_path, intrinsics)
  masks = frame_masks(record, size, None if config.use_labels else config.predictions)
  options = MeasureOptions(statistic=config.depth_statistic, perimeter_mode=config.perimeter_mode)
  return [
    {
      "frame_id": record.frame_id,
      "instance": m.mask_index,
      "perimeter_mm": m.perimeter_mm,
      "depth_mm": m.depth_mm,
      "h_p_mm": m.h_p_mm,
      "h_c_mm": m.h_c_mm,
      "pixel_area": m.pixel_area,
      "component_count": m.component_count,
      "flags": m.flags,
    }
    for m in measure_frame(frame, masks, intrinsics, options)
  ]


def _safe_measure(record: DatasetRecord, intrinsics: IntrinsicsFile, config: RunConfig):
  try:
    return measure_record(record, intrinsics, config), None
  except (PotholeError, ValidationError) as e:
    return [], str(e)


def cmd_measure(config: RunConfig) -> int:
  """
  Measure every frame of a manifest and write one row per pothole instance.

  Frames that fail are reported on the diagnostic stream and skipped; rows keep manifest order.

  Returns:
    int: 0 on success, 1 if any frame failed, 2 if the manifest or intrinsics cannot be read.
  """
  try:
    records = read_manifest(config.manifest)
    intrinsics = dataset_intrinsics(records)
  except DatasetIOError as e:
    logger.error(str(e))
    return EXIT_USAGE

  with ThreadPoolExecutor(max_workers=config.threads) as pool:
    outcomes = list(pool.map(lambda record: _safe_measure(record, intrinsics, config), records))

  rows, failures = [], 0
  for record, (frame_rows, error) in zip(records, outcomes):
    if error is not None:
      failures += 1
      logger.error(f"Frame {record.frame_id} failed: {error}")
      continue
    rows.extend(frame_rows)

  table = pd.DataFrame(rows, columns=MEASUREMENT_COLUMNS)
  try:
    write_table(config.output, table, name="PotholeMeasurement")
    if config.truth is not None:
      report = compare_measurements(table, read_table(config.truth))
      if config.report is None:
        print(report.to_text(), end="")
      else:
        config.report.parent.mkdir(parents=True, exist_ok=True)
        table_path = config.report.with_suffix(".csv")
        text_path = config.report if table_path != config.report else config.report.with_suffix(".txt")
        text_path.write_text(report.to_text(), encoding="utf-8")
        report.to_frame().to_csv(table_path, index=False)
  except (OSError, PotholeError) as e:
    logger.error(traceback.format_exc())
    logger.error(f"Could not write results: {e}")
    return EXIT_USAGE

  logger.info(f"Measured {len(rows)} pothole(s) in {len(records) - failures}/{len(records)} frame(s)")
  return EXIT_PARTIAL_FAILURE if failures else EXIT_OK
