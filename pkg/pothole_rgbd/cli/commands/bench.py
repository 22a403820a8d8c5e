import time
from pathlib import Path

from pothole_rgbd.cli.commands import EXIT_OK, EXIT_PARTIAL_FAILURE, EXIT_USAGE
from pothole_rgbd.core.errors import DatasetIOError, PotholeError
from pothole_rgbd.core.logging_config import logger
from pothole_rgbd.schemas.geometry import MeasureOptions
from pothole_rgbd.schemas.run_config import RunConfig
from pothole_rgbd.services.dataset_io import (
  dataset_intrinsics,
  labels_to_masks,
  load_depth_frame,
  read_manifest,
  validate_record,
)
from pothole_rgbd.services.geometry import measure_frame


def register(subparsers) -> None:
  parser = subparsers.add_parser("bench", help="Wall-clock measurement throughput over a manifest")
  parser.add_argument("manifest", type=Path, help="Dataset manifest (masks come from its label files)")
  parser.add_argument("--repeat", type=int, default=1, help="Passes over the manifest")
  parser.set_defaults(func=cmd_bench, use_labels=True)


def cmd_bench(config: RunConfig) -> int:
  """
  Time measure_frame on every frame. Loading is excluded from the timing.

  Returns:
    int: 0 on success, 1 if any frame failed to load or measure, 2 if the manifest is unreadable.
  """
  try:
    records = read_manifest(config.manifest)
    intrinsics = dataset_intrinsics(records)
  except DatasetIOError as e:
    logger.error(str(e))
    return EXIT_USAGE

  options = MeasureOptions(statistic=config.depth_statistic, perimeter_mode=config.perimeter_mode)
  loaded, failures = [], 0
  for record in records:
    try:
      width, height = validate_record(record, intrinsics)
      loaded.append((load_depth_frame(record.depth_path, intrinsics), labels_to_masks(record.label_path, width, height)))
    except PotholeError as e:
      failures += 1
      logger.error(f"Frame {record.frame_id} failed: {e}")

  elapsed, measured = 0.0, 0
  for _ in range(config.repeat):
    for frame, masks in loaded:
      start = time.perf_counter()
      try:
        measure_frame(frame, masks, intrinsics, options)
      except PotholeError as e:
        failures += 1
        logger.error(f"Measurement failed: {e}")
        continue
      elapsed += time.perf_counter() - start
      measured += 1

  fps = measured / elapsed if elapsed > 0 else 0.0
  print(f"frames: {measured}  seconds: {elapsed:.3f}  frames/s: {fps:.1f}")
  return EXIT_PARTIAL_FAILURE if failures else EXIT_OK
