import re
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from pothole_rgbd.core.errors import (
  ConfigurationError,
  InvalidInputError,
  MeasurementError,
  NoDepthError,
  NoGroundPlaneError,
)
from pothole_rgbd.core.logging_config import logger
from pothole_rgbd.schemas.geometry import (
  BoundaryChain,
  CameraIntrinsics,
  DepthFrame,
  InstanceMask,
  MeasureOptions,
  PotholeMeasurement,
)

# Clockwise on screen (y grows downward), starting from the west neighbour
MOORE_RING = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))
_RING_INDEX = {step: index for index, step in enumerate(MOORE_RING)}
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
_PERCENTILE = re.compile(r"p(\d+(?:\.\d+)?)")


def _check_dimensions(frame: DepthFrame, mask: InstanceMask, index: Optional[int] = None) -> None:
  if mask.member.shape != frame.depth_mm.shape:
    which = "mask" if index is None else f"mask {index}"
    raise InvalidInputError(
      f"{which} is {mask.width}x{mask.height} but the depth frame is {frame.width}x{frame.height}"
    )


def parse_depth_statistic(statistic: str) -> float:
  """
  Translate a statistic selector into a percentile.

  Args:
    statistic (str): "max", "p95" or any "p<q>" with 0 < q <= 100.

  Returns:
    float: Percentile q; "max" maps to 100, which np.percentile returns exactly as the maximum.

  Raises:
    ConfigurationError: If the selector is not recognised.
  """
  text = str(statistic).strip().lower()
  if text == "max":
    return 100.0
  match = _PERCENTILE.fullmatch(text)
  if match:
    q = float(match.group(1))
    if 0 < q <= 100:
      return q
  raise ConfigurationError(f"Unknown depth statistic '{statistic}'; expected 'max' or 'p<q>' with 0 < q <= 100")


def ground_plane_height(frame: DepthFrame, exclusions: Sequence[InstanceMask]) -> float:
  """
  Road-surface reference h_c: median of the valid depths outside every exclusion mask.

  Raises:
    NoGroundPlaneError: If no valid pixel remains outside the masks.
  """
  eligible = frame.valid.copy()
  for index, mask in enumerate(exclusions):
    _check_dimensions(frame, mask, index)
    eligible &= ~mask.member
  values = frame.depth_mm[eligible]
  if values.size == 0:
    raise NoGroundPlaneError("No valid depth pixel lies outside the pothole masks.")
  return float(np.median(values))


def region_height(frame: DepthFrame, mask: InstanceMask, statistic: str = "p95") -> float:
  """Height h_p of a pothole region: the chosen statistic of its valid depths."""
  _check_dimensions(frame, mask)
  q = parse_depth_statistic(statistic)
  values = frame.depth_mm[frame.valid & mask.member]
  if values.size == 0:
    raise NoDepthError("The mask region holds no valid depth pixel.")
  return float(np.percentile(values, q))


def pothole_depth(frame: DepthFrame, mask: InstanceMask, h_c: float, statistic: str = "p95") -> float:
  """Depth d = h_p - h_c of one pothole; negative values indicate a bump."""
  return region_height(frame, mask, statistic) - h_c


def _trace_component(member: np.ndarray, start: Tuple[int, int]) -> BoundaryChain:
  """
  Moore-neighbour trace of one 8-connected component.

  `member` is padded by one background pixel on every side; `start` is given in padded
  coordinates and must be the raster-first pixel of the component, so its west neighbour is
  background. Tracing stops as soon as a (pixel, backtrack) state repeats.
  """
  x, y = start
  back = 0
  states = set()
  points = []
  while (x, y, back) not in states:
    states.add((x, y, back))
    points.append((x - 1, y - 1))
    for turn in range(1, 9):
      direction = (back + turn) % 8
      dx, dy = MOORE_RING[direction]
      if member[y + dy, x + dx]:
        break
    else:
      # Isolated pixel
      break
    bx, by = MOORE_RING[(direction - 1) % 8]
    x, y = x + dx, y + dy
    back = _RING_INDEX[(bx - dx, by - dy)]

  # A two-pixel component comes back to its start pixel by a different backtrack
  if len(points) > 1 and points[-1] == points[0]:
    points.pop()
  closed = len(points) == 1 or max(abs(points[-1][0] - points[0][0]), abs(points[-1][1] - points[0][1])) <= 1
  return BoundaryChain(points=points, closed=closed)


def trace_boundary(mask: InstanceMask) -> List[BoundaryChain]:
  """
  Outer boundary of every 8-connected component, traced clockwise.

  Each chain starts at its component's top-most, then left-most pixel. Components are returned
  in raster order of that start pixel; an empty mask gives an empty list.
  """
  labels, count = ndimage.label(mask.member, structure=_EIGHT_CONNECTED)
  chains = []
  for label, window in enumerate(ndimage.find_objects(labels), start=1):
    if window is None:
      continue
    rows, cols = window
    component = labels[window] == label
    padded = np.pad(component, 1, constant_values=False)
    first_row = int(np.argmax(component.any(axis=1)))
    first_col = int(np.argmax(component[first_row]))
    chain = _trace_component(padded, (first_col + 1, first_row + 1))
    offset = np.array([cols.start, rows.start])
    points = [tuple(int(v) for v in np.add(point, offset)) for point in chain.points]
    chains.append(BoundaryChain(points=points, closed=chain.closed))
  logger.debug(f"Traced {len(chains)} component(s) out of {count} labels")
  return chains


def pixel_scales(intrinsics: CameraIntrinsics, reference_depth_mm: float) -> Tuple[float, float]:
  """
  Physical size of one pixel (mm/px) at a given depth under the pinhole model.

  Raises:
    InvalidInputError: If the depth is not a positive finite number.
  """
  if not np.isfinite(reference_depth_mm) or reference_depth_mm <= 0:
    raise InvalidInputError(f"reference depth must be positive, got {reference_depth_mm}")
  return reference_depth_mm / intrinsics.fx, reference_depth_mm / intrinsics.fy


def boundary_perimeter(chain: BoundaryChain, s_x: float, s_y: float, mode: str = "closed") -> float:
  """
  Metric length of a boundary chain: sum of scaled distances between consecutive points.

  Args:
    chain (BoundaryChain): Ordered boundary pixels.
    s_x (float): Horizontal pixel size in mm.
    s_y (float): Vertical pixel size in mm.
    mode (str): "closed" adds the segment from the last point back to the first; "open" does not.

  Returns:
    float: Perimeter in mm; 0 for a single-point chain.
  """
  if mode not in ("closed", "open"):
    raise ConfigurationError(f"perimeter mode must be 'closed' or 'open', got '{mode}'")
  if len(chain) < 2:
    return 0.0
  points = np.asarray(chain.points, dtype=np.float64)
  if mode == "closed":
    points = np.vstack([points, points[:1]])
  steps = np.diff(points, axis=0)
  return float(np.hypot(steps[:, 0] * s_x, steps[:, 1] * s_y).sum())


def measure_frame(frame: DepthFrame, masks: Sequence[InstanceMask], intrinsics: CameraIntrinsics,
                  options: Optional[MeasureOptions] = None) -> List[PotholeMeasurement]:
  """
  Perimeter and depth of every pothole mask in one frame.

  The ground plane is estimated once with all masks excluded; pixel scales are taken at that
  plane depth, with the intrinsics rescaled when the frame size differs from their native size.
  Masks with several components are measured on their longest outline.

  Args:
    frame (DepthFrame): Depth map of the frame.
    masks (Sequence[InstanceMask]): Pothole masks, one per instance.
    intrinsics (CameraIntrinsics): Depth camera intrinsics.
    options (MeasureOptions): Depth statistic and perimeter mode.

  Returns:
    List[PotholeMeasurement]: One measurement per mask, in input order.

  Raises:
    MeasurementError: Wrapping the ground-plane or per-mask failure, with the mask index.
  """
  options = options or MeasureOptions()
  if not masks:
    return []
  for index, mask in enumerate(masks):
    _check_dimensions(frame, mask, index)

  try:
    h_c = ground_plane_height(frame, masks)
  except NoGroundPlaneError as e:
    raise MeasurementError(str(e)) from e

  scales = pixel_scales(intrinsics.scaled_to(frame.width, frame.height), h_c)
  measurements = []
  for index, mask in enumerate(masks):
    try:
      h_p = region_height(frame, mask, options.statistic)
    except NoDepthError as e:
      raise MeasurementError(f"mask {index}: {e}", mask_index=index) from e
    chains = trace_boundary(mask)
    outline = max(chains, key=len)
    depth = h_p - h_c
    if depth < 0:
      logger.warning(f"Mask {index} lies above the ground plane ({depth:.2f} mm); flagged degenerate")
    measurements.append(PotholeMeasurement(
      mask_index=index,
      perimeter_mm=boundary_perimeter(outline, *scales, mode=options.perimeter_mode),
      depth_mm=depth,
      h_p_mm=h_p,
      h_c_mm=h_c,
      pixel_area=mask.pixel_count,
      scales=scales,
      component_count=len(chains),
      degenerate=depth < 0,
    ))
  return measurements
