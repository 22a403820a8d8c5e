import re
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import ValidationError

from pothole_rgbd.core.config import settings
from pothole_rgbd.core.errors import (
  DatasetIOError,
  DimensionMismatchError,
  InvalidInputError,
  LabelParseError,
  ManifestError,
)
from pothole_rgbd.core.logging_config import logger
from pothole_rgbd.schemas.dataset import DatasetRecord, IntrinsicsFile, ParsedLabel, PolygonLabel
from pothole_rgbd.schemas.geometry import CameraIntrinsics, DepthFrame, InstanceMask

PathLike = Union[str, Path]

# Plain decimal numbers only: no grouping separators, no nan/inf, no locale commas
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_CLASS_ID = re.compile(r"\d+")
SIXTEEN_BIT_MODES = {"I;16", "I;16B", "I;16L", "I"}
INTRINSICS_KEYS = ("fx", "fy", "cx", "cy", "width", "height", "depth_unit")
MANIFEST_HEADER = "intrinsics="


# Labels

def _number(token: str, what: str, line_number, path) -> float:
  if not _NUMBER.fullmatch(token):
    raise LabelParseError(f"non-numeric {what} '{token}'", path, line_number)
  return float(token)


def parse_yolo_polygon_line(line: str, img_w: int, img_h: int, with_confidence: bool = False,
                            line_number: Optional[int] = None, path: Optional[str] = None) -> ParsedLabel:
  """
  Parse one YOLO segmentation line `<class_id> u1 v1 u2 v2 ...`.

  Args:
    line (str): Whitespace-separated tokens.
    img_w (int): Image width used to map u to pixels.
    img_h (int): Image height used to map v to pixels.
    with_confidence (bool): Whether the line ends with a detection confidence (prediction files).
    line_number (int): Line number for diagnostics.
    path (str): File path for diagnostics.

  Returns:
    ParsedLabel: Label, pixel-space vertices (u * img_w, v * img_h) and the optional confidence.

  Raises:
    LabelParseError: On malformed tokens, odd coordinate count, fewer than 3 vertices or
      coordinates outside [0, 1].
  """
  tokens = line.split()
  if not tokens:
    raise LabelParseError("empty label line", path, line_number)
  if not _CLASS_ID.fullmatch(tokens[0]):
    raise LabelParseError(f"invalid class id '{tokens[0]}'", path, line_number)

  coordinate_tokens = tokens[1:]
  confidence = None
  if with_confidence:
    if not coordinate_tokens:
      raise LabelParseError("missing confidence column", path, line_number)
    confidence = _number(coordinate_tokens[-1], "confidence", line_number, path)
    coordinate_tokens = coordinate_tokens[:-1]
    if not 0.0 <= confidence <= 1.0:
      raise LabelParseError(f"confidence {confidence} outside [0, 1]", path, line_number)

  if len(coordinate_tokens) % 2:
    raise LabelParseError(f"odd number of coordinates ({len(coordinate_tokens)})", path, line_number)
  if len(coordinate_tokens) < 6:
    raise LabelParseError(f"polygon needs at least 3 vertices, got {len(coordinate_tokens) // 2}", path, line_number)

  values = [_number(token, "coordinate", line_number, path) for token in coordinate_tokens]
  try:
    label = PolygonLabel(class_id=int(tokens[0]), vertices=list(zip(values[0::2], values[1::2])))
  except ValidationError as e:
    raise LabelParseError(e.errors()[0]["msg"], path, line_number) from e

  return ParsedLabel(label=label, pixels=label.to_pixels(img_w, img_h),
                     confidence=confidence, line_number=line_number)


def format_yolo_polygon_line(label: PolygonLabel, confidence: Optional[float] = None) -> str:
  """Inverse of parse_yolo_polygon_line; floats are written in their shortest round-trip form."""
  coords = " ".join(f"{float(u)!r} {float(v)!r}" for u, v in label.vertices)
  line = f"{label.class_id} {coords}"
  if confidence is not None:
    line += f" {float(confidence)!r}"
  return line


def parse_label_file(path: PathLike, img_w: int, img_h: int, with_confidence: bool = False) -> List[ParsedLabel]:
  """
  Parse every polygon of a label (or prediction) file; blank lines are skipped.

  Raises:
    DatasetIOError: If the file cannot be read.
    LabelParseError: On the first malformed line, naming file and line.
  """
  path = Path(path)
  try:
    text = path.read_text(encoding="utf-8")
  except OSError as e:
    raise DatasetIOError(f"cannot read label file: {e.strerror or e}", str(path)) from e

  parsed = []
  for number, line in enumerate(text.splitlines(), start=1):
    if not line.strip():
      continue
    parsed.append(parse_yolo_polygon_line(line, img_w, img_h, with_confidence, number, str(path)))
  return parsed


def write_label_file(path: PathLike, labels: Iterable[PolygonLabel],
                     confidences: Optional[Sequence[float]] = None) -> None:
  lines = []
  for index, label in enumerate(labels):
    lines.append(format_yolo_polygon_line(label, None if confidences is None else confidences[index]))
  Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# Rasterization

def rasterize_polygon(vertices: Sequence[Tuple[float, float]], w: int, h: int) -> InstanceMask:
  """
  Even-odd scanline fill sampled at pixel centres.

  A pixel (x, y) is a member iff its centre (x + 0.5, y + 0.5) is inside the polygon by the
  crossing rule; pixels outside the frame are dropped. Zero-area polygons give an empty mask.

  Args:
    vertices (Sequence[Tuple[float, float]]): Pixel-space polygon vertices.
    w (int): Mask width.
    h (int): Mask height.

  Returns:
    InstanceMask: Mask of shape (h, w).
  """
  if len(vertices) < 3:
    raise InvalidInputError(f"polygon needs at least 3 vertices, got {len(vertices)}")
  member = np.zeros((h, w), dtype=bool)
  points = np.asarray(vertices, dtype=np.float64)
  xi, yi = points[:, 0], points[:, 1]
  xj, yj = np.roll(xi, 1), np.roll(yi, 1)
  centers = np.arange(w, dtype=np.float64) + 0.5

  row_min = max(int(np.floor(yi.min())) - 1, 0)
  row_max = min(int(np.ceil(yi.max())) + 1, h)
  for row in range(row_min, row_max):
    yc = row + 0.5
    crossing = (yi > yc) != (yj > yc)
    if not crossing.any():
      continue
    a, b, c, d = xi[crossing], yi[crossing], xj[crossing], yj[crossing]
    nodes = np.sort(a + (yc - b) * (c - a) / (d - b))
    # Odd number of crossings at or left of the centre means inside
    member[row] = np.searchsorted(nodes, centers, side="right") % 2 == 1
  return InstanceMask(member=member)


def labels_to_masks(path: PathLike, w: int, h: int, with_confidence: bool = False) -> List[InstanceMask]:
  """One instance mask per polygon line of a label file."""
  return [rasterize_polygon(parsed.pixels, w, h) for parsed in parse_label_file(path, w, h, with_confidence)]


# Images

def image_size(path: PathLike) -> Tuple[int, int]:
  """(width, height) of an image, read from its header only."""
  path = Path(path)
  if not path.is_file():
    raise DatasetIOError("file does not exist", str(path))
  try:
    with Image.open(path) as image:
      return image.size
  except (UnidentifiedImageError, OSError) as e:
    raise DatasetIOError(f"unreadable image: {e}", str(path)) from e


def load_depth_frame(path: PathLike, intrinsics: IntrinsicsFile) -> DepthFrame:
  """
  Load a 16-bit single-channel depth PNG.

  Args:
    path (PathLike): Depth image path.
    intrinsics (IntrinsicsFile): Declared frame size and depth unit (mm per count).

  Returns:
    DepthFrame: depth_mm = count * depth_unit; count 0 marks an invalid pixel.

  Raises:
    DatasetIOError: If the file is missing, unreadable or not 16-bit single-channel.
    DimensionMismatchError: If its size differs from the declared one.
  """
  path = Path(path)
  if not path.is_file():
    raise DatasetIOError("depth file does not exist", str(path))
  try:
    with Image.open(path) as image:
      mode = image.mode
      size = image.size
      counts = np.array(image) if mode in SIXTEEN_BIT_MODES else None
  except (UnidentifiedImageError, OSError) as e:
    raise DatasetIOError(f"unreadable depth image: {e}", str(path)) from e

  if counts is None:
    raise DatasetIOError(f"expected a 16-bit single-channel image, got mode {mode}", str(path))
  if counts.min(initial=0) < 0 or counts.max(initial=0) > np.iinfo(np.uint16).max:
    raise DatasetIOError("depth counts exceed the 16-bit range", str(path))
  if size != (intrinsics.width, intrinsics.height):
    raise DimensionMismatchError(
      f"depth image is {size[0]}x{size[1]}, expected {intrinsics.width}x{intrinsics.height}", str(path)
    )
  return DepthFrame.from_counts(counts, intrinsics.depth_unit)


def write_depth_png(path: PathLike, depth_mm: np.ndarray, valid: Optional[np.ndarray] = None,
                    depth_unit: float = 1.0) -> None:
  """Store depth as 16-bit counts (rounded to the nearest count); invalid pixels are written as 0."""
  depth_mm = np.asarray(depth_mm, dtype=np.float64)
  counts = np.clip(np.rint(depth_mm / depth_unit), 0, np.iinfo(np.uint16).max)
  if valid is not None:
    counts = np.where(valid, counts, 0)
  Image.fromarray(counts.astype(np.uint16)).save(Path(path), format="PNG")


# Intrinsics

def load_intrinsics(path: PathLike) -> IntrinsicsFile:
  """
  Read a `key=value` intrinsics file (keys fx, fy, cx, cy, width, height, depth_unit).

  Raises:
    DatasetIOError: If the file is missing, a line is malformed, or a value is out of range.
  """
  path = Path(path)
  try:
    text = path.read_text(encoding="utf-8")
  except OSError as e:
    raise DatasetIOError(f"cannot read intrinsics: {e.strerror or e}", str(path)) from e

  fields = {}
  for number, line in enumerate(text.splitlines(), start=1):
    line = line.strip()
    if not line or line.startswith("#"):
      continue
    key, sep, value = line.partition("=")
    key = key.strip()
    if not sep or key not in INTRINSICS_KEYS:
      raise DatasetIOError(f"line {number}: expected one of {', '.join(INTRINSICS_KEYS)} as key=value", str(path))
    fields[key] = value.strip()

  try:
    return IntrinsicsFile(**fields)
  except ValidationError as e:
    problems = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
    raise DatasetIOError(f"invalid intrinsics ({problems})", str(path)) from e


def write_intrinsics(path: PathLike, intrinsics: CameraIntrinsics, depth_unit: Optional[float] = None) -> None:
  if depth_unit is None:
    depth_unit = getattr(intrinsics, "depth_unit", 1.0)
  values = intrinsics.model_dump()
  values["depth_unit"] = depth_unit
  lines = [f"{key}={values[key]!r}" for key in INTRINSICS_KEYS]
  Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# Manifests

def read_manifest(path: PathLike) -> List[DatasetRecord]:
  """
  Parse a manifest without touching the files it references.

  The optional header `intrinsics=<path>` comes first; every other non-blank, non-comment line
  is `<rgb> <depth> <labels>`. Relative paths are resolved against the manifest's directory.

  Raises:
    ManifestError: If the manifest is unreadable or a line is malformed.
  """
  path = Path(path)
  try:
    text = path.read_text(encoding="utf-8")
  except OSError as e:
    raise ManifestError(f"cannot read manifest: {e.strerror or e}", str(path)) from e

  base = path.parent
  intrinsics_path = None
  records = []
  for number, line in enumerate(text.splitlines(), start=1):
    line = line.strip()
    if not line or line.startswith("#"):
      continue
    if line.startswith(MANIFEST_HEADER):
      if records or intrinsics_path is not None:
        raise ManifestError(f"line {number}: the intrinsics header must come before any record", str(path))
      intrinsics_path = base / line[len(MANIFEST_HEADER):].strip()
      continue
    tokens = line.split()
    if len(tokens) != 3:
      raise ManifestError(f"line {number}: expected '<rgb> <depth> <labels>', got {len(tokens)} field(s)", str(path))
    rgb, depth, labels = (base / token for token in tokens)
    records.append(DatasetRecord(rgb_path=rgb, depth_path=depth, label_path=labels, intrinsics_path=intrinsics_path))
  return records


def validate_record(record: DatasetRecord, intrinsics: Optional[IntrinsicsFile] = None,
                    require_labels: bool = True) -> Tuple[int, int]:
  """
  Check that a record's files exist and agree on image size.

  Returns:
    Tuple[int, int]: The common (width, height).

  Raises:
    DatasetIOError: For a missing or unreadable file.
    DimensionMismatchError: When RGB, depth and intrinsics sizes disagree.
  """
  rgb_size = image_size(record.rgb_path)
  depth_size = image_size(record.depth_path)
  if rgb_size != depth_size:
    raise DimensionMismatchError(
      f"depth is {depth_size[0]}x{depth_size[1]} while RGB is {rgb_size[0]}x{rgb_size[1]}",
      str(record.depth_path),
    )
  if intrinsics is not None and rgb_size != (intrinsics.width, intrinsics.height):
    raise DimensionMismatchError(
      f"frame is {rgb_size[0]}x{rgb_size[1]} while intrinsics declare {intrinsics.width}x{intrinsics.height}",
      str(record.rgb_path),
    )
  if require_labels and not record.label_path.is_file():
    raise DatasetIOError("label file does not exist", str(record.label_path))
  return rgb_size


def load_manifest(path: PathLike) -> List[DatasetRecord]:
  """
  Parse a manifest and validate every record eagerly.

  Raises:
    ManifestError: Naming the first invalid record and the reason.
  """
  records = read_manifest(path)
  header = records[0].intrinsics_path if records else None
  intrinsics = load_intrinsics(header) if header is not None else None
  for index, record in enumerate(records):
    try:
      validate_record(record, intrinsics)
    except DatasetIOError as e:
      raise ManifestError(f"record {index} ({record.frame_id}): {e}", str(path)) from e
  logger.info(f"Loaded manifest {path} with {len(records)} record(s)")
  return records


def write_manifest(path: PathLike, records: Sequence[DatasetRecord], intrinsics_path: Optional[PathLike] = None) -> None:
  """Write a manifest with paths relative to its own directory."""
  path = Path(path)
  base = path.parent

  def relative(target: Path) -> str:
    target = Path(target)
    try:
      return target.relative_to(base).as_posix()
    except ValueError:
      return target.as_posix()

  lines = []
  if intrinsics_path is not None:
    lines.append(f"{MANIFEST_HEADER}{relative(Path(intrinsics_path))}")
  for record in records:
    lines.append(f"{relative(record.rgb_path)} {relative(record.depth_path)} {relative(record.label_path)}")
  path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def dataset_intrinsics(records: Sequence[DatasetRecord]) -> IntrinsicsFile:
  """Intrinsics named by the manifest header, or the configured camera defaults when there is none."""
  if records and records[0].intrinsics_path is not None:
    return load_intrinsics(records[0].intrinsics_path)
  logger.warning("Manifest has no intrinsics header; using the configured camera defaults")
  return IntrinsicsFile(
    fx=settings.DEFAULT_FX, fy=settings.DEFAULT_FY,
    cx=settings.DEFAULT_WIDTH / 2, cy=settings.DEFAULT_HEIGHT / 2,
    width=settings.DEFAULT_WIDTH, height=settings.DEFAULT_HEIGHT,
  )
