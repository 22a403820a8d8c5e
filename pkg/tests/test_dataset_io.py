import numpy as np
import pytest
from PIL import Image

from pothole_rgbd.core.errors import DatasetIOError, DimensionMismatchError, LabelParseError, ManifestError
from pothole_rgbd.schemas.dataset import IntrinsicsFile, PolygonLabel
from pothole_rgbd.services.dataset_io import (
  format_yolo_polygon_line,
  labels_to_masks,
  load_depth_frame,
  load_intrinsics,
  load_manifest,
  parse_label_file,
  parse_yolo_polygon_line,
  rasterize_polygon,
  read_manifest,
  write_depth_png,
  write_intrinsics,
  write_manifest,
)


def point_in_polygon(px: float, py: float, vertices) -> bool:
  """Crossing-number test, evaluated independently for one point."""
  inside = False
  count = len(vertices)
  for i in range(count):
    xi, yi = vertices[i]
    xj, yj = vertices[i - 1]
    if (yi > py) != (yj > py):
      crossing = xi + (py - yi) * (xj - xi) / (yj - yi)
      if crossing <= px:
        inside = not inside
  return inside


def random_convex_polygon(rng, size: int):
  count = int(rng.integers(3, 12))
  angles = np.sort(rng.uniform(0.0, 2 * np.pi, count))
  cx, cy = rng.uniform(0.2 * size, 0.8 * size, 2)
  radius = rng.uniform(2.0, 0.6 * size)
  return list(zip((cx + radius * np.cos(angles)).tolist(), (cy + radius * np.sin(angles)).tolist()))


def test_parse_label_line_maps_to_pixels():
  parsed = parse_yolo_polygon_line("0 0.1 0.2 0.3 0.2 0.2 0.4", 640, 480)
  assert parsed.label.class_id == 0
  assert parsed.pixels == pytest.approx([(64.0, 96.0), (192.0, 96.0), (128.0, 192.0)])
  assert parsed.confidence is None


def test_parse_prediction_line_takes_confidence():
  parsed = parse_yolo_polygon_line("0 0.1 0.2 0.3 0.2 0.2 0.4 0.87", 640, 480, with_confidence=True)
  assert parsed.confidence == 0.87
  assert len(parsed.pixels) == 3


@pytest.mark.parametrize("line", [
  "0 0.1 0.2 0.3",
  "0 0.1 0.2 0.3 0.2 0.2",
  "0 0.1 0.2 0.3 0.2 0.2 1.4",
  "x 0.1 0.2 0.3 0.2 0.2 0.4",
  "0 0.1 0.2 0.3 0.2 0.2 nan",
  "0 0,1 0.2 0.3 0.2 0.2 0.4",
])
def test_malformed_label_lines(line):
  with pytest.raises(LabelParseError):
    parse_yolo_polygon_line(line, 640, 480)


def test_label_file_errors_name_the_line(tmp_path):
  path = tmp_path / "frame.txt"
  path.write_text("0 0.1 0.1 0.2 0.1 0.2 0.2\n\n0 0.5 0.5\n", encoding="utf-8")
  with pytest.raises(LabelParseError) as info:
    parse_label_file(path, 10, 10)
  assert info.value.line_number == 3
  assert "frame.txt:3" in str(info.value)


def test_format_parses_back_to_the_same_label():
  label = PolygonLabel(class_id=0, vertices=[(0.1, 0.2), (1 / 3, 0.2), (0.25, 0.75)])
  line = format_yolo_polygon_line(label, confidence=0.5)
  parsed = parse_yolo_polygon_line(line, 100, 100, with_confidence=True)
  assert parsed.label == label
  assert parsed.confidence == 0.5


def test_rasterize_axis_aligned_rectangle():
  mask = rasterize_polygon([(1.0, 1.0), (4.0, 1.0), (4.0, 3.0), (1.0, 3.0)], 6, 5)
  expected = np.zeros((5, 6), dtype=bool)
  expected[1:3, 1:4] = True
  np.testing.assert_array_equal(mask.member, expected)


def test_rasterize_clips_to_frame_and_handles_degenerate_polygons():
  mask = rasterize_polygon([(-5.0, -5.0), (3.0, -5.0), (3.0, 2.0), (-5.0, 2.0)], 4, 4)
  assert mask.member[:2, :3].all() and mask.pixel_count == 6
  assert rasterize_polygon([(0.0, 0.0), (2.0, 2.0), (4.0, 4.0)], 5, 5).pixel_count == 0


def test_rasterize_matches_point_in_polygon(rng):
  for _ in range(200):
    size = int(rng.integers(8, 65))
    vertices = random_convex_polygon(rng, size)
    mask = rasterize_polygon(vertices, size, size)
    expected = np.array([[point_in_polygon(x + 0.5, y + 0.5, vertices) for x in range(size)] for y in range(size)])
    np.testing.assert_array_equal(mask.member, expected)


def test_labels_to_masks_one_per_line(tmp_path):
  path = tmp_path / "labels.txt"
  path.write_text("0 0.0 0.0 0.5 0.0 0.5 0.5 0.0 0.5\n0 0.5 0.5 1.0 0.5 1.0 1.0 0.5 1.0\n", encoding="utf-8")
  masks = labels_to_masks(path, 8, 8)
  assert [mask.pixel_count for mask in masks] == [16, 16]
  assert not (masks[0].member & masks[1].member).any()


def test_depth_png_roundtrip_marks_zero_invalid(tmp_path):
  depth = np.full((4, 5), 812.0)
  valid = np.ones(depth.shape, dtype=bool)
  valid[0, 0] = False
  path = tmp_path / "depth.png"
  write_depth_png(path, depth, valid)
  frame = load_depth_frame(path, IntrinsicsFile(fx=5.0, fy=5.0, cx=2.5, cy=2.0, width=5, height=4))
  assert not frame.valid[0, 0] and frame.valid.sum() == 19
  assert frame.depth_mm[1, 1] == 812.0


def test_depth_unit_scales_counts(tmp_path):
  path = tmp_path / "depth.png"
  Image.fromarray(np.full((2, 2), 1000, dtype=np.uint16)).save(path)
  frame = load_depth_frame(path, IntrinsicsFile(fx=1.0, fy=1.0, cx=1.0, cy=1.0, width=2, height=2, depth_unit=0.25))
  assert np.all(frame.depth_mm == 250.0)


def test_depth_png_rejects_rgb_and_wrong_size(tmp_path):
  intrinsics = IntrinsicsFile(fx=1.0, fy=1.0, cx=1.0, cy=1.0, width=2, height=2)
  rgb = tmp_path / "rgb.png"
  Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(rgb)
  with pytest.raises(DatasetIOError):
    load_depth_frame(rgb, intrinsics)
  small = tmp_path / "small.png"
  Image.fromarray(np.ones((1, 2), dtype=np.uint16)).save(small)
  with pytest.raises(DimensionMismatchError):
    load_depth_frame(small, intrinsics)
  with pytest.raises(DatasetIOError):
    load_depth_frame(tmp_path / "missing.png", intrinsics)


def test_intrinsics_file_roundtrip(tmp_path):
  path = tmp_path / "intrinsics.txt"
  written = IntrinsicsFile(fx=615.5, fy=616.25, cx=320.0, cy=240.0, width=640, height=480, depth_unit=0.5)
  write_intrinsics(path, written)
  assert load_intrinsics(path) == written
  path.write_text("fx=600\nbogus=1\n", encoding="utf-8")
  with pytest.raises(DatasetIOError):
    load_intrinsics(path)


def write_frame(root, name, size=(8, 6), depth_size=None):
  (root / "rgb").mkdir(exist_ok=True)
  (root / "depth").mkdir(exist_ok=True)
  (root / "labels").mkdir(exist_ok=True)
  width, height = size
  Image.fromarray(np.zeros((height, width, 3), dtype=np.uint8)).save(root / "rgb" / f"{name}.png")
  dw, dh = depth_size or size
  Image.fromarray(np.full((dh, dw), 800, dtype=np.uint16)).save(root / "depth" / f"{name}.png")
  (root / "labels" / f"{name}.txt").write_text("0 0.25 0.25 0.75 0.25 0.75 0.75\n", encoding="utf-8")
  return f"rgb/{name}.png depth/{name}.png labels/{name}.txt"


def test_manifest_paths_resolve_against_its_directory(tmp_path):
  manifest = tmp_path / "manifest.txt"
  manifest.write_text("# two frames\n" + write_frame(tmp_path, "a") + "\n\n" + write_frame(tmp_path, "b") + "\n")
  records = load_manifest(manifest)
  assert [record.frame_id for record in records] == ["a", "b"]
  assert records[0].depth_path == tmp_path / "depth" / "a.png"


def test_manifest_dimension_mismatch_names_the_sizes(tmp_path):
  manifest = tmp_path / "manifest.txt"
  manifest.write_text(write_frame(tmp_path, "a", size=(640, 480), depth_size=(320, 240)) + "\n")
  with pytest.raises(ManifestError) as info:
    load_manifest(manifest)
  assert "depth is 320x240 while RGB is 640x480" in str(info.value)


def test_manifest_malformed_line(tmp_path):
  manifest = tmp_path / "manifest.txt"
  manifest.write_text("rgb/a.png depth/a.png\n")
  with pytest.raises(ManifestError):
    read_manifest(manifest)
  with pytest.raises(ManifestError):
    read_manifest(tmp_path / "absent.txt")


def test_write_manifest_with_intrinsics_header(tmp_path):
  write_frame(tmp_path, "a")
  intrinsics = tmp_path / "intrinsics.txt"
  write_intrinsics(intrinsics, IntrinsicsFile(fx=8.0, fy=8.0, cx=4.0, cy=3.0, width=8, height=6))
  manifest = tmp_path / "manifest.txt"
  records = read_manifest_from_line(tmp_path, "rgb/a.png depth/a.png labels/a.txt")
  write_manifest(manifest, records, intrinsics)
  assert manifest.read_text().splitlines() == ["intrinsics=intrinsics.txt", "rgb/a.png depth/a.png labels/a.txt"]
  [record] = load_manifest(manifest)
  assert record.intrinsics_path == intrinsics


def read_manifest_from_line(root, line):
  scratch = root / "scratch.txt"
  scratch.write_text(line + "\n")
  return read_manifest(scratch)
