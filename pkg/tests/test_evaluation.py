import itertools

import numpy as np
import pandas as pd
import pytest

from pothole_rgbd.core.errors import ConfigurationError, InvalidInputError
from pothole_rgbd.schemas.evaluation import ConfusionCounts, ScoredDetection
from pothole_rgbd.schemas.geometry import InstanceMask
from pothole_rgbd.services.evaluation import (
  average_precision_50,
  average_precision_from_flags,
  compare_measurements,
  confusion_table,
  iou_matrix,
  mask_iou,
  match_instances,
  measurement_report,
  precision_recall,
)

FIELD_ROWS = [
  ((127.6, 6.2), (125.1, 6.0)),
  ((96.3, 4.8), (97.9, 5.0)),
  ((104.2, 5.5), (101.7, 5.3)),
  ((88.5, 3.9), (90.2, 4.2)),
  ((144.8, 5.4), (141.6, 5.7)),
]


def box(x0, y0, x1, y1, size=16):
  member = np.zeros((size, size), dtype=bool)
  member[y0:y1, x0:x1] = True
  return InstanceMask(member=member)


def test_mask_iou():
  assert mask_iou(box(0, 0, 4, 4), box(2, 0, 6, 4)) == pytest.approx(8 / 24)
  assert mask_iou(InstanceMask.empty(4, 4), InstanceMask.empty(4, 4)) == 0.0
  with pytest.raises(InvalidInputError):
    mask_iou(InstanceMask.empty(4, 4), InstanceMask.empty(5, 4))


def test_iou_matrix_matches_pairwise():
  preds = [box(0, 0, 4, 4), box(8, 8, 12, 12)]
  gts = [box(1, 1, 5, 5), box(8, 8, 12, 12), box(0, 10, 3, 13)]
  matrix = iou_matrix(preds, gts)
  for i, j in itertools.product(range(2), range(3)):
    assert matrix[i, j] == pytest.approx(mask_iou(preds[i], gts[j]))


def test_field_counts_give_published_rates():
  result = precision_recall(ConfusionCounts(tp=151, fp=10, fn=16))
  assert result.precision == pytest.approx(0.9379, abs=1e-4)
  assert result.recall == pytest.approx(0.9042, abs=1e-4)
  assert abs(100 * result.precision - 93.7) <= 0.2
  assert abs(100 * result.recall - 90.4) <= 0.2
  assert not result.degenerate


def test_empty_denominators_are_degenerate():
  result = precision_recall(ConfusionCounts(tp=0, fp=0, fn=4))
  assert (result.precision, result.recall, result.degenerate) == (0.0, 0.0, True)


def test_confusion_table_layout():
  table = confusion_table(ConfusionCounts(tp=151, fp=10, fn=16))
  assert table.loc["pothole", "pothole"] == 151
  assert table.loc["pothole", "background"] == 10
  assert table.loc["background", "pothole"] == 16
  assert table.loc["background", "background"] == 0


def test_confidence_order_decides_the_match():
  gt = [box(0, 0, 8, 8)]
  preds = [ScoredDetection(mask=box(0, 0, 8, 7), confidence=0.4), ScoredDetection(mask=box(0, 0, 8, 8), confidence=0.9)]
  result = match_instances(preds, gt)
  assert result.is_tp == [False, True]
  assert result.matched_gt == [None, 0]
  assert (result.counts.tp, result.counts.fp, result.counts.fn) == (1, 1, 0)


def test_threshold_is_inclusive_and_validated():
  gt = [box(0, 0, 4, 4)]
  half = [ScoredDetection(mask=box(0, 0, 4, 2), confidence=0.5)]
  assert match_instances(half, gt, 0.5).counts.tp == 1
  assert match_instances(half, gt, 0.51).counts.tp == 0
  with pytest.raises(ConfigurationError):
    match_instances(half, gt, 0.0)


def disjoint_scene(rng):
  """
  Ground truths in separate 8x8 cells of a 24x24 grid; predictions overlap them at random.

  No prediction here can reach the threshold against two ground truths, so greedy and exhaustive
  matching agree. A detection shared by two ground truths can make them differ.
  """
  cells = rng.permutation(9)[:int(rng.integers(0, 6))]
  gts = []
  for cell in cells:
    x0, y0 = 8 * (cell % 3), 8 * (cell // 3)
    gts.append(box(x0 + 1, y0 + 1, x0 + 7, y0 + 7, size=24))
  preds = []
  for _ in range(int(rng.integers(0, 6))):
    x0, y0 = rng.integers(0, 19, 2)
    w, h = rng.integers(3, 8, 2)
    preds.append(ScoredDetection(mask=box(x0, y0, x0 + w, y0 + h, size=24), confidence=float(rng.random())))
  return preds, gts


def best_assignment(ious: np.ndarray, threshold: float) -> int:
  """Largest number of prediction/ground-truth pairs at or above the threshold, by enumeration."""
  n_pred, n_gt = ious.shape
  best = 0
  for k in range(min(n_pred, n_gt), 0, -1):
    for rows in itertools.permutations(range(n_pred), k):
      for cols in itertools.combinations(range(n_gt), k):
        if all(ious[r, c] >= threshold for r, c in zip(rows, cols)):
          return k
  return best


def test_greedy_matching_equals_exhaustive_assignment(rng):
  checked = 0
  while checked < 500:
    preds, gts = disjoint_scene(rng)
    ious = iou_matrix([p.mask for p in preds], gts)
    positive = ious[ious > 0]
    if len(np.unique(positive)) != len(positive):
      continue
    checked += 1
    counts = match_instances(preds, gts).counts
    assert counts.tp + counts.fn == len(gts)
    assert counts.tp + counts.fp == len(preds)
    assert counts.tp == best_assignment(ious, 0.5)


def test_greedy_matching_keeps_confidence_order_over_pair_count():
  gts = [box(0, 0, 4, 4), box(0, 0, 4, 3)]
  preds = [ScoredDetection(mask=box(0, 0, 4, 4), confidence=0.9), ScoredDetection(mask=box(0, 1, 4, 5), confidence=0.5)]
  ious = iou_matrix([p.mask for p in preds], gts)
  np.testing.assert_allclose(ious, [[1.0, 0.75], [0.6, 0.4]])
  result = match_instances(preds, gts)
  assert result.matched_gt == [0, None]
  assert best_assignment(ious, 0.5) == 2


def test_perfect_detector_has_unit_ap():
  gts = [box(0, 0, 4, 4), box(6, 6, 10, 10), box(11, 0, 15, 4)]
  preds = [ScoredDetection(mask=mask, confidence=c) for mask, c in zip(gts, (0.9, 0.3, 0.6))]
  ap, curve = average_precision_50(preds, gts)
  assert ap == 1.0
  assert curve.recall[-1] == 1.0


def test_no_detections_have_zero_ap():
  ap, curve = average_precision_50([], [box(0, 0, 4, 4)])
  assert ap == 0.0 and curve.recall == []


def test_ap_is_invariant_to_monotone_confidence_rescaling(rng):
  for _ in range(100):
    count = int(rng.integers(1, 30))
    confidences = rng.random(count)
    flags = rng.random(count) < 0.6
    n_gt = int(flags.sum() + rng.integers(0, 5))
    ap, curve = average_precision_from_flags(confidences, flags, n_gt)
    rescaled, _ = average_precision_from_flags(np.sqrt(confidences) * 0.5 + 0.1, flags, n_gt)
    assert rescaled == ap
    assert 0.0 <= ap <= 1.0
    assert ap <= max(curve.precision) + 1e-12


def test_ap_rewards_ranking_true_positives_first():
  good, _ = average_precision_from_flags([0.9, 0.8, 0.1], [True, True, False], 2)
  bad, _ = average_precision_from_flags([0.9, 0.8, 0.1], [False, True, True], 2)
  assert good == 1.0
  assert bad < good


def test_ap_without_ground_truth_is_zero(caplog):
  ap, _ = average_precision_from_flags([0.5], [False], 0)
  assert ap == 0.0
  assert "No ground-truth" in caplog.text


def test_field_measurement_report():
  report = measurement_report(FIELD_ROWS)
  assert [round(row.diff_perimeter, 1) for row in report.rows] == [-2.5, 1.6, -2.5, 1.7, -3.2]
  assert [round(row.diff_depth, 1) for row in report.rows] == [-0.2, 0.2, -0.2, 0.3, 0.3]
  assert report.mean_abs_diff_perimeter == pytest.approx(2.3, abs=1e-9)
  assert report.mean_abs_diff_depth == pytest.approx(0.24, abs=1e-9)


def test_report_text_keeps_one_decimal():
  text = measurement_report(FIELD_ROWS[:1], labels=["img1"]).to_text()
  assert "127.6" in text and "-2.5" in text and "-0.2" in text
  assert "img1" in text
  assert text.rstrip().endswith("mean |diff| perimeter: 2.50 cm, depth: 0.20 cm")
  assert "(no rows)" in measurement_report([]).to_text()


def test_compare_measurements_joins_on_frame_and_instance(caplog):
  truth = pd.DataFrame({"frame_id": ["a", "a", "b"], "instance": [0, 1, 0],
                        "perimeter_mm": [1276.0, 963.0, 1042.0], "depth_mm": [62.0, 48.0, 55.0]})
  measured = pd.DataFrame({"frame_id": ["a", "b", "a"], "instance": [1, 0, 0],
                           "perimeter_mm": [979.0, 1017.0, 1251.0], "depth_mm": [50.0, 53.0, 60.0]})
  report = compare_measurements(measured, truth)
  assert report.labels == ["a#0", "a#1", "b#0"]
  assert [round(row.diff_perimeter, 1) for row in report.rows] == [-2.5, 1.6, -2.5]

  report = compare_measurements(measured.iloc[:2], truth)
  assert len(report.rows) == 2
  assert "only in the measured or the truth table" in caplog.text
