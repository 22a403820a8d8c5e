import dataclasses

import numpy as np
import pytest

from pothole_rgbd.core.errors import ConfigurationError, UnsupportedOperationError
from pothole_rgbd.main import main
from pothole_rgbd.services import gradcheck
from pothole_rgbd.services.gradcheck import (
  GRADCHECK_BLOCKS,
  GradBlock,
  draw_trial,
  finite_diff_gradcheck,
  relative_error,
  run_gradcheck,
)


def test_relative_error_falls_back_to_absolute():
  assert relative_error(1e-10, 0.0) == pytest.approx(1e-10)
  assert relative_error(2.0, 1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("name", sorted(GRADCHECK_BLOCKS))
def test_every_block_passes_twenty_trials(name):
  rng = np.random.default_rng(7)
  worst = max(finite_diff_gradcheck(name, draw_trial(name, rng), 1e-6) for _ in range(20))
  assert worst <= 1e-5


def test_run_gradcheck_reports_each_block():
  results = run_gradcheck(trials=2, epsilon=1e-6, seed=3)
  assert set(results) == {"gelu", "simam", "bilinear", "dsconv"}
  assert all(error <= 1e-5 for error in results.values())


def test_run_gradcheck_without_trials_warns(caplog):
  assert run_gradcheck(trials=0, epsilon=1e-6, seed=0) == {}
  assert "no trials" in caplog.text


def test_corrupted_backward_is_detected():
  broken = dataclasses.replace(GRADCHECK_BLOCKS["gelu"], backward=lambda grad, x: {"x": 1.01 * grad})
  assert finite_diff_gradcheck(broken, {"x": np.array([0.3, -1.2])}, 1e-6) > 1e-3


def test_unknown_block_and_missing_backward():
  with pytest.raises(UnsupportedOperationError):
    finite_diff_gradcheck("softmax", {}, 1e-6)
  forward_only = GradBlock("relu", lambda x: np.maximum(x, 0), None, ("x",))
  with pytest.raises(UnsupportedOperationError):
    finite_diff_gradcheck(forward_only, {"x": np.ones(2)}, 1e-6)


@pytest.mark.parametrize("epsilon", [0.0, -1e-6, 1e-2])
def test_epsilon_range(epsilon):
  with pytest.raises(ConfigurationError):
    finite_diff_gradcheck("gelu", {"x": np.ones(3)}, epsilon)


def test_cli_gradcheck_passes(capsys):
  assert main(["gradcheck", "--trials", "1"]) == 0
  out = capsys.readouterr().out
  assert "dsconv" in out and "FAIL" not in out


def test_cli_gradcheck_fails_on_corrupted_backward(monkeypatch):
  broken = dataclasses.replace(GRADCHECK_BLOCKS["gelu"], backward=lambda grad, x: {"x": 2.0 * grad})
  monkeypatch.setitem(gradcheck.GRADCHECK_BLOCKS, "gelu", broken)
  assert main(["gradcheck", "--trials", "2"]) == 1


def test_cli_gradcheck_zero_trials():
  assert main(["gradcheck", "--trials", "0"]) == 0


def test_cli_gradcheck_rejects_large_epsilon():
  assert main(["gradcheck", "--epsilon", "0.1"]) == 2
