from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from pothole_rgbd.core.errors import ConfigurationError, UnsupportedOperationError
from pothole_rgbd.core.logging_config import logger
from pothole_rgbd.schemas.neural import DSConvKernel, SimAMConfig
from pothole_rgbd.services.neural_blocks import (
  bilinear_sample,
  bilinear_sample_backward,
  dsconv_backward,
  dsconv_forward,
  gelu_backward,
  gelu_forward,
  simam_attend,
  simam_backward,
)

# Below this magnitude the error is reported in absolute terms
ABSOLUTE_FALLBACK = 1e-8
# Analytic gradients this small but nonzero make a trial ill-conditioned; it is redrawn
DEGENERATE_GRADIENT = 1e-3
# Minimum distance of a sampling coordinate from the bilinear kinks at integers
KINK_MARGIN = 1e-3
MAX_DRAWS = 100


@dataclass(frozen=True)
class GradBlock:
  """A differentiable block: forward(**bundle) -> array, backward(grad, **bundle) -> {name: grad}."""
  name: str
  forward: Callable[..., np.ndarray]
  backward: Optional[Callable[..., Dict[str, np.ndarray]]]
  differentiable: Tuple[str, ...]


def _gelu_backward(grad, x):
  return {"x": gelu_backward(x, grad)}


def _simam_forward(features, lam):
  return simam_attend(features, SimAMConfig(lambda_=lam))


def _simam_backward(grad, features, lam):
  return {"features": simam_backward(features, grad, SimAMConfig(lambda_=lam))}


def _bilinear_forward(map, x, y):
  return np.asarray(bilinear_sample(map, x, y))


def _bilinear_backward(grad, map, x, y):
  d_map, d_x, d_y = bilinear_sample_backward(map, x, y, float(grad))
  return {"map": d_map, "x": np.asarray(d_x), "y": np.asarray(d_y)}


def _dsconv_forward(input, weights, offsets, axis):
  return dsconv_forward(input, DSConvKernel(axis=axis, weights=weights, offsets=offsets))


def _dsconv_backward(grad, input, weights, offsets, axis):
  grads = dsconv_backward(input, DSConvKernel(axis=axis, weights=weights, offsets=offsets), grad)
  return {"input": grads.input, "weights": grads.weights, "offsets": grads.offsets}


GRADCHECK_BLOCKS: Dict[str, GradBlock] = {
  "gelu": GradBlock("gelu", gelu_forward, _gelu_backward, ("x",)),
  "simam": GradBlock("simam", _simam_forward, _simam_backward, ("features",)),
  "bilinear": GradBlock("bilinear", _bilinear_forward, _bilinear_backward, ("map", "x", "y")),
  "dsconv": GradBlock("dsconv", _dsconv_forward, _dsconv_backward, ("input", "weights", "offsets")),
}


def relative_error(analytic: float, numeric: float) -> float:
  scale = max(abs(analytic), abs(numeric))
  diff = abs(analytic - numeric)
  return diff if scale < ABSOLUTE_FALLBACK else diff / scale


def finite_diff_gradcheck(block: Union[str, GradBlock], input_bundle: Mapping, epsilon: float) -> float:
  """
  Compare a block's analytic backward against central differences of sum(outputs).

  Args:
    block (str | GradBlock): Registered block name or a block definition.
    input_bundle (Mapping): Keyword inputs of the block; only the names in
      block.differentiable are perturbed.
    epsilon (float): Perturbation size in (0, 1e-3].

  Returns:
    float: Maximum elementwise relative error (absolute below 1e-8 magnitude).

  Raises:
    UnsupportedOperationError: If the block is unknown or has no backward.
    ConfigurationError: If epsilon is out of range.
  """
  if isinstance(block, str):
    if block not in GRADCHECK_BLOCKS:
      raise UnsupportedOperationError(f"Block '{block}' has no backward contract.")
    block = GRADCHECK_BLOCKS[block]
  if block.backward is None:
    raise UnsupportedOperationError(f"Block '{block.name}' has no backward contract.")
  if not 0 < epsilon <= 1e-3:
    raise ConfigurationError(f"epsilon must lie in (0, 1e-3], got {epsilon}")

  bundle = {
    name: np.array(value, dtype=np.float64) if name in block.differentiable else value
    for name, value in input_bundle.items()
  }
  output = np.asarray(block.forward(**bundle))
  analytic = block.backward(np.ones_like(output), **bundle)

  worst = 0.0
  for name in block.differentiable:
    values = bundle[name]
    grad = np.asarray(analytic[name], dtype=np.float64)
    if grad.shape != values.shape:
      raise ConfigurationError(f"backward of '{block.name}' returned shape {grad.shape} for {name} {values.shape}")
    for index in np.ndindex(values.shape):
      original = values[index]
      values[index] = original + epsilon
      plus = np.asarray(block.forward(**bundle))
      values[index] = original - epsilon
      minus = np.asarray(block.forward(**bundle))
      values[index] = original
      # Difference first so untouched outputs cancel exactly
      numeric = float(np.sum(plus - minus)) / (2.0 * epsilon)
      worst = max(worst, relative_error(float(grad[index]), numeric))
  return worst


# Trial generators

def _away_from_integers(values: np.ndarray) -> bool:
  frac = np.abs(values - np.rint(values))
  return bool(np.all(frac >= KINK_MARGIN))


def _gelu_trial(rng: np.random.Generator) -> Optional[dict]:
  return {"x": rng.normal(0.0, 1.0, size=100)}


def _simam_trial(rng: np.random.Generator) -> Optional[dict]:
  return {"features": rng.normal(size=(1, 2, 4, 4)), "lam": 1e-4}


def _bilinear_trial(rng: np.random.Generator) -> Optional[dict]:
  grid = rng.normal(size=(5, 6))
  x = rng.uniform(0.0, grid.shape[1] - 1.0)
  y = rng.uniform(0.0, grid.shape[0] - 1.0)
  if not _away_from_integers(np.array([x, y])):
    return None
  return {"map": grid, "x": np.asarray(x), "y": np.asarray(y)}


def _dsconv_trial(rng: np.random.Generator) -> Optional[dict]:
  extent = int(rng.choice([3, 5]))
  c_max = extent // 2
  offsets = rng.uniform(-0.95, 0.95, size=(extent, 5, 5))
  offsets[c_max] = 0.0
  positive = np.cumsum(offsets[c_max + 1:], axis=0)
  negative = np.cumsum(offsets[:c_max][::-1], axis=0)
  if not (_away_from_integers(positive) and _away_from_integers(negative)):
    return None
  return {
    "input": rng.normal(size=(1, 2, 5, 5)),
    "weights": rng.normal(size=(2, 2, extent)),
    "offsets": offsets,
    "axis": str(rng.choice(["horizontal", "vertical"])),
  }


TRIAL_GENERATORS: Dict[str, Callable[[np.random.Generator], Optional[dict]]] = {
  "gelu": _gelu_trial,
  "simam": _simam_trial,
  "bilinear": _bilinear_trial,
  "dsconv": _dsconv_trial,
}


def _is_degenerate(block: GradBlock, bundle: dict) -> bool:
  output = np.asarray(block.forward(**bundle))
  for grad in block.backward(np.ones_like(output), **bundle).values():
    magnitude = np.abs(np.asarray(grad))
    if np.any((magnitude > 0) & (magnitude < DEGENERATE_GRADIENT)):
      return True
  return False


def draw_trial(name: str, rng: np.random.Generator) -> dict:
  """Draw a random input bundle for a registered block away from non-differentiable points."""
  block = GRADCHECK_BLOCKS[name]
  generator = TRIAL_GENERATORS[name]
  for _ in range(MAX_DRAWS):
    bundle = generator(rng)
    if bundle is not None and not _is_degenerate(block, bundle):
      return bundle
  raise ConfigurationError(f"Could not draw a non-degenerate trial for '{name}' in {MAX_DRAWS} attempts.")


def run_gradcheck(trials: int, epsilon: float, seed: int) -> Dict[str, float]:
  """
  Run seeded gradient checks for every registered block.

  Returns:
    Dict[str, float]: Maximum relative error per block; empty when trials is 0.
  """
  if trials <= 0:
    logger.warning("Gradient check requested with no trials; nothing to do.")
    return {}

  results = {}
  for position, name in enumerate(GRADCHECK_BLOCKS):
    rng = np.random.default_rng([seed, position])
    worst = 0.0
    for _ in range(trials):
      worst = max(worst, finite_diff_gradcheck(name, draw_trial(name, rng), epsilon))
    results[name] = worst
    logger.info(f"Gradient check {name}: max relative error {worst:.3e} over {trials} trials")
  return results
