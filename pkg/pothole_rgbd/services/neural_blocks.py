from typing import Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, ndtr

from pothole_rgbd.core.errors import ConfigurationError, InvalidInputError
from pothole_rgbd.schemas.neural import ConvLayerSpec, DSConvGrads, DSConvKernel, SimAMConfig

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

PADDING_MODES = {"zeros": "constant", "replicate": "edge"}


def as_tensor(value, name: str = "x", ndim: int = None) -> np.ndarray:
  """
  Convert input to a float64 array and check it.

  Args:
    value: Array-like input.
    name (str): Name used in error messages.
    ndim (int): Required number of dimensions, if any.

  Returns:
    np.ndarray: Double precision copy-or-view of the input.

  Raises:
    InvalidInputError: If the rank is wrong or any value is NaN/Inf.
  """
  array = np.asarray(value, dtype=np.float64)
  if ndim is not None and array.ndim != ndim:
    raise InvalidInputError(f"{name} must be {ndim}-D, got shape {array.shape}")
  if not np.all(np.isfinite(array)):
    raise InvalidInputError(f"{name} contains non-finite values")
  return array


# GELU

def gelu_forward(x) -> np.ndarray:
  """Exact GELU, x * Phi(x), with Phi the standard normal CDF (error-function based)."""
  x = as_tensor(x)
  return x * ndtr(x)


def gelu_backward(x, grad) -> np.ndarray:
  """Gradient of GELU: grad * (Phi(x) + x * phi(x))."""
  x = as_tensor(x)
  grad = as_tensor(grad, "grad")
  pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
  return grad * (ndtr(x) + x * pdf)


# SimAM

def _simam_lambda(config: SimAMConfig) -> float:
  if config is None:
    config = SimAMConfig()
  if not config.lambda_ > 0:
    raise ConfigurationError(f"SimAM lambda must be positive, got {config.lambda_}")
  return float(config.lambda_)


def _simam_statistics(x: np.ndarray, lam: float):
  mu = x.mean(axis=(2, 3), keepdims=True)
  d = x - mu
  # Population variance over the spatial positions of each channel
  var = (d * d).mean(axis=(2, 3), keepdims=True)
  return d, var, 4.0 * (var + lam)


def simam_energy(features, config: SimAMConfig = None) -> np.ndarray:
  """Per-neuron energy e_t = 4(var + lambda) / ((x_t - mu)^2 + 2 var + 2 lambda)."""
  x = as_tensor(features, "features", ndim=4)
  lam = _simam_lambda(config)
  d, var, denom = _simam_statistics(x, lam)
  return denom / (d * d + 2.0 * var + 2.0 * lam)


def simam_attend(features, config: SimAMConfig = None) -> np.ndarray:
  """
  Parameter-free attention over an NCHW feature map.

  Each neuron is gated by sigmoid(1 / e_t); neurons far from their channel mean get weights
  closer to 1, while a constant channel gets sigmoid(0.5) everywhere.

  Raises:
    ConfigurationError: If lambda is not positive.
  """
  x = as_tensor(features, "features", ndim=4)
  lam = _simam_lambda(config)
  d, var, denom = _simam_statistics(x, lam)
  inverse_energy = (d * d + 2.0 * var + 2.0 * lam) / denom
  return x * expit(inverse_energy)


def simam_backward(features, grad, config: SimAMConfig = None) -> np.ndarray:
  x = as_tensor(features, "features", ndim=4)
  grad = as_tensor(grad, "grad", ndim=4)
  lam = _simam_lambda(config)
  d, var, denom = _simam_statistics(x, lam)
  n = x.shape[2] * x.shape[3]
  attention = expit(d * d / denom + 0.5)

  # Gradient reaching the pre-sigmoid term y_t = d_t^2 / D + 1/2
  g_y = grad * x * attention * (1.0 - attention)
  sum_gd = (g_y * d).sum(axis=(2, 3), keepdims=True)
  sum_gd2 = (g_y * d * d).sum(axis=(2, 3), keepdims=True)
  return (grad * attention
          + 2.0 * g_y * d / denom
          - 2.0 * sum_gd / (n * denom)
          - 8.0 * d * sum_gd2 / (n * denom * denom))


# Bilinear sampling

class _BilinearGrid:
  """
  Bilinear lookups of an (N, C, H, W) stack at per-batch coordinates of shape (N, Ho, Wo).

  Coordinates are clamped to the border (replicate edge); a clamped coordinate has zero
  derivative.
  """

  def __init__(self, maps: np.ndarray, x: np.ndarray, y: np.ndarray):
    self.maps = maps
    n, _, height, width = maps.shape
    xc = np.clip(x, 0.0, width - 1.0)
    yc = np.clip(y, 0.0, height - 1.0)
    self.x0 = np.floor(xc).astype(np.intp)
    self.y0 = np.floor(yc).astype(np.intp)
    self.x1 = np.minimum(self.x0 + 1, width - 1)
    self.y1 = np.minimum(self.y0 + 1, height - 1)
    self.fx = (xc - self.x0)[..., None]
    self.fy = (yc - self.y0)[..., None]
    self.in_x = ((x >= 0.0) & (x <= width - 1.0))[..., None]
    self.in_y = ((y >= 0.0) & (y <= height - 1.0))[..., None]

    self.batch = np.arange(n).reshape((n,) + (1,) * (x.ndim - 1))
    nhwc = maps.transpose(0, 2, 3, 1)
    self.v00 = nhwc[self.batch, self.y0, self.x0]
    self.v01 = nhwc[self.batch, self.y0, self.x1]
    self.v10 = nhwc[self.batch, self.y1, self.x0]
    self.v11 = nhwc[self.batch, self.y1, self.x1]

  @staticmethod
  def _nchw(values: np.ndarray) -> np.ndarray:
    return np.moveaxis(values, -1, 1)

  def values(self) -> np.ndarray:
    fx, fy = self.fx, self.fy
    out = ((1.0 - fx) * (1.0 - fy) * self.v00 + fx * (1.0 - fy) * self.v01
           + (1.0 - fx) * fy * self.v10 + fx * fy * self.v11)
    return self._nchw(out)

  def d_dx(self) -> np.ndarray:
    fy = self.fy
    slope = (1.0 - fy) * (self.v01 - self.v00) + fy * (self.v11 - self.v10)
    return self._nchw(np.where(self.in_x, slope, 0.0))

  def d_dy(self) -> np.ndarray:
    fx = self.fx
    slope = (1.0 - fx) * (self.v10 - self.v00) + fx * (self.v11 - self.v01)
    return self._nchw(np.where(self.in_y, slope, 0.0))

  def scatter(self, grad_values: np.ndarray) -> np.ndarray:
    """Route gradients of the sampled values back onto the source maps."""
    n, c, height, width = self.maps.shape
    g = np.moveaxis(grad_values, 1, -1)
    fx, fy = self.fx, self.fy
    out = np.zeros((n, height, width, c))
    np.add.at(out, (self.batch, self.y0, self.x0), (1.0 - fx) * (1.0 - fy) * g)
    np.add.at(out, (self.batch, self.y0, self.x1), fx * (1.0 - fy) * g)
    np.add.at(out, (self.batch, self.y1, self.x0), (1.0 - fx) * fy * g)
    np.add.at(out, (self.batch, self.y1, self.x1), fx * fy * g)
    return out.transpose(0, 3, 1, 2)


def _single_map_grid(grid_map, x, y) -> _BilinearGrid:
  grid_map = as_tensor(grid_map, "map", ndim=2)
  coords_x = as_tensor(x, "x").reshape(1, 1, 1)
  coords_y = as_tensor(y, "y").reshape(1, 1, 1)
  return _BilinearGrid(grid_map[None, None], coords_x, coords_y)


def bilinear_sample(grid_map, x: float, y: float) -> float:
  """
  Sample an HxW map at a fractional (x, y), x along columns and y along rows.

  Integer coordinates return the grid value exactly; coordinates outside the map are clamped
  to the border.
  """
  return float(_single_map_grid(grid_map, x, y).values()[0, 0, 0, 0])


def bilinear_sample_backward(grid_map, x: float, y: float, grad: float = 1.0) -> Tuple[np.ndarray, float, float]:
  """Gradients of one bilinear sample w.r.t. the map values, x and y."""
  sampler = _single_map_grid(grid_map, x, y)
  g = np.full((1, 1, 1, 1), float(grad))
  d_map = sampler.scatter(g)[0, 0]
  d_x = float(grad) * float(sampler.d_dx()[0, 0, 0, 0])
  d_y = float(grad) * float(sampler.d_dy()[0, 0, 0, 0])
  return d_map, d_x, d_y


# Reference convolution

def conv2d_reference(input, kernel, stride: int = 1, padding: Union[int, Tuple[int, int]] = 0,
                     padding_mode: str = "zeros") -> np.ndarray:
  """
  Plain cross-correlation of an NCHW input with a (C_out, C_in, K_H, K_W) kernel.

  Args:
    input: Input tensor (N, C_in, H, W).
    kernel: Kernel tensor (C_out, C_in, K_H, K_W).
    stride (int): Positive stride applied on both axes.
    padding (int | tuple): Padding on both axes, or (pad_h, pad_w).
    padding_mode (str): "zeros" (default) or "replicate".

  Returns:
    np.ndarray: Output of shape (N, C_out, floor((H + 2 pad - K) / stride) + 1, ...).

  Raises:
    InvalidInputError: On channel mismatch, bad stride/padding, or empty output.
  """
  x = as_tensor(input, "input", ndim=4)
  k = as_tensor(kernel, "kernel", ndim=4)
  if isinstance(padding, int):
    padding = (padding, padding)
  pad_h, pad_w = padding
  if stride < 1 or pad_h < 0 or pad_w < 0:
    raise InvalidInputError(f"stride must be >= 1 and padding >= 0, got stride={stride} padding={padding}")
  if k.shape[1] != x.shape[1]:
    raise InvalidInputError(f"kernel expects {k.shape[1]} input channels, input has {x.shape[1]}")
  if padding_mode not in PADDING_MODES:
    raise InvalidInputError(f"padding_mode must be one of {sorted(PADDING_MODES)}, got {padding_mode!r}")

  k_h, k_w = k.shape[2:]
  h_out = (x.shape[2] + 2 * pad_h - k_h) // stride + 1
  w_out = (x.shape[3] + 2 * pad_w - k_w) // stride + 1
  if h_out < 1 or w_out < 1:
    raise InvalidInputError(f"kernel {k_h}x{k_w} does not fit input {x.shape[2:]} with padding {padding}")

  padded = np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)), mode=PADDING_MODES[padding_mode])
  windows = sliding_window_view(padded, (k_h, k_w), axis=(2, 3))[:, :, ::stride, ::stride]
  return np.einsum("nchwij,ocij->nohw", windows, k)


# Dynamic snake convolution

def _tap_grids(x: np.ndarray, kernel: DSConvKernel):
  """Yield (tap index, sampler) for every tap of the kernel over input x."""
  n, c_in, height, width = x.shape
  if kernel.weights.shape[1] != c_in:
    raise InvalidInputError(f"kernel expects {kernel.weights.shape[1]} input channels, input has {c_in}")
  if kernel.offsets.shape[-2:] != (height, width):
    raise InvalidInputError(
      f"offsets spatial shape {kernel.offsets.shape[-2:]} does not match input {(height, width)}"
    )
  if kernel.offsets.ndim == 4 and kernel.offsets.shape[0] != n:
    raise InvalidInputError(f"offsets batch {kernel.offsets.shape[0]} does not match input batch {n}")

  c_max = kernel.c_max
  steps = np.clip(np.broadcast_to(kernel.offsets, (n,) + kernel.offsets.shape[-3:]), -1.0, 1.0)
  shifts = np.zeros_like(steps)
  # Each side accumulates its own steps outward from the centre tap
  shifts[:, c_max + 1:] = np.cumsum(steps[:, c_max + 1:], axis=1)
  shifts[:, :c_max] = np.cumsum(steps[:, :c_max][:, ::-1], axis=1)[:, ::-1]

  rows, cols = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
  for k in range(kernel.kernel_extent):
    c = k - c_max
    if kernel.axis == "horizontal":
      xs = np.broadcast_to(cols + c, shifts[:, k].shape)
      ys = rows + shifts[:, k]
    else:
      xs = cols + shifts[:, k]
      ys = np.broadcast_to(rows + c, shifts[:, k].shape)
    yield k, _BilinearGrid(x, xs, ys)


def dsconv_forward(input, kernel: DSConvKernel) -> np.ndarray:
  """
  Snake convolution: every tap is sampled bilinearly at the centre shifted by c along the kernel
  axis and by the cumulative clamped offsets across it. Output keeps the input's spatial size.
  """
  x = as_tensor(input, "input", ndim=4)
  out = np.zeros((x.shape[0], kernel.weights.shape[0]) + x.shape[2:])
  for k, sampler in _tap_grids(x, kernel):
    out += np.einsum("oc,nchw->nohw", kernel.weights[:, :, k], sampler.values())
  return out


def dsconv_backward(input, kernel: DSConvKernel, grad) -> DSConvGrads:
  """Gradients of a snake convolution w.r.t. input, weights and offsets."""
  x = as_tensor(input, "input", ndim=4)
  grad = as_tensor(grad, "grad", ndim=4)
  c_max = kernel.c_max

  g_input = np.zeros_like(x)
  g_weights = np.zeros_like(kernel.weights)
  g_shifts = np.zeros((x.shape[0], kernel.kernel_extent) + x.shape[2:])
  for k, sampler in _tap_grids(x, kernel):
    g_weights[:, :, k] = np.einsum("nohw,nchw->oc", grad, sampler.values())
    g_samples = np.einsum("oc,nohw->nchw", kernel.weights[:, :, k], grad)
    g_input += sampler.scatter(g_samples)
    if k != c_max:
      slope = sampler.d_dy() if kernel.axis == "horizontal" else sampler.d_dx()
      g_shifts[:, k] = (g_samples * slope).sum(axis=1)

  # A step feeds every tap at or beyond it on its side of the centre
  g_steps = np.zeros_like(g_shifts)
  g_steps[:, c_max + 1:] = np.cumsum(g_shifts[:, c_max + 1:][:, ::-1], axis=1)[:, ::-1]
  g_steps[:, :c_max] = np.cumsum(g_shifts[:, :c_max], axis=1)

  offsets = np.broadcast_to(kernel.offsets, g_steps.shape)
  g_steps = np.where(np.abs(offsets) < 1.0, g_steps, 0.0)
  if kernel.offsets.ndim == 3:
    g_steps = g_steps.sum(axis=0)
  return DSConvGrads(input=g_input, weights=g_weights, offsets=g_steps)


# Cost accounting

def conv_flops(spec: ConvLayerSpec) -> int:
  """FLOPs of one convolution layer: 2 * C_in * H_out * W_out * K_H * K_W * C_out."""
  return 2 * spec.c_in * spec.h_out * spec.w_out * spec.k_h * spec.k_w * spec.c_out


def conv_params(spec: ConvLayerSpec, bias: bool = False) -> int:
  """Learnable parameters of one convolution layer."""
  weights = spec.c_in * spec.k_h * spec.k_w * spec.c_out
  return weights + (spec.c_out if bias else 0)
