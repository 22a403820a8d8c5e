from typing import Optional


class PotholeError(Exception):
  """Base class for every error raised by the toolkit."""


class InvalidInputError(PotholeError, ValueError):
  """Tensor or array input violates a shape or finiteness requirement."""


class ConfigurationError(PotholeError, ValueError):
  """A block or pipeline option is outside its valid range."""


class UnsupportedOperationError(PotholeError, NotImplementedError):
  """The requested block has no backward contract."""


class NoGroundPlaneError(PotholeError):
  """No valid depth pixel remains outside the pothole masks."""


class NoDepthError(PotholeError):
  """The mask region holds no valid depth pixel."""


class MeasurementError(PotholeError):
  """A per-frame measurement failed; carries the offending mask index (None for frame-level)."""

  def __init__(self, message: str, mask_index: Optional[int] = None):
    super().__init__(message)
    self.mask_index = mask_index


class LabelParseError(PotholeError, ValueError):
  """A YOLO polygon line could not be parsed."""

  def __init__(self, message: str, path: Optional[str] = None, line_number: Optional[int] = None):
    location = ""
    if path is not None:
      location += f"{path}"
    if line_number is not None:
      location += f":{line_number}" if location else f"line {line_number}"
    super().__init__(f"{location}: {message}" if location else message)
    self.path = path
    self.line_number = line_number


class DatasetIOError(PotholeError, OSError):
  """A dataset file is missing, unreadable, or malformed."""

  def __init__(self, message: str, path: Optional[str] = None):
    super().__init__(f"{path}: {message}" if path else message)
    self.path = path


class ManifestError(DatasetIOError):
  """A manifest or one of its records is invalid."""


class DimensionMismatchError(DatasetIOError):
  """Files of one record disagree on image size."""


class SceneValidationError(PotholeError, ValueError):
  """A synthetic scene specification cannot be generated unambiguously."""
