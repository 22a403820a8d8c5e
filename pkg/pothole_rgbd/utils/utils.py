from pathlib import Path
from typing import Union

import fastavro
import numpy as np
import pandas as pd

from pothole_rgbd.core.errors import ConfigurationError

PathLike = Union[str, Path]
TABLE_SUFFIXES = (".csv", ".avro")


def read_avro_file(file_path: PathLike):
  with open(file_path, "rb") as avro_file:
    reader = fastavro.reader(avro_file)
    records = list(reader)
  return records


def write_avro_file(file_path: PathLike, schema: dict, records: list):
  """Writes data records to an AVRO file."""
  with open(file_path, "wb") as avro_file:
    fastavro.writer(avro_file, fastavro.parse_schema(schema), records)


def avro_schema_for(frame: pd.DataFrame, name: str) -> dict:
  """
  Derive a flat Avro record schema from a DataFrame's dtypes.

  Args:
    frame (pd.DataFrame): Table whose columns become record fields.
    name (str): Record name.

  Returns:
    dict: Avro schema with long, double, boolean or string fields.
  """
  fields = []
  for column, dtype in frame.dtypes.items():
    if pd.api.types.is_bool_dtype(dtype):
      avro_type = "boolean"
    elif pd.api.types.is_integer_dtype(dtype):
      avro_type = "long"
    elif pd.api.types.is_float_dtype(dtype):
      avro_type = "double"
    else:
      avro_type = "string"
    fields.append({"name": str(column), "type": avro_type})
  return {"type": "record", "name": name, "fields": fields}


def _to_python(value):
  if isinstance(value, np.generic):
    return value.item()
  return value


def write_table(file_path: PathLike, frame: pd.DataFrame, name: str = "Row") -> None:
  """
  Write a table as CSV or Avro depending on the file suffix.

  Raises:
    ConfigurationError: If the suffix is neither .csv nor .avro.
  """
  path = Path(file_path)
  suffix = path.suffix.lower()
  if suffix not in TABLE_SUFFIXES:
    raise ConfigurationError(f"Output must end in one of {', '.join(TABLE_SUFFIXES)}, got '{path.name}'")
  path.parent.mkdir(parents=True, exist_ok=True)
  if suffix == ".csv":
    frame.to_csv(path, index=False)
    return
  records = [{key: _to_python(value) for key, value in row.items()} for row in frame.to_dict(orient="records")]
  write_avro_file(path, avro_schema_for(frame, name), records)


def read_table(file_path: PathLike) -> pd.DataFrame:
  path = Path(file_path)
  if path.suffix.lower() == ".avro":
    return pd.DataFrame.from_records(read_avro_file(path))
  return pd.read_csv(path)
