import json
from pathlib import Path
from typing import List, Union

import numpy as np
from pydantic import TypeAdapter, ValidationError

from pothole_rgbd.cli.commands import EXIT_OK, EXIT_USAGE
from pothole_rgbd.core.config import settings
from pothole_rgbd.core.errors import SceneValidationError
from pothole_rgbd.core.logging_config import logger
from pothole_rgbd.schemas.run_config import RunConfig
from pothole_rgbd.schemas.synth import SceneSpec
from pothole_rgbd.services.synth import random_scene_spec, write_dataset

_SCENE_FILE = TypeAdapter(Union[SceneSpec, List[SceneSpec]])


def register(subparsers) -> None:
  parser = subparsers.add_parser("synth", help="Generate a synthetic RGB-D dataset with known pothole geometry")
  parser.add_argument("--output", type=Path, required=True, help="Dataset directory")
  parser.add_argument("--spec", dest="spec_file", type=Path,
                      help="JSON SceneSpec (or list of them); replaces the random scene options")
  parser.add_argument("--count", type=int, default=3, help="Number of scenes")
  parser.add_argument("--seed", type=int, default=0)
  parser.add_argument("--potholes", type=int, default=1, help="Potholes per scene")
  parser.add_argument("--min-radius", type=float, default=20.0, help="Pixels")
  parser.add_argument("--max-radius", type=float, default=60.0, help="Pixels")
  parser.add_argument("--depression", type=float, default=50.0, help="Millimetres below the road plane")
  parser.add_argument("--plane-depth", type=float, default=800.0, help="Camera to road distance in mm")
  parser.add_argument("--noise-sigma", type=float, default=0.0, help="Gaussian depth noise in mm")
  parser.add_argument("--jitter", type=float, default=0.0, help="Camera height offset in mm")
  parser.add_argument("--profile", choices=["flat-bottom", "spherical-cap"], default="flat-bottom")
  parser.add_argument("--elliptical", action="store_true", help="Draw independent semi-axes")
  parser.add_argument("--width", type=int, default=settings.DEFAULT_WIDTH)
  parser.add_argument("--height", type=int, default=settings.DEFAULT_HEIGHT)
  parser.add_argument("--fx", type=float, default=settings.DEFAULT_FX)
  parser.add_argument("--fy", type=float, default=settings.DEFAULT_FY)
  parser.set_defaults(func=cmd_synth)


def scene_specs(config: RunConfig) -> List[SceneSpec]:
  """Scenes from the JSON file when given, otherwise `count` random scenes drawn from the seed."""
  if config.spec_file is not None:
    loaded = _SCENE_FILE.validate_python(json.loads(config.spec_file.read_text(encoding="utf-8")))
    return loaded if isinstance(loaded, list) else [loaded]
  rng = np.random.default_rng(config.seed)
  return [
    random_scene_spec(
      rng, count=config.potholes, width=config.width, height=config.height,
      min_radius=config.min_radius, max_radius=config.max_radius, depression_mm=config.depression,
      profile=config.profile, plane_depth_mm=config.plane_depth, noise_sigma_mm=config.noise_sigma,
      camera_jitter_mm=config.jitter, fx=config.fx, fy=config.fy, elliptical=config.elliptical,
    )
    for _ in range(config.count)
  ]


def cmd_synth(config: RunConfig) -> int:
  try:
    specs = scene_specs(config)
    manifest = write_dataset(config.output, specs)
  except (SceneValidationError, ValidationError, json.JSONDecodeError) as e:
    logger.error(f"Invalid scene description: {e}")
    return EXIT_USAGE
  except OSError as e:
    logger.error(f"Could not write the dataset: {e}")
    return EXIT_USAGE
  print(manifest)
  return EXIT_OK
