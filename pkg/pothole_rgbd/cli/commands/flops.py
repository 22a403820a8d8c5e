from pathlib import Path
from typing import List

from pydantic import ValidationError

from pothole_rgbd.cli.commands import EXIT_OK, EXIT_USAGE
from pothole_rgbd.core.logging_config import logger
from pothole_rgbd.schemas.neural import ConvLayerSpec
from pothole_rgbd.schemas.run_config import RunConfig
from pothole_rgbd.services.neural_blocks import conv_flops, conv_params

LAYER_FIELDS = ("c_in", "c_out", "k_h", "k_w", "h_out", "w_out")


class LayerSpecError(ValueError):
  def __init__(self, message: str, line_number: int):
    super().__init__(f"line {line_number}: {message}")
    self.line_number = line_number


def register(subparsers) -> None:
  parser = subparsers.add_parser("flops", help="FLOPs and parameters of convolution layers")
  parser.add_argument("spec_file", type=Path, help="One layer per line: c_in c_out k_h k_w h_out w_out")
  parser.set_defaults(func=cmd_flops)


def parse_layer_specs(text: str) -> List[ConvLayerSpec]:
  """Parse layer lines; blank lines and '#' comments are skipped."""
  layers = []
  for number, line in enumerate(text.splitlines(), start=1):
    content = line.split("#", 1)[0].strip()
    if not content:
      continue
    tokens = content.split()
    if len(tokens) != len(LAYER_FIELDS) or not all(token.isdigit() for token in tokens):
      raise LayerSpecError(f"expected six positive integers ({' '.join(LAYER_FIELDS)}), got '{content}'", number)
    try:
      layers.append(ConvLayerSpec(**dict(zip(LAYER_FIELDS, map(int, tokens)))))
    except ValidationError as e:
      raise LayerSpecError(e.errors()[0]["msg"], number) from e
  return layers


def cmd_flops(config: RunConfig) -> int:
  try:
    layers = parse_layer_specs(config.spec_file.read_text(encoding="utf-8"))
  except LayerSpecError as e:
    logger.error(f"{config.spec_file}: {e}")
    return EXIT_USAGE
  except OSError as e:
    logger.error(f"Cannot read {config.spec_file}: {e}")
    return EXIT_USAGE

  total_flops = total_params = 0
  print("layer\tflops\tparams")
  for index, layer in enumerate(layers):
    flops, params = conv_flops(layer), conv_params(layer)
    total_flops += flops
    total_params += params
    print(f"{index}\t{flops}\t{params}")
  print(f"total\t{total_flops}\t{total_params}")
  return EXIT_OK
