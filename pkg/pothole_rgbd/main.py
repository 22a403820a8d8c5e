import argparse
import sys
import traceback
from typing import List, Optional

from pydantic import ValidationError

from pothole_rgbd.cli.commands import EXIT_USAGE, bench, evaluate, flops, gradcheck, measure, synth
from pothole_rgbd.core.config import settings
from pothole_rgbd.core.logging_config import configure_logging, logger
from pothole_rgbd.schemas.run_config import RunConfig

COMMANDS = [measure, evaluate, synth, gradcheck, flops, bench]


def build_parser() -> argparse.ArgumentParser:
  parser = argparse.ArgumentParser(
    prog="pothole-rgbd",
    description=f"{settings.PROJECT_NAME}: pothole perimeter and depth from RGB-D frames and instance masks.",
  )
  parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
  parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
  parser.add_argument("--log-file", default=settings.LOG_FILE, help="Optional rotating log file")
  subparsers = parser.add_subparsers(dest="command", required=True)
  for command in COMMANDS:
    command.register(subparsers)
  return parser


def main(argv: Optional[List[str]] = None) -> int:
  """
  Parse arguments, validate them into a RunConfig and dispatch to the subcommand.

  Returns:
    int: 0 on success, 1 on partial data failure, 2 on usage or configuration errors.
  """
  parser = build_parser()
  try:
    args = parser.parse_args(argv)
  except SystemExit as e:
    return EXIT_USAGE if e.code else 0

  configure_logging(args.log_level, args.log_file)
  options = {key: value for key, value in vars(args).items() if key not in ("func", "log_level", "log_file")}
  try:
    config = RunConfig.model_validate(options)
  except ValidationError as e:
    for error in e.errors():
      location = ".".join(str(part) for part in error["loc"]) or args.command
      logger.error(f"{location}: {error['msg']}")
    return EXIT_USAGE

  logger.debug(f"Running {config.command} with {config.model_dump(exclude_defaults=True)}")
  try:
    return args.func(config)
  except Exception:
    logger.error(traceback.format_exc())
    return EXIT_USAGE


if __name__ == "__main__":
  sys.exit(main())
