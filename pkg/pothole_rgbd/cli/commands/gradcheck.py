from pothole_rgbd.cli.commands import EXIT_OK, EXIT_PARTIAL_FAILURE, EXIT_USAGE
from pothole_rgbd.core.config import settings
from pothole_rgbd.core.errors import ConfigurationError, UnsupportedOperationError
from pothole_rgbd.core.logging_config import logger
from pothole_rgbd.schemas.run_config import RunConfig
from pothole_rgbd.services.gradcheck import run_gradcheck


def register(subparsers) -> None:
  parser = subparsers.add_parser("gradcheck", help="Finite-difference check of every block's backward pass")
  parser.add_argument("--trials", type=int, default=settings.GRADCHECK_TRIALS, help="Random instances per block")
  parser.add_argument("--epsilon", type=float, default=settings.GRADCHECK_EPSILON, help="Central-difference step")
  parser.add_argument("--seed", type=int, default=0)
  parser.add_argument("--tolerance", type=float, default=settings.GRADCHECK_TOLERANCE,
                      help="Largest accepted relative error")
  parser.set_defaults(func=cmd_gradcheck)


def cmd_gradcheck(config: RunConfig) -> int:
  """
  Print the maximum relative gradient error per block.

  Returns:
    int: 0 iff every block is within tolerance (or no trials were requested), 1 otherwise.
  """
  try:
    results = run_gradcheck(config.trials, config.epsilon, config.seed)
  except (ConfigurationError, UnsupportedOperationError) as e:
    logger.error(str(e))
    return EXIT_USAGE

  failed = []
  for name, error in results.items():
    status = "ok" if error <= config.tolerance else "FAIL"
    print(f"{name:<10} {error:.3e} {status}")
    if status == "FAIL":
      failed.append(name)
  if failed:
    logger.error(f"Backward pass disagrees with finite differences for: {', '.join(failed)}")
    return EXIT_PARTIAL_FAILURE
  return EXIT_OK
