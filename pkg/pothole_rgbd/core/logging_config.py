from logging.handlers import RotatingFileHandler
import logging
import os
import sys

# Define log format
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

# Create logger instance
logger = logging.getLogger("pothole_rgbd")


def configure_logging(level: str = "INFO", log_file: str = "") -> None:
  """
  Attach handlers to the package logger.

  Diagnostics always go to stderr so that data written to stdout stays pipe-safe.

  Args:
    level (str): Logging level name.
    log_file (str): Optional path of a rotating log file; empty disables it.
  """
  handlers = [logging.StreamHandler(sys.stderr)]
  if log_file:
    os.makedirs(os.path.dirname(log_file) or ".", exist_ok=True)
    handlers.append(RotatingFileHandler(log_file, maxBytes=5_000_000, backupCount=5))

  formatter = logging.Formatter(LOG_FORMAT)
  for handler in list(logger.handlers):
    logger.removeHandler(handler)
  for handler in handlers:
    handler.setFormatter(formatter)
    logger.addHandler(handler)

  logger.setLevel(level.upper())
