"""
Logging setup for the Kacanov experiments.

Every record carries a ``run`` tag (``<model>/<strategy>`` inside a strategy run,
``-`` elsewhere) so interleaved output from the strategy threads stays readable.
"""

import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator

from loguru import logger

CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss.SSS}</green> | "
    "<level>{level: <8}</level> | "
    "<magenta>{extra[run]: <28}</magenta> | "
    "<cyan>{name}</cyan>:<cyan>{line}</cyan> | "
    "<level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {extra[run]} | {name}:{function}:{line} | {message}"

# third-party loggers that flood DEBUG output
NOISY_LOGGERS = ("matplotlib", "PIL")


class _StdlibBridge(logging.Handler):
    """Forward records from stdlib ``logging`` (scipy, matplotlib) to loguru."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = logging.currentframe(), 2
        while frame is not None and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        logger.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())


def setup_logging(
    level: str = "INFO",
    log_file: bool = True,
    log_dir: str = "logs",
    quiet: Iterable[str] = NOISY_LOGGERS,
):
    """
    Configure loguru sinks for an experiment session.

    Args:
        level: DEBUG shows per-step damping decisions, INFO one line per strategy
        log_file: Also write ``kacanov_<date>.log`` under ``log_dir``
        log_dir: Directory for the rotating log files
        quiet: stdlib loggers capped at WARNING
    """
    logger.remove()
    logger.configure(extra={"run": "-"})

    logger.add(sys.stderr, level=level, format=CONSOLE_FORMAT, colorize=True)

    if log_file:
        directory = Path(log_dir)
        directory.mkdir(parents=True, exist_ok=True)
        logger.add(
            directory / "kacanov_{time:YYYY-MM-DD}.log",
            level=level,
            format=FILE_FORMAT,
            rotation="50 MB",
            retention=10,
            compression="zip",
        )

    logging.basicConfig(handlers=[_StdlibBridge()], level=0, force=True)
    for name in quiet:
        logging.getLogger(name).setLevel(logging.WARNING)


@contextmanager
def run_context(model_id: str, strategy: str) -> Iterator[None]:
    """Tag records emitted in this context (and its thread) with ``model/strategy``."""
    with logger.contextualize(run=f"{model_id}/{strategy}"):
        yield


def get_logger(name: str):
    """Get a logger instance."""
    return logger.bind(name=name)
