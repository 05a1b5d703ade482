import logging
import os
import sys
import uuid
from contextvars import ContextVar
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

DEFAULT_LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
SERVICE_NAME = "prodcat"

run_id_context: ContextVar[Optional[str]] = ContextVar("run_id", default=None)


def _resolve_log_level(level: str) -> int:

    level_name = level.upper()
    return getattr(logging, level_name, logging.INFO)


class RunIdFilter(logging.Filter):
    """Attach the active run ID to each log record."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = run_id_context.get() or "N/A"
        return True


def setup_logging(level: str = DEFAULT_LOG_LEVEL) -> logging.Logger:
    """Configure structured logging with run ID support.

    Records go to stderr; stdout carries the command summary only.
    """

    logger = logging.getLogger(SERVICE_NAME)
    logger.setLevel(_resolve_log_level(level))
    logger.propagate = False

    # Prevent duplicate handlers when the CLI is invoked repeatedly in-process
    if logger.handlers:
        for handler in logger.handlers:
            handler.setLevel(_resolve_log_level(level))
        return logger

    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(_resolve_log_level(level))

    formatter = logging.Formatter(
        (
            '{"timestamp": "%(asctime)s", "level": "%(levelname)s", '
            '"run_id": "%(run_id)s", "service": "' + SERVICE_NAME + '", '
            '"message": "%(message)s", "module": "%(module)s", "function": "%(funcName)s"}'
        )
    )
    handler.setFormatter(formatter)
    handler.addFilter(RunIdFilter())

    logger.addHandler(handler)

    return logger


# Global logger instance
logger = setup_logging()


def new_run_id() -> str:
    """Generate and activate a run ID for the current context."""
    run_id = uuid.uuid4().hex[:12]
    run_id_context.set(run_id)
    return run_id


def set_run_id(run_id: Optional[str]) -> None:
    """Set run ID for current context."""
    if run_id is None:
        clear_run_id()
        return
    run_id_context.set(run_id)


def get_run_id() -> Optional[str]:
    """Get run ID from current context."""
    return run_id_context.get()


def clear_run_id() -> None:
    """Reset the run ID for the current context."""
    run_id_context.set(None)


__all__ = [
    "logger",
    "setup_logging",
    "new_run_id",
    "set_run_id",
    "get_run_id",
    "clear_run_id",
]
