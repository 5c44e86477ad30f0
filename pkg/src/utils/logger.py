import logging
import sys

import structlog

from src.config.settings import settings

_configured = False


def _stderr_logger(*args: object) -> structlog.PrintLogger:
    # resolved per call so redirected stderr streams are honoured
    return structlog.PrintLogger(file=sys.stderr)


def _configure() -> None:
    global _configured
    if _configured:
        return

    level = logging.getLevelName(settings.LOG_LEVEL.upper())
    if not isinstance(level, int):
        level = logging.INFO

    renderer = (
        structlog.processors.JSONRenderer()
        if settings.LOG_FORMAT == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=_stderr_logger,
        cache_logger_on_first_use=False,
    )
    _configured = True


def setup_logger(name: str) -> structlog.typing.FilteringBoundLogger:
    """Return a structured logger writing to stderr."""
    _configure()
    return structlog.get_logger(name)
