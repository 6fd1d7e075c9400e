import logging
import sys
from typing import Any, Dict, Optional

import structlog

from ulrs.common.config import get_settings


def add_run_context(
    logger: logging.Logger, method_name: str, event_dict: Dict[str, Any]
) -> Dict[str, Any]:
    """
    Processor that shortens the run context bound by the CLI.

    The CLI binds `ulrs_command` and `ulrs_seed` into contextvars so they do not
    collide with keyword arguments of library events; they are emitted as
    `command` and `seed`.
    """
    if "ulrs_command" in event_dict:
        event_dict["command"] = event_dict.pop("ulrs_command")
    if "ulrs_seed" in event_dict:
        event_dict["seed"] = event_dict.pop("ulrs_seed")
    return event_dict


def configure_logging(level: Optional[str] = None, json: Optional[bool] = None) -> None:
    """
    Configure structured logging for the library and the CLI.

    stdlib logging calls are routed through the same processor chain, so
    warnings raised by numpy/scipy helpers end up in the same stream.
    Output goes to stderr; stdout belongs to command results.
    """
    settings = get_settings()
    level = level or settings.log_level
    json = settings.log_json if json is None else json

    processors: list[Any] = [
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.contextvars.merge_contextvars,
        add_run_context,
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.TimeStamper(fmt="iso", utc=True),
        structlog.processors.format_exc_info,
    ]
    renderer: Any = (
        structlog.processors.JSONRenderer()
        if json
        else structlog.dev.ConsoleRenderer(colors=False)
    )

    structlog.configure(
        processors=[*processors, structlog.stdlib.ProcessorFormatter.wrap_for_formatter],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(
        structlog.stdlib.ProcessorFormatter(
            processor=renderer,
            foreign_pre_chain=processors,
        )
    )

    root_logger = logging.getLogger()
    # Re-configuration replaces the handler instead of stacking a second one.
    for existing in list(root_logger.handlers):
        if getattr(existing, "_ulrs_handler", False):
            root_logger.removeHandler(existing)
    handler._ulrs_handler = True  # type: ignore[attr-defined]
    root_logger.addHandler(handler)
    root_logger.setLevel(level.upper())
