from __future__ import annotations

import sys
from pathlib import Path
from typing import Any

from loguru import logger

_STDERR_FORMAT = (
    '<green>{time:HH:mm:ss.SSS}</green> | '
    '<level>{level: <8}</level> | '
    '<cyan>{name}</cyan>:<cyan>{function}</cyan>\n'
    '  <level>{message}</level>'
)

# One line per interior-point iteration, kept apart from the error log
_SOLVER_TRACE_FORMAT = '{time:YYYY-MM-DD HH:mm:ss.SSS} | {thread.name} | {message}'


def _intercept_logging_module_calls(log_level: str):  # pragma: no cover
    import inspect
    import logging

    logging_filename = getattr(logging, '__file__', None)

    class InterceptHandler(logging.Handler):
        def emit(self, record: logging.LogRecord) -> None:
            try:
                level = logger.level(record.levelname).name
            except ValueError:
                level = record.levelno

            depth = 0
            frame = inspect.currentframe()
            while frame and (depth == 0 or frame.f_code.co_filename == logging_filename):
                frame = frame.f_back
                depth += 1

            logger.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())

    logging.basicConfig(handlers=[InterceptHandler()], level=log_level, force=True)


def setup_logging(
    logging_dir: Path, log_to_stderr: bool, debug: bool, intercept_logging_module_calls: bool
) -> None:
    """Route records to a rotating error log and, on request, to stderr.

    In debug mode the solver's per-iteration records are also written to
    ``solver.log``, which is truncated on every run.  Sweeps solve in worker
    threads, so trace lines carry the thread name.
    """
    log_level = 'DEBUG' if debug else 'INFO'

    if intercept_logging_module_calls:
        _intercept_logging_module_calls(log_level)

    handlers: list[dict[str, Any]] = [
        {
            'level': log_level,
            'sink': logging_dir / 'error.log',
            'rotation': '5 MB',
            'retention': 5,
        },
    ]
    if debug:
        handlers.append(
            {
                'level': 'DEBUG',
                'sink': logging_dir / 'solver.log',
                'mode': 'w',
                'format': _SOLVER_TRACE_FORMAT,
                'filter': 'admmpep.sdp',
            }
        )
    if log_to_stderr:
        handlers.append({'level': log_level, 'sink': sys.stderr, 'format': _STDERR_FORMAT})

    logger.configure(handlers=handlers)
