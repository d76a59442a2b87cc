#!/usr/bin/env python3

"""Logger factory shared by all segflow modules."""

import logging
import os

import coloredlogs

LOG_FORMAT = '%(asctime)s %(name)s[%(process)d] %(levelname)s %(message)s'
"""Format of every log record."""

LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')
"""Accepted values of `SEGFLOW_LOG_LEVEL`."""


def _log_level() -> str:
    """Read the log level from `SEGFLOW_LOG_LEVEL`, defaulting to `info`."""
    level = os.environ.get('SEGFLOW_LOG_LEVEL', 'info').strip().upper()
    if level not in LEVELS:
        level = 'INFO'
    return level


def get_logger(name: str, log_level: str = None) -> logging.Logger:
    """Return a colored module logger.

    Args:
        name (str): Logger name, usually `__name__`.
        log_level (str, optional): Overrides the environment level.

    Returns:
        logging.Logger: The configured logger.
    """
    logger = logging.getLogger(name)
    level = (log_level or _log_level()).upper()
    coloredlogs.install(level=level, logger=logger, fmt=LOG_FORMAT)
    return logger


def set_level(level: str):
    """Change the level of every segflow logger created so far."""
    level = level.strip().upper()
    if level not in LEVELS:
        raise ValueError(f'unknown log level "{level}", expected one of {LEVELS}')
    for name, logger in logging.root.manager.loggerDict.items():
        if name.split('.')[0] == 'segflow' and isinstance(logger, logging.Logger):
            logger.setLevel(level)
            for handler in logger.handlers:
                handler.setLevel(level)
