"""Logging setup for the command-line entry point."""

import logging

from rich.console import Console
from rich.logging import RichHandler

LOGGER_NAME = "afdm"


def setup_logging(verbose: bool = False) -> logging.Logger:
    """
    Attach a single rich handler to the package logger.

    Library modules only create loggers; handlers are installed here, once, by the CLI.

    :param verbose: Log DEBUG records instead of WARNING and above
    :type verbose: bool
    :return: The package logger
    :rtype: logging.Logger
    """
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        logger.addHandler(handler)
    logger.propagate = False
    return logger
