"""
Console logging shared by every module of the pipeline.

Each logger gets one stdout handler; `main.py --verbose` lowers the threshold of
all of them to DEBUG through set_console_level. Nothing is written to files: run
artifacts and reports carry the results, the console carries stage progress.
"""
import logging
import sys

_CONSOLE_LEVEL = logging.INFO


def get_logger(name: str = __name__) -> logging.Logger:
    """
    Returns a configured logger instance.

    :param name: Name of the logger (usually __name__ of the module).
    :return: logging.Logger object
    """
    logger = logging.getLogger(name)

    # Prevent adding handlers multiple times
    if logger.hasHandlers() and logger.handlers:
        return logger

    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    # Console handler: outputs INFO level and above to stdout
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(_CONSOLE_LEVEL)
    console_formatter = logging.Formatter(
        "%(asctime)s [%(levelname)-5s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    )
    console_handler.setFormatter(console_formatter)
    logger.addHandler(console_handler)

    return logger


def set_console_level(level: int) -> None:
    """
    Change the console threshold of every logger created by get_logger.

    :param level: logging level, e.g. logging.DEBUG when --verbose is given.
    """
    global _CONSOLE_LEVEL
    _CONSOLE_LEVEL = level
    for logger in logging.Logger.manager.loggerDict.values():
        if not isinstance(logger, logging.Logger):
            continue
        for handler in logger.handlers:
            if isinstance(handler, logging.StreamHandler):
                handler.setLevel(level)
