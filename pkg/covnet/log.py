"""Logging setup for covnet runs."""
import logging
from pathlib import Path
from typing import Optional, Union

FMT = "%(asctime)s - %(name)s - %(module)s - %(levelname)s - %(message)s"


def setuplog(
    name: str = "covnet",
    path: Optional[Union[str, Path]] = None,
    log_level: int = 20,
    fmt: str = FMT,
    append: bool = True,
) -> logging.Logger:
    """Set up the covnet logger with a console handler and an optional file handler.

    Parameters
    ----------
    name : str, optional
        Logger name, by default "covnet".
    path : Union[str, Path], optional
        Path to a log file. No file handler is added when None, by default None.
    log_level : int, optional
        Log level, by default 20 (INFO).
    fmt : str, optional
        Log message format.
    append : bool, optional
        Append to an existing log file instead of overwriting it, by default True.

    Returns
    -------
    logging.Logger
        The configured logger.
    """
    logger = logging.getLogger(name)
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)

    console = logging.StreamHandler()
    console.setLevel(log_level)
    console.setFormatter(logging.Formatter(fmt))
    logger.addHandler(console)

    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        add_filehandler(logger, path, log_level=log_level, fmt=fmt, append=append)

    logger.setLevel(log_level)
    logger.propagate = False
    return logger


def add_filehandler(
    logger: logging.Logger,
    path: Union[str, Path],
    log_level: int = 20,
    fmt: str = FMT,
    append: bool = True,
) -> None:
    """Add a file handler to the logger."""
    ch = logging.FileHandler(path, mode="a" if append else "w")
    ch.setFormatter(logging.Formatter(fmt))
    ch.setLevel(log_level)
    logger.addHandler(ch)
    logger.debug(f"Writing log messages to new file {path}.")
