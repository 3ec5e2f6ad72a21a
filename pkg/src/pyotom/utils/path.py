from __future__ import annotations

import logging
import os

from .exceptions import logExceptionHelper

_logger = logging.getLogger(__name__)

__all__ = ["checkPath", "existPath", "joinPath", "makePath"]


def joinPath(path: str, *paths, ext: str = '') -> str:
    """
    Absolute path of the joined parts. Empty parts are skipped and, when
    given, ext replaces any other extension of the last part.

    :param path: Base path, should be a str
    :param paths: Parts appended to the base, should be a tuple[str]
    :param ext: Extension with or without the dot, should be a str
    :return: path - str
    """
    joined = os.path.join(path, *(part for part in paths if part))
    if ext:
        root, current = os.path.splitext(joined)
        wanted = ext if ext.startswith('.') else f'.{ext}'
        if current != wanted:
            joined = root + wanted
    return os.path.abspath(joined)


def checkPath(path: str, *paths, ext: str = '', errors: str = 'ignore') -> tuple[str, bool]:
    """
    Join the parts and report whether the result exists.

    :param errors: What a missing path does: 'ignore', 'warning', 'error' or 'raise', should be a str
    :return: path, exist - tuple[str, bool]
    """
    path = joinPath(path, *paths, ext=ext)
    exist = os.path.exists(path)
    if not exist:
        logExceptionHelper(f"No such file or directory: '{path}'", errors, FileNotFoundError)
    return path, exist


def existPath(path: str, *paths, errors: str = 'ignore') -> bool:
    return checkPath(path, *paths, errors=errors)[1]


def makePath(path: str, *paths) -> str:
    """Create the joined directory, parents included, and return it."""
    path = joinPath(path, *paths)
    if not os.path.isdir(path):
        os.makedirs(path, exist_ok=True)
        _logger.debug(f"Created directory '{path}'")
    return path
