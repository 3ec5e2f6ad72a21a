from __future__ import annotations

import json
import logging
import os
from os import path as os_path

from .exceptions import logExceptionHelper
from .path import checkPath
from .utils import toJson


_logger = logging.getLogger(__name__)

__all__ = ["load", "save", "AtomicWriter", "TEXT_EXTS"]

# Extensions load/save handle besides .json
TEXT_EXTS = (".csv", ".txt", ".md")


def _kind(path: str, errors: str) -> str | None:
    ext = os_path.splitext(path)[1].lower()
    if ext == ".json" or ext in TEXT_EXTS:
        return ext
    logExceptionHelper(f"Unsupported file type '{ext or os_path.basename(path)}', expected .json or one of "
                       f"{', '.join(TEXT_EXTS)}", errors, ValueError)
    return None


def load(path: str, errors: str = "raise"):
    """
    Read a JSON document, or the text of a CSV or text file.

    :param path: File to read, should be a str
    :param errors: What a missing or unsupported file does: 'ignore', 'warning' or 'raise', should be a str
    :return: data - Any | None
    """
    path, exist = checkPath(path, errors=errors)
    ext = _kind(path, errors) if exist else None
    if ext is None:
        return None

    with open(path, 'r', encoding='utf-8') as file:
        data = json.load(file) if ext == ".json" else file.read()
    _logger.debug(f"Loaded '{path}'")
    return data


def save(path: str, data, indent: int = 4, errors: str = 'raise') -> bool:
    """
    Write data atomically. JSON is dumped with sorted keys and a fixed
    indent so identical data gives identical bytes, numpy values and
    dataclasses included; text is written with '\\n' line endings.

    :param path: Target file whose directory must exist, should be a str
    :param data: Document or text, should be an Any
    :param indent: JSON indentation, should be an int
    :param errors: What a missing directory or unsupported file does, should be a str
    :return: saved - bool
    """
    path = os_path.abspath(path)
    if not checkPath(os_path.dirname(path), errors=errors)[1]:
        return False
    ext = _kind(path, errors)
    if ext is None:
        return False

    if ext == ".json":
        text = json.dumps(data, default=toJson, indent=indent, sort_keys=True) + "\n"
    else:
        text = str(data)
    with AtomicWriter(path, "wb") as file:
        file.write(text.encode("utf-8"))
    return True


class AtomicWriter:
    """
    Context manager writing to '<path>.partial' and renaming it over the
    target on success; on failure the partial file is removed.
    """

    PARTIAL_EXT = ".partial"

    def __init__(self, path: str, mode: str = "wb"):
        self.path = os_path.abspath(path)
        self.partial_path = self.path + self.PARTIAL_EXT
        self.mode = mode
        self.file = None

    def __enter__(self):
        self.file = open(self.partial_path, self.mode)
        return self.file

    def __exit__(self, exc_type, exc_value, exc_traceback):
        self.file.close()
        if exc_type is None:
            os.replace(self.partial_path, self.path)
            _logger.debug(f"File '{self.path}' was written")
        elif os_path.exists(self.partial_path):
            os.remove(self.partial_path)
            _logger.warning(f"Removed partial file '{self.partial_path}' after {exc_type.__name__}")
        return False
