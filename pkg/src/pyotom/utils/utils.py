from __future__ import annotations

import logging
import os

import numpy as np

from .exceptions import logExceptionHelper

_logger = logging.getLogger(__name__)

__all__ = ["toJson", "resolveWorkers", "THREADS_ENV_NAME"]

THREADS_ENV_NAME = "OTOM_THREADS"


def toJson(obj: object, errors='raise'):
    """
    json.dumps default hook: objects with a toJson() method, numpy arrays
    and scalars, sets and tuples.

    :param obj: Value json cannot encode by itself, should be an object
    :param errors: What an unsupported value does: 'ignore', 'warning' or 'raise', should be a str
    :return: json_data - Any
    """
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)

    method = getattr(obj, 'toJson', None)
    if callable(method):
        return method()
    reason = "has no" if method is None else "has a non-callable"
    logExceptionHelper(f"'{type(obj).__name__}' object {reason} 'toJson' method", errors, TypeError)
    return None


def resolveWorkers(requested: int = 0, deterministic: bool = False) -> int:
    """
    Number of worker processes to use. Zero means one per CPU; the
    OTOM_THREADS environment variable caps the result and deterministic
    runs always use a single worker.

    :param requested: Requested worker count, 0 for automatic, should be an int
    :param deterministic: Whether single-worker mode is forced, should be a bool
    :return: workers - int
    """
    if deterministic:
        return 1

    workers = requested if requested and requested > 0 else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV_NAME, "")
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            _logger.warning(f"Ignoring invalid {THREADS_ENV_NAME} value, got: '{cap}'")
    return max(1, workers)
