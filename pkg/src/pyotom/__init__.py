from __future__ import annotations

from . import utils, version
from .tools import bloch, schedule, dataset, neural, fit, phantom, images
from .utils.exceptions import (OtomError, DomainError, ScheduleParseError, ConfigError, NumericError,
                               SingularityError, PrecisionError, DatasetFormatError, WeightFormatError)

__version__ = version.VERSION

# Env of the command currently running, set by loadEnv
env: utils.Env | None = None


def loadEnv(config_path: str = "", out_dir: str = "", command: str = "", log_file: bool = False,
            log_level: str | None = None) -> utils.Env:
    """
    Resolve the configuration and attach logging for one command run.

    :param config_path: Run config overlaid on the defaults, '' for none, should be a str
    :param out_dir: Directory receiving the run's outputs, created when missing, should be a str
    :param command: Name of the running command, should be a str
    :param log_file: Whether to also log into <out_dir>/logs, should be a bool
    :param log_level: Console level overriding the [logs] section, should be a str | None
    :return: env - Env
    """
    global env
    env = utils.Env(config_path, out_dir=out_dir, command=command, log_file=log_file, log_level=log_level)
    return env
