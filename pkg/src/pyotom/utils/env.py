from __future__ import annotations

import logging

from .. import version
from ..utils.config import Config
from ..utils.exceptions import ConfigError
from ..utils.logger import LoggerHandler
from ..utils.path import joinPath, makePath

_logger = logging.getLogger(__name__)

LOGS_DIR = "logs"


class Env:
    """
    One command run: the resolved configuration, the output directory every
    artifact is written into and the logging handlers attached for the run.
    """

    def __init__(self, config_path: str = "", out_dir: str = "", command: str = "", log_file: bool = False,
                 log_level: str | None = None):
        self.project_name: str = version.PROJECT_NAME
        self.project_name_text: str = version.PROJECT_NAME_TEXT
        self.version: str = version.VERSION
        self.command: str = command
        self.out_dir: str = makePath(out_dir) if out_dir else ""
        self.logger: LoggerHandler | None = None

        self.config = Config(config_path, env=self)

        logs_config = dict(self.config.get("logs", {}))
        if log_level:
            logs_config["log_level"] = log_level
        if log_file:
            if not self.out_dir:
                raise ConfigError("A log file needs an output directory")
            logs_config["add_file_handler"] = True
        if not logs_config.pop("no_logs", False):
            logs_dir = joinPath(self.out_dir, LOGS_DIR) if log_file else ""
            self.logger = LoggerHandler(logs_dir, project_name=self.project_name, instance=command, **logs_config)

    def __str__(self) -> str:
        return f"Env(project='{self.project_name_text}', version='{self.version}', command='{self.command}')"

    def __repr__(self) -> str:
        return str(self)

    def close(self):
        """Detach the logging handlers owned by this env."""
        if self.logger is not None:
            self.logger.close()
            self.logger = None
