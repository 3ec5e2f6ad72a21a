from __future__ import annotations

import glob
import logging
import os
import time
from datetime import datetime
from logging.handlers import RotatingFileHandler

_logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s <%(levelname)s> [%(run)s] %(message)s  \t(%(name)s.%(funcName)s)"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
# A full trace and a short file of problems per run
FILE_LEVELS = ("debug", "warning")


def levelNumber(log_level: str) -> int:
    """
    Numeric logging level of a level name, case insensitive.

    :param log_level: Level name, should be a str
    :return: level - int
    """
    name = str(log_level).upper()
    if name not in LOG_LEVELS:
        raise ValueError(f"Invalid log level: {log_level}")
    return getattr(logging, name)


class RunFilter(logging.Filter):
    """Stamps every record with the name of the running command."""

    def __init__(self, run: str):
        super().__init__()
        self.run = run or "-"

    def filter(self, record: logging.LogRecord) -> bool:
        record.run = self.run
        return True


class LoggerHandler:
    """
    Configures the root logger for a pyotom process: a console handler at
    the configured level and, when a logs directory is given, one rotating
    file per entry of FILE_LEVELS. Numpy floating point warnings routed
    through the warnings module end up in the same handlers.
    """

    DEFAULT_CONFIG = {
        "ext": "log",
        "log_level": "INFO",
        "add_console_handler": True,
        "add_file_handler": False,
        "add_instance": True,
        "add_time_stamp": True,
        "capture_warnings": True,
        "max_bytes": 10 * 1024 * 1024,
        "backup_count": 5,
        "age_limit": 60 * 60 * 24 * 7
    }

    def __init__(self, logs_dir: str = "", **kwargs):
        self.config = {**self.DEFAULT_CONFIG, **kwargs}
        self.config["ext"] = self.config["ext"].strip(".")
        self.console_level = levelNumber(self.config["log_level"])

        self.logs_dir = logs_dir if self.config["add_file_handler"] else ""
        if self.config["add_file_handler"] and not logs_dir:
            raise ValueError("No log directory specified.")
        self.timestamp = datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
        self.files: list[str] = []

        self.logger = logging.getLogger()
        self.logger.handlers = []
        self.logger.setLevel(logging.DEBUG)
        self._filter = RunFilter(self.config.get("instance", ""))
        self._formatter = logging.Formatter(LOG_FORMAT)

        if self.logs_dir:
            os.makedirs(self.logs_dir, exist_ok=True)
            self.cleanLogs()
            for level in FILE_LEVELS:
                self._addFileHandler(level)
        if self.config["add_console_handler"]:
            self._attach(logging.StreamHandler(), self.console_level)

        logging.captureWarnings(bool(self.config["capture_warnings"]))

    def _attach(self, handler: logging.Handler, level: int):
        handler.setLevel(level)
        handler.setFormatter(self._formatter)
        handler.addFilter(self._filter)
        self.logger.addHandler(handler)

    def _addFileHandler(self, level: str):
        file_path = os.path.abspath(os.path.join(self.logs_dir, self.logFileName(level)))
        handler = RotatingFileHandler(file_path, maxBytes=self.config["max_bytes"],
                                      backupCount=self.config["backup_count"], encoding="utf-8")
        self._attach(handler, levelNumber(level))
        self.files.append(file_path)

    def logFileName(self, level: str) -> str:
        """File name of one level's log, e.g. pyotom_train_debug_<stamp>.log"""
        parts = [self.config.get("project_name", "project")]
        if self.config["add_instance"]:
            parts.append(self.config.get("instance"))
        parts.append(level)
        if self.config["add_time_stamp"]:
            parts.append(self.timestamp)
        return f"{'_'.join(part for part in parts if part)}.{self.config['ext']}"

    def cleanLogs(self) -> int:
        """
        Remove log files of earlier runs older than the age limit.

        :return: removed - int
        """
        cutoff = time.time() - self.config["age_limit"]
        removed = 0
        for file_path in glob.glob(os.path.join(self.logs_dir, f"*.{self.config['ext']}")):
            if not os.path.isfile(file_path) or os.path.getmtime(file_path) >= cutoff:
                continue
            try:
                os.remove(file_path)
                removed += 1
            except PermissionError:
                _logger.warning(f"Failed to delete old log file due to permissions: {os.path.basename(file_path)}")
        if removed:
            _logger.debug(f"Removed {removed} old log file(s) from '{self.logs_dir}'")
        return removed

    def getLogger(self) -> logging.Logger:
        return self.logger

    def close(self):
        """Detach and close every handler, stop capturing warnings."""
        for handler in self.logger.handlers[:]:
            handler.close()
            self.logger.removeHandler(handler)
        logging.captureWarnings(False)
