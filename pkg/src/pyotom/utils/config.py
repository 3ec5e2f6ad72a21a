from __future__ import annotations

import ast
import copy
import configparser
import json
import logging
from numbers import Number
from os import path
from typing import Any

from .exceptions import ConfigError
from .file import save
from ..version import PROJECT_NAME


_logger = logging.getLogger(__name__)

UTILS_DIR = path.dirname(path.abspath(__file__))
SRC_DIR = path.dirname(UTILS_DIR)  # Get source directory


def checkConfigPath(config_path: str) -> bool:
    """Check for valid config path."""
    if not config_path or not path.exists(config_path):
        raise ConfigError(f"Invalid config path was given, got: {config_path}")
    return True


def _parseValue(value: str):
    """Parse a config value as a Python literal, falling back to the raw string."""
    try:
        return ast.literal_eval(value)
    except (SyntaxError, ValueError):
        return value


def readConf(config_path: str) -> dict[str, dict[str, Any]]:
    """
    Read every section of a .conf file, values parsed as Python literals.

    :param config_path: Path of the .conf file, should be a str
    :return: sections - dict[str, dict[str, Any]]
    """
    checkConfigPath(config_path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(config_path, 'r', encoding='utf-8') as file:
            parser.read_file(file)
    except configparser.Error as e:
        _logger.error(f"Cannot parse '{config_path}': {e}")
        raise ConfigError(f"Config '{config_path}' is malformed: {e}")
    return {name: {key: _parseValue(value) for key, value in parser.items(name)} for name in parser.sections()}


def readJson(config_path: str) -> dict[str, dict[str, Any]]:
    """Read a JSON run config, an object of section objects."""
    checkConfigPath(config_path)
    try:
        with open(config_path, 'r', encoding='utf-8') as file:
            overrides = json.load(file)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config '{config_path}' is not valid JSON: {e}")
    if not isinstance(overrides, dict):
        raise ConfigError(f"Config '{config_path}' must hold an object of sections")
    return overrides


def _compatible(default, value) -> bool:
    """Check an override has the same kind of value as its default."""
    if default is None or value is None:
        return True
    if isinstance(default, bool) or isinstance(value, bool):
        return isinstance(default, bool) and isinstance(value, bool)
    if isinstance(default, Number):
        return isinstance(value, Number)
    if isinstance(default, (list, tuple)):
        return isinstance(value, (list, tuple))
    return isinstance(value, type(default))


def _merged(defaults: dict, values: dict, name: str) -> dict:
    """Defaults updated with values, every key and value type checked against the defaults."""
    merged = dict(defaults)
    for key, value in values.items():
        if key not in defaults:
            raise ConfigError(f"Unknown config key '{name}.{key}'")
        default = defaults[key]
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Config key '{name}.{key}' expects an object, got: {value!r}")
            value = _merged(default, value, f"{name}.{key}")
        elif not _compatible(default, value):
            raise ConfigError(f"Config key '{name}.{key}' expects {type(default).__name__}, got: {value!r}")
        merged[key] = value
    return merged


class Config:
    """
    Sectioned configuration. Defaults are read from the project
    'pyotom.conf'; a run config (another .conf or a JSON document with the
    same sections) is overlaid on top. Overrides naming a section or key
    the defaults do not define are rejected.
    """

    CONFIG_EXT = "conf"
    JSON_EXT = "json"
    PROJECT_CONFIG_PATH: str = path.abspath(f"{SRC_DIR}/{PROJECT_NAME}.{CONFIG_EXT}")

    def __init__(self, config_path: str = "", env=None):
        self.env = env
        self.config_path: str = path.abspath(config_path) if config_path else ""
        self.filename: str = path.basename(self.config_path) or (env.project_name if env else "")

        self._config: dict[str, dict[str, Any]] = readConf(self.PROJECT_CONFIG_PATH)
        if self.config_path:
            if self.config_path.endswith('.' + self.JSON_EXT):
                overrides = readJson(self.config_path)
            else:
                overrides = readConf(self.config_path)
            self.updateConfig(overrides)
            _logger.info(f"Run config loaded from '{self.config_path}'")

    def __str__(self) -> str:
        return str(self._config)

    def __repr__(self) -> str:
        prefix = ""
        if self.env:
            prefix = self.env.project_name_text or self.env.project_name or ""
        return f"{prefix}.Config({self})" if prefix else f"Config({self})"

    def __getitem__(self, key):
        return self._config[key]

    def __contains__(self, key) -> bool:
        return key in self._config

    def get(self, key: str, fallback=None):
        return self._config.get(key, {} if fallback is None else fallback)

    def updateConfig(self, overrides: dict[str, dict]):
        """
        Apply overrides, rejecting unknown sections, unknown keys and mistyped
        values. A key whose default is a mapping is merged entry by entry, and
        its entries are checked against the default entries the same way.
        """
        for section_name, values in overrides.items():
            if section_name not in self._config:
                raise ConfigError(f"Unknown config section '{section_name}'")
            if not isinstance(values, dict):
                raise ConfigError(f"Config section '{section_name}' must be an object")
            self._config[section_name] = _merged(self._config[section_name], values, section_name)

    def toJson(self) -> dict:
        return copy.deepcopy(self._config)

    def saveJson(self, config_dir: str, filename: str = "resolved_config.json") -> str:
        """Write the resolved configuration as JSON."""
        config_path = path.join(config_dir, filename)
        save(config_path, self.toJson())
        _logger.info(f"Resolved config written to '{config_path}'")
        return config_path
