import shutil
import tempfile
import unittest
from os import path as os_path
from unittest.mock import patch

from src.pyotom import version
from src.pyotom.utils.env import Env
from src.pyotom.utils.exceptions import ConfigError


def _logsConfig(logs: dict):
    def config_get_side_effect(key, default=None):
        """Simulate the [logs] section."""
        if key == "logs":
            return dict(logs)
        return {} if default is None else default
    return config_get_side_effect


@patch("src.pyotom.utils.env.LoggerHandler")
@patch("src.pyotom.utils.env.Config")
class TestEnv(unittest.TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()
        self.out_dir = os_path.join(self.tmp_dir, "run", "train")

    def tearDown(self):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def test_init_creates_out_dir_and_config(self, mock_config, mock_logger_handler):
        """Test that the env creates the output directory and loads the run config."""
        mock_config.return_value.get.side_effect = _logsConfig({"log_level": "INFO"})

        env = Env("run.json", out_dir=self.out_dir, command="train")
        self.assertTrue(os_path.isdir(self.out_dir))
        self.assertEqual(env.out_dir, os_path.abspath(self.out_dir))
        self.assertEqual(env.project_name, version.PROJECT_NAME)
        mock_config.assert_called_once_with("run.json", env=env)
        mock_logger_handler.assert_called_once_with("", project_name=version.PROJECT_NAME, instance="train",
                                                    log_level="INFO")

    def test_log_file_goes_under_out_dir(self, mock_config, mock_logger_handler):
        """Test that a log file request adds a file handler under <out-dir>/logs."""
        mock_config.return_value.get.side_effect = _logsConfig({"log_level": "INFO", "add_file_handler": False})

        Env(out_dir=self.out_dir, command="eval", log_file=True, log_level="DEBUG")
        mock_logger_handler.assert_called_once_with(os_path.join(os_path.abspath(self.out_dir), "logs"),
                                                    project_name=version.PROJECT_NAME, instance="eval",
                                                    log_level="DEBUG", add_file_handler=True)

    def test_log_file_needs_out_dir(self, mock_config, mock_logger_handler):
        """Test that a log file without an output directory is a config error."""
        mock_config.return_value.get.side_effect = _logsConfig({})
        with self.assertRaises(ConfigError):
            Env(log_file=True)
        mock_logger_handler.assert_not_called()

    def test_init_no_logger_if_no_logs(self, mock_config, mock_logger_handler):
        """Test that the logger is not initialized if `no_logs` is set to True."""
        mock_config.return_value.get.side_effect = _logsConfig({"no_logs": True})

        env = Env(out_dir=self.out_dir)
        mock_logger_handler.assert_not_called()
        self.assertIsNone(env.logger)

    def test_env_str_and_repr(self, mock_config, mock_logger_handler):
        """Test that the Env's __str__ and __repr__ name the project and the command."""
        mock_config.return_value.get.side_effect = _logsConfig({})
        env = Env(command="fit")
        expected_str = f"Env(project='{version.PROJECT_NAME_TEXT}', version='{version.VERSION}', command='fit')"
        self.assertEqual(str(env), expected_str)
        self.assertEqual(repr(env), expected_str)
        self.assertEqual(env.out_dir, "")

    def test_close_detaches_logger(self, mock_config, mock_logger_handler):
        """Test that closing the env closes its logger handler once."""
        mock_config.return_value.get.side_effect = _logsConfig({})
        env = Env(out_dir=self.out_dir)

        env.close()
        env.close()
        mock_logger_handler.return_value.close.assert_called_once()
        self.assertIsNone(env.logger)


if __name__ == "__main__":
    unittest.main()
