"""Tests for ConfigurationManager."""

import logging
from pathlib import Path

import pytest

from src.config_manager import ConfigurationManager
from src.records import Settings


@pytest.fixture
def settings_path(tmp_path):
    return tmp_path / "settings.yaml"


class TestConfigurationManager:
    """Test suite for ConfigurationManager."""

    def test_missing_file_uses_defaults(self, settings_path):
        """Test that a missing file yields default settings."""
        manager = ConfigurationManager(str(settings_path))

        assert manager.load_config() == Settings()

    def test_load_values(self, settings_path):
        """Test loading valid settings."""
        settings_path.write_text(
            "log_level: debug\nworkers: 2\nenumeration_cap: 10\nfd_step: 1\n", encoding="utf-8"
        )

        settings = ConfigurationManager(str(settings_path)).load_config()

        assert settings.log_level == "DEBUG"
        assert settings.workers == 2
        assert settings.enumeration_cap == 10
        assert settings.fd_step == 1.0
        assert isinstance(settings.fd_step, float)

    def test_empty_file(self, settings_path):
        settings_path.write_text("", encoding="utf-8")

        assert ConfigurationManager(str(settings_path)).load_config() == Settings()

    def test_invalid_yaml(self, settings_path):
        """Test that a parse error falls back to defaults."""
        settings_path.write_text("workers: [1, 2\n", encoding="utf-8")

        assert ConfigurationManager(str(settings_path)).load_config() == Settings()

    @pytest.mark.parametrize(
        "line,name",
        [
            ("log_level: LOUD", "log_level"),
            ("workers: 0", "workers"),
            ("enumeration_cap: many", "enumeration_cap"),
            ("score_tie_tolerance: -1", "score_tie_tolerance"),
            ("gradcheck_tolerance: true", "gradcheck_tolerance"),
        ],
    )
    def test_invalid_value_falls_back(self, settings_path, line, name):
        """Test that each invalid value is replaced by its default."""
        settings_path.write_text(f"{line}\n", encoding="utf-8")

        settings = ConfigurationManager(str(settings_path)).load_config()

        assert getattr(settings, name) == getattr(Settings(), name)

    def test_unknown_keys_ignored(self, settings_path, caplog):
        caplog.set_level(logging.WARNING, logger="peaky_lab")
        settings_path.write_text("colour: blue\nworkers: 3\n", encoding="utf-8")

        settings = ConfigurationManager(str(settings_path)).load_config()

        assert settings.workers == 3
        assert "colour" in caplog.text

    def test_get_settings_loads_lazily(self, settings_path):
        settings_path.write_text("workers: 5\n", encoding="utf-8")
        manager = ConfigurationManager(str(settings_path))

        assert manager.config is None
        assert manager.get_settings().workers == 5

    def test_reload(self, settings_path):
        """Test that reloading picks up changed values."""
        settings_path.write_text("workers: 2\n", encoding="utf-8")
        manager = ConfigurationManager(str(settings_path))
        manager.load_config()

        settings_path.write_text("workers: 6\n", encoding="utf-8")
        manager.reload_config()

        assert manager.get_settings().workers == 6

    def test_shipped_settings(self):
        """Test that the shipped settings file is valid."""
        path = Path(__file__).resolve().parent.parent / "config" / "settings.yaml"

        settings = ConfigurationManager(str(path)).load_config()

        assert settings.enumeration_cap == 14
        assert settings.score_tie_tolerance == 1e-12
