"""Settings manager with validation, fallback to defaults and hot reload."""

import logging
import yaml
from dataclasses import asdict, fields
from pathlib import Path
from typing import Optional
from src.records import Settings
from src.interfaces import IConfigurationManager
from src.logging_config import get_logger

DEFAULT_SETTINGS_PATH = "config/settings.yaml"


class ConfigurationManager(IConfigurationManager):
    """Loads application settings from YAML and validates them."""

    def __init__(self, config_path: Optional[str] = None):
        """Initialize configuration manager.

        Args:
            config_path: Path to the settings file (optional)
        """
        self.config_path = config_path or DEFAULT_SETTINGS_PATH
        self.config: Optional[Settings] = None
        self.logger = get_logger("config")
        self._default_config = Settings()

    def load_config(self) -> Settings:
        """Load settings from file or use defaults.

        Returns:
            Settings object with loaded values
        """
        config_file = Path(self.config_path)

        if config_file.exists():
            try:
                with open(config_file, 'r', encoding='utf-8') as f:
                    config_data = yaml.safe_load(f) or {}

                known = {f.name for f in fields(Settings)}
                unknown = sorted(set(config_data) - known)
                if unknown:
                    self.logger.warning(f"Ignoring unknown settings: {', '.join(unknown)}")

                defaults = asdict(self._default_config)
                self.config = Settings(**{
                    name: config_data.get(name, defaults[name]) for name in known
                })
                self.logger.info(f"Settings loaded from {config_file}")

                self._validate_and_fallback()

            except yaml.YAMLError as e:
                self.logger.error(f"YAML parsing error in settings file: {e}")
                self.config = Settings()
                self.logger.info("Using default settings due to parsing error")
            except Exception as e:
                self.logger.error(f"Error loading settings: {e}")
                self.config = Settings()
                self.logger.info("Using default settings")
        else:
            self.logger.warning(f"Settings file not found: {config_file}")
            self.config = Settings()
            self.logger.info("Using default settings")

        return self.config

    def _validate_and_fallback(self) -> None:
        """Validate values and fall back to defaults where invalid."""
        if not self.config:
            return

        level = str(self.config.log_level).upper()
        if not isinstance(logging.getLevelName(level), int):
            self._fallback("log_level", f"unknown log level {self.config.log_level!r}")
        else:
            self.config.log_level = level

        for name in ("enumeration_cap", "workers", "max_log_size"):
            value = getattr(self.config, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                self._fallback(name, f"expected a positive integer, got {value!r}")

        for name in ("score_tie_tolerance", "fd_step", "gradcheck_tolerance"):
            value = getattr(self.config, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
                self._fallback(name, f"expected a positive number, got {value!r}")
            else:
                setattr(self.config, name, float(value))

    def _fallback(self, name: str, reason: str) -> None:
        default = getattr(self._default_config, name)
        self.logger.error(f"Invalid setting {name}: {reason}")
        setattr(self.config, name, default)
        self.logger.info(f"Falling back to default {name}: {default}")

    def get_settings(self) -> Settings:
        """Get the current settings, loading them on first use."""
        if not self.config:
            self.load_config()
        return self.config

    def reload_config(self) -> None:
        """Reload settings from file, keeping the previous ones on failure."""
        self.logger.info("Reloading settings")
        old_config = self.config

        try:
            self.load_config()
            self.logger.info("Settings reloaded successfully")

            if old_config:
                for name, value in asdict(self.config).items():
                    previous = getattr(old_config, name)
                    if previous != value:
                        self.logger.info(f"Setting {name} changed: {previous} -> {value}")
        except Exception as e:
            self.logger.error(f"Error during settings reload: {e}")
            if old_config:
                self.config = old_config
                self.logger.info("Keeping previous settings due to reload error")
