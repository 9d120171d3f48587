"""
Unit tests for environment settings
"""
import os

import pytest

from backend.app.config import get_settings


class TestSettings:
    """Test cases for get_settings"""

    @pytest.fixture(autouse=True)
    def fresh_settings(self):
        """Clear the settings cache around each test"""
        get_settings.cache_clear()
        yield
        get_settings.cache_clear()

    def test_defaults(self, monkeypatch):
        """Test the defaults with no environment variables"""
        for name in ("PRIVATE_BANDITS_WORKERS", "PRIVATE_BANDITS_ENUMERATION_CAP", "PRIVATE_BANDITS_OUTPUT_DIR", "LOG_LEVEL"):
            monkeypatch.delenv(name, raising=False)
        settings = get_settings()
        assert settings.workers == 1
        assert settings.enumeration_cap == 10_000_000
        assert settings.output_dir == "results"
        assert settings.log_level == "WARNING"

    def test_nonpositive_workers_means_cpu_count(self, monkeypatch):
        """Test that 0 workers uses every CPU"""
        monkeypatch.setenv("PRIVATE_BANDITS_WORKERS", "0")
        assert get_settings().workers == (os.cpu_count() or 1)

    def test_overrides(self, monkeypatch):
        """Test reading the cap and log level from the environment"""
        monkeypatch.setenv("PRIVATE_BANDITS_ENUMERATION_CAP", "500")
        monkeypatch.setenv("LOG_LEVEL", "debug")
        settings = get_settings()
        assert settings.enumeration_cap == 500
        assert settings.log_level == "DEBUG"

    def test_invalid_integer(self, monkeypatch):
        """Test that a non-integer value names the variable"""
        monkeypatch.setenv("PRIVATE_BANDITS_WORKERS", "many")
        with pytest.raises(ValueError, match="PRIVATE_BANDITS_WORKERS"):
            get_settings()

    def test_settings_are_cached(self):
        """Test that repeated calls return the same object"""
        assert get_settings() is get_settings()
