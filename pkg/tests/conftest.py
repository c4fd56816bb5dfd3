import os
import sys

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

import pytest

from app.core.config_manager import ConfigManager


@pytest.fixture(scope="session")
def cfg():
    ConfigManager.reset()
    config = ConfigManager().load()
    yield config
    ConfigManager.reset()


@pytest.fixture
def clean_env(monkeypatch):
    monkeypatch.delenv("WORKBENCH_CONFIG", raising=False)
    monkeypatch.delenv("WORKBENCH_OUTPUT_DIR", raising=False)
    ConfigManager.reset()
    yield
    ConfigManager.reset()
