import json
import logging
import os
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from ..constants.app_constants import EnvKey, get_env_path
from ..models.config_models import WorkbenchConfig
from .exceptions import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parents[2] / "config" / "workbench.json"


class ConfigManager:
    _instance: Optional['ConfigManager'] = None
    _config: Optional[WorkbenchConfig] = None
    _path: Optional[Path] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def load(self, path: Optional[str] = None, output_dir: Optional[str] = None,
             max_workers: Optional[int] = None) -> WorkbenchConfig:
        """Flag values win over environment variables, which win over the file."""
        resolved = Path(path or get_env_path(EnvKey.CONFIG.value, str(DEFAULT_CONFIG_PATH)))
        try:
            raw = json.loads(resolved.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {resolved}")
        except json.JSONDecodeError as e:
            logger.error(f"Config parse error: {str(e)}")
            raise ConfigError(f"{resolved}: invalid JSON ({e.msg} at line {e.lineno})")

        env_out = os.environ.get(EnvKey.OUTPUT_DIR.value)
        if env_out:
            raw["output_dir"] = env_out
        if output_dir:
            raw["output_dir"] = output_dir
        if max_workers is not None:
            raw["max_workers"] = max_workers

        try:
            config = WorkbenchConfig.model_validate(raw)
        except ValidationError as e:
            logger.error(f"Config validation error: {str(e)}")
            first = e.errors()[0]
            where = ".".join(str(p) for p in first["loc"])
            raise ConfigError(f"{resolved}: {where}: {first['msg']}")

        self._config = config
        self._path = resolved
        logger.info(f"Loaded config {resolved} (version {config.version})")
        return config

    @property
    def config(self) -> WorkbenchConfig:
        if self._config is None:
            self.load()
        return self._config

    @property
    def path(self) -> Optional[Path]:
        return self._path

    @classmethod
    def reset(cls):
        if cls._instance is not None:
            cls._instance._config = None
            cls._instance._path = None
        get_env_path.cache_clear()
