"""Configuration management for toothseg runs."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)


@dataclass
class Config:
    """User defaults. Flagless runs use the published hyperparameters."""

    coarse_spacing_mm: float = 1.0
    margin_mm: float = 3.0
    stitch_threshold: float = 0.5
    lo_pct: float = 5.0
    hi_pct: float = 99.5
    energy_k: float = -100.0
    energy_tau: float = 300.0
    distance_mode: str = "min"
    connectivity: int = 26
    fine_quantile: float = 0.5
    jobs: int = 1
    log_level: str = "WARNING"
    # Energy slope per scanner manufacturer; unknown names fall back to energy_k.
    manufacturer_k: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Config:
        """Create config from dictionary, ignoring unknown keys for forward compatibility."""
        valid_keys = {k for k in cls.__dataclass_fields__}
        filtered_data = {k: v for k, v in data.items() if k in valid_keys}
        return cls(**filtered_data)

    def slope_for(self, manufacturer: str | None) -> float:
        """Return the energy slope for ``manufacturer`` (or the default)."""
        if manufacturer is None:
            return self.energy_k
        if manufacturer not in self.manufacturer_k:
            logger.warning(
                "No energy slope configured for manufacturer %r, using k=%s",
                manufacturer,
                self.energy_k,
            )
            return self.energy_k
        return float(self.manufacturer_k[manufacturer])


class AppConfig:
    """Singleton configuration manager."""

    _instance = None
    _config: Config

    def __new__(cls) -> AppConfig:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._load()
        return cls._instance

    @property
    def config_dir(self) -> Path:
        """Return the directory where config is stored ($TOOTHSEG_HOME or ~/.toothseg)."""
        override = os.environ.get("TOOTHSEG_HOME")
        path = Path(override) if override else Path.home() / ".toothseg"
        path.mkdir(exist_ok=True, parents=True)
        return path

    @property
    def config_file(self) -> Path:
        """Return the path to the config file."""
        return self.config_dir / "config.json"

    @property
    def config(self) -> Config:
        return self._config

    def _load(self) -> None:
        """Load configuration from disk or create default."""
        if not self.config_file.exists():
            self._config = Config()
            self.save()
            return

        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                data = json.load(f)
                self._config = Config.from_dict(data)
        except (json.JSONDecodeError, OSError, TypeError) as e:
            logger.error(f"Failed to load config, using defaults: {e}")
            self._config = Config()

    def save(self) -> None:
        """Save current configuration to disk."""
        try:
            with open(self.config_file, "w", encoding="utf-8") as f:
                json.dump(asdict(self._config), f, indent=4)
        except OSError as e:
            logger.error(f"Failed to save config: {e}")

    def update(self, **values: Any) -> None:
        """Set known fields and persist."""
        for key, value in values.items():
            if key not in Config.__dataclass_fields__:
                raise KeyError(f"Unknown config key: {key}")
            setattr(self._config, key, value)
        self.save()
