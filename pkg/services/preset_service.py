import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from utils.errors import ConfigError
from utils.logger import get_logger
from utils.settings import get_settings

logger = get_logger("casa.presets")


class PresetService:
    """
    Named run presets stored as presets/<id>.json:

        {"id": ..., "name": ..., "description": ..., "config": {<RunConfig fields>}}
    """

    def __init__(self, presets_dir: Optional[Path] = None):
        self.presets_dir = Path(presets_dir or get_settings().presets_dir)

    def get_all_presets(self) -> List[Dict[str, Any]]:
        """Load all preset definitions from the presets directory"""
        presets = []

        if not self.presets_dir.exists():
            logger.warning(f"Presets directory not found: {self.presets_dir}")
            return presets

        for preset_file in self.presets_dir.glob("*.json"):
            try:
                with open(preset_file, "r") as f:
                    presets.append(json.load(f))
            except (OSError, json.JSONDecodeError) as e:
                logger.error(f"Failed to load preset {preset_file}: {e}")
                continue

        return sorted(presets, key=lambda x: x.get("id", ""))

    def get_preset(self, preset_id: str) -> Optional[Dict[str, Any]]:
        """Get a specific preset by ID"""
        preset_file = self.presets_dir / f"{preset_id}.json"

        if not preset_file.exists():
            return None

        try:
            with open(preset_file, "r") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Failed to load preset {preset_id}: {e}")
            return None

    def preset_config(self, preset_id: str) -> Dict[str, Any]:
        """
        The config layer of a preset.

        Raises:
            ConfigError: If the preset is unknown or malformed
        """
        preset = self.get_preset(preset_id)
        if preset is None:
            available = ", ".join(p.get("id", "?") for p in self.get_all_presets()) or "none"
            raise ConfigError(f"Preset not found: {preset_id} (available: {available})")

        config = preset.get("config", {})
        if not isinstance(config, dict):
            raise ConfigError(f"Preset {preset_id} has a non-mapping 'config' entry")

        logger.info(f"Using preset: {preset.get('name', preset_id)}")
        return config
