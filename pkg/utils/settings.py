from functools import lru_cache
from pathlib import Path

import torch
from pydantic import AliasChoices, Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from utils.logger import get_logger

logger = get_logger("casa.settings")


class CasaSettings(BaseSettings):
    """
    Process-level settings read from the environment (and a local .env file).

    - CASA_DEVICE: cpu, cuda or auto
    - CASA_LOG_LEVEL (or LOG_LEVEL): DEBUG, INFO, WARNING, ERROR
    - CASA_PRESETS_DIR: directory holding named run presets
    """

    model_config = SettingsConfigDict(
        env_prefix="CASA_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore"
    )

    device: str = "auto"
    log_level: str = Field(
        default="INFO",
        validation_alias=AliasChoices("CASA_LOG_LEVEL", "LOG_LEVEL")
    )
    presets_dir: Path = Path(__file__).resolve().parent.parent / "presets"


@lru_cache
def get_settings() -> CasaSettings:
    """Cached settings instance"""
    return CasaSettings()


def resolve_device(name: str = None) -> torch.device:
    """
    Turn a device name into a torch.device.

    Args:
        name: "cpu", "cuda", "cuda:N" or "auto"; defaults to CASA_DEVICE

    Returns:
        The selected device
    """
    name = (name or get_settings().device).lower()

    if name == "auto":
        name = "cuda" if torch.cuda.is_available() else "cpu"

    if name.startswith("cuda") and not torch.cuda.is_available():
        logger.warning(f"Device {name} requested but CUDA is unavailable, using cpu")
        name = "cpu"

    return torch.device(name)
