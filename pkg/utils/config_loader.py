"""
Run-config assembly.

Layers, lowest to highest precedence:
    schema defaults < preset < config file < --set overrides < dedicated flags
"""

import copy
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import yaml
from pydantic import ValidationError

from models.schemas import RunConfig
from utils.errors import ConfigError
from utils.logger import get_logger

logger = get_logger("casa.config")


def load_config_file(path: Path) -> Dict[str, Any]:
    """
    Read a JSON or YAML config file into a plain dict.

    Args:
        path: .json, .yaml or .yml file

    Returns:
        Parsed mapping (empty for an empty file)
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text) if text.strip() else {}
        elif path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
        else:
            raise ConfigError(f"Unsupported config format: {path.suffix} (use .json or .yaml)")
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Could not parse {path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return data


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge `update` into a copy of `base`; nested dicts merge, other values replace"""
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(text: str) -> Dict[str, Any]:
    """
    Turn "model.num_slots=7" into {"model": {"num_slots": 7}}.

    The value is parsed as a YAML scalar, so 7 -> int, 1e-3 -> float,
    false -> bool and [1, 2] -> list.
    """
    if "=" not in text:
        raise ConfigError(f"Override must look like key=value, got: {text!r}")
    key, raw_value = text.split("=", 1)
    key = key.strip()
    if not key or any(not part for part in key.split(".")):
        raise ConfigError(f"Invalid override key: {key!r}")

    try:
        value = yaml.safe_load(raw_value)
    except yaml.YAMLError as e:
        raise ConfigError(f"Could not parse override value {raw_value!r}: {e}") from e

    result: Dict[str, Any] = {}
    set_dotted(result, key, value)
    return result


def set_dotted(target: Dict[str, Any], dotted_key: str, value: Any) -> Dict[str, Any]:
    """Assign target[a][b][c] = value for dotted_key "a.b.c", creating dicts as needed"""
    node = target
    parts = dotted_key.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value
    return target


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def build_run_config(
    stage: str,
    preset: Optional[Dict[str, Any]] = None,
    config_path: Optional[Path] = None,
    overrides: Iterable[str] = (),
    flags: Optional[Dict[str, Any]] = None
) -> RunConfig:
    """
    Merge every config layer and validate the result.

    Args:
        stage: Pipeline stage recorded in the config
        preset: The "config" mapping of a preset
        config_path: JSON or YAML file
        overrides: "dotted.key=value" strings
        flags: Dotted keys set by dedicated CLI flags; None values are skipped

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: If a layer cannot be read or the result fails validation
    """
    merged: Dict[str, Any] = {}

    if preset:
        merged = deep_merge(merged, preset)

    if config_path is not None:
        logger.debug(f"Loading config file {config_path}")
        merged = deep_merge(merged, load_config_file(config_path))

    for override in overrides or ():
        merged = deep_merge(merged, parse_override(override))

    for dotted_key, value in (flags or {}).items():
        if value is not None:
            set_dotted(merged, dotted_key, value)

    merged["stage"] = stage

    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {_format_validation_error(e)}") from e


def echo_config(cfg: RunConfig, directory: Optional[Path] = None) -> Path:
    """Write the effective config to <out>/config_<stage>.json"""
    directory = Path(directory or cfg.paths.out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"config_{cfg.stage}.json"
    path.write_text(cfg.model_dump_json(indent=2))
    logger.debug(f"Effective config written to {path}")
    return path
