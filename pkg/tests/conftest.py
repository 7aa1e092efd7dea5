from pathlib import Path

import pytest
import torch
from hypothesis import settings

from models.schemas import DataConfig, GenConfig, ModelConfig, RunConfig
from services.preset_service import PresetService
from utils.config_loader import build_run_config

REPO_ROOT = Path(__file__).resolve().parent.parent

settings.register_profile("casa", deadline=None, max_examples=50)
settings.load_profile("casa")


@pytest.fixture
def tiny_gen_cfg() -> GenConfig:
    return GenConfig(
        num_frames=6,
        height=32,
        width=32,
        min_objects=2,
        max_objects=3,
        min_radius=4.0,
        max_radius=5.0,
        min_speed=0.5,
        max_speed=1.5,
    )


@pytest.fixture
def tiny_model_cfg() -> ModelConfig:
    return ModelConfig(
        num_slots=3,
        slot_dim=16,
        enc_dim=16,
        mlp_hidden=32,
        decoder_channels=8,
        prior_hidden=32,
    )


@pytest.fixture
def tiny_data_cfg(tiny_gen_cfg) -> DataConfig:
    return DataConfig(gen=tiny_gen_cfg, num_episodes=6, split_ratio=(4, 1, 1), clip_length=4)


@pytest.fixture
def smoke_cfg(tmp_path) -> RunConfig:
    """Smoke preset with every artifact under a temporary directory"""
    preset = PresetService(REPO_ROOT / "presets").preset_config("smoke")
    return build_run_config("oc", preset, flags={"paths.out_dir": str(tmp_path / "run")})


@pytest.fixture
def cpu() -> torch.device:
    return torch.device("cpu")
