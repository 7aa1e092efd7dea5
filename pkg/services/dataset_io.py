"""
Dataset layout on disk.

    <root>/manifest.json
    <root>/ep_<id>/frame_<t>.png   RGB, lossless
    <root>/ep_<id>/mask_<t>.png    8-bit palette image, index = raw label
    <root>/ep_<id>/meta.json       EpisodeMeta (objects, events, seed)
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

from models.schemas import DatasetManifest, EpisodeMeta, GenConfig
from services.synthgen import VideoEpisode, PALETTE
from utils.errors import DatasetExistsError, MissingArtifactError
from utils.logger import get_logger

logger = get_logger("casa.dataset_io")

SPLITS = ("train", "readout_fit", "test")
MANIFEST_NAME = "manifest.json"

# Mask palette: index 0 black, object k uses generator palette colour k-1
_MASK_PALETTE = [0, 0, 0] + [int(c) for c in PALETTE.reshape(-1)]
_MASK_PALETTE += [255] * (768 - len(_MASK_PALETTE))


def split_counts(total: int, ratio: Sequence[int]) -> Tuple[int, int, int]:
    """
    Episode counts per split for a train/readout-fit/test ratio.

    Train and readout-fit get floor shares, test takes the remainder.
    """
    weight = sum(ratio)
    if weight <= 0:
        raise ValueError("split ratio must have a positive sum")
    n_train = total * ratio[0] // weight
    n_fit = total * ratio[1] // weight
    return n_train, n_fit, total - n_train - n_fit


def episode_dir(root: Path, episode_id: str) -> Path:
    return Path(root) / f"ep_{episode_id}"


def write_episode(episode: VideoEpisode, directory: Path):
    """Write one episode's frames, masks and metadata into `directory`"""
    directory.mkdir(parents=True, exist_ok=True)
    frames_u8 = np.rint(episode.frames * 255.0).astype(np.uint8)

    height, width = episode.masks.shape[1:]

    for t in range(episode.num_frames):
        rgb = np.ascontiguousarray(frames_u8[t].transpose(1, 2, 0))
        Image.fromarray(rgb).save(directory / f"frame_{t}.png")

        labels = np.ascontiguousarray(episode.masks[t], dtype=np.uint8)
        mask_img = Image.frombytes("P", (width, height), labels.tobytes())
        mask_img.putpalette(_MASK_PALETTE)
        mask_img.save(directory / f"mask_{t}.png")

    meta = episode.meta().model_dump(mode="json")
    if episode.positions is not None:
        meta["positions"] = episode.positions.tolist()
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))


def write_dataset(
    episodes: Sequence[VideoEpisode],
    root_path: Path,
    split_ratio: Sequence[int] = (8, 1, 1),
    force: bool = False,
    seed: Optional[int] = None,
    gen_config: Optional[GenConfig] = None
) -> DatasetManifest:
    """
    Write episodes and a manifest with the train/readout-fit/test assignment.

    Args:
        episodes: Episodes in id order
        root_path: Dataset root directory
        split_ratio: Relative sizes of (train, readout_fit, test)
        force: Overwrite an existing manifest
        seed: Dataset seed recorded in the manifest
        gen_config: Generator settings recorded in the manifest

    Returns:
        The written manifest

    Raises:
        DatasetExistsError: manifest exists and force is False
    """
    root = Path(root_path)
    manifest_path = root / MANIFEST_NAME
    if manifest_path.exists() and not force:
        raise DatasetExistsError(f"Manifest already exists at {manifest_path}; pass force to overwrite")

    root.mkdir(parents=True, exist_ok=True)
    ids = []
    for index, episode in enumerate(episodes):
        episode_id = episode.episode_id or f"{index:05d}"
        episode.episode_id = episode_id
        write_episode(episode, episode_dir(root, episode_id))
        ids.append(episode_id)

    n_train, n_fit, _ = split_counts(len(ids), split_ratio)
    splits = {
        "train": ids[:n_train],
        "readout_fit": ids[n_train:n_train + n_fit],
        "test": ids[n_train + n_fit:],
    }

    manifest = DatasetManifest(episodes=ids, splits=splits, seed=seed, gen_config=gen_config)
    manifest_path.write_text(manifest.model_dump_json(indent=2))

    logger.info(
        f"✓ Wrote {len(ids)} episodes to {root} "
        f"(train={len(splits['train'])}, readout_fit={len(splits['readout_fit'])}, test={len(splits['test'])})"
    )
    return manifest


def read_manifest(root_path: Path) -> DatasetManifest:
    manifest_path = Path(root_path) / MANIFEST_NAME
    if not manifest_path.exists():
        raise MissingArtifactError(f"Dataset manifest not found: {manifest_path}")
    return DatasetManifest.model_validate_json(manifest_path.read_text())


def split_ids(root_path: Path, split: str) -> List[str]:
    """Episode ids assigned to `split`"""
    manifest = read_manifest(root_path)
    if split not in manifest.splits:
        raise MissingArtifactError(f"Split '{split}' not in manifest (have {sorted(manifest.splits)})")
    return manifest.splits[split]


def read_meta(root_path: Path, episode_id: str) -> EpisodeMeta:
    meta_path = episode_dir(root_path, episode_id) / "meta.json"
    if not meta_path.exists():
        raise MissingArtifactError(f"Episode metadata not found: {meta_path}")
    return EpisodeMeta.model_validate_json(meta_path.read_text())


def read_episode(root_path: Path, episode_id: str) -> VideoEpisode:
    """
    Load one episode back into memory.

    Missing mask images are tolerated: masks is then None and mask-based
    metrics are skipped by the evaluator.
    """
    directory = episode_dir(root_path, episode_id)
    raw = json.loads((directory / "meta.json").read_text())
    positions = raw.pop("positions", None)
    meta = EpisodeMeta.model_validate(raw)

    frames = np.stack([
        np.asarray(Image.open(directory / f"frame_{t}.png").convert("RGB"), dtype=np.uint8).transpose(2, 0, 1)
        for t in range(meta.num_frames)
    ])

    mask_paths = [directory / f"mask_{t}.png" for t in range(meta.num_frames)]
    if all(p.exists() for p in mask_paths):
        masks = np.stack([np.asarray(Image.open(p), dtype=np.uint8) for p in mask_paths])
    else:
        logger.warning(f"Episode {episode_id} has no mask images")
        masks = None

    return VideoEpisode(
        frames=frames.astype(np.float32) / np.float32(255.0),
        masks=masks,
        objects=meta.objects,
        events=meta.events,
        seed=meta.seed,
        positions=np.asarray(positions, dtype=np.float64) if positions is not None else None,
        episode_id=meta.episode_id,
    )


def read_split(root_path: Path, split: str) -> List[VideoEpisode]:
    ids = split_ids(root_path, split)
    if not ids:
        raise MissingArtifactError(f"Split '{split}' is empty")
    logger.info(f"Loading {len(ids)} episodes of split '{split}'")
    return [read_episode(root_path, episode_id) for episode_id in ids]


class EpisodeDataset(Dataset):
    """
    Fixed-length clips over every window of every episode in a split.

    Items are dicts with "frames" (clip_length, 3, H, W) float32 and
    "masks" (clip_length, H, W) int64 when masks are available.
    """

    def __init__(self, episodes: Sequence[VideoEpisode], clip_length: int):
        self.episodes = list(episodes)
        self.clip_length = clip_length
        self.index: List[Tuple[int, int]] = []
        for ep_index, episode in enumerate(self.episodes):
            if episode.num_frames < clip_length:
                raise ValueError(
                    f"Episode {episode.episode_id} has {episode.num_frames} frames, "
                    f"shorter than clip length {clip_length}"
                )
            for start in range(episode.num_frames - clip_length + 1):
                self.index.append((ep_index, start))

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, item: int) -> Dict[str, torch.Tensor]:
        ep_index, start = self.index[item]
        episode = self.episodes[ep_index]
        stop = start + self.clip_length
        sample = {"frames": torch.from_numpy(episode.frames[start:stop].copy())}
        if episode.masks is not None:
            sample["masks"] = torch.from_numpy(episode.masks[start:stop].astype(np.int64))
        return sample
