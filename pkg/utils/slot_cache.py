"""
Slot cache file: per-split slot trajectories shared between stages.

Layout (little-endian):
    8 bytes   magic b"CASASLT1"
    8 bytes   uint64 header length
    header    UTF-8 JSON: episode_ids, T, K, D_slot, dtype, offsets, burnin, ...
    data      float32 tensor blob, one (T, K, D_slot) block per episode;
              offsets are byte offsets of each block from the start of data
"""

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from utils.errors import MissingArtifactError, ShapeMismatchError
from utils.logger import get_logger

logger = get_logger("casa.slot_cache")

MAGIC = b"CASASLT1"


@dataclass
class SlotCache:
    episode_ids: List[str]
    slots: np.ndarray
    burnin: Optional[int]
    header: Dict

    @property
    def num_frames(self) -> int:
        return self.slots.shape[1]

    @property
    def num_slots(self) -> int:
        return self.slots.shape[2]

    @property
    def slot_dim(self) -> int:
        return self.slots.shape[3]

    def __len__(self) -> int:
        return len(self.episode_ids)


def write_slot_cache(
    path: Path,
    episode_ids: Sequence[str],
    slots: np.ndarray,
    burnin: Optional[int] = None,
    extra: Optional[Dict] = None
) -> Path:
    """
    Args:
        path: Destination file
        episode_ids: One id per episode
        slots: (E, T, K, D_slot) array
        burnin: Number of observed leading frames (rollout caches)
        extra: Extra header entries

    Returns:
        The written path
    """
    data = np.ascontiguousarray(np.asarray(slots), dtype="<f4")
    if data.ndim != 4 or data.shape[0] != len(episode_ids):
        raise ShapeMismatchError(f"Expected slots (E={len(episode_ids)}, T, K, D), got {data.shape}")
    if not np.isfinite(data).all():
        raise ValueError("slot cache received non-finite slots")
    if burnin is not None and burnin > data.shape[1]:
        raise ValueError("burnin cannot exceed the number of frames")

    num_episodes, num_frames, num_slots, slot_dim = data.shape
    block = num_frames * num_slots * slot_dim * 4
    header = {
        "format": "casa-slot-cache",
        "version": 1,
        "episode_ids": list(episode_ids),
        "T": num_frames,
        "K": num_slots,
        "D_slot": slot_dim,
        "dtype": "<f4",
        "offsets": [i * block for i in range(num_episodes)],
        "burnin": burnin,
    }
    header.update(extra or {})
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(path.name + ".tmp")
    with open(tmp_path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<Q", len(header_bytes)))
        handle.write(header_bytes)
        handle.write(data.tobytes())
    os.replace(tmp_path, path)

    logger.info(f"✓ Wrote slot cache {path} ({num_episodes} episodes, T={num_frames}, K={num_slots}, D={slot_dim})")
    return path


def read_slot_cache(path: Path) -> SlotCache:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Slot cache not found: {path}")

    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a slot cache file")
    (header_len,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + header_len].decode("utf-8"))

    shape = (header["T"], header["K"], header["D_slot"])
    blob = raw[16 + header_len:]
    count = int(np.prod(shape))
    if any(offset + count * 4 > len(blob) for offset in header["offsets"]):
        raise ValueError(f"Slot cache {path} is truncated")
    episodes = [
        np.frombuffer(blob, dtype=header["dtype"], count=count, offset=offset).reshape(shape)
        for offset in header["offsets"]
    ]

    slots = np.stack(episodes).astype(np.float32) if episodes else np.zeros((0, *shape), dtype=np.float32)
    return SlotCache(
        episode_ids=list(header["episode_ids"]),
        slots=slots,
        burnin=header.get("burnin"),
        header=header,
    )
