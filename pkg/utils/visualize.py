"""PNG strips and GIFs of frames, reconstructions and slot segmentations"""

from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from PIL import Image

from utils.logger import get_logger

logger = get_logger("casa.visualize")

# Index 0 is black (background / no segment)
SEGMENT_COLORS = np.array([
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [128, 0, 0],
    [128, 128, 0],
], dtype=np.uint8)


def to_uint8(frame: np.ndarray) -> np.ndarray:
    """(3, H, W) float in [0, 1] -> (H, W, 3) uint8"""
    frame = np.asarray(frame, dtype=np.float32)
    return np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def colorize_labels(labels: np.ndarray) -> np.ndarray:
    """(H, W) integer labels -> (H, W, 3) uint8; labels wrap around the palette"""
    labels = np.asarray(labels, dtype=np.int64)
    index = np.where(labels > 0, (labels - 1) % (len(SEGMENT_COLORS) - 1) + 1, 0)
    return SEGMENT_COLORS[index]


def _grid(rows: List[List[np.ndarray]], scale: int) -> Image.Image:
    height, width = rows[0][0].shape[:2]
    columns = max(len(row) for row in rows)
    canvas = np.zeros((len(rows) * height, columns * width, 3), dtype=np.uint8)
    for r, row in enumerate(rows):
        for c, tile in enumerate(row):
            canvas[r * height:(r + 1) * height, c * width:(c + 1) * width] = tile
    image = Image.fromarray(canvas)
    if scale > 1:
        image = image.resize((image.width * scale, image.height * scale), Image.Resampling.NEAREST)
    return image


def save_strip(
    path: Path,
    frames: np.ndarray,
    recon: Optional[np.ndarray] = None,
    pred_labels: Optional[np.ndarray] = None,
    gt_labels: Optional[np.ndarray] = None,
    scale: int = 2
) -> Path:
    """
    One row per available sequence, one column per timestep.

    Args:
        frames: (T, 3, H, W) ground-truth frames
        recon: (T, 3, H, W) decoded frames
        pred_labels: (T, H, W) predicted segments
        gt_labels: (T, H, W) ground-truth masks
    """
    rows = [[to_uint8(f) for f in frames]]
    if recon is not None:
        rows.append([to_uint8(f) for f in recon])
    if pred_labels is not None:
        rows.append([colorize_labels(m) for m in pred_labels])
    if gt_labels is not None:
        rows.append([colorize_labels(m) for m in gt_labels])

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _grid(rows, scale).save(path)
    logger.debug(f"Saved strip {path}")
    return path


def save_gif(path: Path, panels: Sequence[np.ndarray], duration_ms: int = 200, scale: int = 2) -> Path:
    """
    Animated GIF; each frame shows the given panels side by side.

    Args:
        panels: sequences of (T, 3, H, W) float frames or (T, H, W) label maps
    """
    tiles_per_panel = [
        [colorize_labels(x) if np.asarray(x).ndim == 2 else to_uint8(x) for x in panel]
        for panel in panels
    ]
    num_steps = min(len(tiles) for tiles in tiles_per_panel)
    images = [
        _grid([[tiles[t] for tiles in tiles_per_panel]], scale)
        for t in range(num_steps)
    ]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    images[0].save(path, save_all=True, append_images=images[1:], duration=duration_ms, loop=0)
    logger.debug(f"Saved animation {path}")
    return path
