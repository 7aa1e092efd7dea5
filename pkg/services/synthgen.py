"""
Bouncing-shapes video generator.

Episodes are a pure function of (seed, GenConfig): objects move linearly,
reflect elastically off the frame walls, and collide as equal-mass discs
(normal velocity components are exchanged). Frames and instance masks are
painted together in ascending id order, so a higher id occludes a lower one.
"""

import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from models.schemas import GenConfig, DataConfig, SceneObject, CollisionEvent, EpisodeMeta
from utils.errors import PlacementError
from utils.logger import get_logger

logger = get_logger("casa.synthgen")

# Frames are stored as uint8 / 255 so PNG round trips are exact
PALETTE = np.array([
    [230, 25, 75],
    [255, 225, 25],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
], dtype=np.uint8)

AGENT_ID = 1
PATIENT_ID = 2


@dataclass
class VideoEpisode:
    """
    One generated video.

    frames: (T, 3, H, W) float32 in [0, 1]
    masks: (T, H, W) uint8, 0 = background, k = object id
    positions: (T, n, 2) float64 object centers per frame, rows in id order
    """
    frames: np.ndarray
    masks: np.ndarray
    objects: List[SceneObject]
    events: List[CollisionEvent]
    seed: int
    positions: np.ndarray = None
    episode_id: str = ""

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def has_contact(self, id_a: int = AGENT_ID, id_b: int = PATIENT_ID) -> bool:
        """Whether objects id_a and id_b collide at any point"""
        pair = {id_a, id_b}
        return any({e.id_a, e.id_b} == pair for e in self.events)

    def meta(self) -> EpisodeMeta:
        return EpisodeMeta(
            episode_id=self.episode_id,
            seed=self.seed,
            num_frames=self.frames.shape[0],
            height=self.frames.shape[2],
            width=self.frames.shape[3],
            objects=self.objects,
            events=self.events,
        )


@dataclass
class _PhysicsState:
    pos: np.ndarray
    vel: np.ndarray
    radius: np.ndarray
    width: float
    height: float
    events: List[Tuple[int, int]] = field(default_factory=list)


def _reflect_walls(state: _PhysicsState):
    for axis, limit in ((0, state.width), (1, state.height)):
        coord = state.pos[:, axis]
        low = coord < state.radius
        coord[low] = 2.0 * state.radius[low] - coord[low]
        state.vel[low, axis] = np.abs(state.vel[low, axis])

        high = coord > limit - state.radius
        coord[high] = 2.0 * (limit - state.radius[high]) - coord[high]
        state.vel[high, axis] = -np.abs(state.vel[high, axis])


def _resolve_collisions(state: _PhysicsState) -> List[Tuple[int, int]]:
    hits = []
    n = state.pos.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            delta = state.pos[j] - state.pos[i]
            dist = math.hypot(delta[0], delta[1])
            if dist == 0.0 or dist >= state.radius[i] + state.radius[j]:
                continue
            normal = delta / dist
            vi_n = float(state.vel[i] @ normal)
            vj_n = float(state.vel[j] @ normal)
            # Only approaching pairs, so touching discs do not re-trigger
            if vi_n - vj_n <= 0.0:
                continue
            state.vel[i] += (vj_n - vi_n) * normal
            state.vel[j] += (vi_n - vj_n) * normal
            hits.append((i, j))
    return hits


def step_physics(state: _PhysicsState) -> List[Tuple[int, int]]:
    """Advance one frame: move, reflect off walls, resolve pairwise collisions"""
    state.pos += state.vel
    _reflect_walls(state)
    return _resolve_collisions(state)


def _shape_mask(shape: str, cx: float, cy: float, r: float, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Pixel coverage of a shape inscribed in the circle (cx, cy, r)"""
    dx = xs - cx
    dy = ys - cy
    if shape == "circle":
        return dx * dx + dy * dy <= r * r
    if shape == "square":
        half = r / math.sqrt(2.0)
        return (np.abs(dx) <= half) & (np.abs(dy) <= half)

    # Equilateral triangle, apex up (image y grows downwards)
    angles = (-math.pi / 2, math.pi / 6, 5 * math.pi / 6)
    verts = [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in angles]
    signs = []
    for (x0, y0), (x1, y1) in zip(verts, verts[1:] + verts[:1]):
        signs.append((x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0))
    inside_pos = (signs[0] >= 0) & (signs[1] >= 0) & (signs[2] >= 0)
    inside_neg = (signs[0] <= 0) & (signs[1] <= 0) & (signs[2] <= 0)
    return inside_pos | inside_neg


def render_frame(
    positions: np.ndarray,
    objects: List[SceneObject],
    colors_u8: np.ndarray,
    height: int,
    width: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Paint one frame.

    Returns:
        (rgb uint8 (3, H, W), mask uint8 (H, W))
    """
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64) + 0.5
    rgb = np.zeros((3, height, width), dtype=np.uint8)
    mask = np.zeros((height, width), dtype=np.uint8)

    # ascending id: later objects overwrite earlier ones
    for idx, obj in enumerate(objects):
        cx, cy = positions[idx]
        covered = _shape_mask(obj.shape, cx, cy, obj.radius, xs, ys)
        mask[covered] = obj.id
        rgb[:, covered] = colors_u8[idx][:, None]

    return rgb, mask


def _place_objects(rng: np.random.Generator, cfg: GenConfig, count: int):
    """
    Non-overlapping centers and radii for `count` objects.

    Each attempt draws a fresh layout (radii and every center); objects are
    dropped one by one with a bounded number of tries before the layout is
    discarded.
    """
    tries_per_object = 32
    for _attempt in range(cfg.max_placement_attempts):
        radii = rng.uniform(cfg.min_radius, cfg.max_radius, size=count)
        centers: List[Tuple[float, float]] = []
        for k in range(count):
            radius = float(radii[k])
            for _try in range(tries_per_object):
                x = float(rng.uniform(radius, cfg.width - radius))
                y = float(rng.uniform(radius, cfg.height - radius))
                if all(
                    math.hypot(x - cx, y - cy) >= radius + float(radii[i])
                    for i, (cx, cy) in enumerate(centers)
                ):
                    centers.append((x, y))
                    break
            else:
                break
        if len(centers) == count:
            return np.array(centers, dtype=np.float64), radii.astype(np.float64)

    raise PlacementError(
        f"Could not place {count} objects without overlap "
        f"after {cfg.max_placement_attempts} layouts"
    )


def _sample_velocities(rng: np.random.Generator, cfg: GenConfig, count: int) -> np.ndarray:
    speeds = rng.uniform(cfg.min_speed, cfg.max_speed, size=count)
    angles = rng.uniform(0.0, 2.0 * math.pi, size=count)
    return np.stack([speeds * np.cos(angles), speeds * np.sin(angles)], axis=1)


def _aim_head_on(pos: np.ndarray, vel: np.ndarray, radius: np.ndarray, num_frames: int):
    """Put objects 0 and 1 on a head-on course that closes within the episode"""
    delta = pos[1] - pos[0]
    dist = float(np.hypot(*delta))
    direction = delta / dist
    gap = dist - radius[0] - radius[1]
    needed = 1.25 * gap / (2.0 * max(num_frames - 1, 1))
    speed = max(float(np.hypot(*vel[0])), float(np.hypot(*vel[1])), needed)
    vel[0] = direction * speed
    vel[1] = -direction * speed


def _simulate(pos, vel, radius, cfg: GenConfig):
    state = _PhysicsState(
        pos=pos.copy(), vel=vel.copy(), radius=radius,
        width=float(cfg.width), height=float(cfg.height)
    )
    trajectory = [state.pos.copy()]
    events = []
    for t in range(1, cfg.num_frames):
        for i, j in step_physics(state):
            events.append((t, i, j))
        trajectory.append(state.pos.copy())
    return np.stack(trajectory), events


def generate_episode(seed: int, cfg: GenConfig, episode_id: str = "") -> VideoEpisode:
    """
    Generate one deterministic episode.

    Args:
        seed: Episode seed; (seed, cfg) fully determines the output
        cfg: Generator configuration
        episode_id: Identifier stored with the episode

    Returns:
        VideoEpisode

    Raises:
        PlacementError: objects cannot be placed, or a forced collision
            could not be produced
    """
    rng = np.random.default_rng(seed)

    forced = cfg.force_collision
    if cfg.contact_rate is not None:
        forced = forced or bool(rng.random() < cfg.contact_rate)
    if forced and cfg.num_frames < 2:
        raise PlacementError("a forced collision needs at least two frames")

    count = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    if forced:
        count = max(count, 2)
    shape_idx = rng.integers(0, len(cfg.shapes), size=count)
    colors_u8 = PALETTE[rng.permutation(len(PALETTE))[:count]]

    for _attempt in range(cfg.max_placement_attempts):
        pos, radius = _place_objects(rng, cfg, count)
        vel = _sample_velocities(rng, cfg, count)
        if forced:
            _aim_head_on(pos, vel, radius, cfg.num_frames)

        trajectory, raw_events = _simulate(pos, vel, radius, cfg)
        if not forced or any({i, j} == {0, 1} for _, i, j in raw_events):
            break
    else:
        raise PlacementError(
            f"No agent/patient collision after {cfg.max_placement_attempts} attempts"
        )

    objects = [
        SceneObject(
            id=k + 1,
            shape=cfg.shapes[int(shape_idx[k])],
            color=tuple(float(c) / 255.0 for c in colors_u8[k]),
            radius=float(radius[k]),
            position=(float(pos[k, 0]), float(pos[k, 1])),
            velocity=(float(vel[k, 0]), float(vel[k, 1])),
        )
        for k in range(count)
    ]
    events = [CollisionEvent(t=t, id_a=i + 1, id_b=j + 1) for t, i, j in raw_events]

    frames_u8 = np.zeros((cfg.num_frames, 3, cfg.height, cfg.width), dtype=np.uint8)
    masks = np.zeros((cfg.num_frames, cfg.height, cfg.width), dtype=np.uint8)
    for t in range(cfg.num_frames):
        frames_u8[t], masks[t] = render_frame(trajectory[t], objects, colors_u8, cfg.height, cfg.width)

    return VideoEpisode(
        frames=frames_u8.astype(np.float32) / np.float32(255.0),
        masks=masks,
        objects=objects,
        events=events,
        seed=int(seed),
        positions=trajectory,
        episode_id=episode_id,
    )


def episode_seeds(seed: int, count: int) -> List[int]:
    """Per-episode seeds derived from a dataset seed"""
    state = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint32)
    return [int(s) for s in state]


def generate_dataset(cfg: DataConfig, seed: int) -> List[VideoEpisode]:
    """
    Generate cfg.num_episodes episodes with ids 00000, 00001, ...

    Args:
        cfg: Data configuration (generator settings + episode count)
        seed: Dataset seed

    Returns:
        List of episodes in id order
    """
    logger.info(f"Generating {cfg.num_episodes} episodes (seed={seed})")
    episodes = []
    for index, episode_seed in enumerate(episode_seeds(seed, cfg.num_episodes)):
        episodes.append(generate_episode(episode_seed, cfg.gen, episode_id=f"{index:05d}"))

    contacts = sum(ep.has_contact() for ep in episodes)
    logger.info(f"✓ Generated {len(episodes)} episodes, {contacts} with agent/patient contact")
    return episodes
