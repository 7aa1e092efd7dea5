from pathlib import Path
from typing import Optional, List, Dict, Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class StrictModel(BaseModel):
    """Base for config schemas: unknown keys are errors, not silently dropped"""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

ShapeKind = Literal["circle", "square", "triangle"]


class GenConfig(StrictModel):
    """Parameters of the bouncing-shapes generator"""
    num_frames: int = Field(default=12, ge=1)
    height: int = Field(default=64, ge=8)
    width: int = Field(default=64, ge=8)

    min_objects: int = Field(default=2, ge=1)
    max_objects: int = Field(default=4, ge=1, le=10)

    min_radius: float = Field(default=6.0, ge=4.0)
    max_radius: float = Field(default=10.0, ge=4.0)

    # pixels / frame
    min_speed: float = Field(default=0.5, ge=0.0)
    max_speed: float = Field(default=2.0, ge=0.0)

    shapes: List[ShapeKind] = Field(default_factory=lambda: ["circle", "square", "triangle"])

    force_collision: bool = False
    # Per-episode probability of putting objects 1 and 2 on a head-on course
    contact_rate: Optional[float] = Field(default=None, ge=0.0, le=1.0)

    max_placement_attempts: int = Field(default=1000, ge=1)

    @model_validator(mode="after")
    def check_ranges(self):
        if self.min_objects > self.max_objects:
            raise ValueError("min_objects must be <= max_objects")
        if self.min_radius > self.max_radius:
            raise ValueError("min_radius must be <= max_radius")
        if self.min_speed > self.max_speed:
            raise ValueError("min_speed must be <= max_speed")
        if 2 * self.max_radius >= min(self.height, self.width):
            raise ValueError("objects of max_radius do not fit inside the frame")
        if not self.shapes:
            raise ValueError("at least one shape kind is required")
        needs_pair = self.force_collision or (self.contact_rate or 0.0) > 0.0
        if needs_pair and self.min_objects < 2:
            raise ValueError("forced collisions need at least two objects")
        return self


class SceneObject(BaseModel):
    """One sprite; id is stable across all frames of its episode"""
    id: int = Field(ge=1)
    shape: ShapeKind
    color: Tuple[float, float, float]
    radius: float = Field(ge=4.0)
    position: Tuple[float, float]
    velocity: Tuple[float, float]


class CollisionEvent(BaseModel):
    """Collision between two objects resolved while stepping into frame t"""
    t: int
    id_a: int
    id_b: int


class EpisodeMeta(BaseModel):
    """Contents of ep_<id>/meta.json"""
    episode_id: str
    seed: int
    num_frames: int
    height: int
    width: int
    objects: List[SceneObject]
    events: List[CollisionEvent]


class DatasetManifest(BaseModel):
    """Contents of <root>/manifest.json"""
    episodes: List[str]
    splits: Dict[str, List[str]]
    seed: Optional[int] = None
    gen_config: Optional[GenConfig] = None


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

class DataConfig(StrictModel):
    """Where the dataset lives and how it is generated"""
    root: Optional[Path] = None
    gen: GenConfig = Field(default_factory=GenConfig)
    num_episodes: int = Field(default=600, ge=1)
    split_ratio: Tuple[int, int, int] = (500, 50, 50)
    # Frames per training clip of the object-centric model
    clip_length: int = Field(default=6, ge=2)


class ModelConfig(StrictModel):
    """Object-centric model hyperparameters"""
    num_slots: int = Field(default=5, ge=1)
    slot_dim: int = Field(default=64, ge=1)
    enc_dim: int = Field(default=64, ge=1)
    encoder: Literal["cnn", "resnet"] = "cnn"
    num_iterations: int = Field(default=3, ge=0)
    num_iterations_later: Optional[int] = Field(default=None, ge=0)
    mlp_hidden: int = Field(default=128, ge=1)
    decoder_channels: int = Field(default=64, ge=1)
    decoder_broadcast: Literal["upsample", "full"] = "upsample"
    prior_kind: Literal["gru", "mlp", "none"] = "gru"
    prior_hidden: int = Field(default=128, ge=1)


class LossConfig(StrictModel):
    """Stage-1 objective switches"""
    use_opc: bool = True
    lambda_opc: float = Field(default=0.1, ge=0.0)
    kl_coeff: float = Field(default=1e-4, ge=0.0)
    sigma_hat: float = Field(default=0.1, gt=0.0)
    stochastic: bool = True


class OptimConfig(StrictModel):
    """Optimizer and loop settings for one training stage"""
    lr: float = Field(default=2e-4, gt=0.0)
    steps: int = Field(default=10000, ge=1)
    warmup_steps: int = Field(default=500, ge=0)
    batch_size: int = Field(default=16, ge=1)
    grad_clip: float = Field(default=1.0, gt=0.0)
    log_every: int = Field(default=50, ge=1)
    checkpoint_every: int = Field(default=1000, ge=1)
    num_workers: int = Field(default=0, ge=0)


class DynamicsConfig(StrictModel):
    """Autoregressive transformer over slot trajectories"""
    burnin: int = Field(default=6, ge=1)
    rollout: int = Field(default=6, ge=1)
    num_layers: int = Field(default=2, ge=1)
    num_heads: int = Field(default=4, ge=1)
    d_model: int = Field(default=128, ge=1)
    ffn_dim: int = Field(default=512, ge=1)
    dropout: float = Field(default=0.0, ge=0.0, lt=1.0)
    max_context: Optional[int] = Field(default=None, ge=1)
    use_frame_loss: bool = True
    optim: OptimConfig = Field(default_factory=lambda: OptimConfig(steps=5000, warmup_steps=250))

    @model_validator(mode="after")
    def check_heads(self):
        if self.d_model % self.num_heads != 0:
            raise ValueError("d_model must be divisible by num_heads")
        return self

    @property
    def context_length(self) -> int:
        return self.max_context or self.burnin


class ReadoutConfig(StrictModel):
    """Pairwise-slot contact probe"""
    hidden: int = Field(default=128, ge=1)
    linear: bool = False
    shuffle_labels: bool = False
    optim: OptimConfig = Field(
        default_factory=lambda: OptimConfig(lr=1e-3, steps=2000, warmup_steps=0, batch_size=64)
    )


class PathsConfig(StrictModel):
    """Explicit artifact locations; unset entries derive from the output directory"""
    out_dir: Path = Path("runs/default")
    oc_checkpoint: Optional[Path] = None
    dyn_checkpoint: Optional[Path] = None
    slot_dir: Optional[Path] = None


class RunConfig(StrictModel):
    """Complete hyperparameter record for one pipeline stage"""
    stage: Literal["data", "oc", "extract", "dyn", "rollout", "evaluate", "readout", "ablation"] = "oc"
    seed: int = 0
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    optim: OptimConfig = Field(default_factory=OptimConfig)
    dynamics: DynamicsConfig = Field(default_factory=DynamicsConfig)
    readout: ReadoutConfig = Field(default_factory=ReadoutConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    # Evaluation
    iou_threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    num_visualize: int = Field(default=4, ge=0)

    @model_validator(mode="after")
    def check_decoder_grid(self):
        if self.model.decoder_broadcast == "upsample":
            if self.data.gen.height % 4 or self.data.gen.width % 4:
                raise ValueError("upsample decoder needs height and width divisible by 4")
        return self

    @property
    def data_root(self) -> Path:
        return self.data.root or self.paths.out_dir / "data"

    @property
    def oc_checkpoint(self) -> Path:
        return self.paths.oc_checkpoint or self.paths.out_dir / "checkpoints" / "oc.pt"

    @property
    def dyn_checkpoint(self) -> Path:
        return self.paths.dyn_checkpoint or self.paths.out_dir / "checkpoints" / "dyn.pt"

    @property
    def slot_dir(self) -> Path:
        return self.paths.slot_dir or self.paths.out_dir / "slots"

    @property
    def log_dir(self) -> Path:
        return self.paths.out_dir / "logs"

    @property
    def report_dir(self) -> Path:
        return self.paths.out_dir / "reports"


# ---------------------------------------------------------------------------
# Logs and reports
# ---------------------------------------------------------------------------

class LossRecord(BaseModel):
    """One line of a JSON-lines training log"""
    step: int
    lr: float
    image: float = 0.0
    opc: float = 0.0
    kl: float = 0.0
    slots: float = 0.0
    frames: float = 0.0
    bce: float = 0.0
    total: float
    lambda_opc: Optional[float] = None
    kl_coeff: Optional[float] = None


class MetricRow(BaseModel):
    """Discovery or rollout metric columns; None means not computed"""
    psnr: Optional[float] = None
    ssim: Optional[float] = None
    ar: Optional[float] = None
    ari: Optional[float] = None
    fg_ari: Optional[float] = None
    fg_miou: Optional[float] = None
    tci: Optional[float] = None


class EvalReport(BaseModel):
    """Report written by `casa evaluate`"""
    split: str
    num_episodes: int
    seed: int
    ar_iou_threshold: float
    discovery: MetricRow
    rollout: Optional[MetricRow] = None
    burnin: Optional[int] = None
    rollout_steps: Optional[int] = None
    rollout_slot_mse: Optional[float] = None
    persistence_slot_mse: Optional[float] = None
    per_step: Dict[str, List[Optional[float]]] = Field(default_factory=dict)
    unavailable: List[str] = Field(default_factory=lambda: ["lpips", "fvd"])
    warnings: List[str] = Field(default_factory=list)
    config: Dict = Field(default_factory=dict)


class ReadoutReport(BaseModel):
    """Report written by `casa train-readout`"""
    obs_acc: float
    dyn_acc: float
    n_test: int
    seed: int
    obs_stderr: float
    dyn_stderr: float
    shuffled_labels: bool = False
    linear: bool = False
    positive_rate: float


class AblationRow(BaseModel):
    """One row of the ablation comparison"""
    name: str
    prior: str
    aux_loss: bool
    metrics: MetricRow
