from dataclasses import dataclass, field, fields
from typing import Optional

import torch

from satrestore.errors import ImageError, ShapeError

FEATURE_ROLES = ("content", "distortion", "combined")

# Pipeline stages in execution order
STAGES = ("synth", "ddn", "transfer", "distill", "restore", "evaluate")


@dataclass(frozen=True, eq=False)
class ImageTensor:
    data: torch.Tensor          # (3, H, W) float32, values in [0, 1]
    color_space: str = "RGB"

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise ShapeError(f"image must have shape (3, H, W), got {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise ImageError("image contains non-finite values")
        if self.data.min() < 0 or self.data.max() > 1:
            raise ImageError("image values must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def batch(self) -> torch.Tensor:
        """The image as a (1, 3, H, W) batch for network input."""
        return self.data.unsqueeze(0)

    @classmethod
    def from_batch(cls, batch: torch.Tensor) -> "ImageTensor":
        return cls(batch.detach().squeeze(0).clamp(0.0, 1.0))


@dataclass(frozen=True, eq=False)
class FeatureMap:
    data: torch.Tensor          # (C, H, W)
    role: str = "combined"

    def __post_init__(self):
        if self.role not in FEATURE_ROLES:
            raise ValueError(f"unknown feature role '{self.role}'")
        if self.data.ndim != 3:
            raise ShapeError(f"feature map must have shape (C, H, W), got {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise ShapeError("feature map contains non-finite values")

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    def batch(self) -> torch.Tensor:
        return self.data.unsqueeze(0)

    def __add__(self, other: "FeatureMap") -> "FeatureMap":
        if self.shape != other.shape:
            raise ShapeError(f"cannot add feature maps of shapes {self.shape} and {other.shape}")
        return FeatureMap(self.data + other.data, role="combined")

    def scaled(self, weight: float) -> "FeatureMap":
        return FeatureMap(self.data * weight, role=self.role)


@dataclass(frozen=True)
class RunConfig:
    # Loss weights
    lambda_adv: float = 1.0
    lambda_reg: float = 10.0
    lambda_dcy: float = 1.0
    lambda_rcy: float = 1.0
    # Distortion transfer: alpha runs over 1..n_alpha, latent weight is alpha_scale * alpha
    n_alpha: int = 100
    alpha_scale: float = 0.1
    # Optimisation
    ddn_iterations: int = 4000
    restore_epochs: int = 150
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    patch_size: int = 512
    seed: int = 0
    # Architecture
    base_width: int = 32
    depth: int = 3
    distortion_norm: str = "none"
    # Bookkeeping
    checkpoint_every: int = 500
    log_every: int = 50
    # Paths and validation data
    reference: Optional[str] = None
    distorted: Optional[str] = None
    ground_truth: Optional[str] = None
    output_dir: str = "output"
    degrade: str = "color_cast gains=0.8,1.1,0.8; gaussian_blur sigma=1.5; haze t=0.7 airlight=0.9"
    offset_y: int = 16
    offset_x: int = 16

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def downsample(self) -> int:
        return 2 ** self.depth


@dataclass
class LossReport:
    adv_d: float
    adv_g: float
    reg: float
    d_cy: float
    r_cy: float
    total: float

    COLUMNS = ("adv_d", "adv_g", "reg", "d_cy", "r_cy", "total")

    def as_row(self, iteration: int) -> list:
        return [iteration] + [getattr(self, c) for c in self.COLUMNS]


@dataclass(frozen=True, eq=False)
class DistilledPair:
    distorted: ImageTensor      # reference carrying alpha-graded distortion
    clean: ImageTensor          # the reference itself
    alpha: int


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    stages: tuple["DegradationSpec", ...] = ()   # only used by kind == "compose"


@dataclass
class EvalRow:
    image: str
    psnr_db: float
    ssim: float
    capped: bool = False


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def aggregate(self) -> EvalRow:
        n = len(self.rows)
        return EvalRow(
            image="mean",
            psnr_db=sum(r.psnr_db for r in self.rows) / n,
            ssim=sum(r.ssim for r in self.rows) / n,
            capped=all(r.capped for r in self.rows),
        )


@dataclass
class PipelineState:
    stage: str
    config_hash: str
    artifacts: dict[str, str] = field(default_factory=dict)   # path -> sha256
    # Populated by DB layer after insert
    run_id: Optional[int] = field(default=None, repr=False)
