import math
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SonarIntrinsics(BaseModel):
    """Frustum limits and discretization of one sonar configuration.

    Angles are radians. The JSON document form uses degrees (see
    `from_document` / `to_document`).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    r_min: float = Field(..., ge=0.0)
    r_max: float
    theta_min: float
    theta_max: float
    phi_min: float
    phi_max: float
    n_range: int = Field(..., ge=1)
    n_bearing: int = Field(..., ge=1)

    @model_validator(mode="after")
    def v_limits(self):
        if not self.r_min < self.r_max:
            raise ValueError("r_min must be smaller than r_max.")
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be smaller than theta_max.")
        # equal elevation limits describe a planar (zero-aperture) sonar
        if not self.phi_min <= self.phi_max:
            raise ValueError("phi_min must not exceed phi_max.")
        if not (-math.pi <= self.theta_min and self.theta_max <= math.pi):
            raise ValueError("Bearing limits must lie within [-pi, pi].")
        if not (-math.pi / 2 <= self.phi_min and self.phi_max <= math.pi / 2):
            raise ValueError("Elevation limits must lie within [-pi/2, pi/2].")
        return self

    @property
    def range_resolution(self) -> float:
        return (self.r_max - self.r_min) / self.n_range

    @property
    def bearing_resolution(self) -> float:
        return (self.theta_max - self.theta_min) / self.n_bearing

    @classmethod
    def from_document(cls, doc: dict) -> "SonarIntrinsics":
        expected = {"r_min", "r_max", "theta_min_deg", "theta_max_deg", "phi_min_deg", "phi_max_deg", "n_range", "n_bearing"}
        missing = expected - set(doc)
        if missing:
            raise ValueError(f"Intrinsics document is missing keys: {', '.join(sorted(missing))}")
        unknown = set(doc) - expected - {"name"}
        if unknown:
            raise ValueError(f"Intrinsics document has unknown keys: {', '.join(sorted(unknown))}")
        return cls(
            r_min=float(doc["r_min"]),
            r_max=float(doc["r_max"]),
            theta_min=math.radians(doc["theta_min_deg"]),
            theta_max=math.radians(doc["theta_max_deg"]),
            phi_min=math.radians(doc["phi_min_deg"]),
            phi_max=math.radians(doc["phi_max_deg"]),
            n_range=int(doc["n_range"]),
            n_bearing=int(doc["n_bearing"]),
        )

    def to_document(self) -> dict:
        return {
            "r_min": self.r_min,
            "r_max": self.r_max,
            "theta_min_deg": math.degrees(self.theta_min),
            "theta_max_deg": math.degrees(self.theta_max),
            "phi_min_deg": math.degrees(self.phi_min),
            "phi_max_deg": math.degrees(self.phi_max),
            "n_range": self.n_range,
            "n_bearing": self.n_bearing,
        }


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    w_epipolar: float = Field(0.7, ge=0.0)
    w_cyclic: float = Field(0.3, ge=0.0)

    @property
    def cyclic_ratio(self) -> float:
        """lambda of the joint loss; infinite when the epipolar weight is zero."""
        if self.w_epipolar == 0.0:
            return math.inf
        return self.w_cyclic / self.w_epipolar


class LayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kernel: int = Field(3, ge=1)
    stride: int = Field(1, ge=1)
    out_channels: int = Field(..., ge=1)
    activation: Literal["relu", "none"] = "relu"

    @field_validator("kernel")
    @classmethod
    def v_kernel(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("Kernel size must be odd.")
        return v


def _default_coarse_layers() -> List[LayerSpec]:
    return [
        LayerSpec(kernel=3, stride=2, out_channels=16),
        LayerSpec(kernel=3, stride=2, out_channels=32),
        LayerSpec(kernel=3, stride=2, out_channels=32),
        LayerSpec(kernel=3, stride=1, out_channels=64, activation="none"),
    ]


def _default_fine_layers() -> List[LayerSpec]:
    return [
        LayerSpec(kernel=3, stride=1, out_channels=32),
        LayerSpec(kernel=3, stride=1, out_channels=64, activation="none"),
    ]


class EncoderConfig(BaseModel):
    """Desk-scale encoder.

    The coarse stack runs on the image. The fine head runs on the output of
    the first coarse layer concatenated with the nearest-upsampled coarse
    descriptors, so the fine stride is the stride of the first coarse layer.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    coarse_layers: List[LayerSpec] = Field(default_factory=_default_coarse_layers)
    fine_layers: List[LayerSpec] = Field(default_factory=_default_fine_layers)
    coarse_channels: int = Field(64, ge=1)
    fine_channels: int = Field(64, ge=1)
    coattention: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def v_layers(self):
        if not self.coarse_layers or not self.fine_layers:
            raise ValueError("Each level needs at least one layer.")
        if self.coarse_layers[-1].out_channels != self.coarse_channels:
            raise ValueError("The last coarse layer must output coarse_channels.")
        if self.fine_layers[-1].out_channels != self.fine_channels:
            raise ValueError("The last fine layer must output fine_channels.")
        if any(layer.stride != 1 for layer in self.fine_layers):
            raise ValueError("Fine layers must use stride 1.")
        if self.coarse_stride % self.fine_stride != 0:
            raise ValueError("The coarse stride must be a multiple of the fine stride.")
        return self

    @property
    def coarse_stride(self) -> int:
        return math.prod(layer.stride for layer in self.coarse_layers)

    @property
    def fine_stride(self) -> int:
        return self.coarse_layers[0].stride


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    # zero is accepted so a step can be evaluated without moving the weights
    learning_rate: float = Field(1e-3, ge=0.0)
    batch_pairs: int = Field(4, ge=1)
    epochs: int = Field(10, ge=1)
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    keypoints_per_frame: int = Field(16, ge=1)
    optimizer: Literal["sgd", "adam"] = "adam"
    arc_samples: int = Field(64, ge=2)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    temperature: float = Field(0.05, gt=0.0)
    sigma0: float = Field(4.0, gt=0.0)
    window: int = Field(9, ge=1)
    seed: int = 0

    @field_validator("window")
    @classmethod
    def v_window(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("The fine window must be odd.")
        return v


class NoiseConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    speckle_strength: float = Field(0.3, ge=0.0, le=1.0)
    additive_sigma: float = Field(0.02, ge=0.0)
    seed: int = 0


class TrajectoryConfig(BaseModel):
    """Envelope of the random relative motion between the two frames of a pair.

    Offsets are drawn uniformly in [-max, max]. Altitude and pitch of the
    first frame are drawn from their bands.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    altitude_range: tuple[float, float] = (1.0, 4.0)
    pitch_range_deg: tuple[float, float] = (10.0, 20.0)
    max_xy: float = Field(2.0, ge=0.0)
    max_yaw_deg: float = Field(15.0, ge=0.0, le=180.0)
    max_dz: float = Field(0.1, ge=0.0)
    max_dpitch_deg: float = Field(2.0, ge=0.0)
    max_droll_deg: float = Field(2.0, ge=0.0)
    jitter_xy: float = Field(0.5, ge=0.0)
    jitter_yaw_deg: float = Field(10.0, ge=0.0)

    @field_validator("altitude_range", "pitch_range_deg")
    @classmethod
    def v_band(cls, v: tuple[float, float]) -> tuple[float, float]:
        if v[0] > v[1]:
            raise ValueError("Band limits must be ordered (low, high).")
        return v


class MatchConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    window: int = Field(9, ge=1)
    temperature: float = Field(0.05, gt=0.0)
    sigma0: float = Field(4.0, gt=0.0)
    confidence: float = Field(0.5, ge=0.0)
    window_center: Literal["expectation", "argmax"] = "expectation"
    max_keypoints: int = Field(64, ge=0)
    nms_radius: int = Field(3, ge=1)

    @field_validator("window")
    @classmethod
    def v_window(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("The fine window must be odd.")
        return v


class BundleNoiseModel(BaseModel):
    """Measurement and prior noise for two-view bundle adjustment.

    Unset measurement sigmas default to one range bin / one bearing bin of
    the intrinsics in use. The prior sigmas default to an effectively flat
    prior: the prior pose seeds the solve and pins only unobservable
    directions.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma_r: Optional[float] = Field(None, gt=0.0)
    sigma_theta: Optional[float] = Field(None, gt=0.0)
    prior_sigma_xy: float = Field(1e4, gt=0.0)
    prior_sigma_yaw: float = Field(1e4, gt=0.0)


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    threshold_px: float = Field(12.0, ge=0.0)
    extra_thresholds_px: List[float] = Field(default_factory=lambda: [20.0])
    z_sigma: float = Field(2.0, gt=0.0)
    arc_samples: int = Field(64, ge=2)
    max_iters: int = Field(50, ge=1)
    tol: float = Field(1e-10, gt=0.0)
    prior_noise_xy: float = Field(0.3, ge=0.0)
    prior_noise_yaw_deg: float = Field(5.0, ge=0.0)
    noise_model: BundleNoiseModel = Field(default_factory=BundleNoiseModel)

    @field_validator("extra_thresholds_px")
    @classmethod
    def v_thresholds(cls, v: List[float]) -> List[float]:
        if any(t < 0 for t in v):
            raise ValueError("Thresholds must be non-negative.")
        return sorted(set(v))


class RunConfig(BaseModel):
    """Everything one CLI run needs; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    jobs: int = Field(1, ge=1)
    intrinsics: Optional[str] = None
    dataset: Optional[str] = None
    output: Optional[str] = None
    weights: Optional[str] = None
    resume: Optional[str] = None
    matches: Optional[str] = None
    metrics: Optional[str] = None
    count: int = Field(200, ge=0)
    n_landmarks: int = Field(24, ge=1)
    floor_reflectivity: Optional[float] = Field(0.15, gt=0.0, le=1.0)
    baseline: bool = False
    ground_truth_matches: bool = False
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    trajectory: TrajectoryConfig = Field(default_factory=TrajectoryConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    match: MatchConfig = Field(default_factory=MatchConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
