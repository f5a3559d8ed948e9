import math
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional

import numpy as np

from models.errors import DegeneratePointError, PoseError, ShapeError
from models.schemas import SonarIntrinsics


@dataclass(frozen=True)
class SphericalPoint:
    r: float
    theta: float
    phi: float

    def __post_init__(self):
        if not self.r >= 0.0:
            raise DegeneratePointError(f"Range must be non-negative, got {self.r}.")
        if not -math.pi <= self.theta < math.pi:
            raise DegeneratePointError(f"Bearing {self.theta} outside [-pi, pi).")
        if not -math.pi / 2 <= self.phi <= math.pi / 2:
            raise DegeneratePointError(f"Elevation {self.phi} outside [-pi/2, pi/2].")


@dataclass(frozen=True)
class CartesianPoint:
    """Point in a sonar frame: x forward, y left, z up."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise DegeneratePointError("Cartesian point has non-finite components.")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "CartesianPoint":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class PixelCoord:
    """Continuous (range-bin, bearing-bin) image coordinate."""

    u: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class RelativePose:
    """Maps frame-1 coordinates into frame 2: p' = R p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise PoseError("Rotation must be 3x3 and translation length 3.")
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-10, rtol=0.0):
            raise PoseError("Rotation is not orthonormal.")
        if abs(np.linalg.det(rotation) - 1.0) > 1e-10:
            raise PoseError("Rotation determinant is not +1.")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RelativePose":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def inverse(self) -> "RelativePose":
        return RelativePose(self.rotation.T, -self.rotation.T @ self.translation)


@dataclass(frozen=True)
class SensorPose:
    """World pose of a sonar. World z is up; positive pitch tilts the nose down."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    def to_document(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z, "yaw": self.yaw, "pitch": self.pitch, "roll": self.roll}


@dataclass(frozen=True, eq=False)
class EpipolarContour:
    """Sampled projection of an elevation arc into the second image."""

    ranges: np.ndarray
    bearings: np.ndarray
    phis: np.ndarray
    in_frustum: np.ndarray
    valid: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.ranges.shape[0])

    @property
    def n_in_frustum(self) -> int:
        return int(np.count_nonzero(self.in_frustum & self.valid))

    @property
    def samples(self) -> List[tuple]:
        return [(float(r), float(t)) for r, t in zip(self.ranges, self.bearings)]


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Dense descriptor grid, data shaped (channels, height, width)."""

    data: np.ndarray
    level: Literal["coarse", "fine"] = "coarse"
    downsample_factor: int = 1

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[0] < 1:
            raise ShapeError(f"Feature map must be (C, H, W) with C >= 1, got {data.shape}.")
        if self.downsample_factor < 1:
            raise ShapeError("downsample_factor must be >= 1.")
        if not np.all(np.isfinite(data)):
            raise ShapeError("Feature map has non-finite entries.")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class MatchDistribution:
    """Correspondence distribution over a (possibly windowed) block of cells.

    `offset` is the map coordinate of the block's (0, 0) cell.
    """

    probabilities: np.ndarray
    query: PixelCoord
    offset: tuple = (0, 0)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 2:
            raise ShapeError("Match distribution must be two-dimensional.")
        if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
            raise ShapeError("Match distribution is not normalized.")
        object.__setattr__(self, "probabilities", p)

    def cell_coordinates(self) -> np.ndarray:
        """(H*W, 2) map coordinates of the cells, row-major."""
        h, w = self.probabilities.shape
        rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
        return np.stack([rows.ravel() + self.offset[0], cols.ravel() + self.offset[1]], axis=1)


@dataclass(frozen=True)
class MatchResult:
    query: PixelCoord
    predicted: PixelCoord
    variance: float
    weight: float
    low_confidence: bool = False

    def __post_init__(self):
        if self.variance < 0.0:
            raise ShapeError("Match variance must be non-negative.")
        if not 0.0 < self.weight <= 1.0:
            raise ShapeError("Match weight must lie in (0, 1].")


@dataclass(frozen=True)
class Keypoint:
    pixel: PixelCoord
    score: float


@dataclass(frozen=True)
class PlanarPoseEstimate:
    """Second sensor in the level, heading-aligned frame of the first one.

    x, y, yaw are estimated; z, pitch and roll are held from the prior.
    """

    x: float
    y: float
    yaw: float
    z: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


@dataclass(frozen=True, eq=False)
class BundleState:
    pose: PlanarPoseEstimate
    elevations: np.ndarray
    anchors: np.ndarray


@dataclass(frozen=True, eq=False)
class Landmark:
    position: np.ndarray
    reflectivity: float = 1.0
    spot_radius: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.reflectivity <= 1.0:
            raise ValueError("Landmark reflectivity must lie in (0, 1].")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))


@dataclass(frozen=True)
class FloorPlane:
    height: float = 0.0
    reflectivity: float = 0.15


@dataclass(frozen=True, eq=False)
class Scene:
    landmarks: List[Landmark]
    floor: Optional[FloorPlane] = None
    seed: int = 0

    def __post_init__(self):
        if not self.landmarks:
            raise ValueError("A scene needs at least one landmark.")


@dataclass(frozen=True)
class LandmarkObservation:
    id: int
    ra: float
    thetaa: float
    rb: float
    thetab: float
    covisible: bool


@dataclass(frozen=True, eq=False)
class ScenePair:
    image_a: np.ndarray
    image_b: np.ndarray
    pose_ab: RelativePose
    intrinsics: SonarIntrinsics
    landmarks: List[LandmarkObservation]
    sensor_a: SensorPose = field(default_factory=SensorPose)
    sensor_b: SensorPose = field(default_factory=SensorPose)
    seeds: Dict[str, int] = field(default_factory=dict)
    pair_id: str = "pair_00000"

    def __post_init__(self):
        shape = (self.intrinsics.n_range, self.intrinsics.n_bearing)
        if self.image_a.shape != shape or self.image_b.shape != shape:
            raise ShapeError(f"Pair images must be {shape}, got {self.image_a.shape} and {self.image_b.shape}.")


def wrap_angle(a: float) -> float:
    """Wrap into [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi
