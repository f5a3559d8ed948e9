"""Random point-landmark scenes over a flat seafloor."""
import logging
from typing import Optional

import numpy as np

from geometry.epipolar import sensor_rotation
from geometry.sonar_model import spherical_to_cartesian_array
from models.entities import FloorPlane, Landmark, Scene, SensorPose
from models.schemas import SonarIntrinsics

logger = logging.getLogger(__name__)

DEFAULT_BASE_POSE = SensorPose(z=2.0, pitch=np.radians(15.0))
MAX_ATTEMPTS = 1000


def sensor_to_world(points: np.ndarray, pose: SensorPose) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) @ sensor_rotation(pose).T + pose.position


def random_scene(
    seed: int,
    intr: SonarIntrinsics,
    n_landmarks: int = 24,
    base: SensorPose = DEFAULT_BASE_POSE,
    floor_reflectivity: Optional[float] = 0.15,
    floor_height: float = 0.0,
) -> Scene:
    """Landmarks drawn inside the base pose's frustum, none below the floor.

    Ranges and bearings keep a 10% margin from the frustum edges so that
    small sensor offsets still see most of them.
    """
    rng = np.random.default_rng(seed)
    r_margin = 0.1 * (intr.r_max - intr.r_min)
    t_margin = 0.1 * (intr.theta_max - intr.theta_min)
    landmarks = []
    for _ in range(MAX_ATTEMPTS):
        if len(landmarks) == n_landmarks:
            break
        r = rng.uniform(intr.r_min + r_margin, intr.r_max - r_margin)
        theta = rng.uniform(intr.theta_min + t_margin, intr.theta_max - t_margin)
        phi = rng.uniform(intr.phi_min, intr.phi_max)
        position = sensor_to_world(spherical_to_cartesian_array(r, theta, phi), base)
        if position[2] < floor_height:
            continue
        landmarks.append(
            Landmark(position=position, reflectivity=float(rng.uniform(0.5, 1.0)), spot_radius=float(rng.uniform(0.05, 0.15)))
        )
    if len(landmarks) < n_landmarks:
        logger.warning("Placed %d of %d landmarks above the floor", len(landmarks), n_landmarks)
    floor = FloorPlane(floor_height, floor_reflectivity) if floor_reflectivity else None
    return Scene(landmarks=landmarks, floor=floor, seed=seed)
