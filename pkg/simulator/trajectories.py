"""Pose-annotated image pairs along randomized trajectories."""
import logging
import math
from typing import List, Sequence, Tuple

import numpy as np

from geometry.epipolar import relative_pose_from_sensor_poses, world_to_sensor
from geometry.sonar_model import cartesian_to_spherical_array, in_frustum_array
from models.entities import LandmarkObservation, Scene, ScenePair, SensorPose, wrap_angle
from models.schemas import NoiseConfig, SonarIntrinsics, TrajectoryConfig
from simulator.render import render
from utils.parallel import ordered_map

logger = logging.getLogger(__name__)

SMALL_YAW_DEG = 5.0
SMALL_XY_M = 1.5


def _uniform(rng: np.random.Generator, half_width: float) -> float:
    return float(rng.uniform(-half_width, half_width)) if half_width > 0.0 else 0.0


def sample_sensor_pair(base: SensorPose, cfg: TrajectoryConfig, rng: np.random.Generator, floor_height: float = 0.0):
    """(sensor_a, sensor_b): a jittered around `base`, b offset from a in a's heading frame."""
    lo_alt, hi_alt = cfg.altitude_range
    lo_pitch, hi_pitch = cfg.pitch_range_deg
    yaw_a = wrap_angle(base.yaw + math.radians(_uniform(rng, cfg.jitter_yaw_deg)))
    sensor_a = SensorPose(
        x=base.x + _uniform(rng, cfg.jitter_xy),
        y=base.y + _uniform(rng, cfg.jitter_xy),
        z=floor_height + float(rng.uniform(lo_alt, hi_alt)),
        yaw=yaw_a,
        pitch=math.radians(float(rng.uniform(lo_pitch, hi_pitch))),
        roll=base.roll,
    )
    dx, dy = _uniform(rng, cfg.max_xy), _uniform(rng, cfg.max_xy)
    c, s = math.cos(yaw_a), math.sin(yaw_a)
    sensor_b = SensorPose(
        x=sensor_a.x + c * dx - s * dy,
        y=sensor_a.y + s * dx + c * dy,
        z=sensor_a.z + _uniform(rng, cfg.max_dz),
        yaw=wrap_angle(yaw_a + math.radians(_uniform(rng, cfg.max_yaw_deg))),
        pitch=sensor_a.pitch + math.radians(_uniform(rng, cfg.max_dpitch_deg)),
        roll=sensor_a.roll + math.radians(_uniform(rng, cfg.max_droll_deg)),
    )
    return sensor_a, sensor_b


def observe_landmarks(scene: Scene, sensor_a: SensorPose, sensor_b: SensorPose, intr: SonarIntrinsics) -> List[LandmarkObservation]:
    """Polar coordinates in both frames of every landmark seen by at least one sensor."""
    positions = np.stack([lm.position for lm in scene.landmarks])
    ra, ta, pa = cartesian_to_spherical_array(world_to_sensor(positions, sensor_a))
    rb, tb, pb = cartesian_to_spherical_array(world_to_sensor(positions, sensor_b))
    seen_a = in_frustum_array(ra, ta, pa, intr)
    seen_b = in_frustum_array(rb, tb, pb, intr)
    return [
        LandmarkObservation(int(i), float(ra[i]), float(ta[i]), float(rb[i]), float(tb[i]), bool(seen_a[i] and seen_b[i]))
        for i in np.flatnonzero(seen_a | seen_b)
    ]


def generate_trajectory_pairs(
    scene: Scene,
    base: SensorPose,
    cfg: TrajectoryConfig,
    intr: SonarIntrinsics,
    noise: NoiseConfig,
    count: int,
    seed: int = 0,
    jobs: int = 1,
) -> List[ScenePair]:
    """`count` pairs; pair i draws its poses from (seed, i) and its noise from frames 2i and 2i+1."""
    floor_height = scene.floor.height if scene.floor is not None else 0.0

    def make(i: int) -> ScenePair:
        rng = np.random.default_rng([seed, i])
        sensor_a, sensor_b = sample_sensor_pair(base, cfg, rng, floor_height)
        pair = ScenePair(
            image_a=render(scene, sensor_a, intr, noise, frame_index=2 * i),
            image_b=render(scene, sensor_b, intr, noise, frame_index=2 * i + 1),
            pose_ab=relative_pose_from_sensor_poses(sensor_a, sensor_b),
            intrinsics=intr,
            landmarks=observe_landmarks(scene, sensor_a, sensor_b, intr),
            sensor_a=sensor_a,
            sensor_b=sensor_b,
            seeds={"scene": scene.seed, "trajectory": seed, "noise": noise.seed, "frame_a": 2 * i, "frame_b": 2 * i + 1},
            pair_id=f"pair_{i:05d}",
        )
        logger.debug("Rendered %s with %d covisible landmarks", pair.pair_id, sum(o.covisible for o in pair.landmarks))
        return pair

    return ordered_map(make, range(count), jobs)


def planar_offsets(pair: ScenePair) -> Tuple[float, float, float]:
    """(dx, dy, dyaw) of sensor b in sensor a's level, heading-aligned frame."""
    a, b = pair.sensor_a, pair.sensor_b
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    ex, ey = b.x - a.x, b.y - a.y
    return c * ex + s * ey, -s * ex + c * ey, wrap_angle(b.yaw - a.yaw)


def is_small_variation(pair: ScenePair, yaw_deg: float = SMALL_YAW_DEG, xy_m: float = SMALL_XY_M) -> bool:
    dx, dy, dyaw = planar_offsets(pair)
    # ties within round-off count as large
    eps = 1e-12
    return abs(dyaw) < math.radians(yaw_deg) - eps and abs(dx) < xy_m - eps and abs(dy) < xy_m - eps


def split_dataset(
    pairs: Sequence[ScenePair],
    yaw_deg: float = SMALL_YAW_DEG,
    xy_m: float = SMALL_XY_M,
) -> Tuple[List[ScenePair], List[ScenePair]]:
    """(small, large); small needs |yaw| < yaw_deg and both planar components < xy_m."""
    small, large = [], []
    for pair in pairs:
        (small if is_small_variation(pair, yaw_deg, xy_m) else large).append(pair)
    return small, large
