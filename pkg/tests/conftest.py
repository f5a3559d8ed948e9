import math

import numpy as np
import pytest

from geometry.sonar_model import load_intrinsics
from models.entities import FeatureMap, Landmark, Scene, SensorPose
from models.schemas import EncoderConfig, LayerSpec, NoiseConfig, SonarIntrinsics, TrajectoryConfig
from simulator.scene import DEFAULT_BASE_POSE, random_scene
from simulator.trajectories import generate_trajectory_pairs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def desk():
    return load_intrinsics("desk-64")


@pytest.fixture
def m1200():
    return load_intrinsics("m1200d-lf")


@pytest.fixture
def tiny_intrinsics():
    return SonarIntrinsics(
        r_min=1.0,
        r_max=5.0,
        theta_min=math.radians(-40.0),
        theta_max=math.radians(40.0),
        phi_min=math.radians(-10.0),
        phi_max=math.radians(10.0),
        n_range=16,
        n_bearing=16,
    )


@pytest.fixture
def small_encoder():
    """Two coarse layers and a one-layer fine head; keeps gradient checks fast."""
    return EncoderConfig(
        coarse_layers=[
            LayerSpec(kernel=3, stride=2, out_channels=4),
            LayerSpec(kernel=3, stride=2, out_channels=6, activation="none"),
        ],
        fine_layers=[LayerSpec(kernel=3, stride=1, out_channels=5, activation="none")],
        coarse_channels=6,
        fine_channels=5,
        seed=3,
    )


@pytest.fixture
def scene(desk):
    return random_scene(7, desk, n_landmarks=16, base=DEFAULT_BASE_POSE)


@pytest.fixture
def noiseless():
    return NoiseConfig(speckle_strength=0.0, additive_sigma=0.0)


@pytest.fixture
def pairs(scene, desk, noiseless):
    return generate_trajectory_pairs(scene, DEFAULT_BASE_POSE, TrajectoryConfig(), desk, noiseless, 6, seed=5)


@pytest.fixture
def single_landmark_scene():
    return Scene(landmarks=[Landmark(position=np.array([5.0, 0.0, -0.5]), reflectivity=1.0, spot_radius=0.1)], floor=None)


def random_map(rng, channels=4, height=8, width=8, level="coarse", factor=1):
    return FeatureMap(rng.normal(size=(channels, height, width)), level=level, downsample_factor=factor)


def level_pose(**kwargs):
    return SensorPose(**{"z": 2.0, "pitch": math.radians(15.0), **kwargs})


@pytest.fixture
def busy_pair(desk, noiseless):
    """The pair with the most covisible landmarks out of a crowded scene."""
    crowded = random_scene(19, desk, n_landmarks=48, base=DEFAULT_BASE_POSE)
    candidates = generate_trajectory_pairs(crowded, DEFAULT_BASE_POSE, TrajectoryConfig(), desk, noiseless, 6, seed=8)
    pair = max(candidates, key=lambda p: sum(o.covisible for o in p.landmarks))
    assert sum(o.covisible for o in pair.landmarks) >= 8
    return pair
