import math

import numpy as np
import pytest

from geometry.sonar_model import polar_to_pixel, spherical_to_cartesian_array
from models.entities import FloorPlane, Landmark, Scene, SensorPose
from models.schemas import NoiseConfig
from simulator.render import elevation_falloff, render, render_floor
from simulator.scene import DEFAULT_BASE_POSE, random_scene, sensor_to_world


def test_nothing_visible_renders_black(desk, noiseless):
    behind = Scene(landmarks=[Landmark(position=np.array([-5.0, 0.0, 0.0]))])
    assert np.all(render(behind, SensorPose(), desk, noiseless) == 0.0)


def test_single_landmark_peak(desk, noiseless, single_landmark_scene):
    image = render(single_landmark_scene, SensorPose(), desk, noiseless)
    r = math.sqrt(25.0 + 0.25)
    expected = polar_to_pixel(r, 0.0, desk)
    u, v = np.unravel_index(np.argmax(image), image.shape)
    assert abs(u - expected.u) <= 1.0
    assert abs(v - expected.v) <= 1.0


def test_coincident_landmarks_add_then_clamp(desk, noiseless):
    pose = SensorPose()
    low, high = spherical_to_cartesian_array(5.0, 0.0, math.radians(5.0)), spherical_to_cartesian_array(5.0, 0.0, math.radians(-5.0))
    one = render(Scene([Landmark(low, reflectivity=0.4)]), pose, desk, noiseless)
    other = render(Scene([Landmark(high, reflectivity=0.4)]), pose, desk, noiseless)
    both = render(Scene([Landmark(low, reflectivity=0.4), Landmark(high, reflectivity=0.4)]), pose, desk, noiseless)
    np.testing.assert_allclose(both, np.clip(one + other, 0.0, 1.0), atol=1e-12)
    assert both.max() == pytest.approx(2 * one.max(), rel=1e-6)
    strong = Scene([Landmark(spherical_to_cartesian_array(5.0, 0.0, 0.0)), Landmark(spherical_to_cartesian_array(5.0, 0.0, 0.01))])
    assert render(strong, pose, desk, noiseless).max() == 1.0


def test_elevation_falloff(desk):
    assert elevation_falloff(0.0, desk) == pytest.approx(1.0)
    assert elevation_falloff(desk.phi_max, desk) == pytest.approx(0.0, abs=1e-15)
    flat = desk.model_copy(update={"phi_min": 0.0, "phi_max": 0.0})
    assert elevation_falloff(0.0, flat) == 1.0


def test_floor_return_follows_elevation_geometry(desk):
    pose = SensorPose(z=2.0, pitch=math.radians(15.0))
    scene = Scene(landmarks=[Landmark(position=np.array([-5.0, 0.0, 0.0]))], floor=FloorPlane(0.0, 0.15))
    image = render_floor(scene, pose, desk)
    u, v = 50, 32
    r = desk.r_min + u * desk.range_resolution
    phi = math.asin(2.0 / r) - math.radians(15.0)
    assert image[u, v] == pytest.approx(0.15 * float(elevation_falloff(phi, desk)), rel=1e-9)
    # too close for the arc to reach the floor
    assert image[10, 32] == 0.0


def test_noise_is_seeded_and_bounded(scene, desk):
    noise = NoiseConfig(speckle_strength=0.5, additive_sigma=0.05, seed=3)
    a = render(scene, DEFAULT_BASE_POSE, desk, noise, frame_index=4)
    b = render(scene, DEFAULT_BASE_POSE, desk, noise, frame_index=4)
    c = render(scene, DEFAULT_BASE_POSE, desk, noise, frame_index=5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert a.shape == (desk.n_range, desk.n_bearing)


def test_random_scene(desk):
    scene = random_scene(11, desk, n_landmarks=20)
    assert len(scene.landmarks) == 20
    assert all(lm.position[2] >= 0.0 for lm in scene.landmarks)
    assert all(0.5 <= lm.reflectivity <= 1.0 for lm in scene.landmarks)
    again = random_scene(11, desk, n_landmarks=20)
    np.testing.assert_array_equal(np.stack([lm.position for lm in scene.landmarks]), np.stack([lm.position for lm in again.landmarks]))
    assert random_scene(11, desk, floor_reflectivity=None).floor is None


def test_sensor_to_world_inverts_world_to_sensor():
    from geometry.epipolar import world_to_sensor

    pose = SensorPose(x=1.0, y=-2.0, z=3.0, yaw=0.4, pitch=0.2, roll=0.1)
    points = np.array([[1.0, 2.0, 3.0], [-4.0, 0.5, 2.0]])
    np.testing.assert_allclose(world_to_sensor(sensor_to_world(points, pose), pose), points, atol=1e-12)
