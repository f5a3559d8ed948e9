import math
from types import SimpleNamespace

import numpy as np
import pytest

from evaluation.bundle import MIN_MATCHES, planar_ground_truth, relative_pose_from_planar, two_view_bundle_adjust
from evaluation.metrics import pose_error
from models.entities import PlanarPoseEstimate
from models.errors import DegenerateGeometryError
from models.schemas import BundleNoiseModel, TrajectoryConfig
from simulator.scene import DEFAULT_BASE_POSE, random_scene
from simulator.trajectories import observe_landmarks, sample_sensor_pair


def polar_matches(pair):
    return [((o.ra, o.thetaa), (o.rb, o.thetab)) for o in pair.landmarks if o.covisible]


def shifted(truth, dx, dy, dyaw):
    return PlanarPoseEstimate(truth.x + dx, truth.y + dy, truth.yaw + dyaw, z=truth.z, pitch=truth.pitch, roll=truth.roll)


def test_planar_ground_truth_reproduces_relative_pose(pairs):
    for pair in pairs:
        reference, truth = planar_ground_truth(pair)
        pose = relative_pose_from_planar(reference, truth)
        np.testing.assert_allclose(pose.rotation, pair.pose_ab.rotation, atol=1e-9)
        np.testing.assert_allclose(pose.translation, pair.pose_ab.translation, atol=1e-9)


def test_truth_is_a_fixed_point(busy_pair, desk):
    reference, truth = planar_ground_truth(busy_pair)
    result = two_view_bundle_adjust(polar_matches(busy_pair), truth, desk, reference=reference)
    translation, rotation = pose_error(result.estimate, truth)
    assert translation < 1e-6
    assert rotation < 1e-8
    assert result.cost < 1e-8


def test_perturbed_prior_recovers_truth(busy_pair, desk):
    reference, truth = planar_ground_truth(busy_pair)
    prior = shifted(truth, 0.3, -0.3, math.radians(5.0))
    result = two_view_bundle_adjust(polar_matches(busy_pair), prior, desk, reference=reference)
    translation, rotation = pose_error(result.estimate, truth)
    assert translation < 1e-3
    assert rotation < 1e-4


def test_perturbed_prior_recovers_truth_on_random_pairs(desk):
    cfg = TrajectoryConfig()
    outcomes = []
    i = 0
    while len(outcomes) < 100:
        scene = random_scene(500 + i, desk, n_landmarks=48, base=DEFAULT_BASE_POSE)
        rng = np.random.default_rng([21, i])
        i += 1
        sensor_a, sensor_b = sample_sensor_pair(DEFAULT_BASE_POSE, cfg, rng, scene.floor.height)
        pair = SimpleNamespace(sensor_a=sensor_a, sensor_b=sensor_b, landmarks=observe_landmarks(scene, sensor_a, sensor_b, desk))
        matches = polar_matches(pair)
        if len(matches) < MIN_MATCHES:
            continue
        reference, truth = planar_ground_truth(pair)
        sx, sy, syaw = rng.choice([-1.0, 1.0], size=3)
        prior = shifted(truth, 0.3 * sx, 0.3 * sy, math.radians(5.0) * syaw)
        result = two_view_bundle_adjust(matches, prior, desk, reference=reference)
        translation, rotation = pose_error(result.estimate, truth)
        outcomes.append(translation < 1e-3 and rotation < 1e-4)
    assert sum(outcomes) >= 95


def test_tight_prior_holds_the_estimate(busy_pair, desk):
    reference, truth = planar_ground_truth(busy_pair)
    prior = shifted(truth, 0.3, -0.3, math.radians(5.0))
    stiff = BundleNoiseModel(prior_sigma_xy=1e-9, prior_sigma_yaw=1e-9)
    result = two_view_bundle_adjust(polar_matches(busy_pair), prior, desk, stiff, reference)
    translation, rotation = pose_error(result.estimate, prior)
    assert translation < 1e-6
    assert rotation < 1e-6


def test_elevations_stay_in_the_frustum(busy_pair, desk):
    reference, truth = planar_ground_truth(busy_pair)
    prior = shifted(truth, 0.5, 0.0, 0.0)
    result = two_view_bundle_adjust(polar_matches(busy_pair), prior, desk, reference=reference)
    assert result.elevations.shape == (len(polar_matches(busy_pair)),)
    assert np.all(result.elevations >= desk.phi_min - 1e-12)
    assert np.all(result.elevations <= desk.phi_max + 1e-12)
    np.testing.assert_array_equal(result.state.elevations, result.elevations)
    assert result.estimate.z == truth.z and result.estimate.pitch == truth.pitch


def test_too_few_matches(busy_pair, desk):
    reference, truth = planar_ground_truth(busy_pair)
    with pytest.raises(DegenerateGeometryError):
        two_view_bundle_adjust(polar_matches(busy_pair)[:2], truth, desk, reference=reference)
