import math

import numpy as np
import pytest

from evaluation.inliers import classify_inliers
from geometry.epipolar import joint_loss, relative_pose_from_sensor_poses
from models.entities import PixelCoord, RelativePose, ScenePair, SensorPose
from models.errors import DegenerateBatchError
from models.schemas import EncoderConfig, MatchConfig, NoiseConfig, TrainConfig, TrajectoryConfig
from network.encoder import init_weights
from network.training import fit, pair_gradients, sample_keypoints, train_step
from routers.match import match_pair
from simulator.scene import DEFAULT_BASE_POSE, random_scene
from simulator.trajectories import generate_trajectory_pairs


@pytest.fixture
def textured_pair(rng, tiny_intrinsics):
    a = SensorPose(z=2.0, pitch=math.radians(10.0))
    b = SensorPose(x=0.15, y=-0.1, z=2.0, yaw=0.05, pitch=math.radians(10.0))
    image = rng.uniform(0.0, 1.0, size=(16, 16))
    return ScenePair(
        image_a=image,
        image_b=np.roll(image, 1, axis=0),
        pose_ab=relative_pose_from_sensor_poses(a, b),
        intrinsics=tiny_intrinsics,
        landmarks=[],
        sensor_a=a,
        sensor_b=b,
    )


KEYPOINTS = [PixelCoord(5.0, 6.0), PixelCoord(9.5, 8.25), PixelCoord(3.0, 11.0)]


def test_zero_learning_rate_keeps_weights(textured_pair, small_encoder):
    weights = init_weights(small_encoder)
    step = train_step(textured_pair, KEYPOINTS, weights, TrainConfig(learning_rate=0.0), small_encoder)
    assert step.loss >= 0.0
    assert np.isfinite(step.loss)
    for name, value in weights.tensors.items():
        np.testing.assert_array_equal(step.weights.tensors[name], value)
    assert step.state.step == 1


def test_sgd_moves_against_the_gradient(textured_pair, small_encoder):
    weights = init_weights(small_encoder, dtype=np.float64)
    cfg = TrainConfig(learning_rate=0.1, optimizer="sgd")
    step = train_step(textured_pair, KEYPOINTS, weights, cfg, small_encoder)
    for name, value in weights.tensors.items():
        np.testing.assert_allclose(step.weights.tensors[name], value - 0.1 * step.gradients[name])


@pytest.mark.parametrize("coattention", [False, True])
def test_gradient_matches_finite_differences(textured_pair, small_encoder, rng, coattention):
    # a huge sigma0 keeps the detached uncertainty weights at 1
    cfg = TrainConfig(sigma0=1e6, temperature=0.5, window=3)
    small_encoder = small_encoder.model_copy(update={"coattention": coattention})
    weights = init_weights(small_encoder, dtype=np.float64)
    analytic = pair_gradients(textured_pair, KEYPOINTS, weights, cfg, small_encoder)
    names = weights.names()
    grad = np.concatenate([analytic.gradients[n].ravel() for n in names])
    base = weights.flat()
    sizes = [weights.tensors[n].size for n in names]

    def loss_at(flat):
        parts = np.split(flat, np.cumsum(sizes)[:-1])
        tensors = {n: p.reshape(weights.tensors[n].shape) for n, p in zip(names, parts)}
        return pair_gradients(textured_pair, KEYPOINTS, weights.replace(tensors), cfg, small_encoder).loss

    h = 1e-6
    for _ in range(3):
        direction = rng.normal(size=base.size)
        fd = (loss_at(base + h * direction) - loss_at(base - h * direction)) / (2 * h)
        assert grad @ direction == pytest.approx(fd, rel=1e-4, abs=1e-9)
    for index in rng.choice(base.size, size=30, replace=False):
        e = np.zeros(base.size)
        e[index] = h
        fd = (loss_at(base + e) - loss_at(base - e)) / (2 * h)
        assert grad[index] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_pair_loss_sums_over_keypoints(textured_pair, small_encoder):
    cfg = TrainConfig(sigma0=1e6, temperature=0.5, window=3)
    weights = init_weights(small_encoder, dtype=np.float64)
    once = pair_gradients(textured_pair, KEYPOINTS, weights, cfg, small_encoder)
    twice = pair_gradients(textured_pair, KEYPOINTS + KEYPOINTS, weights, cfg, small_encoder)
    assert twice.kept == 2 * once.kept
    assert twice.loss == pytest.approx(2.0 * once.loss, rel=1e-12)
    for name in weights.names():
        np.testing.assert_allclose(twice.gradients[name], 2.0 * once.gradients[name], rtol=1e-10, atol=1e-14)
    w = cfg.loss_weights
    assert once.loss == pytest.approx(joint_loss([once.epipolar], [once.cyclic], w), rel=1e-5)


def test_degenerate_batches(textured_pair, small_encoder):
    weights = init_weights(small_encoder)
    with pytest.raises(DegenerateBatchError):
        pair_gradients(textured_pair, [], weights, TrainConfig(), small_encoder)
    far = ScenePair(
        image_a=textured_pair.image_a,
        image_b=textured_pair.image_b,
        pose_ab=RelativePose(np.eye(3), [100.0, 0.0, 0.0]),
        intrinsics=textured_pair.intrinsics,
        landmarks=[],
    )
    with pytest.raises(DegenerateBatchError):
        pair_gradients(far, KEYPOINTS, weights, TrainConfig(), small_encoder)


def test_sample_keypoints_tops_up_with_distinct_pixels(rng):
    image = np.zeros((16, 16))
    image[4:8, 4:8] = 1.0
    picked = sample_keypoints(image, 20, rng)
    assert len(picked) == 20
    assert len({(p.u, p.v) for p in picked}) == 20
    assert all(0 <= p.u < 16 and 0 <= p.v < 16 for p in picked)
    again = sample_keypoints(image, 20, np.random.default_rng(1234))
    assert again == picked


def test_fit_is_deterministic(pairs, small_encoder):
    cfg = TrainConfig(epochs=2, batch_pairs=2, keypoints_per_frame=4, learning_rate=1e-2, seed=9)
    first = fit(pairs[:3], cfg, small_encoder)
    second = fit(pairs[:3], cfg, small_encoder)
    assert [r.epoch for r in first.trace] == [0, 1]
    assert first.trace == second.trace
    np.testing.assert_array_equal(first.weights.flat(), second.weights.flat())
    assert all(r.loss >= 0.0 and r.pairs >= 1 for r in first.trace)


def test_fit_resume_continues_epochs(pairs, small_encoder):
    cfg = TrainConfig(epochs=1, batch_pairs=2, keypoints_per_frame=4, seed=9)
    first = fit(pairs[:2], cfg, small_encoder)
    resumed = fit(pairs[:2], cfg, small_encoder, weights=first.weights, start_epoch=first.next_epoch, state=first.state)
    assert [r.epoch for r in resumed.trace] == [1]
    assert resumed.next_epoch == 2
    assert resumed.state.step > first.state.step

    straight = fit(pairs[:2], cfg.model_copy(update={"epochs": 2}), small_encoder)
    np.testing.assert_array_equal(resumed.weights.flat(), straight.weights.flat())
    assert resumed.trace[0] == straight.trace[1]


def test_fit_rejects_empty_training_set(small_encoder):
    with pytest.raises(DegenerateBatchError):
        fit([], TrainConfig(), small_encoder)


@pytest.mark.slow
def test_loss_decreases_on_a_fixed_pair(textured_pair, small_encoder):
    cfg = TrainConfig(learning_rate=1e-2, temperature=0.5)
    weights = init_weights(small_encoder)
    state = None
    losses = []
    for _ in range(50):
        step = train_step(textured_pair, KEYPOINTS, weights, cfg, small_encoder, state)
        weights, state = step.weights, step.state
        losses.append(step.loss)
    assert np.mean(losses[-5:]) < np.mean(losses[:5])


def mean_inlier_ratio(pairs, cfg, weights=None, encoder=EncoderConfig(), baseline=False):
    ratios = []
    for pair in pairs:
        matches = match_pair(pair, cfg, weights, encoder, baseline)
        if matches:
            ratios.append(classify_inliers(matches, pair.pose_ab, pair.intrinsics, 12.0).ratio)
    return float(np.mean(ratios))


@pytest.mark.slow
def test_training_halves_the_loss_and_beats_ncc(desk):
    train_scene = random_scene(31, desk, n_landmarks=32, base=DEFAULT_BASE_POSE)
    held_scene = random_scene(32, desk, n_landmarks=32, base=DEFAULT_BASE_POSE)
    noise = NoiseConfig()
    train_pairs = generate_trajectory_pairs(train_scene, DEFAULT_BASE_POSE, TrajectoryConfig(), desk, noise, 200, seed=0, jobs=4)
    held_out = generate_trajectory_pairs(held_scene, DEFAULT_BASE_POSE, TrajectoryConfig(), desk, noise, 50, seed=1, jobs=4)
    encoder = EncoderConfig()

    result = fit(train_pairs, TrainConfig(epochs=10), encoder, jobs=4)
    assert [r.epoch for r in result.trace] == list(range(10))
    assert result.trace[-1].loss <= 0.5 * result.trace[0].loss

    cfg = MatchConfig(confidence=0.0)
    learned = mean_inlier_ratio(held_out, cfg, result.weights, encoder)
    ncc = mean_inlier_ratio(held_out, cfg, encoder=encoder, baseline=True)
    assert learned >= ncc + 0.10
