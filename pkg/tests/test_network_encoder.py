import numpy as np
import pytest

from models.errors import ConfigError, ShapeError
from models.schemas import EncoderConfig
from network import autograd as ag
from network.encoder import (
    check_weights,
    config_digest,
    encode,
    expected_shapes,
    forward,
    forward_pair,
    init_weights,
    parameters,
)


@pytest.fixture
def image(rng):
    return rng.uniform(0.0, 1.0, size=(64, 64))


def test_default_layout(image):
    cfg = EncoderConfig()
    coarse, fine = forward(image, init_weights(cfg), cfg)
    assert (coarse.channels, coarse.height, coarse.width, coarse.downsample_factor) == (64, 8, 8, 8)
    assert (fine.channels, fine.height, fine.width, fine.downsample_factor) == (64, 32, 32, 2)
    for fmap in (coarse, fine):
        norms = np.linalg.norm(fmap.data, axis=0)
        np.testing.assert_allclose(norms[norms > 0], 1.0, atol=1e-9)


def test_zero_weights_give_constant_maps(image):
    cfg = EncoderConfig()
    weights = init_weights(cfg)
    zero = weights.replace({k: np.zeros_like(v) for k, v in weights.tensors.items()})
    coarse, fine = forward(image, zero, cfg)
    assert np.all(coarse.data == 0.0)
    assert np.all(fine.data == 0.0)


def test_forward_is_pure(image):
    cfg = EncoderConfig()
    weights = init_weights(cfg)
    c1, f1 = forward(image, weights, cfg)
    c2, f2 = forward(image.copy(), weights, cfg)
    np.testing.assert_array_equal(c1.data, c2.data)
    np.testing.assert_array_equal(f1.data, f2.data)
    (ca, fa), (cb, fb) = forward_pair(image, image, weights, cfg)
    np.testing.assert_array_equal(ca.data, cb.data)
    np.testing.assert_array_equal(fa.data, f1.data)


def test_shift_by_total_stride_shifts_coarse_map(rng):
    cfg = EncoderConfig()
    weights = init_weights(cfg)
    image = rng.uniform(0.0, 1.0, size=(64, 64))
    image[-8:] = 0.0
    shifted = np.roll(image, 8, axis=0)
    original, _ = forward(image, weights, cfg)
    moved, _ = forward(shifted, weights, cfg)
    np.testing.assert_allclose(moved.data[:, 3:7], original.data[:, 2:6], atol=1e-10)


def test_shape_errors(image):
    cfg = EncoderConfig()
    weights = init_weights(cfg)
    with pytest.raises(ShapeError):
        forward(image[:60], weights, cfg)
    with pytest.raises(ShapeError):
        forward(image[None], weights, cfg)
    with pytest.raises(ShapeError):
        forward_pair(image, np.zeros((64, 128)), weights, cfg)


def test_init_is_seeded_and_digest_ignores_seed():
    a = init_weights(EncoderConfig(seed=1))
    b = init_weights(EncoderConfig(seed=1))
    c = init_weights(EncoderConfig(seed=2))
    np.testing.assert_array_equal(a.flat(), b.flat())
    assert not np.array_equal(a.flat(), c.flat())
    assert a.config_digest == c.config_digest == config_digest(EncoderConfig())
    assert config_digest(EncoderConfig(coattention=True)) != a.config_digest
    assert all(v.dtype == np.float32 for v in a.tensors.values())


def test_fine_head_sees_first_layer_and_coarse_channels():
    shapes = expected_shapes(EncoderConfig())
    assert shapes["coarse.0.weight"] == (16, 1, 3, 3)
    assert shapes["fine.0.weight"] == (32, 16 + 64, 3, 3)
    assert "project.weight" not in shapes
    assert expected_shapes(EncoderConfig(coattention=True))["project.weight"] == (64, 128, 1, 1)


def test_check_weights_names_the_layer(small_encoder):
    weights = init_weights(small_encoder)
    other = small_encoder.model_copy(update={"coarse_channels": 7, "coarse_layers": [small_encoder.coarse_layers[0], small_encoder.coarse_layers[1].model_copy(update={"out_channels": 7})]})
    with pytest.raises(ShapeError, match="coarse.1.weight"):
        check_weights(weights, other)
    missing = weights.replace({k: v for k, v in weights.tensors.items() if k != "fine.0.bias"})
    with pytest.raises(ShapeError, match="fine.0.bias"):
        check_weights(missing, small_encoder)


def test_non_finite_weights_rejected(small_encoder):
    weights = init_weights(small_encoder)
    bad = {k: v.copy() for k, v in weights.tensors.items()}
    bad["coarse.0.weight"][0, 0, 0, 0] = np.nan
    with pytest.raises(ShapeError):
        weights.replace(bad)


def test_coattention_needs_both_images(rng, small_encoder):
    cfg = small_encoder.model_copy(update={"coattention": True})
    weights = init_weights(cfg)
    a, b = rng.uniform(size=(16, 16)), rng.uniform(size=(16, 16))
    with pytest.raises(ConfigError):
        forward(a, weights, cfg)
    (ca, fa), (cb, fb) = forward_pair(a, b, weights, cfg)
    (cb2, fb2), (ca2, fa2) = forward_pair(b, a, weights, cfg)
    np.testing.assert_allclose(ca.data, ca2.data, atol=1e-12)
    np.testing.assert_allclose(fb.data, fb2.data, atol=1e-12)
    assert ca.channels == cfg.coarse_channels


def test_coattention_changes_the_coarse_map(rng, small_encoder):
    cfg = small_encoder.model_copy(update={"coattention": True})
    weights = init_weights(cfg)
    a = rng.uniform(size=(16, 16))
    (c1, _), _ = forward_pair(a, rng.uniform(size=(16, 16)), weights, cfg)
    (c2, _), _ = forward_pair(a, rng.uniform(size=(16, 16)), weights, cfg)
    assert not np.allclose(c1.data, c2.data)


def test_taped_encode_reaches_every_weight(rng, small_encoder):
    weights = init_weights(small_encoder, dtype=np.float64)
    params = parameters(weights)
    coarse, fine = encode(rng.uniform(size=(16, 16)), params, small_encoder)
    loss = ag.concat([ag.bilinear_sample(coarse, 1.5, 2.5), ag.bilinear_sample(fine, 3.2, 4.1)])
    loss.backward(np.ones(loss.shape))
    assert all(p.grad is not None for p in params.values())
