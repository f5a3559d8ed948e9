import logging

import numpy as np
import pytest

from db.weights import (
    TrainingCheckpoint,
    checkpoint_path,
    decode_checkpoint,
    decode_weights,
    encode_checkpoint,
    encode_weights,
    load_checkpoint,
    load_weights,
    save_checkpoint,
    save_weights,
)
from models.errors import ShapeError, WeightsFormatError
from network.encoder import ModelWeights, init_weights
from network.training import OptimizerState


def test_save_load_is_bit_exact(tmp_path, small_encoder):
    weights = init_weights(small_encoder)
    path = tmp_path / "w.sncw"
    save_weights(weights, path)
    loaded = load_weights(path, small_encoder)
    assert loaded.names() == weights.names()
    assert loaded.config_digest == weights.config_digest
    for name in weights.names():
        assert loaded.tensors[name].tobytes() == weights.tensors[name].tobytes()
    assert path.read_bytes()[:4] == b"SNCW"


def test_truncated_file(tmp_path, small_encoder):
    payload = encode_weights(init_weights(small_encoder))
    path = tmp_path / "cut.sncw"
    path.write_bytes(payload[:-7])
    with pytest.raises(WeightsFormatError, match="truncated"):
        load_weights(path)


def test_bad_magic_version_and_trailing_bytes(small_encoder):
    payload = encode_weights(init_weights(small_encoder))
    with pytest.raises(WeightsFormatError, match="magic"):
        decode_weights(b"XXXX" + payload[4:])
    with pytest.raises(WeightsFormatError, match="version"):
        decode_weights(payload[:4] + (99).to_bytes(4, "little") + payload[8:])
    with pytest.raises(WeightsFormatError, match="trailing"):
        decode_weights(payload + b"\x00")


def test_missing_file(tmp_path):
    with pytest.raises(WeightsFormatError):
        load_weights(tmp_path / "nope.sncw")


def test_mismatched_config_names_the_layer(tmp_path, small_encoder):
    path = tmp_path / "w.sncw"
    save_weights(init_weights(small_encoder), path)
    wider = small_encoder.model_copy(
        update={"fine_channels": 9, "fine_layers": [small_encoder.fine_layers[0].model_copy(update={"out_channels": 9})]}
    )
    with pytest.raises(ShapeError, match="fine.0.weight"):
        load_weights(path, wider)


def test_digest_mismatch_only_warns(tmp_path, small_encoder, caplog):
    weights = init_weights(small_encoder)
    path = tmp_path / "w.sncw"
    save_weights(ModelWeights(tensors=weights.tensors, config_digest=b"\x01" * 32), path)
    with caplog.at_level(logging.WARNING, logger="db.weights"):
        loaded = load_weights(path, small_encoder)
    assert "different encoder configuration" in caplog.text
    np.testing.assert_array_equal(loaded.flat(), weights.flat())


def test_undecodable_tensor_name(small_encoder):
    payload = bytearray(encode_weights(init_weights(small_encoder)))
    # first name byte sits after magic, version, digest, count and name length
    payload[4 + 4 + 32 + 4 + 4] = 0xFF
    with pytest.raises(WeightsFormatError, match="utf-8"):
        decode_weights(bytes(payload))


def test_checkpoint_sits_next_to_the_weights(tmp_path, rng):
    weights_path = tmp_path / "run.sncw"
    assert load_checkpoint(weights_path) is None
    state = OptimizerState(
        step=7,
        m={"coarse.0.weight": rng.normal(size=(4, 1, 3, 3))},
        v={"coarse.0.weight": rng.uniform(size=(4, 1, 3, 3))},
    )
    path = save_checkpoint(TrainingCheckpoint(next_epoch=3, state=state), weights_path)
    assert path == checkpoint_path(weights_path) == tmp_path / "run.opt"
    assert path.read_bytes()[:4] == b"SNCO"
    loaded = load_checkpoint(weights_path)
    assert loaded.next_epoch == 3 and loaded.state.step == 7
    assert loaded.state.m["coarse.0.weight"].tobytes() == state.m["coarse.0.weight"].tobytes()
    assert loaded.state.v["coarse.0.weight"].tobytes() == state.v["coarse.0.weight"].tobytes()


def test_sgd_checkpoint_has_no_moments():
    payload = encode_checkpoint(TrainingCheckpoint(next_epoch=1, state=OptimizerState(step=2)))
    loaded = decode_checkpoint(payload)
    assert loaded.state.m == {} and loaded.state.v == {}
    with pytest.raises(WeightsFormatError, match="trailing"):
        decode_checkpoint(payload + b"\x00")
    with pytest.raises(WeightsFormatError, match="magic"):
        decode_checkpoint(b"SNCW" + payload[4:])
