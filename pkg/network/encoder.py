"""Desk-scale two-level descriptor encoder.

The coarse stack runs on the polar image. The fine head runs on the output
of the first coarse layer concatenated with the nearest-upsampled coarse
descriptors. With co-attention enabled the coarse features of each image
attend to the other image's, and a 1x1 projection maps the concatenation
back to `coarse_channels`.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from models.entities import FeatureMap
from models.errors import ConfigError, ShapeError
from models.schemas import EncoderConfig, LayerSpec
from network import autograd as ag

logger = logging.getLogger(__name__)

WEIGHTS_VERSION = 1


@dataclass(frozen=True, eq=False)
class ModelWeights:
    """Named kernels and biases in declaration order."""

    tensors: Dict[str, np.ndarray]
    version: int = WEIGHTS_VERSION
    config_digest: bytes = field(default=b"\x00" * 32)

    def __post_init__(self):
        for name, value in self.tensors.items():
            if not np.all(np.isfinite(value)):
                raise ShapeError(f"Tensor {name} has non-finite entries.")

    def names(self) -> List[str]:
        return list(self.tensors)

    def replace(self, tensors: Dict[str, np.ndarray]) -> "ModelWeights":
        return ModelWeights(tensors=tensors, version=self.version, config_digest=self.config_digest)

    def astype(self, dtype) -> "ModelWeights":
        return self.replace({k: v.astype(dtype) for k, v in self.tensors.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel().astype(np.float64) for v in self.tensors.values()])


def config_digest(cfg: EncoderConfig) -> bytes:
    """sha256 over the architecture fields; the init seed is not part of it."""
    doc = cfg.model_dump(exclude={"seed"})
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).digest()


def _level_specs(cfg: EncoderConfig) -> List[Tuple[str, LayerSpec, int]]:
    """(prefix, spec, in_channels) for every conv layer."""
    specs = []
    channels = 1
    for i, layer in enumerate(cfg.coarse_layers):
        specs.append((f"coarse.{i}", layer, channels))
        channels = layer.out_channels
    channels = cfg.coarse_layers[0].out_channels + cfg.coarse_channels
    for i, layer in enumerate(cfg.fine_layers):
        specs.append((f"fine.{i}", layer, channels))
        channels = layer.out_channels
    return specs


def expected_shapes(cfg: EncoderConfig) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for prefix, layer, c_in in _level_specs(cfg):
        shapes[f"{prefix}.weight"] = (layer.out_channels, c_in, layer.kernel, layer.kernel)
        shapes[f"{prefix}.bias"] = (layer.out_channels,)
    if cfg.coattention:
        shapes["project.weight"] = (cfg.coarse_channels, 2 * cfg.coarse_channels, 1, 1)
        shapes["project.bias"] = (cfg.coarse_channels,)
    return shapes


def init_weights(cfg: EncoderConfig, dtype=np.float32) -> ModelWeights:
    """He-normal kernels, zero biases, drawn from `cfg.seed`."""
    rng = np.random.default_rng(cfg.seed)
    tensors = {}
    for name, shape in expected_shapes(cfg).items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = shape[1] * shape[2] * shape[3]
            tensors[name] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
    return ModelWeights(tensors=tensors, config_digest=config_digest(cfg))


def check_weights(weights: ModelWeights, cfg: EncoderConfig) -> None:
    expected = expected_shapes(cfg)
    for name, shape in expected.items():
        if name not in weights.tensors:
            raise ShapeError(f"Layer {name} is missing from the weights.")
        if weights.tensors[name].shape != shape:
            raise ShapeError(f"Layer {name} has shape {weights.tensors[name].shape}, expected {shape}.")
    extra = set(weights.tensors) - set(expected)
    if extra:
        raise ShapeError(f"Unexpected layers in weights: {', '.join(sorted(extra))}.")


def parameters(weights: ModelWeights) -> Dict[str, ag.Tensor]:
    return {name: ag.parameter(value, name=name) for name, value in weights.tensors.items()}


def _check_image(image: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError(f"Expected a single-channel 2-D image, got shape {image.shape}.")
    stride = cfg.coarse_stride
    if image.shape[0] % stride or image.shape[1] % stride:
        raise ShapeError(f"Image shape {image.shape} is not divisible by the total stride {stride}.")
    return image


def _conv(x: ag.Tensor, params: Dict[str, ag.Tensor], prefix: str, layer: LayerSpec) -> ag.Tensor:
    out = ag.conv2d(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], stride=layer.stride)
    return ag.relu(out) if layer.activation == "relu" else out


def _coarse_trunk(image: np.ndarray, params, cfg: EncoderConfig) -> Tuple[ag.Tensor, ag.Tensor]:
    """(first-layer output, raw coarse features)."""
    x = ag.constant(image[None])
    first = None
    for i, layer in enumerate(cfg.coarse_layers):
        x = _conv(x, params, f"coarse.{i}", layer)
        if first is None:
            first = x
    return first, x


def _fine_head(first: ag.Tensor, coarse: ag.Tensor, params, cfg: EncoderConfig) -> ag.Tensor:
    up = ag.upsample_nearest(coarse, cfg.coarse_stride // cfg.fine_stride)
    x = ag.concat([first, up], axis=0)
    for i, layer in enumerate(cfg.fine_layers):
        x = _conv(x, params, f"fine.{i}", layer)
    return ag.l2_normalize(x)


def _attend(own: ag.Tensor, other: ag.Tensor, params) -> ag.Tensor:
    attended = ag.co_attention(ag.l2_normalize(own), ag.l2_normalize(other))
    merged = ag.concat([own, attended], axis=0)
    return ag.conv2d(merged, params["project.weight"], params["project.bias"], stride=1)


def encode(image: np.ndarray, params: Dict[str, ag.Tensor], cfg: EncoderConfig) -> Tuple[ag.Tensor, ag.Tensor]:
    """Taped single-image forward pass: (coarse, fine) descriptor tensors."""
    if cfg.coattention:
        raise ConfigError("A co-attention encoder needs both images; use encode_pair.")
    image = _check_image(image, cfg)
    first, coarse = _coarse_trunk(image, params, cfg)
    coarse = ag.l2_normalize(coarse)
    return coarse, _fine_head(first, coarse, params, cfg)


def encode_pair(image_a: np.ndarray, image_b: np.ndarray, params: Dict[str, ag.Tensor], cfg: EncoderConfig):
    """Taped forward pass of both images: ((coarse_a, fine_a), (coarse_b, fine_b))."""
    image_a = _check_image(image_a, cfg)
    image_b = _check_image(image_b, cfg)
    if image_a.shape != image_b.shape:
        raise ShapeError(f"Pair images differ in shape: {image_a.shape} vs {image_b.shape}.")
    first_a, raw_a = _coarse_trunk(image_a, params, cfg)
    first_b, raw_b = _coarse_trunk(image_b, params, cfg)
    if cfg.coattention:
        raw_a, raw_b = _attend(raw_a, raw_b, params), _attend(raw_b, raw_a, params)
    coarse_a, coarse_b = ag.l2_normalize(raw_a), ag.l2_normalize(raw_b)
    return (
        (coarse_a, _fine_head(first_a, coarse_a, params, cfg)),
        (coarse_b, _fine_head(first_b, coarse_b, params, cfg)),
    )


def _maps(coarse: ag.Tensor, fine: ag.Tensor, cfg: EncoderConfig) -> Tuple[FeatureMap, FeatureMap]:
    return (
        FeatureMap(coarse.data, level="coarse", downsample_factor=cfg.coarse_stride),
        FeatureMap(fine.data, level="fine", downsample_factor=cfg.fine_stride),
    )


def _constant_params(weights: ModelWeights) -> Dict[str, ag.Tensor]:
    return {name: ag.constant(value) for name, value in weights.tensors.items()}


def forward(image: np.ndarray, weights: ModelWeights, cfg: EncoderConfig) -> Tuple[FeatureMap, FeatureMap]:
    check_weights(weights, cfg)
    coarse, fine = encode(image, _constant_params(weights), cfg)
    return _maps(coarse, fine, cfg)


def forward_pair(image_a: np.ndarray, image_b: np.ndarray, weights: ModelWeights, cfg: EncoderConfig):
    """((coarse_a, fine_a), (coarse_b, fine_b)) feature maps for an image pair."""
    check_weights(weights, cfg)
    (ca, fa), (cb, fb) = encode_pair(image_a, image_b, _constant_params(weights), cfg)
    return _maps(ca, fa, cfg), _maps(cb, fb, cfg)
