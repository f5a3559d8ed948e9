"""Raw-intensity patch baseline.

Each pixel is described by its mean-subtracted, unit-norm patch, so the
inner product of two descriptors is their normalized cross-correlation.
The maps go through the same expectation-matching driver as learned
descriptors.
"""
import numpy as np

from models.entities import FeatureMap


def ncc_feature_map(image: np.ndarray, radius: int = 3, level: str = "fine", stride: int = 1) -> FeatureMap:
    image = np.asarray(image, dtype=np.float64)
    size = 2 * radius + 1
    padded = np.pad(image, radius, mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (size, size))
    patches = windows.reshape(image.shape[0], image.shape[1], size * size)
    patches = patches - patches.mean(axis=2, keepdims=True)
    norms = np.linalg.norm(patches, axis=2, keepdims=True)
    patches = np.where(norms > 1e-12, patches / np.where(norms > 1e-12, norms, 1.0), 0.0)
    data = np.transpose(patches, (2, 0, 1))[:, ::stride, ::stride]
    return FeatureMap(np.ascontiguousarray(data), level=level, downsample_factor=stride)


def ncc_feature_maps(image: np.ndarray, coarse_stride: int = 4, radius: int = 3):
    """(coarse, fine) pair for the coarse-to-fine driver."""
    return (
        ncc_feature_map(image, radius=radius, level="coarse", stride=coarse_stride),
        ncc_feature_map(image, radius=radius, level="fine", stride=1),
    )
