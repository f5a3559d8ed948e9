"""Differentiable matching layer.

A query descriptor is correlated against every cell of the second map, the
correlations go through a softmax, and the match is the expectation of the
resulting distribution. Map coordinates are (row, col) cell indices; a
feature map with downsample factor f samples image pixel (f*row, f*col).
"""
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from models.entities import FeatureMap, Keypoint, MatchDistribution, MatchResult, PixelCoord
from models.errors import ShapeError
from models.schemas import MatchConfig

Window = Tuple[int, int, int, int]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / np.sum(e)


def bilinear_stencil(row: float, col: float, height: int, width: int):
    """Corner indices and weights for bilinear sampling, clamped to the grid.

    Returns (rows[4], cols[4], weights[4], d_weights_d_row[4], d_weights_d_col[4]).
    The derivatives are zero along an axis where the coordinate was clamped.
    """
    r = float(np.clip(row, 0.0, height - 1))
    c = float(np.clip(col, 0.0, width - 1))
    r0 = min(int(np.floor(r)), max(height - 2, 0))
    c0 = min(int(np.floor(c)), max(width - 2, 0))
    r1 = min(r0 + 1, height - 1)
    c1 = min(c0 + 1, width - 1)
    fr, fc = r - r0, c - c0
    rows = np.array([r0, r0, r1, r1])
    cols = np.array([c0, c1, c0, c1])
    weights = np.array([(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc])
    row_live = 0.0 <= row <= height - 1 and height > 1
    col_live = 0.0 <= col <= width - 1 and width > 1
    d_row = np.array([-(1 - fc), -fc, 1 - fc, fc]) if row_live else np.zeros(4)
    d_col = np.array([-(1 - fr), 1 - fr, -fr, fr]) if col_live else np.zeros(4)
    return rows, cols, weights, d_row, d_col


def sample_descriptor(fmap: FeatureMap, row: float, col: float) -> np.ndarray:
    rows, cols, weights, _, _ = bilinear_stencil(row, col, fmap.height, fmap.width)
    return fmap.data[:, rows, cols] @ weights


def pixel_to_cell(pixel: PixelCoord, fmap: FeatureMap) -> Tuple[float, float]:
    return pixel.u / fmap.downsample_factor, pixel.v / fmap.downsample_factor


def full_window(fmap: FeatureMap) -> Window:
    return 0, fmap.height, 0, fmap.width


def window_bounds(center_row: float, center_col: float, window: int, height: int, width: int) -> Window:
    """Square window of odd size around the rounded center, shifted to stay on the map.

    A window larger than the map is clamped to the map.
    """
    def axis(center: float, extent: int) -> Tuple[int, int]:
        if window >= extent:
            return 0, extent
        start = int(np.round(center)) - window // 2
        start = min(max(start, 0), extent - window)
        return start, start + window

    r0, r1 = axis(center_row, height)
    c0, c1 = axis(center_col, width)
    return r0, r1, c0, c1


def correspondence_distribution(
    query: PixelCoord,
    m1: FeatureMap,
    m2: FeatureMap,
    temperature: float = 1.0,
    window: Optional[Window] = None,
) -> MatchDistribution:
    """softmax_x( M1(x1)^T M2(x) / temperature ) over the cells of M2 (or a window of it)."""
    if m1.channels != m2.channels:
        raise ShapeError(f"Channel mismatch: {m1.channels} vs {m2.channels}.")
    row, col = pixel_to_cell(query, m1)
    descriptor = sample_descriptor(m1, row, col)
    r0, r1, c0, c1 = window or full_window(m2)
    block = m2.data[:, r0:r1, c0:c1]
    logits = np.einsum("c,chw->hw", descriptor, block) / temperature
    probs = softmax(logits.ravel()).reshape(logits.shape)
    return MatchDistribution(probabilities=probs, query=query, offset=(r0, c0))


def expected_correspondence(dist: MatchDistribution) -> Tuple[PixelCoord, np.ndarray]:
    """Expectation over cell coordinates and its Jacobian w.r.t. the logits.

    d x_hat / d logit_k = p_k (x_k - x_hat); the Jacobian is (2, n_cells) in
    row-major cell order.
    """
    p = dist.probabilities.ravel()
    coords = dist.cell_coordinates()
    mean = p @ coords
    jacobian = (p[:, None] * (coords - mean)).T
    return PixelCoord(float(mean[0]), float(mean[1])), jacobian


def distribution_uncertainty(
    dist: MatchDistribution,
    expectation: PixelCoord,
    sigma0: float = 1.0,
    scale: float = 1.0,
) -> Tuple[float, float]:
    """(variance, weight): sum_x p(x) |x - x_hat|^2 and 1 / (1 + variance / sigma0^2).

    `scale` converts cells to image pixels before the variance is taken.
    """
    p = dist.probabilities.ravel()
    diff = (dist.cell_coordinates() - expectation.as_array()) * scale
    variance = float(p @ np.einsum("ij,ij->i", diff, diff))
    variance = max(variance, 0.0)
    return variance, 1.0 / (1.0 + variance / (sigma0 * sigma0))


def argmax_cell(dist: MatchDistribution) -> PixelCoord:
    idx = int(np.argmax(dist.probabilities))
    row, col = np.unravel_index(idx, dist.probabilities.shape)
    return PixelCoord(float(row + dist.offset[0]), float(col + dist.offset[1]))


def _result(query: PixelCoord, dist: MatchDistribution, factor: int, sigma0: float, confidence: float) -> MatchResult:
    expectation, _ = expected_correspondence(dist)
    variance, weight = distribution_uncertainty(dist, expectation, sigma0=sigma0, scale=factor)
    predicted = PixelCoord(expectation.u * factor, expectation.v * factor)
    return MatchResult(query=query, predicted=predicted, variance=variance, weight=weight, low_confidence=weight < confidence)


def coarse_to_fine_match(
    query: PixelCoord,
    m1_coarse: FeatureMap,
    m2_coarse: FeatureMap,
    m1_fine: FeatureMap,
    m2_fine: FeatureMap,
    window: int = 9,
    temperature: float = 1.0,
    sigma0: float = 4.0,
    confidence: float = 0.5,
    window_center: str = "expectation",
) -> Tuple[MatchResult, MatchResult]:
    """Full-map match at the coarse level, then a windowed match at the fine level.

    Both results carry predictions in full-image pixels.
    """
    if window % 2 == 0:
        raise ShapeError("The fine window must be odd.")
    coarse_dist = correspondence_distribution(query, m1_coarse, m2_coarse, temperature)
    coarse = _result(query, coarse_dist, m2_coarse.downsample_factor, sigma0, confidence)
    if window_center == "argmax":
        cell = argmax_cell(coarse_dist)
        center = PixelCoord(cell.u * m2_coarse.downsample_factor, cell.v * m2_coarse.downsample_factor)
    else:
        center = coarse.predicted
    bounds = window_bounds(
        center.u / m2_fine.downsample_factor,
        center.v / m2_fine.downsample_factor,
        window,
        m2_fine.height,
        m2_fine.width,
    )
    fine_dist = correspondence_distribution(query, m1_fine, m2_fine, temperature, window=bounds)
    fine = _result(query, fine_dist, m2_fine.downsample_factor, sigma0, confidence)
    return coarse, fine


def match_keypoints(
    keypoints: Sequence[Union[Keypoint, PixelCoord]],
    maps1: Tuple[FeatureMap, FeatureMap],
    maps2: Tuple[FeatureMap, FeatureMap],
    config: MatchConfig = MatchConfig(),
) -> List[MatchResult]:
    """One fine-level MatchResult per keypoint, in input order."""
    results = []
    for kp in keypoints:
        query = kp.pixel if isinstance(kp, Keypoint) else kp
        _, fine = coarse_to_fine_match(
            query,
            maps1[0],
            maps2[0],
            maps1[1],
            maps2[1],
            window=config.window,
            temperature=config.temperature,
            sigma0=config.sigma0,
            confidence=config.confidence,
            window_center=config.window_center,
        )
        results.append(fine)
    return results
