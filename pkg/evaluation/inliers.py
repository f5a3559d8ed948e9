"""Inlier classification against a pose and Z-test pruning of matches."""
import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from geometry.epipolar import DEFAULT_ARC_SAMPLES, contour_distance_px, epipolar_contour
from geometry.sonar_model import pixel_to_polar
from models.entities import MatchResult, RelativePose
from models.errors import UndefinedRatioError
from models.schemas import SonarIntrinsics

logger = logging.getLogger(__name__)

MIN_PRUNE_MATCHES = 3


@dataclass(frozen=True, eq=False)
class InlierReport:
    ratio: float
    flags: List[bool]
    distances: np.ndarray

    @property
    def n_inliers(self) -> int:
        return int(sum(self.flags))


@dataclass(frozen=True, eq=False)
class PruneResult:
    kept: List[MatchResult]
    pruned: List[MatchResult]
    z_scores: np.ndarray
    skipped: bool = False


def contour_distances(
    matches: Sequence[MatchResult],
    pose: RelativePose,
    intr: SonarIntrinsics,
    arc_samples: int = DEFAULT_ARC_SAMPLES,
) -> np.ndarray:
    """Pixel distance of every predicted point to its query's epipolar contour under `pose`."""
    out = np.empty(len(matches))
    for i, match in enumerate(matches):
        r, theta = pixel_to_polar(match.query, intr)
        contour = epipolar_contour(r, theta, pose, intr, arc_samples)
        out[i] = contour_distance_px((match.predicted.u, match.predicted.v), contour, intr)
    return out


def classify_inliers(
    matches: Sequence[MatchResult],
    pose: RelativePose,
    intr: SonarIntrinsics,
    threshold_px: float = 12.0,
    arc_samples: int = DEFAULT_ARC_SAMPLES,
) -> InlierReport:
    """A match is an inlier iff its prediction lies within `threshold_px` of the contour."""
    if threshold_px < 0.0:
        raise ValueError("threshold_px must be non-negative.")
    if not matches:
        raise UndefinedRatioError("Inlier ratio of an empty match list is undefined.")
    distances = contour_distances(matches, pose, intr, arc_samples)
    flags = [bool(d <= threshold_px) for d in distances]
    return InlierReport(ratio=sum(flags) / len(flags), flags=flags, distances=distances)


def z_test_prune(
    matches: Sequence[MatchResult],
    prior: RelativePose,
    intr: SonarIntrinsics,
    sigma: float = 2.0,
    arc_samples: int = DEFAULT_ARC_SAMPLES,
) -> PruneResult:
    """Drop matches whose prior-pose contour distance is more than `sigma` standard deviations above the mean.

    Statistics are taken over this match list only. With fewer than three
    matches nothing is pruned and the result is flagged as skipped.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive.")
    matches = list(matches)
    if len(matches) < MIN_PRUNE_MATCHES:
        logger.debug("Z-test skipped: %d matches", len(matches))
        return PruneResult(kept=matches, pruned=[], z_scores=np.zeros(len(matches)), skipped=True)
    distances = contour_distances(matches, prior, intr, arc_samples)
    finite = np.isfinite(distances)
    mean = float(np.mean(distances[finite])) if np.any(finite) else 0.0
    std = float(np.std(distances[finite])) if np.any(finite) else 0.0
    if std < 1e-9:
        z = np.where(finite, 0.0, np.inf)
    else:
        z = np.where(finite, (distances - mean) / std, np.inf)
    keep = z <= sigma
    kept = [m for m, k in zip(matches, keep) if k]
    pruned = [m for m, k in zip(matches, keep) if not k]
    return PruneResult(kept=kept, pruned=pruned, z_scores=z)
