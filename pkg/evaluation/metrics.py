"""Per-pair evaluation and (mean, std) aggregates per variation group."""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from evaluation.bundle import planar_ground_truth, relative_pose_from_planar, two_view_bundle_adjust
from evaluation.inliers import classify_inliers, z_test_prune
from geometry.sonar_model import pixel_to_polar
from models.entities import MatchResult, PlanarPoseEstimate, ScenePair, wrap_angle
from models.errors import SonarKitError, UndefinedRatioError
from models.schemas import EvalConfig
from simulator.trajectories import is_small_variation

logger = logging.getLogger(__name__)


def pose_error(estimate: PlanarPoseEstimate, truth: PlanarPoseEstimate) -> Tuple[float, float]:
    """(xy distance in meters, absolute wrapped yaw difference in [0, pi])."""
    translation = math.hypot(estimate.x - truth.x, estimate.y - truth.y)
    rotation = abs(wrap_angle(estimate.yaw - truth.yaw))
    return translation, rotation


def noisy_prior(truth: PlanarPoseEstimate, cfg: EvalConfig, rng: np.random.Generator) -> PlanarPoseEstimate:
    return PlanarPoseEstimate(
        truth.x + float(rng.normal(0.0, cfg.prior_noise_xy)) if cfg.prior_noise_xy > 0 else truth.x,
        truth.y + float(rng.normal(0.0, cfg.prior_noise_xy)) if cfg.prior_noise_xy > 0 else truth.y,
        truth.yaw + float(rng.normal(0.0, math.radians(cfg.prior_noise_yaw_deg))) if cfg.prior_noise_yaw_deg > 0 else truth.yaw,
        z=truth.z,
        pitch=truth.pitch,
        roll=truth.roll,
    )


@dataclass
class PairMetrics:
    pair_id: str
    group: str
    n_matches: int
    inlier_ratio: Dict[str, Optional[float]] = field(default_factory=dict)
    n_pruned: int = 0
    prune_skipped: bool = False
    translation_error: Optional[float] = None
    rotation_error: Optional[float] = None
    iterations: Optional[int] = None
    error: Optional[str] = None

    def to_document(self) -> dict:
        return asdict(self)


def threshold_key(threshold_px: float) -> str:
    return f"{threshold_px:g}"


def evaluate_pair(pair: ScenePair, matches: Sequence[MatchResult], cfg: EvalConfig = EvalConfig(), seed: int = 0, index: int = 0) -> PairMetrics:
    """Inlier ratios, Z-test pruning under a noisy prior, then bundle adjustment.

    Failures are recorded in `error` instead of raised so a batch can go on.
    The prior noise is drawn from (seed, index).
    """
    group = "small" if is_small_variation(pair) else "large"
    metrics = PairMetrics(pair_id=pair.pair_id, group=group, n_matches=len(matches))
    thresholds = [cfg.threshold_px] + [t for t in cfg.extra_thresholds_px if t != cfg.threshold_px]
    intr = pair.intrinsics
    try:
        if not matches:
            raise UndefinedRatioError("Empty match list.")
        for threshold in thresholds:
            report = classify_inliers(matches, pair.pose_ab, intr, threshold, cfg.arc_samples)
            metrics.inlier_ratio[threshold_key(threshold)] = report.ratio
        reference, truth = planar_ground_truth(pair)
        prior = noisy_prior(truth, cfg, np.random.default_rng([seed, index]))
        pruned = z_test_prune(matches, relative_pose_from_planar(reference, prior), intr, cfg.z_sigma, cfg.arc_samples)
        metrics.n_pruned = len(pruned.pruned)
        metrics.prune_skipped = pruned.skipped
        polar = [(pixel_to_polar(m.query, intr), pixel_to_polar(m.predicted, intr)) for m in pruned.kept]
        result = two_view_bundle_adjust(polar, prior, intr, cfg.noise_model, reference, cfg.max_iters, cfg.tol)
        metrics.translation_error, metrics.rotation_error = pose_error(result.estimate, truth)
        metrics.iterations = result.iterations
    except SonarKitError as exc:
        logger.warning("%s: %s", pair.pair_id, exc)
        metrics.error = f"{type(exc).__name__}: {exc}"
    return metrics


def _stats(values: List[float]) -> Dict[str, Optional[float]]:
    if not values:
        return {"mean": None, "std": None, "count": 0}
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "count": int(arr.size)}


def aggregate(records: Sequence[PairMetrics], threshold_px: float = 12.0) -> Dict[str, dict]:
    """(mean, std) of inlier ratio and pose errors for the small, large and all groups."""
    key = threshold_key(threshold_px)
    out = {}
    for group in ("small", "large", "all"):
        members = [m for m in records if group == "all" or m.group == group]
        out[group] = {
            "pairs": len(members),
            "failed": sum(m.error is not None for m in members),
            "inlier_ratio": _stats([m.inlier_ratio[key] for m in members if m.inlier_ratio.get(key) is not None]),
            "translation_error": _stats([m.translation_error for m in members if m.translation_error is not None]),
            "rotation_error": _stats([m.rotation_error for m in members if m.rotation_error is not None]),
        }
    return out
