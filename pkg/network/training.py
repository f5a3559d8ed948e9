"""Pose-supervised training of the encoder.

Each keypoint of image a is matched into image b at both levels. The
prediction is pulled onto the ground-truth epipolar contour (epipolar loss)
and sent back through the matcher to land on itself (cyclic loss). Every
term is scaled by the detached uncertainty weight of its match.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from evaluation.detector import detect_keypoints
from geometry.epipolar import epipolar_contour, polar_sq_distance_array
from geometry.sonar_model import pixel_to_polar
from matching.layer import distribution_uncertainty, window_bounds
from models.entities import Keypoint, MatchDistribution, PixelCoord, ScenePair
from models.errors import DegenerateBatchError, FrustumError
from models.schemas import EncoderConfig, SonarIntrinsics, TrainConfig
from network import autograd as ag
from network.encoder import ModelWeights, check_weights, encode_pair, init_weights, parameters
from utils.parallel import ordered_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PairGradient:
    loss: float
    epipolar: float
    cyclic: float
    gradients: Dict[str, np.ndarray]
    kept: int


@dataclass(eq=False)
class OptimizerState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class StepResult:
    loss: float
    epipolar: float
    cyclic: float
    gradients: Dict[str, np.ndarray]
    weights: ModelWeights
    state: OptimizerState


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    epipolar: float
    cyclic: float
    pairs: int


@dataclass(frozen=True, eq=False)
class FitResult:
    weights: ModelWeights
    trace: List[EpochRecord]
    state: OptimizerState

    @property
    def next_epoch(self) -> int:
        return self.trace[-1].epoch + 1 if self.trace else 0


def _polar(pixel: ag.Tensor, intr: SonarIntrinsics) -> ag.Tensor:
    """(u, v) pixel tensor to (r, theta)."""
    gain = np.array([(intr.r_max - intr.r_min) / intr.n_range, (intr.theta_max - intr.theta_min) / intr.n_bearing])
    return ag.add(ag.mul_const(pixel, gain), np.array([intr.r_min, intr.theta_min]))


def _match(
    row,
    col,
    source: ag.Tensor,
    target: ag.Tensor,
    factor: int,
    cfg: TrainConfig,
    bounds=None,
):
    """Differentiable expectation match of a source-map cell into the target map.

    Returns (expected target cell tensor (2,), detached uncertainty weight).
    """
    descriptor = ag.bilinear_sample(source, row, col)
    _, height, width = target.shape
    r0, r1, c0, c1 = bounds or (0, height, 0, width)
    probs = ag.softmax(ag.correlate(descriptor, ag.crop(target, r0, r1, c0, c1), cfg.temperature))
    dist = MatchDistribution(probabilities=probs.data.reshape(r1 - r0, c1 - c0), query=PixelCoord(0.0, 0.0), offset=(r0, c0))
    coords = dist.cell_coordinates()
    expected = ag.expectation(probs, coords)
    _, weight = distribution_uncertainty(dist, PixelCoord(*expected.data), sigma0=cfg.sigma0, scale=factor)
    return expected, weight


def _nearest_sample(contour, predicted: Tuple[float, float]) -> Tuple[float, float]:
    usable = np.flatnonzero(contour.valid)
    d = polar_sq_distance_array(contour.ranges[usable], contour.bearings[usable], predicted[0], predicted[1])
    k = usable[int(np.argmin(d))]
    return float(contour.ranges[k]), float(contour.bearings[k])


def _keypoint_terms(
    query: PixelCoord,
    contour,
    maps_a: Tuple[ag.Tensor, ag.Tensor],
    maps_b: Tuple[ag.Tensor, ag.Tensor],
    factors: Tuple[int, int],
    intr: SonarIntrinsics,
    cfg: TrainConfig,
):
    """Weighted loss tensor plus raw epipolar and cyclic values, summed over both levels."""
    target = pixel_to_polar(query, intr)
    weights = cfg.loss_weights
    terms, epipolar, cyclic = [], 0.0, 0.0
    coarse_fwd = coarse_back = None
    for level, (m1, m2, factor) in enumerate(zip(maps_a, maps_b, factors)):
        row, col = query.u / factor, query.v / factor
        if level == 0:
            fwd_bounds = back_bounds = None
        else:
            # fine windows follow the coarse predictions, detached
            _, h2, w2 = m2.shape
            _, h1, w1 = m1.shape
            fwd_bounds = window_bounds(coarse_fwd[0] / factor, coarse_fwd[1] / factor, cfg.window, h2, w2)
            back_bounds = window_bounds(coarse_back[0] / factor, coarse_back[1] / factor, cfg.window, h1, w1)
        cell_b, weight = _match(row, col, m1, m2, factor, cfg, fwd_bounds)
        predicted = _polar(ag.scale(cell_b, float(factor)), intr)
        sample = _nearest_sample(contour, tuple(predicted.data))
        ep = ag.polar_sq_distance_to(predicted, sample)
        cell_a, _ = _match(cell_b[0], cell_b[1], m2, m1, factor, cfg, back_bounds)
        roundtrip = _polar(ag.scale(cell_a, float(factor)), intr)
        cy = ag.polar_sq_distance_to(roundtrip, target)
        terms.append(ag.scale(ag.add(ag.scale(ep, weights.w_epipolar), ag.scale(cy, weights.w_cyclic)), weight))
        epipolar += ep.item()
        cyclic += cy.item()
        if level == 0:
            coarse_fwd = cell_b.data * factor
            coarse_back = cell_a.data * factor
    return ag.total(terms), epipolar, cyclic


def _usable_contours(pair: ScenePair, keypoints: Sequence[PixelCoord], cfg: TrainConfig):
    kept = []
    for kp in keypoints:
        kp = kp.pixel if isinstance(kp, Keypoint) else kp
        r, theta = pixel_to_polar(kp, pair.intrinsics)
        try:
            contour = epipolar_contour(r, theta, pair.pose_ab, pair.intrinsics, cfg.arc_samples)
        except FrustumError:
            continue
        if contour.n_in_frustum > 0:
            kept.append((kp, contour))
    return kept


def pair_gradients(
    pair: ScenePair,
    keypoints: Sequence[PixelCoord],
    weights: ModelWeights,
    cfg: TrainConfig,
    encoder_cfg: EncoderConfig,
) -> PairGradient:
    """Loss and weight gradients for one pair; weights are not modified.

    Keypoints whose contour never enters image b are dropped. The loss is the
    uncertainty-weighted joint loss summed over the kept keypoints and both
    levels; `epipolar` and `cyclic` are the unweighted sums of their terms.
    """
    if not keypoints:
        raise DegenerateBatchError("No keypoints were given for the pair.")
    usable = _usable_contours(pair, keypoints, cfg)
    if not usable:
        raise DegenerateBatchError(f"No keypoint of {pair.pair_id} has an in-frustum epipolar contour.")
    params = parameters(weights)
    (ca, fa), (cb, fb) = encode_pair(pair.image_a, pair.image_b, params, encoder_cfg)
    factors = (encoder_cfg.coarse_stride, encoder_cfg.fine_stride)
    terms, ep_sum, cy_sum = [], 0.0, 0.0
    for kp, contour in usable:
        term, ep, cy = _keypoint_terms(kp, contour, (ca, fa), (cb, fb), factors, pair.intrinsics, cfg)
        terms.append(term)
        ep_sum += ep
        cy_sum += cy
    n = len(usable)
    loss = ag.total(terms)
    loss.backward()
    grads = {
        name: (p.grad if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    return PairGradient(loss=loss.item(), epipolar=ep_sum, cyclic=cy_sum, gradients=grads, kept=n)


def sgd_update(weights: ModelWeights, grads: Dict[str, np.ndarray], cfg: TrainConfig, state: OptimizerState):
    tensors = {}
    for name, value in weights.tensors.items():
        tensors[name] = (value.astype(np.float64) - cfg.learning_rate * grads[name]).astype(value.dtype)
    return weights.replace(tensors), OptimizerState(step=state.step + 1, m=state.m, v=state.v)


def adam_update(weights: ModelWeights, grads: Dict[str, np.ndarray], cfg: TrainConfig, state: OptimizerState):
    step = state.step + 1
    m, v, tensors = {}, {}, {}
    for name, value in weights.tensors.items():
        g = grads[name]
        m[name] = cfg.beta1 * state.m.get(name, np.zeros_like(g)) + (1.0 - cfg.beta1) * g
        v[name] = cfg.beta2 * state.v.get(name, np.zeros_like(g)) + (1.0 - cfg.beta2) * g * g
        m_hat = m[name] / (1.0 - cfg.beta1 ** step)
        v_hat = v[name] / (1.0 - cfg.beta2 ** step)
        delta = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        tensors[name] = (value.astype(np.float64) - delta).astype(value.dtype)
    return weights.replace(tensors), OptimizerState(step=step, m=m, v=v)


def apply_update(weights: ModelWeights, grads: Dict[str, np.ndarray], cfg: TrainConfig, state: Optional[OptimizerState] = None):
    state = state or OptimizerState()
    if cfg.optimizer == "sgd":
        return sgd_update(weights, grads, cfg, state)
    return adam_update(weights, grads, cfg, state)


def train_step(
    pair: ScenePair,
    keypoints: Sequence[PixelCoord],
    weights: ModelWeights,
    cfg: TrainConfig,
    encoder_cfg: EncoderConfig = EncoderConfig(),
    state: Optional[OptimizerState] = None,
) -> StepResult:
    """One forward/backward pass on a pair followed by an optimizer update."""
    result = pair_gradients(pair, keypoints, weights, cfg, encoder_cfg)
    updated, state = apply_update(weights, result.gradients, cfg, state)
    return StepResult(result.loss, result.epipolar, result.cyclic, result.gradients, updated, state)


def sample_keypoints(image: np.ndarray, count: int, rng: np.random.Generator) -> List[PixelCoord]:
    """Strongest corners first, topped up with distinct random pixels."""
    picked = [kp.pixel for kp in detect_keypoints(image, max_count=count)]
    taken = {(int(p.u), int(p.v)) for p in picked}
    rows, cols = image.shape
    missing = count - len(picked)
    if missing > 0:
        free = np.ones(rows * cols, dtype=bool)
        free[[u * cols + v for u, v in taken]] = False
        free = np.flatnonzero(free)
        for i in rng.choice(free, size=min(missing, free.size), replace=False):
            picked.append(PixelCoord(float(i // cols), float(i % cols)))
    return picked


def _mean_gradients(results: Sequence[PairGradient]) -> Dict[str, np.ndarray]:
    names = results[0].gradients.keys()
    return {name: sum(r.gradients[name] for r in results) / len(results) for name in names}


def fit(
    pairs: Sequence[ScenePair],
    cfg: TrainConfig,
    encoder_cfg: EncoderConfig = EncoderConfig(),
    weights: Optional[ModelWeights] = None,
    jobs: int = 1,
    start_epoch: int = 0,
    state: Optional[OptimizerState] = None,
) -> FitResult:
    """Epoch loop over `pairs` in seeded shuffled batches.

    Gradients of a batch are computed per pair (in parallel with `jobs`),
    averaged, then applied in one optimizer step. Passing `weights`, `state`
    and `start_epoch` from an earlier run continues it exactly: the epoch
    numbers, the keypoint and shuffle streams and the Adam moments all pick
    up where it stopped.
    """
    if not pairs:
        raise DegenerateBatchError("The training set is empty.")
    weights = weights or init_weights(encoder_cfg)
    check_weights(weights, encoder_cfg)
    state = state or OptimizerState()
    trace: List[EpochRecord] = []
    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(pairs))
        losses, eps, cys, used = [], [], [], 0
        for start in range(0, len(order), cfg.batch_pairs):
            batch = order[start:start + cfg.batch_pairs]

            def run(index: int) -> Optional[PairGradient]:
                pair = pairs[index]
                kp_rng = np.random.default_rng([cfg.seed, epoch, int(index)])
                keypoints = sample_keypoints(pair.image_a, cfg.keypoints_per_frame, kp_rng)
                try:
                    return pair_gradients(pair, keypoints, weights, cfg, encoder_cfg)
                except DegenerateBatchError as exc:
                    logger.warning("Skipping pair: %s", exc)
                    return None

            results = [r for r in ordered_map(run, batch, jobs) if r is not None]
            if not results:
                continue
            weights, state = apply_update(weights, _mean_gradients(results), cfg, state)
            losses.extend(r.loss for r in results)
            eps.extend(r.epipolar for r in results)
            cys.extend(r.cyclic for r in results)
            used += len(results)
        if used == 0:
            raise DegenerateBatchError(f"Epoch {epoch}: every pair was degenerate.")
        record = EpochRecord(epoch, float(np.mean(losses)), float(np.mean(eps)), float(np.mean(cys)), used)
        logger.info(
            "epoch %d loss %.6f epipolar %.6f cyclic %.6f pairs %d",
            record.epoch, record.loss, record.epipolar, record.cyclic, record.pairs,
        )
        trace.append(record)
    return FitResult(weights=weights, trace=trace, state=state)
