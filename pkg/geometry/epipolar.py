"""Sonar epipolar geometry and the polar-space losses.

An image-1 pixel (r, theta) fixes an elevation arc; transforming the arc into
frame 2 and projecting it gives the epipolar contour, the sonar analogue of
the epipolar line. Losses are squared chord distances in metric polar space.
"""
import math
from typing import Sequence, Tuple

import numpy as np

from geometry.sonar_model import (
    cartesian_to_spherical_array,
    in_frustum_array,
    polar_to_pixel_array,
    spherical_to_cartesian_array,
)
from models.entities import EpipolarContour, RelativePose, SensorPose
from models.errors import EmptyContourError, FrustumError, ShapeError
from models.schemas import LossWeights, SonarIntrinsics

DEFAULT_ARC_SAMPLES = 64


def rotation_from_ypr(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """R = Rz(yaw) Ry(pitch) Rx(roll)."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


def yaw_of(rotation: np.ndarray) -> float:
    return math.atan2(rotation[1, 0], rotation[0, 0])


def sensor_rotation(pose: SensorPose) -> np.ndarray:
    return rotation_from_ypr(pose.yaw, pose.pitch, pose.roll)


def relative_pose_from_sensor_poses(a: SensorPose, b: SensorPose) -> RelativePose:
    """Pose mapping frame-a coordinates into frame b."""
    ra, rb = sensor_rotation(a), sensor_rotation(b)
    rotation = rb.T @ ra
    # re-orthonormalize to absorb round-off before validation
    u, _, vt = np.linalg.svd(rotation)
    rotation = u @ vt
    return RelativePose(rotation, rb.T @ (a.position - b.position))


def world_to_sensor(points: np.ndarray, pose: SensorPose) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return (points - pose.position) @ sensor_rotation(pose)


def sample_elevation_arc(r: float, theta: float, intr: SonarIntrinsics, n_samples: int = DEFAULT_ARC_SAMPLES) -> np.ndarray:
    """(n_samples, 3) points of the elevation arc, phi uniform over the frustum."""
    if n_samples < 2:
        raise ValueError("An elevation arc needs at least two samples.")
    if not (intr.r_min <= r <= intr.r_max and intr.theta_min <= theta <= intr.theta_max):
        raise FrustumError(f"Query (r={r:.4f}, theta={theta:.4f}) lies outside the frustum.")
    phis = np.linspace(intr.phi_min, intr.phi_max, n_samples)
    return spherical_to_cartesian_array(r, theta, phis)


def epipolar_contour(
    r: float,
    theta: float,
    pose: RelativePose,
    intr: SonarIntrinsics,
    n_samples: int = DEFAULT_ARC_SAMPLES,
    intr_b: SonarIntrinsics = None,
) -> EpipolarContour:
    """Project the elevation arc of image-1 pixel (r, theta) into image 2.

    Samples whose transformed point hits the frame-2 origin are marked
    invalid instead of aborting the contour.
    """
    intr_b = intr_b or intr
    arc = sample_elevation_arc(r, theta, intr, n_samples)
    phis = np.linspace(intr.phi_min, intr.phi_max, n_samples)
    moved = pose.apply(arc)
    norms = np.linalg.norm(moved, axis=1)
    valid = norms > 0.0
    ranges = np.zeros(n_samples)
    bearings = np.zeros(n_samples)
    elevations = np.zeros(n_samples)
    if np.any(valid):
        rr, tt, pp = cartesian_to_spherical_array(moved[valid])
        ranges[valid], bearings[valid], elevations[valid] = rr, tt, pp
    inside = valid & in_frustum_array(ranges, bearings, elevations, intr_b)
    return EpipolarContour(ranges=ranges, bearings=bearings, phis=phis, in_frustum=inside, valid=valid)


def polar_sq_distance(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    return float(polar_sq_distance_array(a[0], a[1], b[0], b[1]))


def polar_sq_distance_array(r1, t1, r2, t2) -> np.ndarray:
    """Law of cosines: r1^2 + r2^2 - 2 r1 r2 cos(t1 - t2)."""
    return r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * np.cos(t1 - t2)


def polar_sq_distance_grad(target: Tuple[float, float], point: Tuple[float, float]) -> np.ndarray:
    """Gradient of the squared distance with respect to `point` = (r, theta)."""
    r1, t1 = target
    r2, t2 = point
    return np.array([2.0 * r2 - 2.0 * r1 * math.cos(t1 - t2), -2.0 * r1 * r2 * math.sin(t1 - t2)])


def epipolar_loss(predicted: Tuple[float, float], contour: EpipolarContour) -> Tuple[float, np.ndarray]:
    """Minimum squared polar distance from `predicted` to the contour samples.

    Out-of-frustum samples take part; invalid ones do not. The gradient is
    taken at the first (lowest-phi) argmin.
    """
    usable = np.flatnonzero(contour.valid)
    if usable.size == 0:
        raise EmptyContourError("The epipolar contour has no usable samples.")
    d = polar_sq_distance_array(contour.ranges[usable], contour.bearings[usable], predicted[0], predicted[1])
    k = usable[int(np.argmin(d))]
    loss = float(np.min(d))
    grad = polar_sq_distance_grad((contour.ranges[k], contour.bearings[k]), predicted)
    return loss, grad


def cyclic_loss(x1: Tuple[float, float], roundtrip: Tuple[float, float]) -> Tuple[float, np.ndarray]:
    return polar_sq_distance(x1, roundtrip), polar_sq_distance_grad(x1, roundtrip)


def joint_loss(epipolar: Sequence[float], cyclic: Sequence[float], weights: LossWeights = LossWeights()) -> float:
    ep = np.asarray(epipolar, dtype=np.float64)
    cy = np.asarray(cyclic, dtype=np.float64)
    if ep.shape != cy.shape:
        raise ShapeError(f"Loss lists differ in length: {ep.shape} vs {cy.shape}.")
    return float(np.sum(weights.w_epipolar * ep + weights.w_cyclic * cy))


def contour_distance_px(predicted_px: Tuple[float, float], contour: EpipolarContour, intr: SonarIntrinsics) -> float:
    """Pixel-space distance from a predicted pixel to the contour polyline.

    Consecutive valid samples are joined by segments, which removes most of
    the arc-discretization error. Returns inf for a contour with no valid
    sample.
    """
    usable = np.flatnonzero(contour.valid)
    if usable.size == 0:
        return math.inf
    u, v = polar_to_pixel_array(contour.ranges[usable], contour.bearings[usable], intr)
    pts = np.stack([u, v], axis=1)
    p = np.asarray(predicted_px, dtype=np.float64)
    if pts.shape[0] == 1:
        return float(np.linalg.norm(p - pts[0]))
    a, b = pts[:-1], pts[1:]
    # do not bridge a gap left by an invalid sample
    adjacent = np.diff(usable) == 1
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.where(denom > 0.0, np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0.0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    seg = np.linalg.norm(closest - p, axis=1)
    vertex = np.linalg.norm(pts - p, axis=1)
    best = float(np.min(vertex))
    if np.any(adjacent):
        best = min(best, float(np.min(seg[adjacent])))
    return best
