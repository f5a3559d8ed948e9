"""Two-view bundle adjustment over planar pose and landmark elevations.

The state is [x, y, yaw, phi_1 .. phi_N]: the planar pose of sensor 2 in
sensor 1's level, heading-aligned frame and the unknown elevation of every
landmark. Landmark j sits at range r_j and bearing theta_j in frame 1. Its
frame-2 range and bearing are compared with the match, whitened by one
range bin and one bearing bin by default. z, pitch and roll of both
sensors are held fixed. A prior factor ties (x, y, yaw) to the prior; its
default sigmas are wide enough that the landmark terms decide the pose
and the prior only breaks ties along directions the matches leave free.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from evaluation.solver import gauss_newton_solve
from geometry.epipolar import DEFAULT_ARC_SAMPLES, relative_pose_from_sensor_poses, rotation_from_ypr
from geometry.sonar_model import spherical_to_cartesian_array
from models.entities import BundleState, PlanarPoseEstimate, RelativePose, ScenePair, SensorPose, wrap_angle
from models.errors import DegenerateGeometryError
from models.schemas import BundleNoiseModel, SonarIntrinsics

logger = logging.getLogger(__name__)

PolarMatch = Tuple[Tuple[float, float], Tuple[float, float]]

MIN_MATCHES = 3

_SKEW_Z = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


@dataclass(frozen=True, eq=False)
class BundleResult:
    estimate: PlanarPoseEstimate
    elevations: np.ndarray
    state: BundleState
    cost: float
    iterations: int
    converged: bool


def _wrap(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _rz(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class _TwoViewProblem:
    def __init__(self, matches: Sequence[PolarMatch], prior: PlanarPoseEstimate, reference: SensorPose, intr: SonarIntrinsics, noise: BundleNoiseModel):
        anchors = np.array([m[0] for m in matches], dtype=np.float64)
        measured = np.array([m[1] for m in matches], dtype=np.float64)
        self.r1, self.t1 = anchors[:, 0], anchors[:, 1]
        self.r2, self.t2 = measured[:, 0], measured[:, 1]
        self.prior = prior
        self.rot1 = rotation_from_ypr(0.0, reference.pitch, reference.roll)
        self.z1 = reference.z
        self.tilt2 = rotation_from_ypr(0.0, prior.pitch, prior.roll)
        self.sigma_r = noise.sigma_r or intr.range_resolution
        self.sigma_t = noise.sigma_theta or intr.bearing_resolution
        self.noise = noise
        self.intr = intr
        self.n = len(matches)

    def seed_elevations(self, pose: np.ndarray, samples: int = DEFAULT_ARC_SAMPLES) -> np.ndarray:
        """Per landmark, the arc sample that best reproduces the match under `pose`."""
        grid = np.linspace(self.intr.phi_min, self.intr.phi_max, samples)
        best = np.full(self.n, np.inf)
        seed = np.zeros(self.n)
        for phi in grid:
            p2 = self.frame2_points(np.concatenate([pose, np.full(self.n, phi)]))[0]
            dr = (np.linalg.norm(p2, axis=1) - self.r2) / self.sigma_r
            dt = _wrap(np.arctan2(p2[:, 1], p2[:, 0]) - self.t2) / self.sigma_t
            score = dr * dr + dt * dt
            better = score < best
            best[better] = score[better]
            seed[better] = phi
        return seed

    def project(self, state: np.ndarray) -> np.ndarray:
        out = state.copy()
        out[3:] = np.clip(out[3:], self.intr.phi_min, self.intr.phi_max)
        return out

    def frame2_points(self, state: np.ndarray):
        x, y, yaw = state[:3]
        phi = state[3:]
        p1 = spherical_to_cartesian_array(self.r1, self.t1, phi)
        q = p1 @ self.rot1.T + np.array([0.0, 0.0, self.z1])
        rz = _rz(yaw)
        r2 = rz @ self.tilt2
        d = q - np.array([x, y, self.prior.z])
        return d @ r2, d, rz, r2

    def __call__(self, state: np.ndarray):
        n = self.n
        p2, d, rz, r2 = self.frame2_points(state)
        rng = np.linalg.norm(p2, axis=1)
        planar = np.maximum(p2[:, 0] ** 2 + p2[:, 1] ** 2, 1e-18)
        bearing = np.arctan2(p2[:, 1], p2[:, 0])

        residual = np.empty(2 * n + 3)
        residual[0:2 * n:2] = (rng - self.r2) / self.sigma_r
        residual[1:2 * n:2] = _wrap(bearing - self.t2) / self.sigma_t
        residual[2 * n] = (state[0] - self.prior.x) / self.noise.prior_sigma_xy
        residual[2 * n + 1] = (state[1] - self.prior.y) / self.noise.prior_sigma_xy
        residual[2 * n + 2] = wrap_angle(state[2] - self.prior.yaw) / self.noise.prior_sigma_yaw

        # d(range, bearing) / d p2, one (2, 3) block per landmark
        d_meas = np.zeros((n, 2, 3))
        d_meas[:, 0, :] = p2 / np.maximum(rng, 1e-18)[:, None]
        d_meas[:, 1, 0] = -p2[:, 1] / planar
        d_meas[:, 1, 1] = p2[:, 0] / planar
        d_meas[:, 0, :] /= self.sigma_r
        d_meas[:, 1, :] /= self.sigma_t

        d_p2_dx = -r2.T[:, 0]
        d_p2_dy = -r2.T[:, 1]
        d_p2_dyaw = -(self.tilt2.T @ _SKEW_Z @ rz.T @ d.T).T
        phi = state[3:]
        d_p1_dphi = np.stack(
            [-self.r1 * np.cos(self.t1) * np.sin(phi), -self.r1 * np.sin(self.t1) * np.sin(phi), -self.r1 * np.cos(phi)],
            axis=1,
        )
        d_p2_dphi = d_p1_dphi @ (r2.T @ self.rot1).T

        jac = np.zeros((2 * n + 3, 3 + n))
        rows = np.arange(n)
        for k in range(2):
            block = d_meas[:, k, :]
            jac[2 * rows + k, 0] = block @ d_p2_dx
            jac[2 * rows + k, 1] = block @ d_p2_dy
            jac[2 * rows + k, 2] = np.einsum("ij,ij->i", block, d_p2_dyaw)
            jac[2 * rows + k, 3 + rows] = np.einsum("ij,ij->i", block, d_p2_dphi)
        jac[2 * n, 0] = 1.0 / self.noise.prior_sigma_xy
        jac[2 * n + 1, 1] = 1.0 / self.noise.prior_sigma_xy
        jac[2 * n + 2, 2] = 1.0 / self.noise.prior_sigma_yaw
        return residual, jac


def two_view_bundle_adjust(
    matches: Sequence[PolarMatch],
    prior: PlanarPoseEstimate,
    intr: SonarIntrinsics,
    noise: BundleNoiseModel = BundleNoiseModel(),
    reference: SensorPose = SensorPose(),
    max_iters: int = 50,
    tol: float = 1e-10,
) -> BundleResult:
    """Jointly refine the planar pose of sensor 2 and every landmark elevation.

    `matches` holds ((r1, theta1), (r2, theta2)) per landmark. `reference`
    supplies sensor 1's z, pitch and roll; z, pitch and roll of sensor 2 come
    from `prior`. Each elevation starts at the arc sample that best explains
    its match under the prior pose and stays clamped to the frustum.
    """
    if len(matches) < MIN_MATCHES:
        raise DegenerateGeometryError(f"Bundle adjustment needs at least {MIN_MATCHES} matches, got {len(matches)}.")
    problem = _TwoViewProblem(matches, prior, reference, intr, noise)
    pose0 = np.array([prior.x, prior.y, prior.yaw])
    x0 = np.concatenate([pose0, problem.seed_elevations(pose0)])
    result = gauss_newton_solve(problem, problem.project(x0), max_iters=max_iters, tol=tol, levenberg=True, project=problem.project)
    x, y, yaw = result.state[:3]
    estimate = PlanarPoseEstimate(float(x), float(y), float(yaw), z=prior.z, pitch=prior.pitch, roll=prior.roll)
    elevations = result.state[3:].copy()
    anchors = np.array([m[0] for m in matches], dtype=np.float64)
    logger.debug("Bundle adjustment: cost %.3e after %d iterations", result.cost, result.iterations)
    return BundleResult(
        estimate=estimate,
        elevations=elevations,
        state=BundleState(pose=estimate, elevations=elevations, anchors=anchors),
        cost=result.cost,
        iterations=result.iterations,
        converged=result.converged,
    )


def planar_ground_truth(pair: ScenePair) -> Tuple[SensorPose, PlanarPoseEstimate]:
    """(reference, truth): sensor a's fixed z/pitch/roll and sensor b in a's level heading frame."""
    a, b = pair.sensor_a, pair.sensor_b
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    ex, ey = b.x - a.x, b.y - a.y
    reference = SensorPose(z=a.z, pitch=a.pitch, roll=a.roll)
    truth = PlanarPoseEstimate(c * ex + s * ey, -s * ex + c * ey, b.yaw - a.yaw, z=b.z, pitch=b.pitch, roll=b.roll)
    return reference, truth


def relative_pose_from_planar(reference: SensorPose, estimate: PlanarPoseEstimate) -> RelativePose:
    sensor_b = SensorPose(estimate.x, estimate.y, estimate.z, estimate.yaw, estimate.pitch, estimate.roll)
    return relative_pose_from_sensor_poses(reference, sensor_b)
