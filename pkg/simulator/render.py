"""Polar intensity rendering of a scene from one sensor pose.

Landmarks deposit Gaussian spots at their (range, bearing) pixel, the floor
returns wherever a pixel's elevation arc crosses it, contributions add and
are clamped to 1. Speckle and additive noise come last.
"""
import math

import numpy as np

from geometry.epipolar import sensor_rotation, world_to_sensor
from geometry.sonar_model import cartesian_to_spherical_array, in_frustum_array, pixel_to_polar_array, polar_to_pixel_array
from models.entities import Scene, SensorPose
from models.schemas import NoiseConfig, SonarIntrinsics


def elevation_falloff(phi, intr: SonarIntrinsics) -> np.ndarray:
    """cos^2 of the elevation scaled so the frustum edge maps to pi/2."""
    limit = max(abs(intr.phi_min), abs(intr.phi_max))
    phi = np.asarray(phi, dtype=np.float64)
    if limit == 0.0:
        return np.ones_like(phi)
    return np.cos(phi / limit * (math.pi / 2.0)) ** 2


def _pixel_grid(intr: SonarIntrinsics):
    return np.meshgrid(np.arange(intr.n_range, dtype=np.float64), np.arange(intr.n_bearing, dtype=np.float64), indexing="ij")


def render_landmarks(scene: Scene, pose: SensorPose, intr: SonarIntrinsics) -> np.ndarray:
    image = np.zeros((intr.n_range, intr.n_bearing))
    positions = np.stack([lm.position for lm in scene.landmarks])
    local = world_to_sensor(positions, pose)
    norms = np.linalg.norm(local, axis=1)
    live = norms > 0.0
    r = np.zeros(len(positions))
    theta = np.zeros(len(positions))
    phi = np.zeros(len(positions))
    if np.any(live):
        r[live], theta[live], phi[live] = cartesian_to_spherical_array(local[live])
    visible = live & in_frustum_array(r, theta, phi, intr)
    if not np.any(visible):
        return image
    uu, vv = _pixel_grid(intr)
    u0, v0 = polar_to_pixel_array(r, theta, intr)
    amplitude = np.array([lm.reflectivity for lm in scene.landmarks]) * elevation_falloff(phi, intr)
    for i in np.flatnonzero(visible):
        spot = scene.landmarks[i].spot_radius
        sigma_u = spot / intr.range_resolution
        sigma_v = spot / (max(r[i], 1e-9) * intr.bearing_resolution)
        image += amplitude[i] * np.exp(-0.5 * (((uu - u0[i]) / sigma_u) ** 2 + ((vv - v0[i]) / sigma_v) ** 2))
    return image


def render_floor(scene: Scene, pose: SensorPose, intr: SonarIntrinsics) -> np.ndarray:
    """Every elevation inside the frustum where a pixel's arc meets the floor adds a return.

    A point on the arc at elevation phi has world height
    c_z + r[(a0 cos t + a1 sin t) cos phi - a2 sin phi], with a the third row
    of the sensor rotation, so the crossings solve A cos phi + B sin phi = C.
    """
    image = np.zeros((intr.n_range, intr.n_bearing))
    if scene.floor is None:
        return image
    uu, vv = _pixel_grid(intr)
    r, theta = pixel_to_polar_array(uu, vv, intr)
    a = sensor_rotation(pose)[2]
    big_a = r * (a[0] * np.cos(theta) + a[1] * np.sin(theta))
    big_b = -r * a[2]
    big_c = scene.floor.height - pose.z
    rho = np.hypot(big_a, big_b)
    hit = (rho > 0.0) & (np.abs(big_c) <= rho)
    base = np.arctan2(big_b, big_a)
    spread = np.arccos(np.clip(np.where(hit, big_c / np.where(rho > 0.0, rho, 1.0), 0.0), -1.0, 1.0))
    for sign in (1.0, -1.0):
        phi = (base + sign * spread + math.pi) % (2.0 * math.pi) - math.pi
        inside = hit & (phi >= intr.phi_min) & (phi <= intr.phi_max)
        if sign < 0.0:
            # a tangent crossing is a single root
            inside &= spread > 0.0
        image += np.where(inside, scene.floor.reflectivity * elevation_falloff(phi, intr), 0.0)
    return image


def apply_noise(image: np.ndarray, noise: NoiseConfig, rng: np.random.Generator) -> np.ndarray:
    """Multiplicative exponential speckle, then additive Gaussian noise; clamped to [0, 1]."""
    out = image
    if noise.speckle_strength > 0.0:
        s = noise.speckle_strength
        out = out * (1.0 - s + s * rng.exponential(1.0, size=image.shape))
    if noise.additive_sigma > 0.0:
        out = out + rng.normal(0.0, noise.additive_sigma, size=image.shape)
    return np.clip(out, 0.0, 1.0)


def render(
    scene: Scene,
    pose: SensorPose,
    intr: SonarIntrinsics,
    noise: NoiseConfig = NoiseConfig(),
    frame_index: int = 0,
) -> np.ndarray:
    """(n_range, n_bearing) image in [0, 1]; noise is drawn from (noise.seed, frame_index)."""
    clean = np.clip(render_landmarks(scene, pose, intr) + render_floor(scene, pose, intr), 0.0, 1.0)
    rng = np.random.default_rng([noise.seed, frame_index])
    return apply_noise(clean, noise, rng)
