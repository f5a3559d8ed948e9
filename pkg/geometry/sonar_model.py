"""Imaging-sonar sensor model.

Frame convention: x forward, y left, z up. A point at elevation phi sits at
z = -r sin(phi), so positive elevation looks down. Images live in polar
(range-bearing) space; pixel index u addresses range, v addresses bearing,
and integer coordinates are the sample positions r_min + u * dr,
theta_min + v * dtheta.
"""
import json
import math
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from models.entities import CartesianPoint, PixelCoord, SphericalPoint, wrap_angle
from models.errors import ConfigError, DegeneratePointError
from models.schemas import SonarIntrinsics

PRESET_DIR = Path(__file__).resolve().parent / "presets"
DEFAULT_PRESET = "desk-64"


def spherical_to_cartesian(p: SphericalPoint) -> CartesianPoint:
    return CartesianPoint.from_array(spherical_to_cartesian_array(p.r, p.theta, p.phi))


def spherical_to_cartesian_array(r, theta, phi) -> np.ndarray:
    """Broadcasting form; returns (..., 3)."""
    r, theta, phi = np.broadcast_arrays(
        np.asarray(r, dtype=np.float64), np.asarray(theta, dtype=np.float64), np.asarray(phi, dtype=np.float64)
    )
    cos_phi = np.cos(phi)
    return np.stack([r * np.cos(theta) * cos_phi, r * np.sin(theta) * cos_phi, -r * np.sin(phi)], axis=-1)


def cartesian_to_spherical(p: CartesianPoint) -> SphericalPoint:
    r, theta, phi = cartesian_to_spherical_array(p.as_array())
    return SphericalPoint(float(r), float(theta), float(phi))


def cartesian_to_spherical_array(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    points = np.asarray(points, dtype=np.float64)
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    if np.any(r == 0.0):
        raise DegeneratePointError("Cannot convert the sensor origin to spherical coordinates.")
    theta = _wrap_array(np.arctan2(y, x))
    phi = np.arctan2(-z, np.hypot(x, y))
    return r, theta, phi


def project_to_image_plane(p: CartesianPoint) -> Tuple[float, float]:
    r, theta = project_to_image_plane_array(p.as_array())
    return float(r), float(theta)


def project_to_image_plane_array(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-elevation projection: (|p|, atan2(y, x)). Elevation folds into range."""
    points = np.asarray(points, dtype=np.float64)
    r = np.linalg.norm(points, axis=-1)
    if np.any(r == 0.0):
        raise DegeneratePointError("Cannot project the sensor origin.")
    return r, _wrap_array(np.arctan2(points[..., 1], points[..., 0]))


def polar_to_pixel(r: float, theta: float, intr: SonarIntrinsics) -> PixelCoord:
    u, v = polar_to_pixel_array(r, theta, intr)
    return PixelCoord(float(u), float(v))


def polar_to_pixel_array(r, theta, intr: SonarIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    u = (np.asarray(r, dtype=np.float64) - intr.r_min) / (intr.r_max - intr.r_min) * intr.n_range
    v = (np.asarray(theta, dtype=np.float64) - intr.theta_min) / (intr.theta_max - intr.theta_min) * intr.n_bearing
    return u, v


def pixel_to_polar(pixel: PixelCoord, intr: SonarIntrinsics) -> Tuple[float, float]:
    r, theta = pixel_to_polar_array(pixel.u, pixel.v, intr)
    return float(r), float(theta)


def pixel_to_polar_array(u, v, intr: SonarIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    r = intr.r_min + np.asarray(u, dtype=np.float64) / intr.n_range * (intr.r_max - intr.r_min)
    theta = intr.theta_min + np.asarray(v, dtype=np.float64) / intr.n_bearing * (intr.theta_max - intr.theta_min)
    return r, theta


def pixel_size(intr: SonarIntrinsics) -> Tuple[float, float]:
    """(meters per range bin, radians per bearing bin)."""
    return intr.range_resolution, intr.bearing_resolution


def in_frustum(p: SphericalPoint, intr: SonarIntrinsics) -> bool:
    return bool(in_frustum_array(p.r, p.theta, p.phi, intr))


def in_frustum_array(r, theta, phi, intr: SonarIntrinsics) -> np.ndarray:
    r, theta, phi = np.asarray(r), np.asarray(theta), np.asarray(phi)
    return (
        (intr.r_min <= r) & (r <= intr.r_max)
        & (intr.theta_min <= theta) & (theta <= intr.theta_max)
        & (intr.phi_min <= phi) & (phi <= intr.phi_max)
    )


def in_image_array(u, v, intr: SonarIntrinsics) -> np.ndarray:
    u, v = np.asarray(u), np.asarray(v)
    return (0.0 <= u) & (u < intr.n_range) & (0.0 <= v) & (v < intr.n_bearing)


@lru_cache(maxsize=None)
def _load_preset(name: str) -> SonarIntrinsics:
    path = PRESET_DIR / f"{name}.json"
    with path.open("r", encoding="utf-8") as fh:
        return SonarIntrinsics.from_document(json.load(fh))


def available_presets() -> list:
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def load_intrinsics(name_or_path: Union[str, Path]) -> SonarIntrinsics:
    """Resolve a preset name or a JSON document path."""
    name = str(name_or_path)
    if name in available_presets():
        return _load_preset(name)
    path = Path(name)
    if not path.is_file():
        raise ConfigError(f"Unknown intrinsics preset or file: {name} (presets: {', '.join(available_presets())})")
    try:
        with path.open("r", encoding="utf-8") as fh:
            return SonarIntrinsics.from_document(json.load(fh))
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Invalid intrinsics document {path}: {exc}") from exc


def intrinsics_to_json(intr: SonarIntrinsics, name: Optional[str] = None) -> str:
    doc = intr.to_document()
    if name:
        doc["name"] = name
    return json.dumps(doc, indent=2, sort_keys=True)


def _wrap_array(a: np.ndarray) -> np.ndarray:
    # atan2 returns +pi on the negative x axis; bearings live in [-pi, pi)
    a = np.asarray(a, dtype=np.float64)
    return np.where(a >= math.pi, a - 2.0 * math.pi, a)


__all__ = [
    "intrinsics_to_json",
    "spherical_to_cartesian",
    "spherical_to_cartesian_array",
    "cartesian_to_spherical",
    "cartesian_to_spherical_array",
    "project_to_image_plane",
    "project_to_image_plane_array",
    "polar_to_pixel",
    "polar_to_pixel_array",
    "pixel_to_polar",
    "pixel_to_polar_array",
    "pixel_size",
    "in_frustum",
    "in_frustum_array",
    "in_image_array",
    "load_intrinsics",
    "available_presets",
    "wrap_angle",
]
