import json
import math

import numpy as np
import pytest

from geometry.sonar_model import (
    available_presets,
    cartesian_to_spherical,
    cartesian_to_spherical_array,
    in_frustum,
    intrinsics_to_json,
    load_intrinsics,
    pixel_size,
    pixel_to_polar,
    polar_to_pixel,
    project_to_image_plane,
    project_to_image_plane_array,
    spherical_to_cartesian,
    spherical_to_cartesian_array,
)
from models.entities import CartesianPoint, PixelCoord, SphericalPoint
from models.errors import ConfigError, DegeneratePointError
from models.schemas import SonarIntrinsics


@pytest.mark.parametrize(
    "sph, expected",
    [
        ((1.0, 0.0, 0.0), (1.0, 0.0, 0.0)),
        ((2.0, math.pi / 2, 0.0), (0.0, 2.0, 0.0)),
        ((1.0, 0.0, math.pi / 6), (math.cos(math.pi / 6), 0.0, -0.5)),
    ],
)
def test_spherical_to_cartesian(sph, expected):
    p = spherical_to_cartesian(SphericalPoint(*sph))
    np.testing.assert_allclose(p.as_array(), expected, atol=1e-12)


@pytest.mark.parametrize(
    "xyz, expected",
    [
        ((1.0, 0.0, 0.0), (1.0, 0.0, 0.0)),
        ((0.0, 0.0, -1.0), (1.0, 0.0, math.pi / 2)),
        ((math.cos(math.pi / 6), 0.0, -0.5), (1.0, 0.0, math.pi / 6)),
    ],
)
def test_cartesian_to_spherical(xyz, expected):
    s = cartesian_to_spherical(CartesianPoint(*xyz))
    np.testing.assert_allclose((s.r, s.theta, s.phi), expected, atol=1e-12)


def test_origin_is_degenerate():
    with pytest.raises(DegeneratePointError):
        cartesian_to_spherical(CartesianPoint(0.0, 0.0, 0.0))
    with pytest.raises(DegeneratePointError):
        project_to_image_plane(CartesianPoint(0.0, 0.0, 0.0))


def test_invalid_spherical_point_rejected():
    with pytest.raises(DegeneratePointError):
        SphericalPoint(-1.0, 0.0, 0.0)
    with pytest.raises(DegeneratePointError):
        SphericalPoint(1.0, 0.0, 2.0)


def test_round_trip_random_points(rng):
    r = rng.uniform(0.1, 50.0, 10_000)
    theta = rng.uniform(-math.pi + 1e-6, math.pi - 1e-6, 10_000)
    phi = rng.uniform(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6, 10_000)
    r2, t2, p2 = cartesian_to_spherical_array(spherical_to_cartesian_array(r, theta, phi))
    np.testing.assert_allclose(r2, r, rtol=1e-12)
    np.testing.assert_allclose(t2, theta, atol=1e-12)
    np.testing.assert_allclose(p2, phi, atol=1e-12)


@pytest.mark.parametrize(
    "xyz, expected",
    [
        ((3.0, 4.0, 0.0), (5.0, math.atan2(4.0, 3.0))),
        ((1.0, 0.0, -1.0), (math.sqrt(2.0), 0.0)),
        ((math.cos(math.pi / 6), 0.0, -0.5), (1.0, 0.0)),
    ],
)
def test_project_to_image_plane(xyz, expected):
    np.testing.assert_allclose(project_to_image_plane(CartesianPoint(*xyz)), expected, atol=1e-12)


def test_projection_drops_elevation(rng):
    r, theta = 3.7, 0.4
    phi = rng.uniform(-1.2, 1.2, 200)
    rr, tt = project_to_image_plane_array(spherical_to_cartesian_array(r, theta, phi))
    np.testing.assert_allclose(rr, r, rtol=1e-12)
    np.testing.assert_allclose(tt, theta, atol=1e-12)


def test_polar_to_pixel_corners_and_midpoint(desk):
    p = polar_to_pixel(desk.r_min, desk.theta_min, desk)
    assert (p.u, p.v) == (0.0, 0.0)
    mid = polar_to_pixel((desk.r_min + desk.r_max) / 2, 0.0, desk)
    assert mid.u == pytest.approx(desk.n_range / 2)
    assert mid.v == pytest.approx(desk.n_bearing / 2)


def test_threshold_conversion_on_long_range_preset(m1200):
    assert polar_to_pixel(0.23, 0.0, m1200).u == pytest.approx(11.776)
    meters, _ = pixel_size(m1200)
    assert 12 * meters == pytest.approx(0.234375)


def test_pixel_polar_inverse(desk, rng):
    for r, theta in zip(rng.uniform(desk.r_min, desk.r_max, 50), rng.uniform(desk.theta_min, desk.theta_max, 50)):
        r2, t2 = pixel_to_polar(polar_to_pixel(r, theta, desk), desk)
        assert r2 == pytest.approx(r, abs=1e-12)
        assert t2 == pytest.approx(theta, abs=1e-12)
    assert pixel_to_polar(PixelCoord(0.0, 0.0), desk) == (desk.r_min, desk.theta_min)


def test_in_frustum_closed_intervals(desk):
    assert in_frustum(SphericalPoint(5.5, 0.0, 0.0), desk)
    assert in_frustum(SphericalPoint(5.5, 0.0, desk.phi_max), desk)
    assert in_frustum(SphericalPoint(desk.r_max, desk.theta_min, desk.phi_min), desk)
    assert not in_frustum(SphericalPoint(desk.r_max + 1e-9, 0.0, 0.0), desk)
    assert not in_frustum(SphericalPoint(5.5, 0.0, desk.phi_max + 1e-9), desk)


def test_presets_and_json_document(tmp_path):
    assert {"desk-64", "didson", "m1200d-lf"} <= set(available_presets())
    intr = load_intrinsics("didson")
    assert (intr.n_range, intr.n_bearing) == (512, 96)
    path = tmp_path / "custom.json"
    path.write_text(intrinsics_to_json(intr, name="custom"), encoding="utf-8")
    assert json.loads(path.read_text(encoding="utf-8"))["name"] == "custom"
    again = load_intrinsics(path)
    assert again.n_range == intr.n_range
    assert again.theta_max == pytest.approx(intr.theta_max)


def test_unknown_or_invalid_intrinsics(tmp_path):
    with pytest.raises(ConfigError):
        load_intrinsics("no-such-sonar")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"r_min": 5.0, "r_max": 1.0}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_intrinsics(bad)


def test_intrinsics_validation():
    base = dict(r_min=1.0, r_max=2.0, theta_min=-0.5, theta_max=0.5, phi_min=-0.1, phi_max=0.1, n_range=4, n_bearing=4)
    SonarIntrinsics(**{**base, "phi_min": 0.0, "phi_max": 0.0})
    with pytest.raises(ValueError):
        SonarIntrinsics(**{**base, "r_max": 1.0})
    with pytest.raises(ValueError):
        SonarIntrinsics(**{**base, "theta_min": 0.6})
    with pytest.raises(ValueError):
        SonarIntrinsics(**{**base, "n_range": 0})
