import numpy as np
import pytest

from sharplab.domain_geometry import (
    GeometryError,
    InvalidSpecError,
    NormalSpeed,
    build_domain,
    build_interface,
    extend_normal_speed,
    normal_extension_function,
    normal_speed,
    plateau,
    signed_distance,
)


def square(n=64):
    return build_domain({"shape": "rectangle", "L": [1, 1], "n": [n, n]})


def test_rectangle_spacing_and_area():
    d = square(64)
    assert d.spacing == pytest.approx((1 / 63, 1 / 63))
    assert d.integrate(np.ones(d.shape)) == pytest.approx(1.0, abs=1e-14)


def test_disk_rim_curvature_and_area():
    d = build_domain({"shape": "disk", "R": 1.0, "n": [41, 128]})
    assert d.boundary_second_form((1.0, 0.0)) == pytest.approx(1.0)
    assert d.integrate(np.ones(d.shape)) == pytest.approx(np.pi, rel=1e-3)


@pytest.mark.parametrize("spec", [
    {"shape": "rectangle", "L": [1, 1], "n": [8, 64]},
    {"shape": "rectangle", "L": [0, 1], "n": [64, 64]},
    {"shape": "hexagon", "n": [64, 64]},
    {"shape": "disk", "R": -1, "n": [41, 128]},
    {"shape": "rectangle", "n": [64]},
])
def test_malformed_domains_rejected(spec):
    with pytest.raises(InvalidSpecError):
        build_domain(spec)


def test_segment_meets_boundary_orthogonally():
    d = square()
    c = build_interface(d, {"kind": "segment", "x": 0.5})
    assert c.length == pytest.approx(1.0)
    assert np.max(c.orthogonality_defect) < 1e-12
    assert np.allclose(c.curvature, 0.0)
    assert np.allclose(c.endpoint_curvature, 0.0)


def test_diameter_endpoints_see_rim_curvature():
    d = build_domain({"shape": "disk", "R": 1.0, "n": [41, 128]})
    c = build_interface(d, {"kind": "diameter", "angle": 0.0})
    assert c.length == pytest.approx(2.0)
    assert np.allclose(c.endpoint_curvature, 1.0)


def test_circle_curvature_and_length():
    d = square()
    c = build_interface(d, {"kind": "circle", "center": [0.5, 0.5], "r": 0.25})
    assert c.length == pytest.approx(np.pi / 2)
    assert np.allclose(c.curvature, 4.0)
    assert c.integrate(np.ones(c.size)) == pytest.approx(np.pi / 2)


def test_circle_crossing_boundary_rejected():
    with pytest.raises(InvalidSpecError):
        build_interface(square(), {"kind": "circle", "center": [0.5, 0.5], "r": 0.6})


def test_signed_distance_sign_convention():
    d = square()
    c = build_interface(d, {"kind": "circle", "center": [0.5, 0.5], "r": 0.25})
    sd = signed_distance(c, d)
    X, Y = d.coords
    exact = np.hypot(X - 0.5, Y - 0.5) - 0.25
    assert np.max(np.abs(sd - exact)) < 1e-10


def test_normal_speed_mean_zero_flag():
    c = build_interface(square(), {"kind": "circle", "center": [0.5, 0.5], "r": 0.25})
    assert normal_speed(c, lambda s: np.cos(2 * s / 0.25)).mean_zero
    assert not normal_speed(c, lambda s: 1 + 0 * s).mean_zero
    with pytest.raises(InvalidSpecError):
        NormalSpeed(np.array([1.0, np.nan]))


def test_plateau_cutoff():
    assert plateau(0.0) == 1.0 and plateau(0.5) == 1.0
    assert plateau(1.0) == 0.0 and plateau(2.0) == 0.0
    assert 0 < plateau(0.75) < 1


@pytest.mark.parametrize("iface", [{"kind": "segment", "x": 0.5},
                                   {"kind": "circle", "center": [0.5, 0.5], "r": 0.25}])
def test_extension_restricts_to_normal_speed(iface):
    d = square()
    c = build_interface(d, iface)
    xi = normal_speed(c, lambda s: np.cos(3 * s))
    eta = extend_normal_speed(c, d, xi)
    assert eta.tangent and eta.normal_defect() < 1e-12
    ex, ey = eta(*c.nodes.T)
    on_curve = ex * c.normal[:, 0] + ey * c.normal[:, 1]
    if c.closed:
        assert np.max(np.abs(on_curve - xi.values)) < 1e-10
    else:
        # the boundary layer switches the normal component off near the ends
        inner = (c.s > 0.3) & (c.s < 0.7)
        assert np.max(np.abs(on_curve - xi.values)[inner]) < 1e-10
    tangential = ex * c.tangent[:, 0] + ey * c.tangent[:, 1]
    assert np.max(np.abs(tangential)) < 1e-10


def test_extension_is_constant_along_normals_near_curve():
    d = square()
    c = build_interface(d, {"kind": "circle", "center": [0.5, 0.5], "r": 0.25})
    f = normal_extension_function(c, d, normal_speed(c, lambda s: 1 + 0 * s))
    for t in (-0.01, 0.01):
        pts = c.nodes + t * c.normal
        ex, ey = f(*pts.T)
        assert np.allclose(ex * c.normal[:, 0] + ey * c.normal[:, 1], 1.0)


def test_non_orthogonal_contact_rejected():
    d = square()
    c = build_interface(d, {"kind": "segment", "endpoints": [[0.3, 0.0], [0.7, 1.0]]})
    with pytest.raises(GeometryError):
        extend_normal_speed(c, d, normal_speed(c, lambda s: 1 + 0 * s))
