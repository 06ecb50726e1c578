import json

import numpy as np
import pytest

from sharplab.domain_geometry import build_domain, build_interface, extend_normal_speed, normal_speed
from sharplab.energies import green_kernel
from sharplab.fields_calculus import VectorField
from sharplab.sharp_interface import (
    InterfacePotential,
    criticality_audit,
    geometric_first_variation,
    geometric_second_variation,
    length_family_oracle,
    limit_prediction,
    normal_speed_second_variation,
    normal_stretch,
    ok_sharp_second_variation,
    ok_sharp_terms,
    polyline_length,
    prediction_json,
    sharp_phase,
    sharp_potential,
    tangential_dirichlet,
)


def square(n=65):
    return build_domain({"shape": "rectangle", "L": [1, 1], "n": [n, n]})


def unit_disk():
    return build_domain({"shape": "disk", "R": 1.0, "n": [41, 128]})


@pytest.fixture(scope="module")
def circle_setup():
    d = square(129)
    c = build_interface(d, {"kind": "circle", "center": [0.5, 0.5], "r": 0.25})
    return d, c


def test_polyline_length():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    assert polyline_length(sq, closed=True) == 4.0
    assert polyline_length(sq, closed=False) == 3.0


def test_tangential_dirichlet_of_cosine():
    c = build_interface(square(), {"kind": "segment", "x": 0.5})
    val = tangential_dirichlet(c, np.cos(np.pi * c.s))
    assert val == pytest.approx(np.pi**2 / 2, rel=1e-6)


def test_disk_diameter_constant_speed():
    d = unit_disk()
    c = build_interface(d, {"kind": "diameter"})
    xi = normal_speed(c, lambda s: 1 + 0 * s)
    assert normal_speed_second_variation(c, xi, d) == pytest.approx(-2.0)


def test_circle_second_variation_of_modes(circle_setup):
    _, c = circle_setup
    r = 0.25
    for m in (1, 2, 3):
        xi = normal_speed(c, lambda s: np.cos(m * s / r))
        # with acceleration Z the H² and |A|² terms cancel on a curve
        expected = m * m / r**2 * np.pi * r
        assert normal_speed_second_variation(c, xi) == pytest.approx(expected, rel=1e-6, abs=1e-8)


def test_geometric_variations_match_length_family(circle_setup):
    d, _ = circle_setup
    # a fine polyline keeps the chord error of the oracle near 1e-7
    c = build_interface(d, {"kind": "circle", "center": [0.5, 0.5], "r": 0.25}, ds=d.h / 8)
    xi = normal_speed(c, lambda s: 1 + 0.5 * np.cos(2 * s / 0.25))
    eta = extend_normal_speed(c, d, xi)
    of, os_ = length_family_oracle(c, eta)
    assert geometric_first_variation(c, eta) == pytest.approx(of, rel=1e-6)
    assert geometric_second_variation(c, eta) == pytest.approx(os_, rel=1e-5)


def test_normal_stretch_vanishes_for_normal_extension(circle_setup):
    d, c = circle_setup
    eta = extend_normal_speed(c, d, normal_speed(c, lambda s: np.cos(3 * s / 0.25)))
    assert np.max(np.abs(normal_stretch(c, eta))) < 1e-6


def test_sharp_potential_of_lamella():
    d = square(129)
    c = build_interface(d, {"kind": "segment", "x": 0.5})
    u0 = sharp_phase(d, c)
    X, _ = d.coords
    assert u0.values[X < 0.49].min() == 1.0 and u0.values[X > 0.51].max() == -1.0
    pot = InterfacePotential(sharp_potential(d, c), c)
    # -v'' = u₀ on (0, 1) with v' = 0 at both ends: v' = -x left of the interface
    assert np.allclose(pot.values, 0.0, atol=1e-10)
    assert np.allclose(pot.normal_derivative, -0.5, atol=1e-3)


def test_criticality_audit():
    d = square()
    circle = build_interface(d, {"kind": "circle", "center": [0.5, 0.5], "r": 0.25})
    audit = criticality_audit(circle)
    assert audit["H_residual"] < 1e-12 and audit["lambda_estimate"] == pytest.approx(4.0)
    seg = build_interface(d, {"kind": "segment", "x": 0.5})
    audit = criticality_audit(seg, gamma=1.0, domain=d)
    assert audit["H_residual"] < 1e-8 and audit["orthogonality_defect"] < 1e-12


def test_ok_sharp_terms_sum_and_sign():
    d = square(129)
    c = build_interface(d, {"kind": "segment", "x": 0.5})
    G = green_kernel(d)
    v0 = sharp_potential(d, c)
    xi = normal_speed(c, lambda s: np.cos(np.pi * s))
    terms = ok_sharp_terms(c, xi, 1.0, v0=v0, G=G)
    total = ok_sharp_second_variation(c, xi, 1.0, v0=v0, G=G)
    assert total == pytest.approx(sum(terms.values()))
    assert terms["greens"] > 0 and terms["potential"] < 0 and terms["curvature"] == 0
    assert ok_sharp_second_variation(c, xi, 0.0) == pytest.approx(terms["dirichlet"])


def test_limit_prediction_keys_and_scaling(circle_setup):
    d, c = circle_setup
    eta = extend_normal_speed(c, d, normal_speed(c, lambda s: np.cos(2 * s / 0.25)))
    pred = limit_prediction(c, eta, gamma=1.0, domain=d)
    for key in ("ac.first", "ac.second", "b.first", "b.second", "ok.first", "ok.second"):
        assert key in pred
    assert pred["ac.second"] == pytest.approx(4 / 3 * (pred["ac.second_geometric"] + pred["ac.term_normal"]))
    assert pred["ok.second"] == pytest.approx(4 / 3 * pred["ok.second_scaled"])
    assert set(json.loads(prediction_json(pred))) == set(pred)


def test_limit_prediction_needs_tangent_eta():
    d = square()
    c = build_interface(d, {"kind": "segment", "x": 0.5})
    eta = VectorField.from_function(d, lambda x, y: (1 + 0 * x, 0 * y))
    with pytest.raises(ValueError):
        limit_prediction(c, eta)
