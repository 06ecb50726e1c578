import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sharplab.domain_geometry import InvalidSpecError, build_domain, build_interface, normal_speed
from sharplab.energies import (
    SURFACE_TENSION,
    Integrand,
    ModelParams,
    allen_cahn_energy,
    discrepancy_report,
    green_curve_matrix,
    green_kernel,
    green_surface_form,
    nonlocal_energy,
    ohta_kawasaki_energy,
    phi_primitive,
    poisson_neumann,
    smeared_source_form,
    solve_neumann,
)
from sharplab.fields_calculus import ScalarField


def square(n=64, L=(1.0, 1.0)):
    return build_domain({"shape": "rectangle", "L": list(L), "n": [n, n]})


def test_constants():
    assert SURFACE_TENSION == pytest.approx(4 / 3)
    assert phi_primitive(1.0) == pytest.approx(2 / 3)
    assert phi_primitive(-1.0) == pytest.approx(-2 / 3)
    assert phi_primitive(2.0) == pytest.approx(2 / 3 + (8 / 3 - 2) - (1 / 3 - 1))


@pytest.mark.parametrize("eps,gamma,m", [(0, 0, None), (-1, 0, None), (0.1, -1, None), (0.1, 0, 1.0)])
def test_model_params_validation(eps, gamma, m):
    with pytest.raises(InvalidSpecError):
        ModelParams(eps, gamma, m)


def test_allen_cahn_energy_of_constants():
    d = square()
    assert allen_cahn_energy(ScalarField(d, np.zeros(d.shape)), ModelParams(0.1)) == pytest.approx(5.0)
    assert allen_cahn_energy(ScalarField(d, np.ones(d.shape)), ModelParams(0.1)) == 0.0


def test_integrand_self_test_catches_wrong_derivative():
    with pytest.raises(ValueError):
        Integrand(F=lambda z, px, py: z * z, Fz=lambda z, px, py: z,
                  Fp=lambda z, px, py: (0 * z, 0 * z), Fzz=lambda z, px, py: 2 + 0 * z,
                  Fzp=lambda z, px, py: (0 * z, 0 * z),
                  Fpp=lambda z, px, py: ((0 * z, 0 * z), (0 * z, 0 * z)))


@pytest.mark.parametrize("L", [(1.0, 1.0), (2.0, 1.0)])
def test_poisson_cosine_eigenfunction(L):
    d = build_domain({"shape": "rectangle", "L": list(L), "n": [129, 129]})
    X, _ = d.coords
    u = ScalarField(d, np.cos(np.pi * X / L[0]))
    v = poisson_neumann(u)
    exact = (L[0] / np.pi) ** 2 * u.values
    assert np.max(np.abs(v.values - exact)) / np.max(np.abs(exact)) < 1e-4


def test_poisson_dct_and_sparse_agree():
    d = square(33)
    X, Y = d.coords
    f = np.exp(X) * np.sin(3 * Y)
    f -= d.mean(f)
    assert np.max(np.abs(solve_neumann(d, f, "dct") - solve_neumann(d, f, "sparse"))) < 1e-11


def test_poisson_on_disk_radial_source():
    d = build_domain({"shape": "disk", "R": 1.0, "n": [81, 128]})
    X, Y = d.coords
    # radial source with zero mean; v = -r⁴/16 + r²/8 has zero flux at r = 1
    u = ScalarField(d, X**2 + Y**2 - 0.5)
    v = poisson_neumann(u)
    r2 = X**2 + Y**2
    exact = -r2**2 / 16 + r2 / 8
    exact = exact - d.mean(exact)
    assert np.max(np.abs(v.values - exact)) < 1e-3


def test_nonlocal_energy_of_cosine():
    d = square(129)
    X, _ = d.coords
    assert nonlocal_energy(ScalarField(d, np.cos(np.pi * X))) == pytest.approx(0.5 / np.pi**2, rel=1e-3)
    assert nonlocal_energy(ScalarField(d, np.full(d.shape, 0.3))) == pytest.approx(0.0, abs=1e-14)


def test_ohta_kawasaki_total():
    d = square(65)
    X, _ = d.coords
    u = ScalarField(d, np.tanh((X - 0.5) / 0.05))
    rep = ohta_kawasaki_energy(u, ModelParams(0.05, 2.0))
    assert rep.total == pytest.approx(rep.ac_energy + (4 / 3) * 2.0 * rep.nonlocal_energy)
    assert discrepancy_report(u, ModelParams(0.05)).nonlocal_energy == 0.0


def test_green_symmetry_and_zero_mean():
    d = square(65, (1.0, 1.0))
    G = green_kernel(d)
    P = np.array([[0.2, 0.3], [0.7, 0.1]])
    Q = np.array([[0.6, 0.8], [0.4, 0.9]])
    assert np.allclose(G(P, Q), G(Q, P), atol=1e-14)
    assert np.allclose(G.regular(P, Q), G.series(P, Q, modes=400) + np.log(np.hypot(*(P - Q).T)) / (2 * np.pi),
                       atol=2e-3)
    X, Y = d.coords
    pts = np.stack([X, Y], -1)
    vals = G(pts + 1e-9, np.array([0.31, 0.47]))
    assert abs(d.integrate(vals)) < 5e-3


def test_disk_green_symmetry():
    d = build_domain({"shape": "disk", "R": 1.0, "n": [41, 128]})
    G = green_kernel(d)
    P, Q = np.array([0.3, -0.2]), np.array([-0.5, 0.6])
    assert G(P, Q) == pytest.approx(G(Q, P))


def test_green_surface_form_bilinear_symmetric():
    d = square(65)
    c = build_interface(d, {"kind": "segment", "x": 0.5})
    G = green_kernel(d)
    a = normal_speed(c, lambda s: np.cos(np.pi * s))
    b = normal_speed(c, lambda s: 1 + s * s)
    ab = green_surface_form(G, c, a, b)
    assert ab == pytest.approx(green_surface_form(G, c, b, a), rel=1e-12)
    M = green_curve_matrix(G, c)
    assert np.allclose(M, M.T)
    twice = normal_speed(c, lambda s: 2 * np.cos(np.pi * s) + 3 * (1 + s * s))
    lhs = green_surface_form(G, c, twice, a)
    assert lhs == pytest.approx(2 * green_surface_form(G, c, a) + 3 * ab, rel=1e-12)


def test_green_form_matches_smeared_oracle_segment_constant():
    d = square(257)
    c = build_interface(d, {"kind": "segment", "x": 0.5})
    xi = normal_speed(c, lambda s: 1 + 0 * s)
    G = green_kernel(d)
    a = green_surface_form(G, c, xi)
    b = smeared_source_form(d, c, xi)
    assert abs(a - b) / abs(b) < 1e-3


@given(st.floats(-3, 3, allow_nan=False))
def test_phi_primitive_is_odd_with_derivative_abs_well(a):
    assert phi_primitive(-a) == pytest.approx(-phi_primitive(a), abs=1e-12)
    h = 1e-6
    slope = (phi_primitive(a + h) - phi_primitive(a - h)) / (2 * h)
    assert slope == pytest.approx(abs(a * a - 1), abs=1e-5)
