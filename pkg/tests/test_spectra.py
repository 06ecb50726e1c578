import numpy as np
import pytest
from scipy.optimize import brentq

from sharplab.domain_geometry import build_domain, build_interface
from sharplab.energies import ModelParams
from sharplab.fields_calculus import ScalarField
from sharplab.spectra import (
    assemble_linearized,
    eigenfunction_field,
    eigenpairs,
    jacobi_operator,
    rayleigh,
)


def square(n):
    return build_domain({"shape": "rectangle", "L": [1, 1], "n": [n, n]})


def constant(d, c):
    return ScalarField(d, np.full(d.shape, float(c)))


def test_linearized_at_plus_one_is_shifted_laplacian():
    d = square(41)
    eps = 0.1
    res = eigenpairs(assemble_linearized(constant(d, 1.0), ModelParams(eps)), 4)
    laplace = (res.eigenvalues - 4 / eps) / eps
    assert np.allclose(laplace, [0, np.pi**2, np.pi**2, 2 * np.pi**2], rtol=2e-3, atol=1e-9)
    assert np.max(res.residuals) < 1e-8 and res.gram_defect < 1e-10


def test_linearized_at_zero_and_dirichlet():
    d = square(41)
    eps = 0.1
    res = eigenpairs(assemble_linearized(constant(d, 0.0), ModelParams(eps)), 1)
    assert res.eigenvalues[0] == pytest.approx(-2 / eps)
    dres = eigenpairs(assemble_linearized(constant(d, 1.0), ModelParams(eps), "dirichlet"), 1)
    assert (dres.eigenvalues[0] - 4 / eps) / eps == pytest.approx(2 * np.pi**2, rel=2e-3)


def test_dense_and_lanczos_paths_agree():
    d = square(33)
    X, Y = d.coords
    u = ScalarField(d, np.tanh((X - 0.5) / 0.1) * np.cos(Y))
    op = assemble_linearized(u, ModelParams(0.1, 1.0))
    a = eigenpairs(op, 3, dense=True).eigenvalues
    b = eigenpairs(op, 3, dense=False).eigenvalues
    assert np.allclose(a, b, rtol=1e-8)
    am = eigenpairs(op, 3, dense=True, constraint="mass").eigenvalues
    bm = eigenpairs(op, 3, dense=False, constraint="mass").eigenvalues
    assert np.allclose(am, bm, rtol=1e-8)


def test_mass_constraint_removes_constant_mode():
    d = square(33)
    op = assemble_linearized(constant(d, 1.0), ModelParams(0.1))
    res = eigenpairs(op, 2, constraint="mass")
    assert (res.eigenvalues[0] - 40) / 0.1 == pytest.approx(np.pi**2, rel=3e-3)
    assert abs(res.eigenvectors[:, 0] @ op.mass) < 1e-10


def test_rayleigh_and_eigenfunction_field():
    d = square(33)
    op = assemble_linearized(constant(d, 1.0), ModelParams(0.1))
    res = eigenpairs(op, 2)
    phi = eigenfunction_field(op, res.eigenvectors[:, 1])
    assert rayleigh(op, phi) == pytest.approx(res.eigenvalues[1], rel=1e-10)
    assert op.quadratic_form(phi) / d.integrate(phi.values**2) == pytest.approx(res.eigenvalues[1], rel=1e-10)


def test_k_is_validated():
    op = assemble_linearized(constant(square(17), 1.0), ModelParams(0.1))
    with pytest.raises(ValueError):
        eigenpairs(op, 0)


@pytest.mark.parametrize("boundary,expected", [
    ("robin", [((k - 1) * np.pi) ** 2 for k in range(1, 5)]),
    ("dirichlet", [(k * np.pi) ** 2 for k in range(1, 5)]),
])
def test_jacobi_on_segment(boundary, expected):
    d = square(65)
    c = build_interface(d, {"kind": "segment", "x": 0.5}, ds=1 / 512)
    lam = eigenpairs(jacobi_operator(c, boundary=boundary), 4).eigenvalues
    assert np.allclose(lam, expected, rtol=1e-4, atol=1e-8)


def test_jacobi_on_circle():
    d = square(65)
    r = 0.25
    c = build_interface(d, {"kind": "circle", "center": [0.5, 0.5], "r": r}, ds=2 * np.pi * r / 1024)
    lam = eigenpairs(jacobi_operator(c), 5).eigenvalues
    expected = [(m * m - 1) / r**2 for m in (0, 1, 1, 2, 2)]
    # translations give the zero pair up to the O(ds²) error of the P1 form
    assert np.allclose(lam, expected, rtol=1e-4, atol=1e-4)


def test_jacobi_on_disk_diameter_robin_shift():
    d = build_domain({"shape": "disk", "R": 1.0, "n": [41, 128]})
    c = build_interface(d, {"kind": "diameter"}, ds=2 / 1024)
    lam1 = eigenpairs(jacobi_operator(c), 1).eigenvalues[0]
    mu = brentq(lambda m: m * np.tanh(m) - 1, 0.1, 3.0)
    assert lam1 == pytest.approx(-mu * mu, rel=1e-4)
    assert lam1 == pytest.approx(-1.4392, abs=1e-4)


def test_jacobi_boundary_kind_checked():
    d = square(33)
    with pytest.raises(ValueError):
        jacobi_operator(build_interface(d, {"kind": "segment", "x": 0.5}), boundary="closed")
