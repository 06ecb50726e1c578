import numpy as np
import pytest

from sharplab.critical_points import (
    ConvergenceError,
    euler_lagrange_residual,
    mass_correction_field,
    profile_1d,
    profile_field,
    solve_critical,
)
from sharplab.domain_geometry import build_domain, build_interface, extend_normal_speed, normal_speed
from sharplab.energies import ModelParams
from sharplab.fields_calculus import ScalarField


@pytest.fixture(scope="module")
def lamella():
    d = build_domain({"shape": "rectangle", "L": [1, 1], "n": [49, 49]})
    return d, build_interface(d, {"kind": "segment", "x": 0.5})


def test_profile_1d():
    assert profile_1d(0.1, 0.0) == 0.0
    assert profile_1d(0.1, 1.0) == pytest.approx(np.tanh(10.0))
    with pytest.raises(ValueError):
        profile_1d(0.0, 1.0)


def test_profile_field_is_positive_inside(lamella):
    d, c = lamella
    u = profile_field(d, c, 0.05)
    X, _ = d.coords
    assert np.all(u.values[X < 0.4] > 0.95) and np.all(u.values[X > 0.6] < -0.95)


def test_newton_allen_cahn_lamella(lamella):
    d, c = lamella
    p = ModelParams(0.08)
    res = solve_critical(d, p, curve=c)
    assert res.residual_norm < 1e-9 and res.multiplier is None
    assert np.max(np.abs(euler_lagrange_residual(res.u, p))) < 1e-8
    # the discrete heteroclinic stays close to the tanh profile
    assert np.max(np.abs(res.u.values - profile_field(d, c, 0.08).values)) < 0.05


def test_newton_ohta_kawasaki_odd_lamella(lamella):
    d, c = lamella
    p = ModelParams(0.08, 1.0, 0.0)
    res = solve_critical(d, p, curve=c, symmetry="odd_across_interface")
    assert res.residual_norm < 1e-9
    assert abs(res.multiplier) <= 1e-8
    assert abs(d.mean(res.u.values)) < 1e-12
    assert np.allclose(res.u.values, -res.u.values[::-1, :], atol=1e-12)


def test_odd_symmetry_rejects_nonzero_mass(lamella):
    d, c = lamella
    with pytest.raises(ValueError):
        solve_critical(d, ModelParams(0.08, 1.0, 0.2), curve=c, symmetry="odd_across_interface")


def test_newton_reports_non_convergence(lamella):
    d, c = lamella
    with pytest.raises(ConvergenceError):
        solve_critical(d, ModelParams(0.08), curve=c, max_iter=1, tol=1e-14)


def test_mass_correction_identity(lamella):
    d, c = lamella
    u = profile_field(d, c, 0.08)
    xi = normal_speed(c, lambda s: np.cos(np.pi * s) + 0.3)
    eta = extend_normal_speed(c, d, xi)
    beta = extend_normal_speed(c, d, normal_speed(c, lambda s: 1 + 0 * s))
    corrected, h = mass_correction_field(u, eta, beta)
    assert abs(d.integrate(u.values * corrected.divergence)) < 1e-12
    assert corrected.tangent and h != 0.0
    with pytest.raises(ValueError):
        mass_correction_field(ScalarField(d, np.zeros(d.shape)), eta, beta)
