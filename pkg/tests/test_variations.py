import numpy as np
import pytest

from sharplab.domain_geometry import build_domain
from sharplab.energies import ModelParams, allen_cahn_integrand, coupled_test_integrand, dirichlet_integrand
from sharplab.experiments import random_probe
from sharplab.fields_calculus import ScalarField, VectorField
from sharplab.variations import (
    gateaux,
    identity_audit,
    inner_direct,
    inner_fd_oracle,
    inner_tangent,
    local,
    local_hessian,
    local_residual,
    nonlocal_b,
    ohta_kawasaki,
    solve_discrete_critical,
    value,
)


def square(n):
    return build_domain({"shape": "rectangle", "L": [1, 1], "n": [n, n]})


@pytest.fixture(scope="module")
def probe():
    return random_probe(square(48), np.random.default_rng(3))


def test_functional_weights():
    assert nonlocal_b().nonlocal_weight == 1.0
    ok = ohta_kawasaki(ModelParams(0.1, 3.0))
    assert ok.nonlocal_weight == pytest.approx(4.0) and ok.local_part is not None
    assert local(dirichlet_integrand()).nonlocal_weight == 0.0


def test_residual_and_hessian_match_gateaux(probe):
    u, _, _ = probe
    F = coupled_test_integrand()
    phi = np.cos(3 * u.domain.coords[0]) * u.values
    dA, d2A = gateaux(local(F), u, phi)
    assert local_residual(F, u) @ phi.ravel() == pytest.approx(dA, rel=1e-12)
    assert phi.ravel() @ (local_hessian(F, u) @ phi.ravel()) == pytest.approx(d2A, rel=1e-12)


@pytest.mark.parametrize("name", ["allen_cahn", "coupled", "nonlocal_b", "ohta_kawasaki"])
def test_identity_closure(probe, name):
    u, eta, zeta = probe
    F = {"allen_cahn": local(allen_cahn_integrand(0.15)), "coupled": local(coupled_test_integrand()),
         "nonlocal_b": nonlocal_b(), "ohta_kawasaki": ohta_kawasaki(ModelParams(0.15, 2.0))}[name]
    rep = identity_audit(u, eta, zeta, F)
    assert rep.passed(), rep.residuals


def test_zeta_independence_at_discrete_critical_point():
    d = square(40)
    F = allen_cahn_integrand(0.1)
    X, _ = d.coords
    u, res = solve_discrete_critical(F, ScalarField(d, np.tanh((X - 0.5) / 0.1)))
    assert res < 1e-9
    _, eta, zeta = random_probe(d, np.random.default_rng(5))
    rep = identity_audit(u, eta, zeta, local(F), zeta_alt=VectorField.zeros(d))
    assert rep.passed(), rep.residuals
    # away from a critical point the ζ dependence is real and the bound is not vacuous
    u2, _, _ = random_probe(d, np.random.default_rng(6))
    assert abs(inner_direct(local(F), u2, eta, zeta)[1]
               - inner_direct(local(F), u2, eta, VectorField.zeros(d))[1]) > 1e-6


@pytest.mark.parametrize("name", ["coupled", "nonlocal_b"])
def test_direct_route_matches_deformation_oracle(probe, name):
    u, eta, zeta = probe
    F = local(coupled_test_integrand()) if name == "coupled" else nonlocal_b()
    first, second = inner_direct(F, u, eta, zeta)
    of, os_ = inner_fd_oracle(F, u, eta, zeta)
    assert abs(of - first) <= max(1e-3 * abs(first), 1e-8)
    assert abs(os_ - second) <= max(1e-3 * abs(second), 1e-8)


def test_transported_reading_converges_to_direct_route():
    # the moved-domain integral uses a different quadrature, so only the limits agree
    gaps = []
    for n in (48, 96):
        u, eta, zeta = random_probe(square(n), np.random.default_rng(3))
        F = local(coupled_test_integrand())
        a = inner_fd_oracle(F, u, eta, zeta, reading="transported")[1]
        b = inner_direct(F, u, eta, zeta)[1]
        gaps.append(abs(a - b) / abs(b))
    assert gaps[0] < 5e-3 and gaps[1] < gaps[0] / 3


def test_tangent_route_converges_to_direct_route():
    gaps = []
    for n in (64, 128):
        u, eta, _ = random_probe(square(n), np.random.default_rng(0))
        F = local(coupled_test_integrand())
        d2 = inner_direct(F, u, eta, None)[1]
        t2 = inner_tangent(F, u, eta, None)[1]
        gaps.append(abs(d2 - t2) / abs(d2))
    assert np.log2(gaps[0] / gaps[1]) >= 1.5


def test_tangent_route_requires_tangent_eta(probe):
    u, _, _ = probe
    d = u.domain
    eta = VectorField.from_function(d, lambda x, y: (1 + 0 * x, 0 * y))
    with pytest.raises(ValueError):
        inner_tangent(nonlocal_b(), u, eta)


def test_value_of_ohta_kawasaki(probe):
    u, _, _ = probe
    p = ModelParams(0.2, 1.5)
    total = value(ohta_kawasaki(p), u)
    assert total == pytest.approx(value(local(allen_cahn_integrand(0.2)), u) + 2.0 * value(nonlocal_b(), u))
