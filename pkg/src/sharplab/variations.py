"""First and second Gateaux and inner variations, deformation oracles and audits.

Functionals
-----------
``local(integrand)``
    A(u) = ∫ F(u, ∇u), trapezoid quadrature with the centred gradient stencil.
``nonlocal_b()``
    B(u) = ∫|∇v|², v the Neumann potential of u (edge-difference form).
``ohta_kawasaki(params)``
    local(Allen–Cahn integrand) + (4/3)γB.

Three independent routes evaluate inner variations:

* :func:`inner_direct` -- the chain-rule formulas through ∇u·η and X₀
  (any η, ζ);
* :func:`inner_tangent` -- the divergence-form formulas through div η, X, Y
  (η tangent to ∂Ω; acceleration Z, or any ζ with ζ - Z tangent);
* :func:`inner_fd_oracle` -- finite differences in t of A(u∘Φ_t⁻¹).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain_geometry import Domain
from .energies import (
    SURFACE_TENSION,
    Integrand,
    ModelParams,
    allen_cahn_integrand,
    poisson_neumann,
)
from .fields_calculus import (
    _d1,
    ScalarField,
    VectorField,
    deform,
    gradient,
    polynomial_map,
    variation_fields,
)


@dataclass(frozen=True)
class Functional:
    kind: str  # "local" | "nonlocal_b" | "ohta_kawasaki"
    integrand: Integrand | None = None
    params: ModelParams | None = None

    @property
    def local_part(self) -> Integrand | None:
        if self.kind == "local":
            return self.integrand
        if self.kind == "ohta_kawasaki":
            return allen_cahn_integrand(self.params.eps)
        return None

    @property
    def nonlocal_weight(self) -> float:
        if self.kind == "nonlocal_b":
            return 1.0
        if self.kind == "ohta_kawasaki":
            return SURFACE_TENSION * self.params.gamma
        return 0.0


def local(integrand: Integrand) -> Functional:
    return Functional("local", integrand=integrand)


def nonlocal_b() -> Functional:
    return Functional("nonlocal_b")


def ohta_kawasaki(params: ModelParams) -> Functional:
    return Functional("ohta_kawasaki", params=params)


def _eval(F: Integrand, u, gx, gy):
    return F.F(u, gx, gy)


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1]


def _quad(M, a, b):
    return M[0][0] * a[0] * b[0] + M[0][1] * a[0] * b[1] + M[1][0] * a[1] * b[0] + M[1][1] * a[1] * b[1]


def value(functional: Functional, u: ScalarField) -> float:
    """A(u) on the fixed grid."""
    d = u.domain
    total = 0.0
    F = functional.local_part
    if F is not None:
        gx, gy = gradient(d, u.values)
        total += d.integrate(F.F(u.values, gx, gy))
    c = functional.nonlocal_weight
    if c:
        v = poisson_neumann(u)
        total += c * d.dirichlet_energy(v.values)
    return total


# ---------------------------------------------------------------------------
# Gateaux variations
# ---------------------------------------------------------------------------


def _local_gateaux(F: Integrand, u: ScalarField, phi: np.ndarray):
    d = u.domain
    g = gradient(d, u.values)
    gp = gradient(d, phi)
    z = u.values
    Fz, Fp = F.Fz(z, *g), F.Fp(z, *g)
    dA = d.integrate(Fz * phi + _dot(Fp, gp))
    d2A = d.integrate(F.Fzz(z, *g) * phi**2 + 2 * _dot(F.Fzp(z, *g), gp) * phi + _quad(F.Fpp(z, *g), gp, gp))
    return dA, d2A


def _b_gateaux(u: ScalarField, phi: np.ndarray, check: bool = True):
    d = u.domain
    v = poisson_neumann(u)
    vphi = poisson_neumann(ScalarField(d, phi))
    dB = 2 * d.integrate(v.values * phi)
    d2B = 2 * d.integrate(vphi.values * phi)
    if check:
        alt = 2 * d.dirichlet_energy(vphi.values)
        if abs(alt - d2B) > 1e-8 * max(abs(d2B), 1e-300):
            raise ArithmeticError(f"d²B self-check failed: {d2B!r} vs {alt!r}")
    return dB, d2B


def gateaux(functional: Functional, u: ScalarField, phi) -> tuple[float, float]:
    """(dA(u, φ), d²A(u, φ))."""
    phi = phi.values if isinstance(phi, ScalarField) else np.asarray(phi, dtype=float)
    if phi.shape != u.domain.shape:
        raise ValueError("grid mismatch between u and φ")
    dA = d2A = 0.0
    F = functional.local_part
    if F is not None:
        dA, d2A = _local_gateaux(F, u, phi)
    c = functional.nonlocal_weight
    if c:
        dB, d2B = _b_gateaux(u, phi)
        dA += c * dB
        d2A += c * d2B
    return dA, d2A


# ---------------------------------------------------------------------------
# inner variations
# ---------------------------------------------------------------------------


def _check_fields(u, *vecs):
    for v in vecs:
        if v is not None and v.domain != u.domain:
            raise ValueError("grid mismatch between u and the deformation fields")


def inner_direct(functional: Functional, u: ScalarField, eta: VectorField, zeta: VectorField):
    """(δA, δ²A) from the chain-rule formulas through a = ∇u·η and X₀."""
    _check_fields(u, eta, zeta)
    d = u.domain
    vf = variation_fields(eta, zeta, u)
    a = vf.grad_u_dot_eta
    X0 = vf.X0.values
    first = second = 0.0
    F = functional.local_part
    if F is not None:
        z = u.values
        g = gradient(d, z)
        ga = gradient(d, a)
        gX = gradient(d, X0)
        Fz, Fp = F.Fz(z, *g), F.Fp(z, *g)
        first += d.integrate(-Fz * a - _dot(Fp, ga))
        second += d.integrate(
            F.Fzz(z, *g) * a * a
            + 2 * _dot(F.Fzp(z, *g), ga) * a
            + _quad(F.Fpp(z, *g), ga, ga)
            + Fz * X0
            + _dot(Fp, gX)
        )
    c = functional.nonlocal_weight
    if c:
        v = poisson_neumann(u).values
        va = poisson_neumann(ScalarField(d, a)).values
        first += c * (-2 * d.integrate(v * a))
        second += c * (2 * d.integrate(va * a) + 2 * d.integrate(v * X0))
    return first, second


def _tangent_first_local(F, u, eta: VectorField):
    d = u.domain
    z = u.values
    g = gradient(d, z)
    J = eta.jacobian
    div = J[0][0] + J[1][1]
    gj = (g[0] * J[0][0] + g[1] * J[1][0], g[0] * J[0][1] + g[1] * J[1][1])
    return d.integrate(F.F(z, *g) * div - _dot(F.Fp(z, *g), gj))


def inner_tangent(functional: Functional, u: ScalarField, eta: VectorField,
                  zeta: VectorField = None):
    """(δA, δ²A) from the divergence-form formulas for tangent η.

    With ``zeta=None`` the acceleration is Z = (η·∇)η.  A different ζ is
    accepted when ζ - Z is tangent (e.g. ζ = W); the second variation then
    picks up δA(u, ζ - Z), evaluated with the same tangent formula.
    """
    if not eta.tangent:
        raise ValueError("inner_tangent requires a tangency-flagged η")
    _check_fields(u, eta, zeta)
    d = u.domain
    vf = variation_fields(eta, None, u)
    div = vf.div
    gj = vf.grad_u_dot_jac
    a = vf.grad_u_dot_eta
    extra = None
    if zeta is not None:
        diff = VectorField(d, zeta.x - vf.Z.x, zeta.y - vf.Z.y)
        scale = max(1.0, float(np.max(np.hypot(zeta.x, zeta.y))))
        if diff.normal_defect() > 1e-8 * scale:
            raise ValueError("ζ - Z must be tangent to ∂Ω for the tangent formulas")
        diff.tangent = True
        extra = diff
    first = second = 0.0
    F = functional.local_part
    if F is not None:
        z = u.values
        g = gradient(d, z)
        Fv, Fp = F.F(z, *g), F.Fp(z, *g)
        Fpg = _dot(Fp, gj)
        first += d.integrate(Fv * div - Fpg)
        second += d.integrate(
            Fv * vf.X.values
            - 2 * Fpg * div
            - 2 * _dot(Fp, (vf.Y.x, vf.Y.y))
            + _quad(F.Fpp(z, *g), gj, gj)
        )
        if extra is not None:
            second += _tangent_first_local(F, u, extra)
    c = functional.nonlocal_weight
    if c:
        pv = poisson_neumann(u)
        v = pv.values
        va = poisson_neumann(ScalarField(d, a)).values
        gv = gradient(d, v)
        first += c * (-2 * d.integrate(v * a))
        b2 = 2 * d.integrate(va * a) - 2 * d.integrate(a * _dot(gv, (eta.x, eta.y))) \
            - 2 * d.integrate(v * a * div)
        if extra is not None:
            g = gradient(d, u.values)
            b2 -= 2 * d.integrate(v * _dot(g, (extra.x, extra.y)))
        second += c * b2
    return first, second


def transported_value(functional: Functional, u: ScalarField, eta: VectorField,
                      zeta: VectorField, t: float) -> float:
    """A over the moved domain Φ_t(Ω) (local part only), by change of variables."""
    F = functional.local_part
    if F is None or functional.nonlocal_weight:
        raise ValueError("transported reading is implemented for local functionals")
    d = u.domain
    Je, Jz = eta.jacobian, zeta.jacobian
    c = t * t / 2
    A = [[(1.0 if i == j else 0.0) + t * Je[i][j] + c * Jz[i][j] for j in (0, 1)] for i in (0, 1)]
    det = A[0][0] * A[1][1] - A[0][1] * A[1][0]
    gx, gy = gradient(d, u.values)
    # (∇Φ)^{-T} ∇u
    px = (A[1][1] * gx - A[1][0] * gy) / det
    py = (-A[0][1] * gx + A[0][0] * gy) / det
    return d.integrate(F.F(u.values, px, py) * det)


def inner_fd_oracle(functional: Functional, u: ScalarField, eta: VectorField,
                    zeta: VectorField, t0: float = None, reading: str = "fixed"):
    """Central differences of A(u∘Φ_t⁻¹) in t with Richardson over {t₀, t₀/2}.

    Φ_t(x) = x + tη + (t²/2)ζ.  ``reading='fixed'`` integrates the deformed
    field over the fixed domain (the field is extended beyond Ω when needed);
    ``reading='transported'`` integrates over Φ_t(Ω).
    """
    _check_fields(u, eta, zeta)
    d = u.domain
    emax = float(np.max(np.hypot(eta.x, eta.y)))
    zmax = float(np.max(np.hypot(zeta.x, zeta.y)))
    if emax == 0 and zmax == 0:
        return 0.0, 0.0
    if t0 is None:
        t0 = 1e-2 * d.diameter / max(emax, np.sqrt(zmax), 1e-300)

    def A(t):
        if t == 0:
            return value(functional, u)
        if reading == "transported":
            return transported_value(functional, u, eta, zeta, t)
        return value(functional, deform(u, polynomial_map(eta, zeta, t)))

    A0 = A(0.0)
    vals = {t: A(t) for t in (t0, -t0, t0 / 2, -t0 / 2)}

    def d1(t):
        return (vals[t] - vals[-t]) / (2 * t)

    def d2(t):
        return (vals[t] - 2 * A0 + vals[-t]) / t**2

    first = (4 * d1(t0 / 2) - d1(t0)) / 3
    second = (4 * d2(t0 / 2) - d2(t0)) / 3
    return first, second


# ---------------------------------------------------------------------------
# discrete Euler–Lagrange data for local functionals (rectangles)
# ---------------------------------------------------------------------------


def _d1_matrix(n, h):
    # columns are the stencil applied to unit vectors, so the matrix matches
    # ``gradient`` exactly
    return sp.csr_matrix(_d1(np.eye(n), h, 0))


def gradient_matrices(domain: Domain):
    """Sparse matrices (Dx, Dy) reproducing ``gradient`` on a rectangle."""
    if domain.is_disk:
        raise NotImplementedError("gradient matrices are assembled for rectangles only")
    (n1, n2), (h1, h2) = domain.n, domain.spacing
    Dx = sp.kron(_d1_matrix(n1, h1), sp.identity(n2), format="csr")
    Dy = sp.kron(sp.identity(n1), _d1_matrix(n2, h2), format="csr")
    return Dx, Dy


def local_residual(F: Integrand, u: ScalarField) -> np.ndarray:
    """Vector r with dA(u, φ) = Σ r_i φ_i for the local functional."""
    d = u.domain
    Dx, Dy = gradient_matrices(d)
    z = u.values.ravel()
    gx, gy = Dx @ z, Dy @ z
    w = d.weights.ravel()
    Fp = F.Fp(z, gx, gy)
    return w * F.Fz(z, gx, gy) + Dx.T @ (w * Fp[0]) + Dy.T @ (w * Fp[1])


def local_hessian(F: Integrand, u: ScalarField) -> sp.csr_matrix:
    d = u.domain
    Dx, Dy = gradient_matrices(d)
    z = u.values.ravel()
    g = (Dx @ z, Dy @ z)
    w = d.weights.ravel()
    D = (Dx, Dy)
    H = sp.diags(w * F.Fzz(z, *g))
    Fzp = F.Fzp(z, *g)
    Fpp = F.Fpp(z, *g)
    for k in (0, 1):
        C = sp.diags(w * Fzp[k]) @ D[k]
        H = H + C + C.T
        for l in (0, 1):
            H = H + D[k].T @ sp.diags(w * np.broadcast_to(Fpp[k][l], z.shape)) @ D[l]
    return H.tocsr()


def solve_discrete_critical(F: Integrand, u0: ScalarField, tol: float = 1e-11,
                            max_iter: int = 50) -> tuple[ScalarField, float]:
    """Newton iteration for a critical point of the discrete local functional."""
    z = u0.values.ravel().copy()
    d = u0.domain
    scale = float(np.max(d.weights))
    for _ in range(max_iter):
        u = ScalarField(d, z.reshape(d.shape))
        r = local_residual(F, u)
        res = float(np.max(np.abs(r))) / scale
        if res < tol:
            return u, res
        z = z - spla.spsolve(local_hessian(F, u).tocsc(), r)
    u = ScalarField(d, z.reshape(d.shape))
    return u, float(np.max(np.abs(local_residual(F, u)))) / scale


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------


@dataclass
class VariationReport:
    first_gateaux: float
    second_gateaux: float
    first_inner: float
    second_inner: float
    oracle_first: float | None = None
    oracle_second: float | None = None
    residuals: dict = field(default_factory=dict)

    def passed(self) -> bool:
        return all(r["value"] <= r["tol"] for r in self.residuals.values())

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def identity_audit(u: ScalarField, eta: VectorField, zeta: VectorField, functional: Functional,
                   zeta_alt: VectorField = None, oracle: bool = False, tol: float = 1e-10,
                   oracle_tol: float = 1e-3) -> VariationReport:
    """Check δA = dA(u, -∇u·η) and δ²A = d²A(u, -∇u·η) + dA(u, X₀).

    With ``zeta_alt`` the ζ-independence of δ²A is compared against the
    bound ‖r‖·‖∇u·(ζ - ζ_alt)‖, r the discrete Euler–Lagrange residual of a
    local functional.  With ``oracle=True`` the deformation oracle is run too.
    """
    vf = variation_fields(eta, zeta, u)
    a = vf.grad_u_dot_eta
    dA, d2A = gateaux(functional, u, -a)
    dX0, _ = gateaux(functional, u, vf.X0.values)
    first, second = inner_direct(functional, u, eta, zeta)
    rep = VariationReport(dA, d2A, first, second)
    rep.residuals["first_identity"] = {"value": _rel(first, dA), "tol": tol}
    rep.residuals["second_identity"] = {"value": _rel(second, d2A + dX0), "tol": tol}
    if zeta_alt is not None:
        _, second_alt = inner_direct(functional, u, eta, zeta_alt)
        F = functional.local_part
        diff = abs(second - second_alt)
        if F is not None and functional.nonlocal_weight == 0 and not u.domain.is_disk:
            r = local_residual(F, u)
            g = gradient(u.domain, u.values)
            psi = (g[0] * (zeta.x - zeta_alt.x) + g[1] * (zeta.y - zeta_alt.y)).ravel()
            bound = float(np.linalg.norm(r) * np.linalg.norm(psi))
        else:
            bound = float("nan")
        rep.residuals["zeta_independence"] = {"value": diff, "tol": bound * (1 + 1e-8) + 1e-300}
    if oracle:
        of, os_ = inner_fd_oracle(functional, u, eta, zeta)
        rep.oracle_first, rep.oracle_second = of, os_
        rep.residuals["oracle_first"] = {
            "value": abs(of - first) / max(abs(first), 1e-5 * abs(of) + 1e-300),
            "tol": oracle_tol,
        }
        rep.residuals["oracle_second"] = {
            "value": abs(os_ - second) / max(abs(second), 1e-300),
            "tol": oracle_tol,
        }
    return rep
