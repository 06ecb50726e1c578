"""Geometric functionals on the interface Γ and the predicted ε → 0 limits.

Everything here is evaluated from analytic curve data (nodes, normals,
curvature) plus samples of the deformation fields on Γ.  Jacobians of η on Γ
come from fourth-order central differences of the field's analytic extension
(or of its grid interpolant when none is attached).
"""
from __future__ import annotations

import json

import numpy as np
from scipy.interpolate import CubicSpline

from .domain_geometry import Domain, GeometryError, InterfaceCurve, NormalSpeed
from .energies import SURFACE_TENSION, GreenKernel, green_surface_form, poisson_neumann
from .fields_calculus import ScalarField, VectorField

ORTHOGONALITY_TOL = 1e-6
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)


# ---------------------------------------------------------------------------
# sampling fields on Γ
# ---------------------------------------------------------------------------


def _sampler(field: VectorField):
    if field.func is not None:
        f = field.func
        return lambda x, y: tuple(np.broadcast_to(c, np.shape(x)) for c in f(x, y))
    ix, iy = field._interp
    return lambda x, y: (ix(x, y), iy(x, y))


def _fd_step(domain: Domain) -> float:
    return 1e-3 * domain.h


def _jacobian(f, x, y, step):
    """J[..., i, j] = ∂_j f^i by fourth-order central differences."""
    J = np.empty(np.shape(x) + (2, 2))
    for j, (dx, dy) in enumerate(((step, 0.0), (0.0, step))):
        p2 = f(x + 2 * dx, y + 2 * dy)
        p1 = f(x + dx, y + dy)
        m1 = f(x - dx, y - dy)
        m2 = f(x - 2 * dx, y - 2 * dy)
        for i in (0, 1):
            J[..., i, j] = (-p2[i] + 8 * p1[i] - 8 * m1[i] + m2[i]) / (12 * step)
    return J


def _transport(f, step):
    """Z = (η·∇)η as a callable."""

    def Z(x, y):
        J = _jacobian(f, x, y, step)
        ex, ey = f(x, y)
        return J[..., 0, 0] * ex + J[..., 0, 1] * ey, J[..., 1, 0] * ex + J[..., 1, 1] * ey

    return Z


def _divergence(f, x, y, step):
    J = _jacobian(f, x, y, step)
    return J[..., 0, 0] + J[..., 1, 1]


def _quad(a, J, b):
    """aᵀ J b row-wise for (m, 2) vectors and (m, 2, 2) matrices."""
    return np.einsum("mi,mij,mj->m", a, J, b)


def _check_orthogonal(curve: InterfaceCurve):
    if not curve.closed and np.any(curve.orthogonality_defect > ORTHOGONALITY_TOL):
        raise GeometryError(
            f"Γ meets ∂Ω non-orthogonally (defect {curve.orthogonality_defect.max():.3g})"
        )


# ---------------------------------------------------------------------------
# length variations
# ---------------------------------------------------------------------------


def tangential_divergence(curve: InterfaceCurve, field: VectorField) -> np.ndarray:
    """div^Γ η = τ·(D_τ η) at the nodes."""
    x, y = curve.nodes.T
    J = _jacobian(_sampler(field), x, y, _fd_step(field.domain))
    return _quad(curve.tangent, J, curve.tangent)


def geometric_first_variation(curve: InterfaceCurve, eta: VectorField) -> float:
    """δE(Γ, η) = ∫_Γ div^Γ η."""
    return curve.integrate(tangential_divergence(curve, eta))


def normal_stretch(curve: InterfaceCurve, eta: VectorField) -> np.ndarray:
    """(n, n·∇η) = nᵀ(∇η)n at the nodes."""
    x, y = curve.nodes.T
    J = _jacobian(_sampler(eta), x, y, _fd_step(eta.domain))
    return _quad(curve.normal, J, curve.normal)


def geometric_second_variation(curve: InterfaceCurve, eta: VectorField,
                               zeta: VectorField = None) -> float:
    """δ²E(Γ, η, ζ); ζ defaults to Z = (η·∇)η.

    For a curve the two tangential squares cancel and the integrand is
    div^Γζ + |(D_τη)^⊥|².
    """
    x, y = curve.nodes.T
    step = _fd_step(eta.domain)
    f = _sampler(eta)
    g = _transport(f, step) if zeta is None else _sampler(zeta)
    Je = _jacobian(f, x, y, step)
    Jz = _jacobian(g, x, y, step)
    tau, nrm = curve.tangent, curve.normal
    div_zeta = _quad(tau, Jz, tau)
    div_eta = _quad(tau, Je, tau)
    Dt = np.einsum("mij,mj->mi", Je, tau)
    perp = np.einsum("mi,mi->m", Dt, nrm)
    integrand = div_zeta + div_eta**2 + perp**2 - div_eta**2
    return curve.integrate(integrand)


def _speed_spline(curve: InterfaceCurve, values):
    if curve.closed:
        s = np.concatenate([curve.s, [curve.length]])
        return CubicSpline(s, np.concatenate([values, values[:1]]), bc_type="periodic")
    return CubicSpline(curve.s, values)


def tangential_dirichlet(curve: InterfaceCurve, values) -> float:
    """∫_Γ |∇_Γ ξ|² through a cubic spline in arclength and Gauss quadrature."""
    sp_ = _speed_spline(curve, np.asarray(values, dtype=float))
    knots = sp_.x
    a, b = knots[:-1], knots[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    pts = mid[:, None] + half[:, None] * _GAUSS_X[None, :]
    d = sp_(pts, 1)
    return float(np.sum(half[:, None] * _GAUSS_W[None, :] * d * d))


def _endpoint_term(curve: InterfaceCurve, values) -> float:
    if curve.closed:
        return 0.0
    idx = curve.endpoint_indices()
    return float(np.sum(curve.endpoint_curvature * np.asarray(values)[idx] ** 2))


def normal_speed_second_variation(curve: InterfaceCurve, xi: NormalSpeed,
                                  domain: Domain = None) -> float:
    """∫_Γ |∇_Γξ|² + (N-1)²H²ξ² - |A_Γ|²ξ² minus the endpoint term A_∂Ω(n,n)ξ²."""
    _check_orthogonal(curve)
    v = xi.values
    k2 = curve.curvature**2
    return (tangential_dirichlet(curve, v) + curve.integrate(k2 * v * v)
            - curve.integrate(k2 * v * v) - _endpoint_term(curve, v))


# ---------------------------------------------------------------------------
# the sharp nonlocal potential v₀
# ---------------------------------------------------------------------------


def sharp_phase(domain: Domain, curve: InterfaceCurve) -> ScalarField:
    """u₀ = ±1 sampled with a box filter of width h across Γ (mass-exact quadrature)."""
    d = curve.signed_distance_at(*domain.coords)
    return ScalarField(domain, -np.clip(2 * d / domain.h, -1.0, 1.0))


def sharp_potential(domain: Domain, curve: InterfaceCurve) -> ScalarField:
    """v₀ = (-Δ)⁻¹u₀ with Neumann data and zero mean."""
    return poisson_neumann(sharp_phase(domain, curve))


class InterfacePotential:
    """v₀ and ∇v₀ on Γ.

    v₀ is C¹ across Γ but its Hessian jumps there, so the normal derivative is
    taken from one-sided cubic fits along the normal line, using samples at
    distances 2h..6h on each side, and the two sides are averaged.  The
    tangential derivative comes from a spline of v₀ along Γ.
    """

    def __init__(self, v0: ScalarField, curve: InterfaceCurve):
        self.v0 = v0
        self.curve = curve
        d = v0.domain
        x, y = curve.nodes.T
        self.values = v0(x, y)
        h = d.h
        ks = np.arange(2, 7) * h
        slopes = []
        for sgn in (1.0, -1.0):
            t = sgn * ks
            px = x[:, None] + t[None, :] * curve.normal[:, 0:1]
            py = y[:, None] + t[None, :] * curve.normal[:, 1:2]
            inside = d.contains(px, py, tol=0.0)
            vals = np.where(inside, v0(np.where(inside, px, x[:, None]), np.where(inside, py, y[:, None])), np.nan)
            A = np.stack([np.ones_like(t), t, t**2, t**3], axis=1)
            # include v₀ on Γ itself so the fit is anchored at t = 0
            A = np.vstack([[1, 0, 0, 0], A])
            rows = np.column_stack([self.values, vals])
            coef = np.linalg.lstsq(A, np.nan_to_num(rows.T), rcond=None)[0]
            slope = coef[1]
            slope = np.where(np.all(np.isfinite(vals), axis=1), slope, np.nan)
            slopes.append(slope)
        both = np.vstack(slopes)
        self.normal_derivative = np.nanmean(both, axis=0)
        self.tangential_derivative = _speed_spline(curve, self.values)(curve.s, 1)

    def gradient(self):
        n, t = self.curve.normal, self.curve.tangent
        g = self.normal_derivative[:, None] * n + self.tangential_derivative[:, None] * t
        return g[:, 0], g[:, 1]


def _potential(curve, v0, domain):
    if v0 is None:
        if domain is None:
            raise ValueError("v₀ or the domain is required")
        v0 = sharp_potential(domain, curve)
    return v0 if isinstance(v0, InterfacePotential) else InterfacePotential(v0, curve)


def ok_sharp_second_variation(curve: InterfaceCurve, xi: NormalSpeed, gamma: float,
                              v0=None, G: GreenKernel = None, domain: Domain = None) -> float:
    """δ²𝓔_γ(Γ, ξ) including the nonlocal Green and ∇v₀·n terms."""
    return sum(ok_sharp_terms(curve, xi, gamma, v0, G, domain).values())


def ok_sharp_terms(curve, xi, gamma, v0=None, G=None, domain=None) -> dict:
    _check_orthogonal(curve)
    v = xi.values
    terms = {
        "dirichlet": tangential_dirichlet(curve, v),
        "curvature": -curve.integrate(curve.curvature**2 * v * v),
        "boundary": -_endpoint_term(curve, v),
        "greens": 0.0,
        "potential": 0.0,
    }
    if gamma:
        if G is None:
            raise ValueError("γ > 0 needs the Green kernel")
        pot = _potential(curve, v0, domain)
        terms["greens"] = 8 * gamma * green_surface_form(G, curve, xi)
        terms["potential"] = 4 * gamma * curve.integrate(pot.normal_derivative * v * v)
    return terms


def criticality_audit(curve: InterfaceCurve, gamma: float = 0.0, v0=None,
                      domain: Domain = None) -> dict:
    """Deviation of (N-1)H + 4γv₀ from a constant on Γ, and the contact angle defect."""
    vals = curve.curvature.copy()
    if gamma:
        vals = vals + 4 * gamma * _potential(curve, v0, domain).values
    lam = curve.integrate(vals) / curve.length
    defect = float(np.max(curve.orthogonality_defect)) if not curve.closed else 0.0
    return {
        "H_residual": float(np.max(np.abs(vals - lam))),
        "lambda_estimate": float(lam),
        "orthogonality_defect": defect,
    }


# ---------------------------------------------------------------------------
# predicted limits of the diffuse inner variations
# ---------------------------------------------------------------------------


def limit_prediction(curve: InterfaceCurve, eta: VectorField, zeta: VectorField = None,
                     gamma: float = 0.0, domain: Domain = None, v0=None,
                     G: GreenKernel = None) -> dict:
    """Named sharp-interface terms for the limits of δE_ε, δ²E_ε, δB, δ²B, δ𝓔, δ²𝓔.

    ζ defaults to Z.  A custom ζ must satisfy ζ·ν = Z·ν on ∂Ω.  Keys are
    ``ac.*`` (Allen–Cahn), ``b.*`` (nonlocal B) and ``ok.*``
    (Ohta–Kawasaki, whose second limit is reported for δ²𝓔_ε itself,
    i.e. including the factor 4/3).
    """
    if not eta.tangent:
        raise ValueError("limit predictions need a tangent η")
    domain = domain or eta.domain
    x, y = curve.nodes.T
    step = _fd_step(domain)
    f = _sampler(eta)
    Zf = _transport(f, step)
    gz = Zf if zeta is None else _sampler(zeta)
    if zeta is not None:
        nx, ny = domain.boundary_normal
        m = domain.boundary_mask
        Zx, Zy = Zf(*(c[m] for c in domain.coords))
        gap = np.abs((zeta.x[m] - Zx) * nx[m] + (zeta.y[m] - Zy) * ny[m])
        scale = max(1.0, float(np.max(np.hypot(zeta.x, zeta.y))))
        if np.max(gap) > 1e-6 * scale:
            raise ValueError("ζ·ν must equal Z·ν on ∂Ω")

    ex, ey = f(x, y)
    en = ex * curve.normal[:, 0] + ey * curve.normal[:, 1]
    first_geo = geometric_first_variation(curve, eta)
    second_geo = geometric_second_variation(curve, eta)
    stretch = normal_stretch(curve, eta)
    normal_term = curve.integrate(stretch**2)

    def diff(px, py):
        a = gz(px, py)
        b = Zf(px, py)
        return a[0] - b[0], a[1] - b[1]

    J = _jacobian(diff, x, y, step)
    div_gamma = curve.integrate(_quad(curve.tangent, J, curve.tangent))
    out = {
        "ac.first": SURFACE_TENSION * first_geo,
        "ac.second_geometric": second_geo,
        "ac.term_normal": normal_term,
        "ac.second": SURFACE_TENSION * (second_geo + normal_term),
    }
    b_first = b_greens = b_transport = b_accel = 0.0
    if gamma or v0 is not None or G is not None:
        if G is None:
            from .energies import green_kernel

            G = green_kernel(domain)
        pot = _potential(curve, v0, domain)
        gvx, gvy = pot.gradient()
        dz = diff(x, y)
        div_eta = _divergence(f, x, y, step)
        acc_n = (dz[0] + div_eta * ex) * curve.normal[:, 0] + (dz[1] + div_eta * ey) * curve.normal[:, 1]
        b_first = 4 * curve.integrate(pot.values * en)
        b_greens = 8 * green_surface_form(G, curve, NormalSpeed(en))
        b_transport = 4 * curve.integrate((gvx * ex + gvy * ey) * en)
        b_accel = 4 * curve.integrate(pot.values * acc_n)
        out.update({
            "b.first": b_first,
            "b.term_greens": b_greens,
            "b.term_transport": b_transport,
            "b.term_accel": b_accel,
            "b.second": b_greens + b_transport + b_accel,
        })
    b_second = b_greens + b_transport + b_accel
    out["ok.term_divgamma"] = div_gamma
    out["ok.first"] = SURFACE_TENSION * (first_geo + gamma * b_first)
    out["ok.second_scaled"] = second_geo + normal_term + div_gamma + gamma * b_second
    out["ok.second"] = SURFACE_TENSION * out["ok.second_scaled"]
    return out


def prediction_json(terms: dict) -> str:
    return json.dumps({k: float(v) for k, v in terms.items()}, sort_keys=True)


# ---------------------------------------------------------------------------
# family oracle: lengths of deformed polylines
# ---------------------------------------------------------------------------


def polyline_length(points: np.ndarray, closed: bool) -> float:
    seg = np.diff(points, axis=0)
    total = float(np.sum(np.hypot(seg[:, 0], seg[:, 1])))
    if closed:
        total += float(np.hypot(*(points[0] - points[-1])))
    return total


def length_family_oracle(curve: InterfaceCurve, eta: VectorField, zeta: VectorField = None,
                         t0: float = None) -> tuple[float, float]:
    """(d/dt, d²/dt²) of length(Φ_t(Γ)) at t = 0, with Φ_t = x + tη + (t²/2)ζ.

    Nodes are moved individually and the polyline length is differenced in t
    (central differences, Richardson over t₀ and t₀/2).
    """
    x, y = curve.nodes.T
    f = _sampler(eta)
    g = _transport(f, _fd_step(eta.domain)) if zeta is None else _sampler(zeta)
    ex, ey = f(x, y)
    zx, zy = g(x, y)
    emax = float(np.max(np.hypot(ex, ey))) or 1.0
    if t0 is None:
        t0 = 1e-2 * curve.length / emax

    def L(t):
        pts = np.column_stack([x + t * ex + t * t / 2 * zx, y + t * ey + t * t / 2 * zy])
        return polyline_length(pts, curve.closed)

    L0 = L(0.0)
    vals = {t: L(t) for t in (t0, -t0, t0 / 2, -t0 / 2)}
    d1 = lambda t: (vals[t] - vals[-t]) / (2 * t)  # noqa: E731
    d2 = lambda t: (vals[t] - 2 * L0 + vals[-t]) / t**2  # noqa: E731
    return (4 * d1(t0 / 2) - d1(t0)) / 3, (4 * d2(t0 / 2) - d2(t0)) / 3
