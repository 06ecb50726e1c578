"""Allen–Cahn and Ohta–Kawasaki energies, Neumann Poisson solves, Green kernels.

The gradient part of the Allen–Cahn energy is the edge-difference form
``ε/2 uᵀKu`` (``Domain.stiffness``), i.e. the quadratic form of the
ghost-point Neumann Laplacian.  The same form is used by the Newton solver
and the linearized operators, so energies, Euler–Lagrange residuals and
Hessians are exactly consistent with each other.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dctn, idctn
from scipy.interpolate import CubicSpline

from .domain_geometry import Domain, InterfaceCurve, InvalidSpecError, NormalSpeed
from .fields_calculus import ScalarField, gradient

SURFACE_TENSION = 4.0 / 3.0


class LinearSolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# parameters and integrands
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Interface width ε, nonlocal strength γ and optional mass fraction m."""

    eps: float
    gamma: float = 0.0
    m: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise InvalidSpecError(f"eps must be positive, got {self.eps}")
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise InvalidSpecError(f"gamma must be non-negative, got {self.gamma}")
        if self.m is not None and not -1 < self.m < 1:
            raise InvalidSpecError(f"m must lie in (-1, 1), got {self.m}")


@dataclass(frozen=True)
class Integrand:
    """A smooth density F(z, p) with its first and second partial derivatives.

    Every callable takes ``(z, px, py)`` arrays.  ``Fp`` and ``Fzp`` return a
    pair, ``Fpp`` a 2×2 nested tuple.  The derivatives are checked against
    central differences of ``F`` on construction.
    """

    F: callable
    Fz: callable
    Fp: callable
    Fzz: callable
    Fzp: callable
    Fpp: callable
    name: str = "integrand"
    check: bool = True

    def __post_init__(self):
        if self.check:
            self.self_test()

    def self_test(self, probes: int = 8, rtol: float = 1e-6):
        rng = np.random.default_rng(20240611)
        z, px, py = rng.uniform(-1.2, 1.2, (3, probes))
        h = 1e-5

        def close(a, b, what):
            a, b = np.asarray(a, float), np.asarray(b, float)
            scale = np.maximum(1.0, np.abs(b))
            if np.any(np.abs(a - b) > rtol * scale * 10):
                raise ValueError(f"{self.name}: {what} disagrees with finite differences")

        def fd(f, i):
            args = [z, px, py]
            up = [a + (h if k == i else 0) for k, a in enumerate(args)]
            dn = [a - (h if k == i else 0) for k, a in enumerate(args)]
            return (np.asarray(f(*up)) - np.asarray(f(*dn))) / (2 * h)

        close(self.Fz(z, px, py), fd(self.F, 0), "F_z")
        fp = self.Fp(z, px, py)
        close(fp[0], fd(self.F, 1), "F_p1")
        close(fp[1], fd(self.F, 2), "F_p2")
        close(self.Fzz(z, px, py), fd(self.Fz, 0), "F_zz")
        fzp = self.Fzp(z, px, py)
        close(fzp[0], fd(self.Fz, 1), "F_zp1")
        close(fzp[1], fd(self.Fz, 2), "F_zp2")
        fpp = self.Fpp(z, px, py)
        close(fpp[0][0], fd(lambda *a: self.Fp(*a)[0], 1), "F_p1p1")
        close(fpp[0][1], fd(lambda *a: self.Fp(*a)[0], 2), "F_p1p2")
        close(fpp[1][1], fd(lambda *a: self.Fp(*a)[1], 2), "F_p2p2")
        close(fpp[0][1], fpp[1][0], "F_pp symmetry")


def double_well(u):
    """W(u) = (1 - u²)²/2."""
    return 0.5 * (1 - u * u) ** 2


def allen_cahn_integrand(eps: float) -> Integrand:
    """F(z, p) = ε|p|²/2 + (1 - z²)²/(2ε)."""
    zero = lambda z, px, py: 0 * z  # noqa: E731
    return Integrand(
        F=lambda z, px, py: eps * (px * px + py * py) / 2 + (1 - z * z) ** 2 / (2 * eps),
        Fz=lambda z, px, py: 2 * (z**3 - z) / eps + 0 * px,
        Fp=lambda z, px, py: (eps * px + 0 * z, eps * py + 0 * z),
        Fzz=lambda z, px, py: (6 * z * z - 2) / eps + 0 * px,
        Fzp=lambda z, px, py: (zero(z, px, py), zero(z, px, py)),
        Fpp=lambda z, px, py: ((eps + 0 * z, 0 * z), (0 * z, eps + 0 * z)),
        name=f"allen_cahn(eps={eps})",
    )


def dirichlet_integrand() -> Integrand:
    """F(z, p) = |p|²/2."""
    return Integrand(
        F=lambda z, px, py: (px * px + py * py) / 2 + 0 * z,
        Fz=lambda z, px, py: 0 * z,
        Fp=lambda z, px, py: (px + 0 * z, py + 0 * z),
        Fzz=lambda z, px, py: 0 * z,
        Fzp=lambda z, px, py: (0 * z, 0 * z),
        Fpp=lambda z, px, py: ((1 + 0 * z, 0 * z), (0 * z, 1 + 0 * z)),
        name="dirichlet",
    )


def coupled_test_integrand() -> Integrand:
    """A non-separable density (nonzero F_zp) used by the variation audits.

    F = (1 + z²/2)|p|²/2 + z p₁/3 + sin z + z⁴/4.
    """
    return Integrand(
        F=lambda z, px, py: (1 + z * z / 2) * (px * px + py * py) / 2 + z * px / 3 + np.sin(z) + z**4 / 4,
        Fz=lambda z, px, py: z * (px * px + py * py) / 2 + px / 3 + np.cos(z) + z**3,
        Fp=lambda z, px, py: ((1 + z * z / 2) * px + z / 3, (1 + z * z / 2) * py),
        Fzz=lambda z, px, py: (px * px + py * py) / 2 - np.sin(z) + 3 * z * z,
        Fzp=lambda z, px, py: (z * px + 1 / 3, z * py),
        Fpp=lambda z, px, py: ((1 + z * z / 2, 0 * z), (0 * z, 1 + z * z / 2)),
        name="coupled_test",
    )


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------


@dataclass
class EnergyReport:
    ac_energy: float
    nonlocal_energy: float
    total: float
    discrepancy_L1: float
    phi_total_variation: float
    phi_vs_gradient: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def allen_cahn_energy(u: ScalarField, p: ModelParams) -> float:
    """E_ε(u) = ∫ ε|∇u|²/2 + (1 - u²)²/(2ε)."""
    d = u.domain
    return 0.5 * p.eps * d.dirichlet_energy(u.values) + d.integrate(double_well(u.values)) / p.eps


def phi_primitive(a):
    """Φ(a) = ∫₀^a |s² - 1| ds in closed form (odd, Φ(±1) = ±2/3)."""
    a = np.asarray(a, dtype=float)
    inner = a - a**3 / 3
    outer = np.sign(a) * (4.0 / 3.0) + a**3 / 3 - a
    return np.where(np.abs(a) <= 1, inner, outer)


def discrepancy_report(u: ScalarField, p: ModelParams, gamma: float = None) -> EnergyReport:
    """Energy together with the equipartition and total-variation diagnostics.

    Pointwise gradients use the centred stencils of ``fields_calculus``.
    """
    d = u.domain
    eps = p.eps
    gx, gy = gradient(d, u.values)
    grad2 = gx * gx + gy * gy
    pot = (1 - u.values**2) ** 2
    ac = allen_cahn_energy(u, p)
    disc = d.integrate(np.abs(eps * grad2 - pot / eps))
    dphi = np.abs(u.values**2 - 1) * np.sqrt(grad2)  # |∇Φ(u)| = |Φ'(u)||∇u|
    tv = d.integrate(dphi)
    pvg = d.integrate(np.abs(eps * grad2 - dphi))
    g = p.gamma if gamma is None else gamma
    B = nonlocal_energy(u) if g > 0 else 0.0
    return EnergyReport(ac, B, ac + SURFACE_TENSION * g * B, disc, tv, pvg)


# ---------------------------------------------------------------------------
# Neumann Poisson problem
# ---------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _bordered_factor(domain: Domain):
    K = domain.stiffness
    m = domain.mass_dof[:, None]
    A = sp.bmat([[K, sp.csr_matrix(m)], [sp.csr_matrix(m.T), None]], format="csc")
    return spla.splu(A)


@lru_cache(maxsize=8)
def _dct_symbols(domain: Domain):
    lam = []
    for n, h in zip(domain.n, domain.spacing):
        k = np.arange(n)
        lam.append((2 - 2 * np.cos(np.pi * k / (n - 1))) / h**2)
    sym = lam[0][:, None] + lam[1][None, :]
    sym[0, 0] = 1.0
    return sym


def solve_neumann(domain: Domain, f: np.ndarray, method: str = "auto") -> np.ndarray:
    """Solve the discrete problem Kv = W f with ∫v = 0.

    ``f`` must have zero weighted mean.  Rectangles use the exact DCT-I
    diagonalisation of the ghost-point Laplacian; the disk (or
    ``method='sparse'``) uses a bordered sparse LU factorisation.
    """
    f = np.asarray(f, dtype=float)
    if method == "auto":
        method = "sparse" if domain.is_disk else "dct"
    if method == "dct":
        if domain.is_disk:
            raise ValueError("DCT Poisson solver needs a rectangle")
        c = dctn(f, type=1)
        c /= _dct_symbols(domain)
        c[0, 0] = 0.0
        v = idctn(c, type=1)
    else:
        lu = _bordered_factor(domain)
        rhs = np.concatenate([domain.mass_dof * domain.to_dof(f), [0.0]])
        v = domain.from_dof(lu.solve(rhs)[:-1])
    return v - domain.mean(v)


def poisson_neumann(u: ScalarField, method: str = "auto", check: bool = True) -> ScalarField:
    """v with -Δv = u - ū, ∂v/∂ν = 0, ∫v = 0.  ``v.source_mean`` holds ū."""
    d = u.domain
    ubar = d.mean(u.values)
    f = u.values - ubar
    v = solve_neumann(d, f, method)
    if check:
        K, vd, wf = d.stiffness, d.to_dof(v), d.mass_dof * d.to_dof(f)
        res = K @ vd - wf
        # |u| rather than |u - ū| so that round-off in a near-constant source counts as zero
        scale = max(float(np.max(abs(K) @ np.abs(vd) + d.mass_dof * np.abs(d.to_dof(u.values)))), 1e-300)
        if np.max(np.abs(res)) > 1e-10 * scale:
            raise LinearSolverError(f"Poisson residual {np.max(np.abs(res)):.3e} above tolerance")
    out = ScalarField(d, v)
    out.source_mean = ubar
    return out


def nonlocal_energy(u: ScalarField, return_potential: bool = False):
    """B(u) = ∫|∇v|² with v = poisson_neumann(u), cross-checked against ∫v(u - ū)."""
    v = poisson_neumann(u)
    d = u.domain
    B = d.dirichlet_energy(v.values)
    alt = d.integrate(v.values * (u.values - v.source_mean))
    scale = max(abs(B), 1e-14 * d.integrate(u.values**2) * d.area, 1e-300)
    if abs(B - alt) > 1e-8 * scale:
        raise LinearSolverError(f"B self-check failed: {B!r} vs {alt!r}")
    return (B, v) if return_potential else B


def ohta_kawasaki_energy(u: ScalarField, p: ModelParams) -> EnergyReport:
    """𝓔 = E_ε + (4/3)γB together with the discrepancy diagnostics."""
    return discrepancy_report(u, p)


# ---------------------------------------------------------------------------
# Green kernels
# ---------------------------------------------------------------------------


def _logdist_ratio(alpha, beta):
    """log of ((1-e^{-α})² + 4e^{-α}sin²(β/2)) / (α² + β²), equal to 0 at the origin."""
    num = np.expm1(-alpha) ** 2 + 4 * np.exp(-alpha) * np.sin(beta / 2) ** 2
    den = alpha**2 + beta**2
    safe = den > 0
    out = np.zeros(np.broadcast(alpha, beta).shape)
    out[safe] = np.log(num[safe] / den[safe])
    return out


def _logterm(alpha, beta):
    return np.log(np.expm1(-alpha) ** 2 + 4 * np.exp(-alpha) * np.sin(beta / 2) ** 2)


class GreenKernel:
    """Neumann Green's function G with -Δ_x G = δ_y - 1/|Ω| and ∫G(x,y)dx = 0.

    ``regular(P, Q) = G(P, Q) + log|P - Q|/(2π)`` is smooth across the
    diagonal and is what curve quadratures use.
    """

    def __init__(self, domain: Domain):
        self.domain = domain

    def __call__(self, P, Q):
        P, Q = np.asarray(P, float), np.asarray(Q, float)
        r = np.hypot(P[..., 0] - Q[..., 0], P[..., 1] - Q[..., 1])
        if np.any(r <= 1e-12 * self.domain.diameter):
            raise ValueError("G evaluated on its diagonal; use the regular part")
        return self.regular(P, Q) - np.log(r) / (2 * np.pi)

    def regular(self, P, Q):
        raise NotImplementedError


class RectangleGreen(GreenKernel):
    """Closed-form image sums for the rectangle.

    Expanding in the cosine modes of the longer side, each modal 1-D Green's
    function is a sum of four exponentials; summing the leading part of the
    series in closed form leaves a remainder that decays like
    exp(-2πl·L_short/L_long), truncated at relative size ``tol``.
    """

    def __init__(self, domain: Domain, tol: float = 1e-16):
        super().__init__(domain)
        if domain.is_disk:
            raise ValueError("RectangleGreen needs a rectangle")
        L1, L2 = domain.lengths
        # series along the axis of length Ls ("b"), 1-D Green along La ("a")
        self.swap = L1 < L2
        self.La, self.Lb = (L2, L1) if self.swap else (L1, L2)
        rate = np.exp(-2 * np.pi * self.La / self.Lb)
        self.nterms = 0
        while True:
            self.nterms += 1
            l = self.nterms
            if 4 * rate**l / (1 - rate**l) / (np.pi * l) < tol:
                break

    def _local(self, P):
        a = P[..., 0] - self.domain.origin[0]
        b = P[..., 1] - self.domain.origin[1]
        return (b, a) if self.swap else (a, b)

    def regular(self, P, Q):
        P, Q = np.asarray(P, float), np.asarray(Q, float)
        a1, b1 = self._local(P)
        a2, b2 = self._local(Q)
        La, Lb = self.La, self.Lb
        k = np.pi / Lb
        dists = [np.abs(a1 - a2), a1 + a2, 2 * La - a1 - a2, 2 * La - np.abs(a1 - a2)]
        betas = [k * (b1 - b2), k * (b1 + b2)]
        total = -_logdist_ratio(k * dists[0], betas[0]) - 2 * np.log(k)
        for i, dist in enumerate(dists):
            for j, beta in enumerate(betas):
                if i == 0 and j == 0:
                    continue
                total = total - _logterm(k * dist, beta)
        out = total / (4 * np.pi)
        # geometric remainder of the modal series
        q = np.exp(-2 * np.pi * La / Lb)
        for l in range(1, self.nterms + 1):
            rho = q**l / (1 - q**l)
            ex = sum(np.exp(-l * k * dist) for dist in dists)
            out = out + (np.cos(l * betas[0]) + np.cos(l * betas[1])) * ex * rho / (2 * np.pi * l)
        # zero mode of the series direction
        g0 = La / 3 - np.maximum(a1, a2) + (a1**2 + a2**2) / (2 * La)
        return out + g0 / Lb

    def series(self, P, Q, modes: int = 256):
        """Plain double cosine eigen-series (slow, independent cross-check)."""
        P, Q = np.asarray(P, float), np.asarray(Q, float)
        L1, L2 = self.domain.lengths
        x0, y0 = self.domain.origin
        k = np.arange(modes)
        ck = np.where(k == 0, 1.0, 2.0)
        cx = lambda x: np.cos(np.multiply.outer(x - x0, k * np.pi / L1))  # noqa: E731
        cy = lambda y: np.cos(np.multiply.outer(y - y0, k * np.pi / L2))  # noqa: E731
        mu = (k[:, None] * np.pi / L1) ** 2 + (k[None, :] * np.pi / L2) ** 2
        mu[0, 0] = np.inf
        coef = np.outer(ck, ck) / (L1 * L2) / mu
        AP, BP = cx(P[..., 0]), cy(P[..., 1])
        AQ, BQ = cx(Q[..., 0]), cy(Q[..., 1])
        return np.einsum("...k,...l,kl->...", AP * AQ, BP * BQ, coef)


class DiskGreen(GreenKernel):
    """Closed form for the disk of radius R (Kelvin image plus quadratic)."""

    def regular(self, P, Q):
        P, Q = np.asarray(P, float), np.asarray(Q, float)
        R = self.domain.radius
        c = np.asarray(self.domain.origin)
        x = (P - c) / R
        y = (Q - c) / R
        xx = np.sum(x * x, axis=-1)
        yy = np.sum(y * y, axis=-1)
        xy = np.sum(x * y, axis=-1)
        image = 0.5 * np.log(xx * yy - 2 * xy + 1)
        return (np.log(R) - image) / (2 * np.pi) + (xx + yy) / (4 * np.pi) - 3 / (8 * np.pi)


def green_kernel(domain: Domain) -> GreenKernel:
    return DiskGreen(domain) if domain.is_disk else RectangleGreen(domain)


def _log_hat_integrals(si, sj, ds, left, right):
    """∫ log|s_i - t| ℓ_j(t) dt for piecewise-linear hats ℓ_j of width ds.

    ``left``/``right`` mask whether hat j has its left/right half.
    """

    def A0(x):
        ax = np.abs(x)
        return np.where(ax > 0, x * np.log(np.where(ax > 0, ax, 1.0)) - x, 0.0)

    def A1(x):
        ax = np.abs(x)
        return np.where(ax > 0, x * x / 2 * np.log(np.where(ax > 0, ax, 1.0)) - x * x / 4, 0.0)

    d = sj[None, :] - si[:, None]  # hat centre relative to s_i
    out = np.zeros_like(d)
    # right half: ℓ = 1 - (x - d)/ds on x ∈ [d, d + ds]
    lo, hi = d, d + ds
    val = (1 + d / ds) * (A0(hi) - A0(lo)) - (A1(hi) - A1(lo)) / ds
    out += np.where(right[None, :], val, 0.0)
    # left half: ℓ = 1 + (x - d)/ds on x ∈ [d - ds, d]
    lo, hi = d - ds, d
    val = (1 - d / ds) * (A0(hi) - A0(lo)) + (A1(hi) - A1(lo)) / ds
    out += np.where(left[None, :], val, 0.0)
    return out


def green_curve_matrix(G: GreenKernel, curve: InterfaceCurve) -> np.ndarray:
    """Symmetric matrix M with ∫_Γ∫_Γ G ξψ ≈ ξᵀMψ.

    The kernel is split as G = -log|x-y|/(2π) + regular.  The logarithm is
    integrated exactly against piecewise-linear hats in arclength (for the
    circle, log|chord| = log|Δs| + a smooth correction), the regular part by
    the product trapezoid rule.  For a curve ending on ∂Ω the logarithms of
    the endpoint images are treated like the direct one.
    """
    key = id(curve)
    cache = getattr(G, "_curve_cache", None)
    if cache is None:
        cache = G._curve_cache = {}
    if key in cache:
        return cache[key][1]
    X = curve.nodes
    w = curve.weights
    s = curve.s
    ds = curve.ds
    m = curve.size
    with np.errstate(divide="ignore"):
        # endpoint diagonals of open curves are infinite here; replaced below
        reg = G.regular(X[:, None, :], X[None, :, :])
    if curve.closed:
        L = curve.length
        delta = (s[None, :] - s[:, None] + L / 2) % L - L / 2
        shifted = s[:, None] + delta  # image of s_j nearest to s_i
        r = curve.params["r"]
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = np.where(delta != 0, np.log(np.abs(2 * r * np.sin(delta / (2 * r))) / np.abs(delta)), 0.0)
        reg = reg - corr / (2 * np.pi)
        ones = np.ones(m, dtype=bool)
        logint = np.empty((m, m))
        for i in range(m):
            logint[i] = _log_hat_integrals(s[i : i + 1], shifted[i], ds, ones, ones)[0]
    else:
        # Γ meets ∂Ω orthogonally, so near each endpoint the Neumann image of
        # Γ is its own continuation: pull -log(image distance)/(2π) out of the
        # regular part and integrate it exactly as well
        L = curve.length
        left = np.arange(m) > 0
        right = np.arange(m) < m - 1
        img = s[:, None] + s[None, :]
        img_far = 2 * L - img
        with np.errstate(divide="ignore", invalid="ignore"):
            reg = reg + (np.log(img) + np.log(img_far)) / (2 * np.pi)
        for k, (a, b, c) in ((0, (1, 2, 3)), (m - 1, (m - 2, m - 3, m - 4))):
            reg[k, k] = 3 * reg[k, a] - 3 * reg[k, b] + reg[k, c]
        logint = _log_hat_integrals(s, s, ds, left, right)
        logint += _log_hat_integrals(-s, s, ds, left, right)
        logint += _log_hat_integrals(2 * L - s, s, ds, left, right)
    M = w[:, None] * w[None, :] * reg - w[:, None] * logint / (2 * np.pi)
    M = 0.5 * (M + M.T)
    cache[key] = (curve, M)
    return M


def green_surface_form(G: GreenKernel, curve: InterfaceCurve, xi: NormalSpeed,
                       psi: NormalSpeed = None) -> float:
    """∫_Γ∫_Γ G(x,y)ξ(x)ψ(y) (ψ defaults to ξ)."""
    M = green_curve_matrix(G, curve)
    a = xi.values
    b = a if psi is None else psi.values
    return float(a @ M @ b)


def single_layer_on_curve(G: GreenKernel, curve: InterfaceCurve, xi: NormalSpeed) -> np.ndarray:
    """Nodal values of ∫_Γ G(x_i, y)ξ(y) (divided-out outer weight)."""
    M = green_curve_matrix(G, curve)
    return (M @ xi.values) / curve.weights


def _speed_off_curve(curve: InterfaceCurve, xi: NormalSpeed):
    if curve.closed:
        s_ext = np.concatenate([curve.s, [curve.length]])
        sp_ = CubicSpline(s_ext, np.concatenate([xi.values, xi.values[:1]]), bc_type="periodic")
        return lambda s: sp_(np.mod(s, curve.length))
    sp_ = CubicSpline(curve.s, xi.values)
    return lambda s: sp_(np.clip(s, curve.s[0], curve.s[-1]))


def smeared_source_form(domain: Domain, curve: InterfaceCurve, xi: NormalSpeed,
                        width: float = None, extrapolate: bool = True) -> float:
    """Independent oracle for ∫_Γ∫_Γ G ξξ: smear ξ δ_Γ over a band, solve, integrate on Γ.

    On rectangles the band is a Gaussian of standard deviation ``width``
    (default 2h) in the normal direction, the Poisson problem is solved with
    the exact symbols of the Neumann cosine series and the series is summed
    at the curve nodes, so the only error left is the smearing.  That error
    has an expansion in powers of the width and is removed by Richardson
    extrapolation over {w, 2w, 4w}.  On the disk the band is a cosine kernel
    of half-width 3h (default), the grid Poisson solver is used, and two
    widths are combined.
    """
    X, Y = domain.coords
    dist = curve.signed_distance_at(X, Y)
    speed = _speed_off_curve(curve, xi)(curve.parameter_of(X, Y))
    if not curve.closed:
        s = curve.parameter_of(X, Y)
        speed = np.where((s >= curve.s[0]) & (s <= curve.s[-1]), speed, 0.0)

    if domain.is_disk:
        width = 3 * domain.h if width is None else width

        def form(a):
            kern = np.where(np.abs(dist) < a, (1 + np.cos(np.pi * dist / a)) / (2 * a), 0.0)
            v = poisson_neumann(ScalarField(domain, speed * kern), check=False)
            return curve.integrate(v(curve.nodes[:, 0], curve.nodes[:, 1]) * xi.values)

        f1 = form(width)
        return 2 * f1 - form(2 * width) if extrapolate else f1

    width = 2 * domain.h if width is None else width
    n1, n2 = domain.shape
    L1, L2 = domain.lengths
    x0, y0 = domain.origin
    j = np.arange(n1)
    k = np.arange(n2)
    lam = np.pi**2 * ((j[:, None] / L1) ** 2 + (k[None, :] / L2) ** 2)
    lam[0, 0] = np.inf
    cx = np.cos(np.pi * np.outer(curve.nodes[:, 0] - x0, j) / L1)
    cy = np.cos(np.pi * np.outer(curve.nodes[:, 1] - y0, k) / L2)

    def form(sig):
        src = speed * np.exp(-0.5 * (dist / sig) ** 2) / (np.sqrt(2 * np.pi) * sig)
        # DCT-I gives the cosine coefficients of the trigonometric interpolant
        C = dctn(src, type=1) / ((n1 - 1) * (n2 - 1))
        C[[0, -1], :] *= 0.5
        C[:, [0, -1]] *= 0.5
        v = np.einsum("ij,jk,ik->i", cx, C / lam, cy)
        return curve.integrate(v * xi.values)

    f1 = form(width)
    if not extrapolate:
        return f1
    return (8 * f1 - 6 * form(2 * width) + form(4 * width)) / 3
