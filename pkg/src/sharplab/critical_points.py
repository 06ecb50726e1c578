"""Critical points of the Allen–Cahn and Ohta–Kawasaki energies.

The discrete energy is the staggered one used throughout the library,

    E_h(u) = ε/2 uᵀKu + Σ w (1 - u²)²/(2ε) + (4/3)γ vᵀKv,   Kv = W(u - ū),

so the Euler–Lagrange residual is

    R(u) = εKu + W·2(u³ - u)/ε + (8/3)γ W v - λ W 1

with λ the multiplier of the mass constraint ∫u = m|Ω| (absent without it).
The nonlocal potential enters as extra unknowns (v, ū and a multiplier for
∫v = 0) so every Newton system stays sparse.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain_geometry import Domain, InterfaceCurve
from .energies import ModelParams
from .fields_calculus import ScalarField, VectorField

log = logging.getLogger(__name__)

DAMPING_FACTOR = 0.5
DAMPING_FLOOR = 2.0**-10


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class SingularJacobianError(RuntimeError):
    pass


@dataclass
class SolveResult:
    u: ScalarField
    residual_norm: float
    multiplier: float | None
    iterations: int
    symmetry: str = "none"
    history: list = field(default_factory=list)

    @property
    def lagrange_multiplier(self):
        return self.multiplier

    def to_json(self) -> str:
        return json.dumps({
            "residual_norm": self.residual_norm,
            "lagrange_multiplier": self.multiplier,
            "iterations": self.iterations,
            "symmetry": self.symmetry,
            "history": self.history,
            "mass": self.u.domain.mean(self.u.values),
        }, sort_keys=True)


def profile_1d(eps: float, x, x0: float = 0.0) -> np.ndarray:
    """tanh((x - x₀)/ε), the heteroclinic solution of -εu'' + 2(u³ - u)/ε = 0."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return np.tanh((np.asarray(x, dtype=float) - x0) / eps)


def profile_field(domain: Domain, curve: InterfaceCurve, eps: float,
                  profile: str = "distance") -> ScalarField:
    """-tanh(d/ε), positive on the phase {u₀ = 1}.

    ``profile='level_set'`` replaces the signed distance d of a circle of
    radius r by (|x - c|² - r²)/(2r), which agrees with d to first order on Γ.
    """
    X, Y = domain.coords
    if profile == "distance":
        d = curve.signed_distance_at(X, Y)
    elif profile == "level_set":
        if curve.kind != "circle":
            raise ValueError("the level-set profile is defined for circles")
        cx, cy = curve.params["center"]
        r = curve.params["r"]
        d = ((X - cx) ** 2 + (Y - cy) ** 2 - r * r) / (2 * r)
    else:
        raise ValueError(f"unknown profile {profile!r}")
    return ScalarField(domain, -np.tanh(d / eps))


# ---------------------------------------------------------------------------
# Newton system
# ---------------------------------------------------------------------------


def _odd_basis(domain: Domain, axis: str) -> sp.csr_matrix:
    """Columns e_i - e_σ(i) spanning the grid functions odd under the reflection σ."""
    img = domain.reflection(axis)
    idx = np.arange(domain.n_dof)
    reps = idx[idx < img]
    Q = sp.coo_matrix(
        (np.concatenate([np.ones(reps.size), -np.ones(reps.size)]),
         (np.concatenate([reps, img[reps]]), np.concatenate([np.arange(reps.size)] * 2))),
        shape=(domain.n_dof, reps.size),
    )
    return Q.tocsr()


class _System:
    """Residual and Jacobian of the discrete Euler–Lagrange system."""

    def __init__(self, domain: Domain, p: ModelParams, constrained: bool):
        self.d = domain
        self.p = p
        self.K = domain.stiffness
        self.w = domain.mass_dof
        self.W = sp.diags(self.w)
        self.c = 8.0 / 3.0 * p.gamma
        self.nonlocal_ = p.gamma > 0
        self.constrained = constrained
        self.N = domain.n_dof

    # unknown layout: u | v | ū, μ | λ   (v block only when γ > 0)
    def split(self, z):
        N = self.N
        u = z[:N]
        if self.nonlocal_:
            v, ubar, mu = z[N : 2 * N], z[2 * N], z[2 * N + 1]
            rest = z[2 * N + 2 :]
        else:
            v, ubar, mu, rest = None, 0.0, 0.0, z[N:]
        lam = rest[0] if self.constrained else 0.0
        return u, v, ubar, mu, lam

    def initial(self, u):
        parts = [u]
        if self.nonlocal_:
            from .energies import solve_neumann

            d = self.d
            vals = d.from_dof(u)
            ubar = d.mean(vals)
            v = d.to_dof(solve_neumann(d, vals - ubar))
            parts += [v, [ubar, 0.0]]
        if self.constrained:
            parts.append([0.0])
        return np.concatenate(parts)

    def residual(self, z):
        p, w, K = self.p, self.w, self.K
        u, v, ubar, mu, lam = self.split(z)
        Ru = p.eps * (K @ u) + w * 2 * (u**3 - u) / p.eps - lam * w
        out = [Ru]
        if self.nonlocal_:
            Ru += self.c * w * v
            out += [K @ v - w * u + (ubar + mu) * w,
                    [self.d.area * ubar - w @ u, w @ v]]
        if self.constrained:
            out.append([w @ u - self.p.m * self.d.area])
        return np.concatenate(out)

    def jacobian(self, z):
        p, w, K, W = self.p, self.w, self.K, self.W
        u = z[: self.N]
        A = p.eps * K + sp.diags(w * 2 * (3 * u**2 - 1) / p.eps)
        wc = sp.csr_matrix(w[:, None])
        if not self.nonlocal_:
            if not self.constrained:
                return A.tocsc()
            return sp.bmat([[A, -wc], [wc.T, None]], format="csc")
        Z = None
        blocks = [
            [A, self.c * W, Z, Z],
            [-W, K, wc, wc],
            [-wc.T, Z, sp.csr_matrix([[self.d.area]]), Z],
            [Z, wc.T, Z, sp.csr_matrix([[0.0]])],
        ]
        if self.constrained:
            for row in blocks:
                row.append(Z)
            blocks[0][-1] = -wc
            blocks.append([wc.T, Z, Z, Z, sp.csr_matrix([[0.0]])])
        return sp.bmat(blocks, format="csc")

    def strong_residual(self, z) -> float:
        return float(np.max(np.abs(self.residual(z)[: self.N] / self.w)))


def _reduce(system: _System, Q: sp.csr_matrix):
    """Embedding of the odd subspace into the full unknown vector.

    In the odd subspace ū = μ = λ = 0 by symmetry, so only u (and v) are kept.
    """
    if system.nonlocal_:
        extra = 2 + int(system.constrained)
        E = sp.block_diag([Q, Q, sp.csr_matrix((extra, 0))], format="csr")
    else:
        E = sp.block_diag([Q, sp.csr_matrix((int(system.constrained), 0))], format="csr")
    return E


def solve_critical(domain: Domain, p: ModelParams, init: ScalarField = None,
                   curve: InterfaceCurve = None, symmetry: str = "none",
                   axis: str = None, damping: bool = True, tol: float = 1e-9,
                   max_iter: int = 60) -> SolveResult:
    """Damped Newton for a critical point of the discrete energy.

    Parameters
    ----------
    init : ScalarField, optional
        Initial guess; defaults to -tanh(d_Γ/ε) for ``curve``.
    symmetry : {'none', 'odd_across_interface'}
        Restrict the iteration to grid functions odd under the reflection
        across the interface (``axis`` 'x' for a vertical line through the
        centre of a rectangle, 'y' for the horizontal diameter of a disk).
    tol : float
        Target for max |R/w|, the strong-form residual.  Raised to the
        rounding floor 64·eps·max_i Σ_j |J_ij|/w_i when that is larger.
    """
    if init is None:
        if curve is None:
            raise ValueError("either init or curve is required")
        init = profile_field(domain, curve, p.eps)
    u0 = domain.to_dof(init.values)
    constrained = p.m is not None
    if constrained:
        u0 = u0 + (p.m * domain.area - domain.mass_dof @ u0) / domain.area
    sysm = _System(domain, p, constrained)
    E = None
    if symmetry == "odd_across_interface":
        if axis is None:
            axis = "y" if domain.is_disk else "x"
        if constrained and abs(p.m) > 0:
            raise ValueError("odd symmetry forces zero mass; set m = 0 or drop the symmetry")
        Q = _odd_basis(domain, axis)
        img = domain.reflection(axis)
        u0 = 0.5 * (u0 - u0[img])
        E = _reduce(sysm, Q)
    elif symmetry != "none":
        raise ValueError(f"unknown symmetry {symmetry!r}")

    z = sysm.initial(u0)
    if E is not None:
        N = sysm.N
        z[N:] = 0.0
        if sysm.nonlocal_:
            v = sysm.initial(u0)[N : 2 * N]
            z[N : 2 * N] = 0.5 * (v - v[img])

    def rnorm(zz):
        r = sysm.residual(zz)
        return float(np.linalg.norm(r if E is None else E.T @ r))

    # rounding in R/w is of order machine-eps·max row sum of |J|/w, which on
    # fine polar grids (tiny cells at the pole) exceeds the default target
    J0 = abs(sysm.jacobian(z)[: sysm.N, : sysm.N])
    floor = 64 * np.finfo(float).eps * float(np.max((J0 @ np.ones(sysm.N)) / sysm.w))
    if floor > tol:
        log.info("residual target %.1e raised to the rounding floor %.1e", tol, floor)
        tol = floor
    history = []
    res = sysm.strong_residual(z)
    for it in range(1, max_iter + 1):
        history.append(res)
        if res <= tol:
            return _result(domain, sysm, z, res, it - 1, symmetry, history)
        r = sysm.residual(z)
        J = sysm.jacobian(z)
        try:
            if E is None:
                step = spla.splu(J).solve(-r)
            else:
                Jr = (E.T @ J @ E).tocsc()
                step = E @ spla.splu(Jr).solve(-(E.T @ r))
        except RuntimeError as exc:
            raise SingularJacobianError(
                "Newton Jacobian is singular; try symmetry='odd_across_interface'"
            ) from exc
        alpha = 1.0
        if damping:
            r0 = rnorm(z)
            while alpha > DAMPING_FLOOR and rnorm(z + alpha * step) > (1 - 1e-4 * alpha) * r0:
                alpha *= DAMPING_FACTOR
        z = z + alpha * step
        res = sysm.strong_residual(z)
        log.debug("newton it=%d residual=%.3e damping=%.4g", it, res, alpha)
    history.append(res)
    if res <= tol:
        return _result(domain, sysm, z, res, max_iter, symmetry, history)
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (residual {res:.3e})", res)


def _result(domain, sysm, z, res, iters, symmetry, history):
    u, *_, lam = sysm.split(z)
    field_ = ScalarField(domain, domain.from_dof(u))
    return SolveResult(field_, res, float(lam) if sysm.constrained else None, iters,
                       symmetry, history)


def euler_lagrange_residual(u: ScalarField, p: ModelParams, multiplier: float = 0.0) -> np.ndarray:
    """Nodal strong residual (R/w) of the discrete energy at u."""
    d = u.domain
    sysm = _System(d, p, constrained=p.m is not None)
    z = sysm.initial(d.to_dof(u.values))
    if sysm.constrained:
        z[-1] = multiplier
    return d.from_dof(sysm.residual(z)[: sysm.N] / sysm.w)


def mass_correction_field(u: ScalarField, eta: VectorField, beta: VectorField):
    """η^ε = η + hβ with h chosen so that ∫u div η^ε = 0; returns (η^ε, h)."""
    d = u.domain
    a = d.integrate(u.values * eta.divergence)
    b = d.integrate(u.values * beta.divergence)
    scale = d.integrate(np.abs(u.values) * np.abs(beta.divergence))
    if abs(b) <= 1e-8 * max(scale, 1e-300):
        raise ValueError("degenerate correction field: ∫u div β vanishes")
    h = -a / b
    return eta + beta.scaled(h), h
