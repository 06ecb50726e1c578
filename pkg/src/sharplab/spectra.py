"""Eigenvalue problems for the diffuse linearisations and the interface Jacobi operators.

Diffuse side: the form Q(φ) = ε∫|∇φ|² + (2/ε)∫(3u² - 1)φ² (+ (8/3)γ∫φ(-Δ)⁻¹φ)
is assembled with the staggered stiffness K and the lumped mass W, giving the
generalised problem Aφ = λWφ.  Interface side: piecewise-linear elements in
arclength with lumped mass; Robin ends only contribute the boundary term of
the form, Dirichlet ends are eliminated.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain_geometry import Domain, InterfaceCurve
from .energies import GreenKernel, ModelParams, green_curve_matrix, solve_neumann
from .fields_calculus import ScalarField

DENSE_LIMIT = 5000
MAX_K = 10


class SpectralSolverError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


@dataclass
class LinearizedOperator:
    """A = εK + W diag(2(3u² - 1)/ε) (+ nonlocal part) on the free dofs."""

    domain: Domain
    params: ModelParams
    boundary: str
    local: sp.csr_matrix
    mass: np.ndarray
    free: np.ndarray  # dof indices kept (all for Neumann)
    potential: np.ndarray  # 2(3u² - 1)/ε at every dof

    @property
    def size(self) -> int:
        return self.free.size

    @property
    def nonlocal_weight(self) -> float:
        return 8.0 / 3.0 * self.params.gamma

    def _embed(self, x):
        full = np.zeros(self.domain.n_dof)
        full[self.free] = x
        return full

    def apply_nonlocal(self, x: np.ndarray) -> np.ndarray:
        """W (-Δ)⁻¹x restricted to the free dofs."""
        d = self.domain
        f = d.from_dof(self._embed(x))
        f = f - d.mean(f)
        v = d.to_dof(solve_neumann(d, f))
        return (d.mass_dof * v)[self.free]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        out = self.local @ x
        if self.nonlocal_weight:
            out = out + self.nonlocal_weight * self.apply_nonlocal(x)
        return out

    def dense(self) -> np.ndarray:
        A = self.local.toarray()
        if self.nonlocal_weight:
            cols = np.column_stack([self.apply_nonlocal(e) for e in np.eye(self.size)])
            A = A + self.nonlocal_weight * 0.5 * (cols + cols.T)
        return A

    def quadratic_form(self, phi) -> float:
        """Q(φ) by quadrature: ε∫|∇φ|² + ∫(2/ε)(3u²-1)φ² (+ nonlocal)."""
        d = self.domain
        vals = phi.values if isinstance(phi, ScalarField) else d.from_dof(self._embed(phi))
        q = self.params.eps * d.dirichlet_energy(vals) + d.integrate(d.from_dof(self.potential) * vals**2)
        if self.nonlocal_weight:
            f = vals - d.mean(vals)
            q += self.nonlocal_weight * d.integrate(solve_neumann(d, f) * vals)
        return q


def assemble_linearized(u: ScalarField, p: ModelParams, boundary: str = "neumann") -> LinearizedOperator:
    d = u.domain
    uv = d.to_dof(u.values)
    pot = 2 * (3 * uv**2 - 1) / p.eps
    A = (p.eps * d.stiffness + sp.diags(d.mass_dof * pot)).tocsr()
    if boundary == "neumann":
        free = np.arange(d.n_dof)
    elif boundary == "dirichlet":
        free = np.setdiff1d(np.arange(d.n_dof), d.boundary_dofs)
        A = A[free][:, free].tocsr()
    else:
        raise ValueError("boundary must be 'neumann' or 'dirichlet'")
    return LinearizedOperator(d, p, boundary, A, d.mass_dof[free], free, pot)


@dataclass
class JacobiOperator:
    """Interface form ∫|∇_Γφ|² - |A_Γ|²φ² - Σ A_∂Ω(n,n)φ² (+ nonlocal terms)."""

    curve: InterfaceCurve
    boundary: str
    matrix: np.ndarray
    mass: np.ndarray
    free: np.ndarray
    gamma: float = 0.0

    @property
    def size(self) -> int:
        return self.free.size

    def matvec(self, x):
        return self.matrix @ x

    def dense(self):
        return self.matrix


def _p1_stiffness(curve: InterfaceCurve) -> np.ndarray:
    m = curve.size
    ds = curve.ds
    S = np.zeros((m, m))
    pairs = [(i, i + 1) for i in range(m - 1)]
    if curve.closed:
        pairs.append((m - 1, 0))
    for i, j in pairs:
        S[i, i] += 1 / ds
        S[j, j] += 1 / ds
        S[i, j] -= 1 / ds
        S[j, i] -= 1 / ds
    return S


def jacobi_operator(curve: InterfaceCurve, gamma: float = 0.0, v0=None,
                    G: GreenKernel = None, boundary: str = None) -> JacobiOperator:
    """Discrete Jacobi operator on Γ.

    ``boundary`` is 'robin' (natural ends with the A_∂Ω term), 'dirichlet',
    or 'closed' (default for closed curves).  For γ > 0, ``v0`` is an
    :class:`~sharplab.sharp_interface.InterfacePotential` (or a grid field of
    v₀) and ``G`` the Green kernel.
    """
    if boundary is None:
        boundary = "closed" if curve.closed else "robin"
    if curve.closed != (boundary == "closed"):
        raise ValueError("closed curves take boundary='closed'; open curves 'robin' or 'dirichlet'")
    w = curve.weights
    A = _p1_stiffness(curve) - np.diag(w * curve.curvature**2)
    if gamma:
        if v0 is None or G is None:
            raise ValueError("γ > 0 needs v₀ and the Green kernel")
        from .sharp_interface import InterfacePotential

        pot = v0 if isinstance(v0, InterfacePotential) else InterfacePotential(v0, curve)
        A = A + 4 * gamma * np.diag(w * pot.normal_derivative)
        A = A + 8 * gamma * green_curve_matrix(G, curve)
    free = np.arange(curve.size)
    if boundary == "robin":
        for k, idx in enumerate(curve.endpoint_indices()):
            A[idx, idx] -= curve.endpoint_curvature[k]
    elif boundary == "dirichlet":
        free = free[1:-1]
        A = A[np.ix_(free, free)]
    A = 0.5 * (A + A.T)
    return JacobiOperator(curve, boundary, A, w[free], free, gamma)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, W-orthonormal, on the operator's free dofs
    residuals: np.ndarray
    rayleigh_defects: np.ndarray
    gram_defect: float
    method: str
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "eigenvalues": self.eigenvalues.tolist(),
            "residuals": self.residuals.tolist(),
            "rayleigh_defects": self.rayleigh_defects.tolist(),
            "gram_defect": self.gram_defect,
            "method": self.method,
        }, sort_keys=True)


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def eigenpairs(op, k: int = 4, sigma: float = None, dense: bool = None,
               tol: float = 0.0, constraint: str = None) -> SpectrumResult:
    """The k smallest eigenpairs of Aφ = λWφ (W the lumped mass).

    Dense symmetric solve below DENSE_LIMIT unknowns, otherwise shift-invert
    Lanczos on W^{-1/2}AW^{-1/2} with the shift below the spectrum.  With a
    nonlocal part the shifted solve is preconditioned conjugate gradients
    using the LU factors of the local part.  ``constraint='mass'`` restricts
    the problem to ∫φ = 0.
    """
    if not 1 <= k <= MAX_K:
        raise ValueError(f"k must be between 1 and {MAX_K}")
    if constraint not in (None, "mass"):
        raise ValueError(f"unknown constraint {constraint!r}")
    n = op.size
    if k >= n - 1:
        raise ValueError("k must be smaller than the number of unknowns")
    s = 1.0 / np.sqrt(op.mass)
    q = None
    if constraint == "mass":
        q = np.sqrt(op.mass) / np.linalg.norm(np.sqrt(op.mass))

    def project(x):
        return x if q is None else x - q * (q @ x)

    if dense is None:
        dense = n < DENSE_LIMIT
    if dense:
        B = s[:, None] * op.dense() * s[None, :]
        B = 0.5 * (B + B.T)
        if q is None:
            lam, Psi = sla.eigh(B, subset_by_index=[0, k - 1])
        else:
            # Householder reflection taking q to e₀; drop the first row and column
            v = q.copy()
            v[0] += np.copysign(1.0, q[0])
            v /= np.linalg.norm(v)
            Bv = B @ v
            HBH = B - 2 * np.outer(v, Bv) - 2 * np.outer(Bv, v) + 4 * (v @ Bv) * np.outer(v, v)
            lam, Y = sla.eigh(HBH[1:, 1:], subset_by_index=[0, k - 1])
            Y = np.vstack([np.zeros((1, k)), Y])
            Psi = Y - 2 * np.outer(v, v @ Y)
        method = "dense"
    else:
        if sigma is None:
            sigma = _lower_bound(op)
        local = op.local if hasattr(op, "local") else sp.csr_matrix(op.matrix)
        Bl = (sp.diags(s) @ local @ sp.diags(s)).tocsc()
        shifted = (Bl - sigma * sp.identity(n, format="csc")).tocsc()
        if q is None:
            lu = spla.splu(shifted)
            local_solve = lu.solve
        else:
            qc = sp.csc_matrix(q[:, None])
            lu = spla.splu(sp.bmat([[shifted, qc], [qc.T, None]], format="csc"))

            def local_solve(x):
                return lu.solve(np.concatenate([project(x), [0.0]]))[:n]

        nonlocal_ = getattr(op, "nonlocal_weight", 0.0)
        if nonlocal_:
            def full_shifted(x):
                return project(shifted @ x + nonlocal_ * s * op.apply_nonlocal(s * x))

            Aop = spla.LinearOperator((n, n), matvec=full_shifted, dtype=float)
            M = spla.LinearOperator((n, n), matvec=local_solve, dtype=float)

            def inv(x):
                y, info = spla.cg(Aop, project(x), rtol=1e-13, atol=0.0, M=M, maxiter=500)
                if info:
                    raise SpectralSolverError(f"inner CG did not converge (info={info})")
                return project(y)

        else:
            inv = local_solve
        OPinv = spla.LinearOperator((n, n), matvec=inv, dtype=float)

        def Bmat(x):
            y = Bl @ x
            if nonlocal_:
                y = y + nonlocal_ * s * op.apply_nonlocal(s * x)
            return project(y)

        Bop = spla.LinearOperator((n, n), matvec=Bmat, dtype=float)
        # a generic start vector: a symmetric one would hide the odd modes
        start = project(np.random.default_rng(0).standard_normal(n))
        try:
            lam, Psi = spla.eigsh(Bop, k=k, sigma=sigma, which="LM", OPinv=OPinv,
                                  ncv=max(2 * k + 1, 30), tol=tol, v0=start)
        except spla.ArpackNoConvergence as exc:
            raise SpectralSolverError("shift-invert Lanczos did not converge") from exc
        order = np.argsort(lam)
        lam, Psi = lam[order], Psi[:, order]
        method = "shift_invert"
    V = _fix_signs(s[:, None] * Psi)
    AV = np.column_stack([op.matvec(V[:, i]) for i in range(k)])
    # in the W^{-1/2}-weighted norm, comparable with (1 + |λ|); with the mass
    # constraint the multiplier direction is projected out
    R = s[:, None] * (AV - op.mass[:, None] * V * lam[None, :])
    if q is not None:
        R = R - np.outer(q, q @ R)
    res = np.linalg.norm(R, axis=0)
    ray = np.abs(np.einsum("ij,ij->j", V, AV) / np.einsum("ij,ij->j", V, op.mass[:, None] * V) - lam)
    gram = V.T @ (op.mass[:, None] * V)
    return SpectrumResult(lam, V, res, ray, float(np.max(np.abs(gram - np.eye(k)))), method,
                          {"constraint": constraint})


def _lower_bound(op) -> float:
    """A shift strictly below the spectrum (Gershgorin on the potential part)."""
    if isinstance(op, LinearizedOperator):
        return float(min(op.potential[op.free].min(), 0.0)) - 1.0
    B = op.matrix / np.sqrt(op.mass)[:, None] / np.sqrt(op.mass)[None, :]
    return float(np.min(np.diag(B) - np.sum(np.abs(B - np.diag(np.diag(B))), axis=1))) - 1.0


def rayleigh(op, phi, weight: float = 1.0) -> float:
    """⟨Aφ, φ⟩ / (weight·⟨φ, Wφ⟩)."""
    x = phi.values if isinstance(phi, ScalarField) else np.asarray(phi, dtype=float)
    if isinstance(phi, ScalarField):
        x = op.domain.to_dof(x)[op.free]
    den = float(x @ (op.mass * x))
    if den == 0:
        raise ValueError("Rayleigh quotient of the zero vector")
    return float(x @ op.matvec(x)) / (weight * den)


def eigenfunction_field(op: LinearizedOperator, vec: np.ndarray) -> ScalarField:
    full = np.zeros(op.domain.n_dof)
    full[op.free] = vec
    return ScalarField(op.domain, op.domain.from_dof(full))
