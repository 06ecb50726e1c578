"""Computational domains, their discrete operators, and limiting interfaces.

Two domain shapes are supported:

* ``rectangle`` -- a node-centred tensor grid (boundary nodes included);
* ``disk`` -- a polar grid with a single pole node, radial rows
  ``r_i = i * dr`` and ``n_theta`` periodic angles (no duplicate seam).

Grid functions are stored as 2-D arrays of shape ``domain.shape``.  On the
disk, row 0 holds the pole value repeated ``n_theta`` times so that every
array operation (products, quadrature) works without special cases; the
solvers collapse that row to one unknown with :meth:`Domain.to_dof`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline


class InvalidSpecError(ValueError):
    """A domain, interface or parameter specification is malformed."""


class GeometryError(ValueError):
    """Geometry violates a precondition (e.g. non-orthogonal contact)."""


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Planar domain with a structured grid.

    Use :func:`build_domain` rather than constructing directly.
    """

    shape_kind: str
    lengths: tuple[float, float]  # (L1, L2) or (R, R)
    n: tuple[int, int]  # (n1, n2) or (n_r, n_theta)
    origin: tuple[float, float] = (0.0, 0.0)  # lower-left corner or disk centre

    # ----- basic grid data -------------------------------------------------
    @property
    def is_disk(self) -> bool:
        return self.shape_kind == "disk"

    @property
    def shape(self) -> tuple[int, int]:
        return self.n

    @property
    def radius(self) -> float:
        if not self.is_disk:
            raise AttributeError("rectangle has no radius")
        return self.lengths[0]

    @property
    def spacing(self) -> tuple[float, float]:
        """(h1, h2) for rectangles, (dr, dtheta) for the disk."""
        if self.is_disk:
            return self.radius / (self.n[0] - 1), 2 * np.pi / self.n[1]
        return tuple(L / (m - 1) for L, m in zip(self.lengths, self.n))

    @property
    def h(self) -> float:
        """Smallest physical node spacing."""
        if self.is_disk:
            dr, dth = self.spacing
            return min(dr, self.radius * dth)
        return min(self.spacing)

    @property
    def area(self) -> float:
        if self.is_disk:
            return np.pi * self.radius**2
        return self.lengths[0] * self.lengths[1]

    @property
    def diameter(self) -> float:
        if self.is_disk:
            return 2 * self.radius
        return float(np.hypot(*self.lengths))

    @cached_property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """1-D coordinate axes: (x, y) or (r, theta)."""
        if self.is_disk:
            r = np.linspace(0.0, self.radius, self.n[0])
            th = np.arange(self.n[1]) * self.spacing[1]
            return r, th
        return tuple(
            o + np.linspace(0.0, L, m) for o, L, m in zip(self.origin, self.lengths, self.n)
        )

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian node coordinates as two arrays of ``self.shape``."""
        a, b = self.axes
        if self.is_disk:
            R, TH = np.meshgrid(a, b, indexing="ij")
            return self.origin[0] + R * np.cos(TH), self.origin[1] + R * np.sin(TH)
        return np.meshgrid(a, b, indexing="ij")

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights (tensor trapezoid / polar control volumes)."""
        if self.is_disk:
            dr, dth = self.spacing
            r = self.axes[0]
            w = np.empty(self.shape)
            w[1:-1] = (r[1:-1] * dr * dth)[:, None]
            w[-1] = (self.radius - dr / 4) * (dr / 2) * dth
            w[0] = np.pi * dr**2 / 4 / self.n[1]
            return w
        w1, w2 = (np.full(m, h) for m, h in zip(self.n, self.spacing))
        w1[[0, -1]] /= 2
        w2[[0, -1]] /= 2
        return np.outer(w1, w2)

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * values))

    def mean(self, values) -> float:
        return self.integrate(values) / float(self.weights.sum())

    # ----- degrees of freedom ---------------------------------------------
    @property
    def n_dof(self) -> int:
        if self.is_disk:
            return 1 + (self.n[0] - 1) * self.n[1]
        return self.n[0] * self.n[1]

    def to_dof(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.is_disk:
            return np.concatenate([[values[0].mean()], values[1:].ravel()])
        return values.ravel().copy()

    def from_dof(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=float)
        if self.is_disk:
            out = np.empty(self.shape)
            out[0] = vec[0]
            out[1:] = vec[1:].reshape(self.n[0] - 1, self.n[1])
            return out
        return vec.reshape(self.shape).copy()

    @cached_property
    def mass_dof(self) -> np.ndarray:
        """Lumped mass (quadrature weight) per unknown."""
        w = self.to_dof(self.weights)
        if self.is_disk:
            w[0] *= self.n[1]
        return w

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Symmetric matrix K with uᵀKu = ∫|∇u|² (edge differences).

        For the rectangle this is the ghost-point Neumann Laplacian scaled by
        the trapezoid weights; for the disk the finite-volume polar stencil
        with a single pole node.
        """
        rows, cols, cond = self._edges()
        N = self.n_dof
        K = sp.coo_matrix((-cond, (rows, cols)), shape=(N, N))
        K = K + K.T
        diag = np.bincount(rows, cond, N) + np.bincount(cols, cond, N)
        return (K + sp.diags(diag)).tocsr()

    def _edges(self):
        """Edge list (i, j, conductance) on the dof numbering."""
        if self.is_disk:
            nr, nt = self.n
            dr, dth = self.spacing
            r = self.axes[0]
            idx = lambda i, j: 1 + (i - 1) * nt + (j % nt)  # noqa: E731
            I, J = np.meshgrid(np.arange(1, nr), np.arange(nt), indexing="ij")
            # pole to first ring
            e_i = [np.zeros(nt, dtype=int)]
            e_j = [idx(1, np.arange(nt))]
            e_c = [np.full(nt, dth / 2)]
            # radial edges between rows i and i+1
            Ir, Jr = I[:-1], J[:-1]
            e_i.append(idx(Ir, Jr).ravel())
            e_j.append(idx(Ir + 1, Jr).ravel())
            e_c.append(((r[Ir] + dr / 2) * dth / dr).ravel())
            # angular edges
            radial_len = np.where(I == nr - 1, dr / 2, dr)
            e_i.append(idx(I, J).ravel())
            e_j.append(idx(I, J + 1).ravel())
            e_c.append((radial_len / (r[I] * dth)).ravel())
            return np.concatenate(e_i), np.concatenate(e_j), np.concatenate(e_c)
        n1, n2 = self.n
        h1, h2 = self.spacing
        w1 = np.full(n1, h1)
        w1[[0, -1]] /= 2
        w2 = np.full(n2, h2)
        w2[[0, -1]] /= 2
        ids = np.arange(n1 * n2).reshape(n1, n2)
        ex_i, ex_j = ids[:-1, :].ravel(), ids[1:, :].ravel()
        ex_c = np.broadcast_to(w2[None, :] / h1, (n1 - 1, n2)).ravel()
        ey_i, ey_j = ids[:, :-1].ravel(), ids[:, 1:].ravel()
        ey_c = np.broadcast_to(w1[:, None] / h2, (n1, n2 - 1)).ravel()
        return (
            np.concatenate([ex_i, ey_i]),
            np.concatenate([ex_j, ey_j]),
            np.concatenate([ex_c, ey_c]),
        )

    def dirichlet_energy(self, values: np.ndarray) -> float:
        """∫|∇u|² from edge differences (the quadratic form of ``stiffness``)."""
        rows, cols, cond = self._edges()
        v = self.to_dof(values)
        return float(np.sum(cond * (v[rows] - v[cols]) ** 2))

    # ----- boundary --------------------------------------------------------
    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        if self.is_disk:
            m[-1] = True
        else:
            m[[0, -1], :] = True
            m[:, [0, -1]] = True
        return m

    @cached_property
    def corner_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        if not self.is_disk:
            m[[0, 0, -1, -1], [0, -1, 0, -1]] = True
        return m

    @cached_property
    def boundary_normal(self) -> tuple[np.ndarray, np.ndarray]:
        """Outward unit normal ν on boundary nodes (zero elsewhere).

        Rectangle corners carry the normalised diagonal.
        """
        nx = np.zeros(self.shape)
        ny = np.zeros(self.shape)
        if self.is_disk:
            th = self.axes[1]
            nx[-1], ny[-1] = np.cos(th), np.sin(th)
            return nx, ny
        nx[0, :] -= 1.0
        nx[-1, :] += 1.0
        ny[:, 0] -= 1.0
        ny[:, -1] += 1.0
        norm = np.hypot(nx, ny)
        norm[norm == 0] = 1.0
        return nx / norm, ny / norm

    @cached_property
    def boundary_curvature(self) -> np.ndarray:
        """A_∂Ω(τ, τ) on boundary nodes: 1/R on the disk rim, 0 on edges."""
        A = np.zeros(self.shape)
        if self.is_disk:
            A[-1] = 1.0 / self.radius
        return A

    def boundary_second_form(self, point) -> float:
        """A_∂Ω(t, t) for a unit tangent t at a boundary point."""
        return 1.0 / self.radius if self.is_disk else 0.0

    def outward_normal_at(self, point) -> np.ndarray:
        """Outward unit normal of ∂Ω at (or projected from) ``point``."""
        p = np.asarray(point, dtype=float)
        if self.is_disk:
            d = p - np.asarray(self.origin)
            return d / np.linalg.norm(d)
        lo = np.asarray(self.origin)
        hi = lo + np.asarray(self.lengths)
        gaps = np.array([p[0] - lo[0], hi[0] - p[0], p[1] - lo[1], hi[1] - p[1]])
        k = int(np.argmin(gaps))
        return np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]][k])

    def distance_to_boundary(self, x, y) -> np.ndarray:
        """Unsigned distance of points inside Ω to ∂Ω."""
        if self.is_disk:
            return self.radius - np.hypot(x - self.origin[0], y - self.origin[1])
        lo = self.origin
        hi = (lo[0] + self.lengths[0], lo[1] + self.lengths[1])
        return np.minimum.reduce([x - lo[0], hi[0] - x, y - lo[1], hi[1] - y])

    def contains(self, x, y, tol: float = 1e-12) -> np.ndarray:
        return self.distance_to_boundary(x, y) >= -tol

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        return np.flatnonzero(self.to_dof(self.boundary_mask.astype(float)) > 0.5)

    def reflection(self, axis: str) -> np.ndarray:
        """Index map of the grid reflection across a symmetry line.

        ``axis='x'`` reflects ``x -> 2c - x`` (vertical mirror line through
        the centre of a rectangle); ``axis='y'`` reflects ``y -> 2c - y``
        (on the disk: across the horizontal diameter).  Returns the dof index
        of the mirror image of every dof.
        """
        if self.is_disk:
            nr, nt = self.n
            if nt % 2:
                raise InvalidSpecError("disk reflection needs an even n_theta")
            j = np.arange(nt)
            jm = (-j) % nt if axis == "y" else (nt // 2 - j) % nt
            img = np.zeros(self.n_dof, dtype=int)
            rows = np.arange(1, nr)[:, None]
            img[1:] = (1 + (rows - 1) * nt + jm[None, :]).ravel()
            return img
        n1, n2 = self.n
        ids = np.arange(n1 * n2).reshape(n1, n2)
        return (ids[::-1, :] if axis == "x" else ids[:, ::-1]).ravel()

    def spec_dict(self) -> dict:
        out = {"shape": self.shape_kind, "n": list(self.n)}
        if self.is_disk:
            out["R"] = self.radius
            if any(self.origin):
                out["center"] = list(self.origin)
        else:
            out["L"] = list(self.lengths)
            if any(self.origin):
                out["origin"] = list(self.origin)
        return out


def build_domain(spec: dict) -> Domain:
    """Build a :class:`Domain` from a JSON-style specification.

    Examples
    --------
    >>> build_domain({"shape": "rectangle", "L": [1, 1], "n": [64, 64]}).spacing
    (0.015873015873015872, 0.015873015873015872)
    """
    shape = spec.get("shape")
    n = tuple(int(k) for k in spec.get("n", ()))
    if len(n) != 2:
        raise InvalidSpecError("domain.n must list two resolutions")
    if shape == "rectangle":
        L = tuple(float(v) for v in spec.get("L", (1.0, 1.0)))
        if len(L) != 2 or min(L) <= 0:
            raise InvalidSpecError("domain.L must be two positive lengths")
        if min(n) < 16:
            raise InvalidSpecError("domain.n needs at least 16 nodes per side")
        origin = tuple(float(v) for v in spec.get("origin", (0.0, 0.0)))
        return Domain("rectangle", L, n, origin)
    if shape == "disk":
        R = float(spec.get("R", 1.0))
        if R <= 0:
            raise InvalidSpecError("domain.R must be positive")
        if n[0] < 16 or n[1] < 32:
            raise InvalidSpecError("disk resolution needs n_r >= 16 and n_theta >= 32")
        center = tuple(float(v) for v in spec.get("center", (0.0, 0.0)))
        return Domain("disk", (R, R), n, center)
    raise InvalidSpecError(f"domain.shape must be 'rectangle' or 'disk', got {shape!r}")


# ---------------------------------------------------------------------------
# Interfaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InterfaceCurve:
    """Discretised limiting interface Γ.

    ``normal`` points out of the phase {u₀ = 1}; ``tangent`` is the normal
    rotated by +90 degrees.  Open curves carry endpoint data.
    """

    kind: str
    nodes: np.ndarray  # (m, 2)
    s: np.ndarray  # arclength coordinate of each node
    normal: np.ndarray  # (m, 2)
    tangent: np.ndarray  # (m, 2)
    curvature: np.ndarray  # (m,)
    weights: np.ndarray  # arclength quadrature weights
    length: float
    closed: bool
    endpoints: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    conormals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    endpoint_curvature: np.ndarray = field(default_factory=lambda: np.zeros(0))
    orthogonality_defect: np.ndarray = field(default_factory=lambda: np.zeros(0))
    params: dict = field(default_factory=dict)

    @property
    def ds(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def size(self) -> int:
        return len(self.s)

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * values))

    def endpoint_indices(self) -> list[int]:
        return [] if self.closed else [0, self.size - 1]

    def parameter_of(self, x, y) -> np.ndarray:
        """Arclength parameter of the foot point of (x, y) on Γ."""
        if self.kind == "circle":
            cx, cy = self.params["center"]
            th = np.arctan2(y - cy, x - cx)
            return np.mod(th, 2 * np.pi) * self.params["r"]
        a = self.nodes[0]
        t = self.tangent[0]
        return (x - a[0]) * t[0] + (y - a[1]) * t[1]

    def normal_at(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """The normal field extended constantly along normal lines."""
        if self.kind == "circle":
            cx, cy = self.params["center"]
            rho = np.hypot(x - cx, y - cy)
            rho = np.where(rho == 0, 1.0, rho)
            return (x - cx) / rho, (y - cy) / rho
        nrm = self.normal[0]
        return np.full(np.shape(x), nrm[0]), np.full(np.shape(y), nrm[1])

    def signed_distance_at(self, x, y) -> np.ndarray:
        if self.kind == "circle":
            cx, cy = self.params["center"]
            return np.hypot(x - cx, y - cy) - self.params["r"]
        a = self.nodes[0]
        nrm = self.normal[0]
        return (x - a[0]) * nrm[0] + (y - a[1]) * nrm[1]

    def indicator_at(self, x, y) -> np.ndarray:
        """The sharp phase field u₀ (+1 on the phase, -1 outside)."""
        return np.where(self.signed_distance_at(x, y) < 0, 1.0, -1.0)


def _segment_curve(kind, a, b, domain, ds_target, params) -> InterfaceCurve:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    L = float(np.linalg.norm(b - a))
    if L <= 0:
        raise InvalidSpecError("segment endpoints coincide")
    tol = 1e-9 * max(1.0, domain.diameter)
    for p in (a, b):
        if abs(domain.distance_to_boundary(p[0], p[1])) > tol:
            raise InvalidSpecError(f"segment endpoint {tuple(p)} is not on the domain boundary")
    m = max(int(np.ceil(L / ds_target)), 2) + 1
    s = np.linspace(0.0, L, m)
    tau = (b - a) / L
    nrm = np.array([tau[1], -tau[0]])
    nodes = a[None, :] + s[:, None] * tau[None, :]
    w = np.full(m, s[1] - s[0])
    w[[0, -1]] /= 2
    ends = np.array([a, b])
    conorm = np.array([-tau, tau])
    nu = np.array([domain.outward_normal_at(p) for p in ends])
    defect = np.abs(nu @ nrm)
    A_end = np.array([domain.boundary_second_form(p) for p in ends])
    return InterfaceCurve(
        kind=kind,
        nodes=nodes,
        s=s,
        normal=np.tile(nrm, (m, 1)),
        tangent=np.tile(tau, (m, 1)),
        curvature=np.zeros(m),
        weights=w,
        length=L,
        closed=False,
        endpoints=ends,
        conormals=conorm,
        endpoint_curvature=A_end,
        orthogonality_defect=defect,
        params=params,
    )


def build_interface(domain: Domain, spec: dict, ds: float = None) -> InterfaceCurve:
    """Build the interface Γ described by ``spec``.

    Supported kinds: ``segment`` (``{"x": c}``, ``{"y": c}`` or explicit
    ``"endpoints"``), ``diameter`` (``{"angle": a}``, disk only) and
    ``circle`` (``{"center": [cx, cy], "r": r}``).  Node spacing defaults to
    the smallest grid spacing.
    """
    kind = spec.get("kind")
    ds = float(ds or spec.get("ds") or domain.h)
    if kind == "segment":
        if domain.is_disk:
            raise InvalidSpecError("segment interfaces need a rectangle; use 'diameter'")
        (x0, y0), (L1, L2) = domain.origin, domain.lengths
        if "endpoints" in spec:
            a, b = spec["endpoints"]
        elif "x" in spec:
            c = float(spec["x"])
            if not x0 < c < x0 + L1:
                raise InvalidSpecError("segment.x must lie strictly inside the rectangle")
            a, b = (c, y0), (c, y0 + L2)
        elif "y" in spec:
            c = float(spec["y"])
            if not y0 < c < y0 + L2:
                raise InvalidSpecError("segment.y must lie strictly inside the rectangle")
            a, b = (x0 + L1, c), (x0, c)
        else:
            raise InvalidSpecError("segment needs 'x', 'y' or 'endpoints'")
        return _segment_curve("segment", a, b, domain, ds, dict(spec))
    if kind == "diameter":
        if not domain.is_disk:
            raise InvalidSpecError("diameter interfaces need a disk domain")
        ang = float(spec.get("angle", 0.0))
        R = domain.radius
        c = np.asarray(domain.origin)
        d = np.array([np.cos(ang), np.sin(ang)])
        return _segment_curve("diameter", c - R * d, c + R * d, domain, ds, dict(spec))
    if kind == "circle":
        r = float(spec.get("r", 0.0))
        center = tuple(float(v) for v in spec.get("center", domain.origin if domain.is_disk else (
            domain.origin[0] + domain.lengths[0] / 2, domain.origin[1] + domain.lengths[1] / 2)))
        if r <= 0:
            raise InvalidSpecError("circle.r must be positive")
        th = np.linspace(0, 2 * np.pi, 721)
        clearance = domain.distance_to_boundary(center[0] + r * np.cos(th), center[1] + r * np.sin(th))
        if np.min(clearance) <= 0:
            raise InvalidSpecError("circle intersects the domain boundary")
        m = max(int(np.ceil(2 * np.pi * r / ds)), 8)
        th = np.arange(m) * 2 * np.pi / m
        nrm = np.stack([np.cos(th), np.sin(th)], axis=1)
        tau = np.stack([-np.sin(th), np.cos(th)], axis=1)
        nodes = np.asarray(center)[None, :] + r * nrm
        L = 2 * np.pi * r
        return InterfaceCurve(
            kind="circle",
            nodes=nodes,
            s=th * r,
            normal=nrm,
            tangent=tau,
            curvature=np.full(m, 1.0 / r),
            weights=np.full(m, L / m),
            length=L,
            closed=True,
            params={"center": center, "r": r},
        )
    raise InvalidSpecError(f"interface.kind must be segment, diameter or circle, got {kind!r}")


@dataclass(frozen=True)
class NormalSpeed:
    """Normal speed ξ sampled at the interface nodes."""

    values: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise InvalidSpecError("normal speed has non-finite values")
        object.__setattr__(self, "values", v)


def normal_speed(curve: InterfaceCurve, func, tol: float = 1e-8) -> NormalSpeed:
    """Sample ``func(s)`` at the nodes and set the mean-zero flag."""
    vals = np.asarray(func(curve.s), dtype=float) * np.ones(curve.size)
    flag = abs(curve.integrate(vals)) <= tol * curve.length
    return NormalSpeed(vals, flag)


def clearance(curve: InterfaceCurve, domain: Domain) -> float:
    """Distance available for normal transport before hitting ∂Ω or a focal point."""
    if curve.kind == "circle":
        return min(curve.params["r"], float(np.min(domain.distance_to_boundary(*curve.nodes.T))))
    if curve.kind == "diameter":
        return domain.radius
    mid = curve.nodes[curve.size // 2]
    nrm = curve.normal[0]
    best = np.inf
    for sgn in (1.0, -1.0):
        t = np.linspace(0, domain.diameter, 4001)
        pts = mid[None, :] + sgn * t[:, None] * nrm[None, :]
        inside = domain.distance_to_boundary(pts[:, 0], pts[:, 1]) >= 0
        best = min(best, t[np.argmin(inside)] if not inside.all() else t[-1])
    return float(best)


def bump(rho):
    """C³ cutoff (1 - ρ²)⁴ on |ρ| < 1, zero outside; bump(0) = 1, bump'(0) = 0."""
    rho = np.asarray(rho, dtype=float)
    return np.where(np.abs(rho) < 1, (1 - np.minimum(rho**2, 1)) ** 4, 0.0)


def plateau(rho):
    """C³ cutoff equal to 1 on |ρ| ≤ 1/2 and 0 on |ρ| ≥ 1.

    Used across Γ so that the extension is constant along normals inside the
    diffuse layer; a cutoff with curvature at ρ = 0 biases diffuse second
    variations by O(ε²/width⁴).
    """
    t = np.clip(2 * np.abs(np.asarray(rho, dtype=float)) - 1, 0.0, 1.0)
    return 1 - t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)


def signed_distance(interface: InterfaceCurve, domain: Domain) -> np.ndarray:
    """Signed distance to Γ on the grid, negative inside the phase {u₀ = 1}."""
    return interface.signed_distance_at(*domain.coords)


def normal_extension_function(interface, domain, xi: NormalSpeed, width: float = None,
                              boundary_width: float = None):
    """Callable (x, y) -> (ηx, ηy) for the extension of ξ n (see extend_normal_speed)."""
    if width is None:
        width = clearance(interface, domain) / 4
    if boundary_width is None:
        boundary_width = width
    if not interface.closed:
        bad = interface.orthogonality_defect > 1e-6
        if np.any(bad):
            raise GeometryError(
                f"interface meets the boundary non-orthogonally (defect {interface.orthogonality_defect.max():.3g})"
            )
        # extrapolate rather than clip so that the field stays smooth across
        # ∂Ω, where difference stencils may sample it
        speed = CubicSpline(interface.s, xi.values)
    else:
        s_ext = np.concatenate([interface.s, [interface.length]])
        spline = CubicSpline(s_ext, np.concatenate([xi.values, xi.values[:1]]), bc_type="periodic")
        speed = lambda s: spline(np.mod(s, interface.length))  # noqa: E731

    def eta(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = interface.signed_distance_at(x, y)
        amp = speed(interface.parameter_of(x, y)) * plateau(d / width)
        nx, ny = interface.normal_at(x, y)
        ex, ey = amp * nx, amp * ny
        if domain.is_disk:
            cx, cy = domain.origin
            rho = np.hypot(x - cx, y - cy)
            safe = np.where(rho == 0, 1.0, rho)
            rx, ry = (x - cx) / safe, (y - cy) / safe
            b = bump((domain.radius - rho) / boundary_width)
            er = (ex * rx + ey * ry) * b
            return ex - er * rx, ey - er * ry
        (x0, y0), (L1, L2) = domain.origin, domain.lengths
        mx = 1 - bump(np.minimum(x - x0, x0 + L1 - x) / boundary_width)
        my = 1 - bump(np.minimum(y - y0, y0 + L2 - y) / boundary_width)
        return ex * mx, ey * my

    return eta


def extend_normal_speed(interface: InterfaceCurve, domain: Domain, xi: NormalSpeed,
                        width: float = None, boundary_width: float = None):
    """Extend a normal speed ξ on Γ to a tangent vector field η on Ω.

    ξ is transported constantly along normal lines of Γ, multiplied by a
    smooth cutoff of the distance to Γ (flat on half the width), and the
    normal component is then switched off in a layer along ∂Ω.  On Γ one
    gets η = ξn exactly and (n, n·∇η) = 0, and η·ν = 0 on ∂Ω.

    Parameters
    ----------
    width : float, optional
        Cutoff half-width around Γ (default: a quarter of the clearance).
    boundary_width : float, optional
        Width of the boundary layer used for the tangency projection.
    """
    from .fields_calculus import VectorField

    f = normal_extension_function(interface, domain, xi, width, boundary_width)
    ex, ey = f(*domain.coords)
    return VectorField(domain, ex, ey, func=f, tangent=True)
