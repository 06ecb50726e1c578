"""Grid fields, finite-difference calculus, deformation maps and variation fields.

Derivatives use fourth-order centred stencils in the interior and
fourth-order one-sided stencils on the two nodes nearest each end.  On the
disk, derivatives are taken in polar coordinates (periodic in θ) and
converted; the pole uses a local quadratic fit.

Off-grid evaluation uses an analytic callable when a field carries one, and
otherwise bicubic spline interpolation of the grid values extended beyond
Ω by even reflection (rectangle) or even radial reflection (disk).
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .domain_geometry import Domain, build_domain

PAD = 4  # ghost layers used by the interpolants


class FlowEscapeError(RuntimeError):
    """A trajectory or inverse image left the region where fields are defined."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def grid_hash(domain: Domain) -> str:
    return hashlib.sha256(canonical_json(domain.spec_dict()).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# stencils
# ---------------------------------------------------------------------------


# fourth-order one-sided rows for the first two and last two nodes
_D1_EDGE = np.array([[-25, 48, -36, 16, -3, 0], [-3, -10, 18, -6, 1, 0]]) / 12
_D2_EDGE = np.array([[45, -154, 214, -156, 61, -10], [10, -15, -4, 14, -6, 1]]) / 12


def _apply(values, h, axis, interior, edge, odd):
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    if v.shape[0] < 6:
        raise ValueError("fourth-order stencils need at least 6 nodes per axis")
    out = np.zeros_like(v)
    for k, c in zip(range(-2, 3), interior):
        if c:
            out[2:-2] += c * v[2 + k : v.shape[0] - 2 + k]
    sign = -1.0 if odd else 1.0
    for row in (0, 1):
        out[row] = np.tensordot(edge[row], v[:6], axes=1)
        out[-1 - row] = sign * np.tensordot(edge[row], v[::-1][:6], axes=1)
    return np.moveaxis(out / h ** (2 - odd), 0, axis)


def _d1(values, h, axis):
    """Fourth-order centred first derivative, one-sided near the ends."""
    return _apply(values, h, axis, np.array([1, -8, 0, 8, -1]) / 12, _D1_EDGE, True)


def _d2(values, h, axis):
    """Fourth-order centred second derivative, one-sided near the ends."""
    return _apply(values, h, axis, np.array([-1, 16, -30, 16, -1]) / 12, _D2_EDGE, False)


def _periodic_d1(values, h):
    r = lambda k: np.roll(values, -k, axis=1)
    return (8 * (r(1) - r(-1)) - (r(2) - r(-2))) / (12 * h)


def _periodic_d2(values, h):
    r = lambda k: np.roll(values, -k, axis=1)
    return (16 * (r(1) + r(-1)) - (r(2) + r(-2)) - 30 * values) / (12 * h**2)


def _pole_fit(domain: Domain, values):
    """Least-squares quadratic through the pole and the first two rings.

    Returns (ux, uy, uxx, uxy, uyy) at the pole.
    """
    dr, dth = domain.spacing
    th = domain.axes[1]
    r = np.concatenate([[0.0], np.full(th.size, dr), np.full(th.size, 2 * dr)])
    t = np.concatenate([[0.0], th, th])
    x, y = r * np.cos(t), r * np.sin(t)
    A = np.stack([np.ones_like(x), x, y, x * x / 2, x * y, y * y / 2], axis=1)
    b = np.concatenate([[values[0, 0]], values[1], values[2]])
    c = np.linalg.lstsq(A, b, rcond=None)[0]
    return c[1], c[2], c[3], c[4], c[5]


def gradient(domain: Domain, values):
    """Cartesian gradient (gx, gy) of a grid function."""
    values = np.asarray(values, dtype=float)
    if not domain.is_disk:
        h1, h2 = domain.spacing
        return _d1(values, h1, 0), _d1(values, h2, 1)
    dr, dth = domain.spacing
    r = domain.axes[0][:, None]
    th = domain.axes[1][None, :]
    ur = _d1(values, dr, 0)
    ut = _periodic_d1(values, dth)
    c, s = np.cos(th), np.sin(th)
    rs = np.where(r == 0, 1.0, r)
    gx = c * ur - s * ut / rs
    gy = s * ur + c * ut / rs
    px, py, *_ = _pole_fit(domain, values)
    gx[0], gy[0] = px, py
    return gx, gy


def hessian(domain: Domain, values):
    """Hessian components (uxx, uxy, uyy); symmetric by construction."""
    values = np.asarray(values, dtype=float)
    if not domain.is_disk:
        h1, h2 = domain.spacing
        return _d2(values, h1, 0), _d1(_d1(values, h1, 0), h2, 1), _d2(values, h2, 1)
    dr, dth = domain.spacing
    r = domain.axes[0][:, None]
    th = domain.axes[1][None, :]
    rs = np.where(r == 0, 1.0, r)
    ur = _d1(values, dr, 0)
    urr = _d2(values, dr, 0)
    ut = _periodic_d1(values, dth)
    utt = _periodic_d2(values, dth)
    urt = _periodic_d1(ur, dth)
    c, s = np.cos(th), np.sin(th)
    lap_t = ur / rs + utt / rs**2
    mix = urt / rs - ut / rs**2
    uxx = c * c * urr + s * s * lap_t - 2 * c * s * mix
    uyy = s * s * urr + c * c * lap_t + 2 * c * s * mix
    uxy = c * s * (urr - lap_t) + (c * c - s * s) * mix
    _, _, pxx, pxy, pyy = _pole_fit(domain, values)
    uxx[0], uxy[0], uyy[0] = pxx, pxy, pyy
    return uxx, uxy, uyy


# ---------------------------------------------------------------------------
# interpolation with extension
# ---------------------------------------------------------------------------


class _Interpolant:
    """Bicubic spline of grid values, extended PAD layers beyond Ω."""

    def __init__(self, domain: Domain, values):
        self.domain = domain
        v = np.asarray(values, dtype=float)
        if domain.is_disk:
            nr, nt = domain.n
            if nt % 2:
                raise ValueError("disk interpolation needs an even n_theta")
            dr, dth = domain.spacing
            neg = np.roll(v[1 : PAD + 1][::-1], nt // 2, axis=1)  # u(-r, θ) = u(r, θ+π)
            out = v[-PAD - 1 : -1][::-1]  # even reflection across r = R
            ext = np.concatenate([neg, v, out], axis=0)
            ext = np.concatenate([ext[:, -PAD:], ext, ext[:, :PAD]], axis=1)
            r = dr * np.arange(-PAD, nr + PAD)
            t = dth * np.arange(-PAD, nt + PAD)
            self.spline = RectBivariateSpline(r, t, ext, kx=3, ky=3, s=0)
            self.rmax = domain.radius + PAD * dr
        else:
            ext = np.pad(v, PAD, mode="reflect")
            h1, h2 = domain.spacing
            x = domain.axes[0][0] + h1 * np.arange(-PAD, domain.n[0] + PAD)
            y = domain.axes[1][0] + h2 * np.arange(-PAD, domain.n[1] + PAD)
            self.bounds = (x[0], x[-1], y[0], y[-1])
            self.spline = RectBivariateSpline(x, y, ext, kx=3, ky=3, s=0)

    def __call__(self, x, y, dx=0, dy=0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        x, y = np.broadcast_to(x, shape).ravel(), np.broadcast_to(y, shape).ravel()
        if self.domain.is_disk:
            cx, cy = self.domain.origin
            r = np.hypot(x - cx, y - cy)
            if np.any(r > self.rmax):
                raise FlowEscapeError("point outside the radial extension region")
            t = np.mod(np.arctan2(y - cy, x - cx), 2 * np.pi)
            return self.spline.ev(r, t).reshape(shape)
        x0, x1, y0, y1 = self.bounds
        if np.any((x < x0) | (x > x1) | (y < y0) | (y > y1)):
            raise FlowEscapeError("point outside the reflected extension region")
        return self.spline.ev(x, y, dx=dx, dy=dy).reshape(shape)


def _in_extension(domain: Domain, x, y) -> bool:
    return bool(np.all(domain.distance_to_boundary(x, y) >= -PAD * domain.h * (1 - 1e-9)))


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


class ScalarField:
    """Grid function with an optional analytic extension ``func(x, y)``."""

    def __init__(self, domain: Domain, values, func=None):
        values = np.asarray(values, dtype=float)
        if values.shape != domain.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {domain.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("scalar field has non-finite values")
        self.domain = domain
        self.values = values
        self.func = func

    @classmethod
    def from_function(cls, domain: Domain, func):
        return cls(domain, func(*domain.coords), func=func)

    @cached_property
    def _interp(self):
        return _Interpolant(self.domain, self.values)

    def __call__(self, x, y):
        if self.func is not None:
            if not _in_extension(self.domain, x, y):
                raise FlowEscapeError("evaluation point left the extension region")
            return np.asarray(self.func(x, y), dtype=float) * np.ones(np.broadcast(x, y).shape)
        return self._interp(x, y)

    def integral(self) -> float:
        return self.domain.integrate(self.values)

    def check_same_grid(self, other):
        if other.domain != self.domain:
            raise ValueError("fields live on different grids")


class VectorField:
    """Two-component grid field; ``tangent=True`` asserts η·ν = 0 on ∂Ω."""

    def __init__(self, domain: Domain, x, y, func=None, tangent: bool = False, tol: float = 1e-10):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != domain.shape or y.shape != domain.shape:
            raise ValueError("vector components do not match the grid")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("vector field has non-finite values")
        self.domain = domain
        self.x = x
        self.y = y
        self.func = func
        if tangent:
            defect = self.normal_defect()
            scale = max(1.0, float(np.max(np.hypot(x, y))))
            if defect > tol * scale:
                raise ValueError(f"tangency flag set but max |η·ν| = {defect:.3g} on ∂Ω")
        self.tangent = tangent

    @classmethod
    def from_function(cls, domain: Domain, func, tangent: bool = False):
        vx, vy = func(*domain.coords)
        shape = domain.shape
        return cls(domain, np.broadcast_to(vx, shape), np.broadcast_to(vy, shape), func=func,
                   tangent=tangent)

    @classmethod
    def zeros(cls, domain: Domain):
        z = np.zeros(domain.shape)
        return cls(domain, z, z.copy(), func=lambda x, y: (0 * x, 0 * y), tangent=True)

    def normal_defect(self) -> float:
        nx, ny = self.domain.boundary_normal
        m = self.domain.boundary_mask
        return float(np.max(np.abs(self.x * nx + self.y * ny)[m]))

    @cached_property
    def _interp(self):
        return _Interpolant(self.domain, self.x), _Interpolant(self.domain, self.y)

    def __call__(self, x, y):
        if self.func is not None:
            if not _in_extension(self.domain, x, y):
                raise FlowEscapeError("evaluation point left the extension region")
            shape = np.broadcast(x, y).shape
            vx, vy = self.func(x, y)
            return np.broadcast_to(vx, shape), np.broadcast_to(vy, shape)
        ix, iy = self._interp
        return ix(x, y), iy(x, y)

    @cached_property
    def jacobian(self):
        """J[i][j] = ∂_j η^i as nested tuples of arrays."""
        return gradient(self.domain, self.x), gradient(self.domain, self.y)

    @cached_property
    def divergence(self) -> np.ndarray:
        J = self.jacobian
        return J[0][0] + J[1][1]

    def __add__(self, other: "VectorField") -> "VectorField":
        func = None
        if self.func is not None and other.func is not None:
            f, g = self.func, other.func

            def func(x, y):
                a, b = f(x, y), g(x, y)
                return a[0] + b[0], a[1] + b[1]

        return VectorField(self.domain, self.x + other.x, self.y + other.y, func=func,
                           tangent=self.tangent and other.tangent)

    def scaled(self, c: float) -> "VectorField":
        func = None
        if self.func is not None:
            f = self.func

            def func(x, y):
                a = f(x, y)
                return c * a[0], c * a[1]

        return VectorField(self.domain, c * self.x, c * self.y, func=func, tangent=self.tangent)


def differentiate(u: ScalarField):
    """Gradient (VectorField) and Hessian (uxx, uxy, uyy) of a scalar field."""
    gx, gy = gradient(u.domain, u.values)
    return VectorField(u.domain, gx, gy), hessian(u.domain, u.values)


# ---------------------------------------------------------------------------
# deformation maps
# ---------------------------------------------------------------------------


@dataclass
class FlowMap:
    """Forward and inverse images of the grid nodes under a deformation."""

    eta: VectorField
    t: float
    steps: int
    forward: tuple[np.ndarray, np.ndarray]
    inverse: tuple[np.ndarray, np.ndarray]
    kind: str = "ode"

    def round_trip_defect(self) -> float:
        """max |Φ_t(Φ_t⁻¹(y)) - y| over grid nodes (ODE flows only)."""
        x, y = self.inverse
        fx, fy = _rk4(self.eta, x, y, self.t, self.steps)
        X, Y = self.eta.domain.coords
        return float(np.max(np.hypot(fx - X, fy - Y)))


def _rk4(eta: VectorField, x, y, t, steps):
    dt = t / steps
    domain = eta.domain
    for _ in range(steps):
        if not _in_extension(domain, x, y):
            raise FlowEscapeError("trajectory left the extension region")
        k1 = eta(x, y)
        k2 = eta(x + dt / 2 * k1[0], y + dt / 2 * k1[1])
        k3 = eta(x + dt / 2 * k2[0], y + dt / 2 * k2[1])
        k4 = eta(x + dt * k3[0], y + dt * k3[1])
        x = x + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y = y + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return x, y


def flow_map(eta: VectorField, t: float, steps: int = 32) -> FlowMap:
    """Integrate dΨ/dt = η(Ψ) from every grid node with classical RK4.

    The inverse images are obtained by integrating -η over the same time.
    """
    X, Y = eta.domain.coords
    fwd = _rk4(eta, X, Y, t, steps)
    inv = _rk4(eta, X, Y, -t, steps)
    return FlowMap(eta, t, steps, fwd, inv, kind="ode")


def polynomial_map(eta: VectorField, zeta: VectorField, t: float, tol: float = 1e-15,
                   max_iter: int = 200) -> FlowMap:
    """The map Φ_t(x) = x + tη(x) + (t²/2)ζ(x) and its inverse on the grid.

    Inverse images solve x + tη(x) + (t²/2)ζ(x) = y by fixed-point iteration.
    """
    domain = eta.domain
    X, Y = domain.coords
    c = t * t / 2
    fwd = (X + t * eta.x + c * zeta.x, Y + t * eta.y + c * zeta.y)
    x, y = X.copy(), Y.copy()
    scale = domain.diameter
    for _ in range(max_iter):
        ex, ey = eta(x, y)
        zx, zy = zeta(x, y)
        nx, ny = X - t * ex - c * zx, Y - t * ey - c * zy
        step = float(np.max(np.hypot(nx - x, ny - y)))
        x, y = nx, ny
        if step <= tol * scale:
            break
    else:
        raise FlowEscapeError("inverse of the polynomial map did not converge")
    return FlowMap(eta, t, 0, fwd, (x, y), kind="polynomial")


def deform(u: ScalarField, f: FlowMap) -> ScalarField:
    """Grid sampling of u∘Φ_t⁻¹."""
    return ScalarField(u.domain, u(*f.inverse))


# ---------------------------------------------------------------------------
# variation fields
# ---------------------------------------------------------------------------


@dataclass
class VariationFields:
    """Derived fields of a deformation (η, ζ) acting on u.

    ``Z = (η·∇)η``, ``W = Z - (div η)η``, ``X0`` is the second-order
    coefficient of u∘Φ_t⁻¹, ``X`` the second-order coefficient of the
    Jacobian determinant of the flow, and ``Y`` the second-order coefficient
    of the pulled-back gradient.
    """

    Z: VectorField
    W: VectorField
    X0: ScalarField
    X: ScalarField
    Y: VectorField
    div: np.ndarray
    grad_u_dot_eta: np.ndarray  # ∇u·η
    grad_u_dot_jac: tuple  # (∇u·∇η)_k = u_j ∂_k η^j


def transport_field(eta: VectorField) -> VectorField:
    """Z = (η·∇)η, i.e. Z^i = ∂_j η^i η^j."""
    J = eta.jacobian
    zx = J[0][0] * eta.x + J[0][1] * eta.y
    zy = J[1][0] * eta.x + J[1][1] * eta.y
    # the normal component of Z vanishes on ∂Ω only approximately; no flag
    return VectorField(eta.domain, zx, zy)


def variation_fields(eta: VectorField, zeta: VectorField | None, u: ScalarField) -> VariationFields:
    if eta.domain != u.domain or (zeta is not None and zeta.domain != u.domain):
        raise ValueError("grid mismatch between u, η and ζ")
    domain = u.domain
    J = eta.jacobian
    div = J[0][0] + J[1][1]
    Z = transport_field(eta)
    W = VectorField(domain, Z.x - div * eta.x, Z.y - div * eta.y)
    if zeta is None:
        zeta = Z
    ux, uy = gradient(domain, u.values)
    uxx, uxy, uyy = hessian(domain, u.values)
    quad = uxx * eta.x**2 + 2 * uxy * eta.x * eta.y + uyy * eta.y**2
    X0 = quad + ux * (2 * Z.x - zeta.x) + uy * (2 * Z.y - zeta.y)
    JZ = Z.jacobian
    trJ2 = J[0][0] ** 2 + 2 * J[0][1] * J[1][0] + J[1][1] ** 2
    X = JZ[0][0] + JZ[1][1] + div**2 - trJ2
    # (J²)_{ik} = J_ij J_jk ; (∇η)²·∇u has components u_i (J²)_{ik}
    J2 = [[J[0][0] * J[0][k] + J[0][1] * J[1][k] for k in (0, 1)],
          [J[1][0] * J[0][k] + J[1][1] * J[1][k] for k in (0, 1)]]
    sq = [ux * J2[0][k] + uy * J2[1][k] for k in (0, 1)]
    half = [0.5 * (ux * JZ[0][k] + uy * JZ[1][k]) for k in (0, 1)]
    Y = VectorField(domain, half[0] - sq[0], half[1] - sq[1])
    gj = (ux * J[0][0] + uy * J[1][0], ux * J[0][1] + uy * J[1][1])
    return VariationFields(
        Z=Z, W=W, X0=ScalarField(domain, X0), X=ScalarField(domain, X), Y=Y, div=div,
        grad_u_dot_eta=ux * eta.x + uy * eta.y, grad_u_dot_jac=gj,
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_MAGIC = b"SHLBFLD1"


def save_field(path, field) -> None:
    """Write a field to the flat binary container.

    Layout: 8-byte magic, uint32 header length, UTF-8 JSON header (domain
    spec, grid hash, component names, dtype, order), then the components as
    little-endian float64 in row-major order.
    """
    if isinstance(field, VectorField):
        comps, names = [field.x, field.y], ["x", "y"]
    else:
        comps, names = [field.values], ["value"]
    header = {
        "domain": field.domain.spec_dict(),
        "grid_hash": grid_hash(field.domain),
        "components": names,
        "dtype": "<f8",
        "order": "C",
        "shape": list(field.domain.shape),
    }
    hb = canonical_json(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        for c in comps:
            fh.write(np.ascontiguousarray(c, dtype="<f8").tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path} is not a field container")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n))
        domain = build_domain(header["domain"])
        if grid_hash(domain) != header["grid_hash"]:
            raise ValueError("grid hash mismatch in field container")
        size = int(np.prod(header["shape"]))
        comps = [np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(header["shape"]).copy()
                 for _ in header["components"]]
    if len(comps) == 2:
        return VectorField(domain, *comps)
    return ScalarField(domain, comps[0])


def field_to_csv(path, field) -> None:
    X, Y = field.domain.coords
    cols = [field.x, field.y] if isinstance(field, VectorField) else [field.values]
    names = ["eta_x", "eta_y"] if isinstance(field, VectorField) else ["value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", *names])
        for row in zip(X.ravel(), Y.ravel(), *(c.ravel() for c in cols)):
            w.writerow([f"{v:.17g}" for v in row])
