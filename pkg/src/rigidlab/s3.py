"""Convex bodies in the 3-sphere and the hyperboloid, their polar duals, and the volume identities.

A body is star-shaped about the pole ``e0 = (1, 0, 0, 0)`` and given by its
geodesic radius ``u(x)`` in every direction ``x`` of the unit 2-sphere.  The
primal surface is differentiated through the exact chart map; the dual is
rebuilt from its positions alone so that every swap relation is a genuine
comparison of two computations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import HypothesisViolatedError, InvalidArgumentError, OriginNotInsideError
from .grid import SphereGrid
from .surface import det2, inv2

E0 = np.array([1.0, 0.0, 0.0, 0.0])
MINKOWSKI = np.diag([-1.0, 1.0, 1.0, 1.0])
TUBE_NODES = 16


def cross4(a, b, c):
    """Vector orthogonal to ``a, b, c`` in R^4 with ``det[n, a, b, c] = |n|^2``."""
    M = np.stack([a, b, c], axis=-2)  # (..., 3, 4)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape, c.shape))
    for k in range(4):
        cols = [j for j in range(4) if j != k]
        out[..., k] = (-1) ** k * np.linalg.det(M[..., cols])
    return out


def _dot(a, b, metric=None):
    if metric is None:
        return np.einsum("...a,...a->...", a, b)
    return np.einsum("...a,ab,...b->...", a, metric, b)


def _pair(da, db, metric=None):
    """Matrix ``<da_i, db_j>`` for derivative stacks (..., 4, 2)."""
    if metric is None:
        return np.einsum("...ai,...aj->...ij", da, db)
    return np.einsum("...ai,ab,...bj->...ij", da, metric, db)


def lift_derivative(grid: SphereGrid, F):
    """Chart derivatives (..., 4, 2) of an R^4 node field.

    The last three components are split as ``alpha x + beta^k d_k x``; only the
    coefficients are differenced, the sphere map itself is differentiated
    exactly.  Fields of the form ``(c0, c1 x)`` with constant ``c`` come out exact.
    """
    F = np.asarray(F, dtype=float)
    vec = F[..., 1:]
    alpha = np.einsum("...a,...a->...", vec, grid.x)
    beta = np.einsum("...a,...ak->...k", vec, grid.dx) / grid.conformal[..., None]
    d0 = grid.gradient(F[..., 0])
    dalpha = grid.gradient(alpha)
    dbeta = grid.gradient(beta, ncomp=1)  # [..., k, j]
    dvec = (
        np.einsum("...a,...j->...aj", grid.x, dalpha)
        + alpha[..., None, None] * grid.dx
        + np.einsum("...ak,...kj->...aj", grid.dx, dbeta)
        + np.einsum("...k,...akj->...aj", beta, grid.ddx)
    )
    return np.concatenate([d0[..., None, :], dvec], axis=-2)


def _check_range(grid, u, upper):
    u = np.asarray(u, dtype=float)
    live = grid.weight > 0
    if np.any(u[live] <= 0) or (upper is not None and np.any(u[live] >= upper)):
        raise InvalidArgumentError(
            f"radius field out of range: min {u[live].min():.4f}, max {u[live].max():.4f}"
        )
    return u


def _embedding(grid, u, cs, sn):
    """Positions, first and second chart derivatives of ``(C(u), S(u) x)``.

    ``cs(u, k)`` / ``sn(u, k)`` return the k-th derivative of the two profile functions.
    """
    du = grid.gradient(u)
    d2u = np.empty(du.shape + (2,))
    d2u[..., 0, 0] = grid.partial2(u, 0, 0)
    d2u[..., 1, 1] = grid.partial2(u, 1, 1)
    d2u[..., 0, 1] = d2u[..., 1, 0] = grid.partial2(u, 0, 1)
    x, dx, ddx = grid.x, grid.dx, grid.ddx
    c0, c1, c2 = (cs(u, k) for k in range(3))
    s0, s1, s2 = (sn(u, k) for k in range(3))
    phi = np.concatenate([c0[..., None], s0[..., None] * x], axis=-1)
    uu = np.einsum("...i,...j->...ij", du, du)
    d0 = c1[..., None] * du
    dv = np.einsum("...a,...j->...aj", s1[..., None] * x, du) + s0[..., None, None] * dx
    dphi = np.concatenate([d0[..., None, :], dv], axis=-2)
    dd0 = c2[..., None, None] * uu + c1[..., None, None] * d2u
    ddv = (
        np.einsum("...a,...ij->...aij", x, s2[..., None, None] * uu + s1[..., None, None] * d2u)
        + s1[..., None, None, None]
        * (np.einsum("...ai,...j->...aij", dx, du) + np.einsum("...aj,...i->...aij", dx, du))
        + s0[..., None, None, None] * ddx
    )
    ddphi = np.concatenate([dd0[..., None, :, :], ddv], axis=-3)
    return phi, dphi, ddphi


def _trig(u, k):
    return [np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v)][k](u)


def _trig_s(u, k):
    return [np.sin, np.cos, lambda v: -np.sin(v)][k](u)


def _hyp(u, k):
    return [np.cosh, np.sinh, np.cosh][k](u)


def _hyp_s(u, k):
    return [np.sinh, np.cosh, np.sinh][k](u)


@dataclass(frozen=True, eq=False)
class S3RadialBody:
    grid: SphereGrid
    u: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    nu: np.ndarray
    I: np.ndarray
    II: np.ndarray

    @cached_property
    def B(self):
        return inv2(self.I) @ self.II

    @property
    def detB(self):
        return det2(self.B)

    @property
    def K(self):
        """Intrinsic Gauss curvature."""
        return 1.0 + self.detB

    @property
    def H(self):
        return 0.5 * (self.B[..., 0, 0] + self.B[..., 1, 1])

    @cached_property
    def III(self):
        return self.II @ inv2(self.I) @ self.II

    @cached_property
    def area_density(self):
        return np.sqrt(det2(self.I)) / self.grid.conformal

    def integrate(self, f):
        return self.grid.integrate(np.asarray(f) * self.area_density)

    @cached_property
    def dnu(self):
        """Weingarten: ``d nu = d phi B``."""
        return self.dphi @ self.B


def s3_radial_body(grid: SphereGrid, u, margin=1e-3):
    u = _check_range(grid, u, np.pi / 2 - margin)
    phi, dphi, ddphi = _embedding(grid, u, _trig, _trig_s)
    n = cross4(phi, dphi[..., 0], dphi[..., 1])
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    radial = np.concatenate([-np.sin(u)[..., None], np.cos(u)[..., None] * grid.x], axis=-1)
    n = n * np.sign(_dot(n, radial))[..., None]
    I = _pair(dphi, dphi)
    II = -np.einsum("...aij,...a->...ij", ddphi, n)
    return S3RadialBody(grid, u, phi, dphi, n, I, II)


@dataclass(frozen=True, eq=False)
class S3Dual:
    """Dual surface rebuilt from its positions; ``normal`` is co-oriented with the primal point."""

    grid: SphereGrid
    psi: np.ndarray
    dpsi: np.ndarray
    normal: np.ndarray
    dnormal: np.ndarray
    I: np.ndarray
    II: np.ndarray
    III: np.ndarray
    residuals: dict

    @cached_property
    def B(self):
        return inv2(self.I) @ self.II

    @property
    def H(self):
        return 0.5 * (self.B[..., 0, 0] + self.B[..., 1, 1])

    @cached_property
    def area_density(self):
        return np.sqrt(np.abs(det2(self.I))) / self.grid.conformal

    def integrate(self, f):
        return self.grid.integrate(np.asarray(f) * self.area_density)


def _live(grid):
    return grid.weight > 0


def _rel_max(grid, diff, scale):
    return float(np.max(np.abs(diff)[_live(grid)]) / max(float(np.max(np.abs(scale)[_live(grid)])), 1e-300))


def _dual_from_positions(grid, psi, toward, metric=None):
    """Normal of the surface ``psi`` orthogonal to ``psi`` itself, oriented along ``toward``."""
    dpsi = lift_derivative(grid, psi)
    n = cross4(psi, dpsi[..., 0], dpsi[..., 1])
    if metric is not None:
        n = n @ metric
        n = n / np.sqrt(np.abs(_dot(n, n, metric)))[..., None]
    else:
        n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    n = n * np.sign(_dot(n, toward, metric))[..., None]
    return dpsi, n


def polar_dual_s3(body: S3RadialBody, parabolic_tol=1e-8):
    grid = body.grid
    detB = body.detB
    live = _live(grid)
    if np.any(np.abs(detB[live]) <= parabolic_tol):
        node = tuple(int(i) for i in np.argwhere(live & (np.abs(detB) <= parabolic_tol))[0])
        raise HypothesisViolatedError(f"parabolic point at node {node}: dual is singular")
    psi = body.nu
    dpsi, normal = _dual_from_positions(grid, psi, body.phi)
    dnormal = lift_derivative(grid, normal)
    I = _pair(dpsi, dpsi)
    II = _pair(dpsi, dnormal)
    II = 0.5 * (II + np.swapaxes(II, -1, -2))
    III = _pair(dnormal, dnormal)
    scale = np.abs(body.I) + np.abs(body.II) + np.abs(body.III)
    residuals = {
        "I_vs_dual_III": _rel_max(grid, body.I - III, scale),
        "II_vs_dual_II": _rel_max(grid, body.II - II, scale),
        "III_vs_dual_I": _rel_max(grid, body.III - I, scale),
        "double_dual": float(np.max(np.linalg.norm(normal - body.phi, axis=-1)[live])),
        "orthogonality": float(
            max(np.max(np.abs(_dot(body.phi, psi))[live]), np.max(np.abs(np.einsum("...ai,...a->...i", body.dphi, psi))[live]))
        ),
    }
    return S3Dual(grid, psi, dpsi, normal, dnormal, I, II, III, residuals)


def _lam(rho):
    return (rho / 2 - np.sin(2 * rho) / 4) / np.sin(rho) ** 2


def vol_s3(grid, positions, normal, area_density, center=E0):
    """Volume enclosed by a closed surface star-shaped about ``center``.

    Integrates ``lam(rho) <d rho, nu>`` where ``lam(rho) sin^2 rho`` is a primitive
    of ``sin^2 rho``, so that ``lam(rho) d rho`` has unit divergence.
    """
    center = np.asarray(center, dtype=float)
    c = np.clip(_dot(positions, center), -1.0, 1.0)
    rho = np.arccos(c)
    drho = (np.cos(rho)[..., None] * positions - center) / np.sin(rho)[..., None]
    flux = _dot(drho, normal)
    live = _live(grid)
    if np.any(flux[live] <= 0):
        raise OriginNotInsideError("surface is not star-shaped about the center")
    return float(grid.integrate(_lam(rho) * flux * area_density))


def body_volume(body: S3RadialBody):
    return vol_s3(body.grid, body.phi, body.nu, body.area_density, E0)


def dual_volume(dual: S3Dual):
    return vol_s3(dual.grid, dual.psi, dual.normal, dual.area_density, -E0)


def ball_volume(a):
    return np.pi * (2 * a - np.sin(2 * a))


def tube_volume(body: S3RadialBody, nodes=TUBE_NODES):
    """Volume swept by the normal geodesics of length pi/2, by Gauss-Legendre in the arc parameter."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = (t + 1) * np.pi / 4
    w = w * np.pi / 4
    total = 0.0
    for ti, wi in zip(t, w):
        dF = np.cos(ti) * body.dphi + np.sin(ti) * body.dnu
        gram = _pair(dF, dF)
        total += wi * body.grid.integrate(np.sqrt(np.abs(det2(gram))) / body.grid.conformal)
    return float(total)


def _require_k_above_one(body):
    live = _live(body.grid)
    if np.any(body.K[live] <= 1.0):
        raise HypothesisViolatedError(f"Gauss curvature must exceed 1 (min {body.K[live].min():.4f})")


@dataclass(frozen=True)
class HerglotzReport:
    volume: float
    dual_volume: float
    area: float
    dual_area: float
    mean_curvature_integral: float
    dual_mean_curvature_integral: float
    tube_quadrature: float
    tube_closed_form: float
    herglotz: float
    steiner: float
    gauss_bonnet: float


def herglotz_suite(body: S3RadialBody, dual: S3Dual | None = None):
    _require_k_above_one(body)
    dual = dual or polar_dual_s3(body)
    vol, vol_d = body_volume(body), dual_volume(dual)
    area = body.integrate(1.0)
    area_d = dual.integrate(1.0)
    intH = body.integrate(body.H)
    intH_d = dual.integrate(dual.H)
    tube_q = tube_volume(body)
    tube_c = np.pi / 4 * (area + area_d) + intH
    return HerglotzReport(
        volume=vol,
        dual_volume=vol_d,
        area=area,
        dual_area=area_d,
        mean_curvature_integral=intH,
        dual_mean_curvature_integral=intH_d,
        tube_quadrature=tube_q,
        tube_closed_form=float(tube_c),
        herglotz=float(vol + intH + vol_d - np.pi**2),
        steiner=float(vol + tube_c + vol_d - 2 * np.pi**2),
        gauss_bonnet=float(area + area_d - 4 * np.pi),
    )


def herglotz_residual(body):
    return herglotz_suite(body).herglotz


def steiner_residual(body):
    return herglotz_suite(body).steiner


def gauss_bonnet_duality_residual(body):
    return herglotz_suite(body).gauss_bonnet


def killing_generators():
    """The six rotation generators of R^4, as skew 4x4 matrices."""
    gens = []
    for a in range(4):
        for b in range(a + 1, 4):
            A = np.zeros((4, 4))
            A[a, b], A[b, a] = -1.0, 1.0
            gens.append(A)
    return gens


def killing_form_variations(body: S3RadialBody, dual: S3Dual, A):
    """First variations of the primal metric and of the dual third form under ``phi -> exp(tA) phi``."""
    dxi = np.einsum("ab,...bi->...ai", A, body.dphi)
    gdot = _pair(dxi, body.dphi)
    gdot = gdot + np.swapaxes(gdot, -1, -2)
    dzeta = np.einsum("ab,...bi->...ai", A, dual.dnormal)
    IIIdot = _pair(dzeta, dual.dnormal)
    IIIdot = IIIdot + np.swapaxes(IIIdot, -1, -2)
    live = _live(body.grid)
    return float(np.max(np.abs(gdot)[live])), float(np.max(np.abs(IIIdot)[live]))


# ---- hyperbolic space and its de Sitter dual --------------------------------------


@dataclass(frozen=True, eq=False)
class H3RadialBody:
    grid: SphereGrid
    u: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    nu: np.ndarray
    I: np.ndarray
    II: np.ndarray

    @cached_property
    def B(self):
        return inv2(self.I) @ self.II

    @cached_property
    def III(self):
        return self.II @ inv2(self.I) @ self.II

    @property
    def H(self):
        return 0.5 * (self.B[..., 0, 0] + self.B[..., 1, 1])


def h3_radial_body(grid: SphereGrid, u):
    u = _check_range(grid, u, None)
    phi, dphi, ddphi = _embedding(grid, u, _hyp, _hyp_s)
    n = cross4(phi, dphi[..., 0], dphi[..., 1]) @ MINKOWSKI
    n = n / np.sqrt(_dot(n, n, MINKOWSKI))[..., None]
    radial = np.concatenate([np.sinh(u)[..., None], np.cosh(u)[..., None] * grid.x], axis=-1)
    n = n * np.sign(_dot(n, radial, MINKOWSKI))[..., None]
    I = _pair(dphi, dphi, MINKOWSKI)
    II = -np.einsum("...aij,ab,...b->...ij", ddphi, MINKOWSKI, n)
    return H3RadialBody(grid, u, phi, dphi, n, I, II)


def ds3_polar_dual(body: H3RadialBody):
    """De Sitter dual ``psi = nu`` with its Minkowski residuals."""
    grid = body.grid
    live = _live(grid)
    ev = np.linalg.eigvalsh(0.5 * (body.B + np.swapaxes(body.B, -1, -2)))
    if np.any(ev[..., 0][live] <= 0):
        raise HypothesisViolatedError("shape operator is not positive definite")
    psi = body.nu
    dpsi = lift_derivative(grid, psi)
    norm_psi = _dot(psi, psi, MINKOWSKI)
    norm_phi = _dot(body.phi, body.phi, MINKOWSKI)
    if np.any(norm_psi[live] <= 0) or np.any(norm_phi[live] >= 0):
        raise HypothesisViolatedError("dual is not spacelike or body is not on the hyperboloid")
    scale = np.abs(body.I) + np.abs(body.II) + np.abs(body.III)
    I_psi = _pair(dpsi, dpsi, MINKOWSKI)
    mixed = _pair(dpsi, body.dphi, MINKOWSKI)
    return {
        "psi": psi,
        "dpsi": dpsi,
        "unit_residual": float(np.max(np.abs(norm_psi - 1.0)[live])),
        "hyperboloid_residual": float(np.max(np.abs(norm_phi + 1.0)[live])),
        "orthogonality": float(
            max(
                np.max(np.abs(_dot(body.phi, psi, MINKOWSKI))[live]),
                np.max(np.abs(np.einsum("...ai,ab,...b->...i", body.dphi, MINKOWSKI, psi))[live]),
            )
        ),
        "dual_I_vs_III": _rel_max(grid, I_psi - body.III, scale),
        "mixed_vs_II": _rel_max(grid, 0.5 * (mixed + np.swapaxes(mixed, -1, -2)) - body.II, scale),
    }
