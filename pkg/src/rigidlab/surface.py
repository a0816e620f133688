"""Closed surfaces in R^3 over the two-chart sphere grid.

Surfaces come either from a radial function (``p = r x``), from a support
function (``p = h x + grad h``) or from arbitrary node positions.  The first two
use exact chart derivatives of the direction map and difference only the
scalar; generic positions are differenced directly, which keeps every linear
identity (for instance the skewness of Killing fields) exact to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NotConvexError,
    NotIsometricError,
    OriginNotInsideError,
    TangencyError,
    InvalidArgumentError,
)
from .grid import SphereGrid, hessian_op, metric_inverse
from .mixed_det import axial_extension

# ---- small pointwise helpers -------------------------------------------------


def det3(a, b, c):
    return np.einsum("...i,...i->...", a, np.cross(b, c))


def wedge_density(f, A, Bf):
    """Chart density of ``dvol(f ^ A ^ B)`` for a 0-form ``f`` and 1-forms ``A``, ``B`` (..., 3, 2)."""
    return det3(f, A[..., 0], Bf[..., 1]) - det3(f, A[..., 1], Bf[..., 0])


def frame_operator(dp, I, images):
    """Matrix in the chart frame of the tangential part of a map with columns ``images``."""
    return np.einsum("...ij,...aj,...ak->...ik", metric_inverse(I), dp, images)


def inv2(A):
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    out = np.empty_like(A)
    out[..., 0, 0] = A[..., 1, 1] / det
    out[..., 1, 1] = A[..., 0, 0] / det
    out[..., 0, 1] = -A[..., 0, 1] / det
    out[..., 1, 0] = -A[..., 1, 0] / det
    return out


def det2(A):
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def richardson(fun, eps, deriv=1):
    """Central difference in ``t`` at 0 with one Richardson step (error O(eps^4))."""

    def central(e):
        if deriv == 1:
            return (fun(e) - fun(-e)) / (2 * e)
        return (fun(e) - 2 * fun(0.0) + fun(-e)) / e**2

    return (4 * central(eps) - central(2 * eps)) / 3


# ---- geometry -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    grid: SphereGrid
    p: np.ndarray  # (2, M, M, 3)
    dp: np.ndarray  # (2, M, M, 3, 2)
    nu: np.ndarray
    I: np.ndarray
    II: np.ndarray
    B: np.ndarray = field(repr=False)

    @property
    def K(self):
        return det2(self.B)

    @property
    def H(self):
        return 0.5 * (self.B[..., 0, 0] + self.B[..., 1, 1])

    @property
    def h(self):
        return np.einsum("...i,...i->...", self.nu, self.p)

    @property
    def area_density(self):
        return np.sqrt(det2(self.I))

    def integrate(self, f):
        return self.grid.integrate_chart(f, self.area_density)

    @property
    def diameter(self):
        return 2.0 * np.max(np.linalg.norm(self.p, axis=-1)[self.grid.weight > 0])

    def tangential(self, images):
        """Frame matrix of the tangential part of an R^3-valued 1-form."""
        return frame_operator(self.dp, self.I, images)


def _assemble(grid, p, dp, d2p=None, nu=None, B=None):
    I = np.einsum("...ai,...aj->...ij", dp, dp)
    if nu is None:
        n = np.cross(dp[..., 0], dp[..., 1])
        nu = n / np.linalg.norm(n, axis=-1, keepdims=True)
    if B is None:
        II = -np.einsum("...a,...aij->...ij", nu, d2p)
        II = 0.5 * (II + np.swapaxes(II, -1, -2))
        B = np.einsum("...ik,...kj->...ij", metric_inverse(I), II)
    else:
        II = np.einsum("...ik,...kj->...ij", I, B)
    return SurfaceGeometry(grid, p, dp, nu, I, II, B)


def from_positions(grid, p, nu=None):
    """Geometry of an arbitrary immersion given by node positions (outward orientation assumed).

    A unit normal known in closed form may be passed as ``nu``; otherwise it is
    taken from the differenced tangent vectors.
    """
    p = np.asarray(p, dtype=float)
    dp = grid.gradient(p, ncomp=1)
    d2p = np.empty(dp.shape + (2,))
    d2p[..., 0, 0] = grid.partial2(p, 0, 0, ncomp=1)
    d2p[..., 1, 1] = grid.partial2(p, 1, 1, ncomp=1)
    d2p[..., 0, 1] = d2p[..., 1, 0] = grid.partial2(p, 0, 1, ncomp=1)
    return _assemble(grid, p, dp, d2p, nu=nu)


def radial_embedding(grid, r):
    """Surface ``p = r x`` of a positive radial function."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise InvalidArgumentError(f"radial function must be positive (min {r.min():.3e})")
    x, dx, ddx = grid.x, grid.dx, grid.ddx
    dr = grid.gradient(r)
    d2r = np.empty(dr.shape + (2,))
    d2r[..., 0, 0] = grid.partial2(r, 0, 0)
    d2r[..., 1, 1] = grid.partial2(r, 1, 1)
    d2r[..., 0, 1] = d2r[..., 1, 0] = grid.partial2(r, 0, 1)
    p = r[..., None] * x
    dp = x[..., :, None] * dr[..., None, :] + r[..., None, None] * dx
    d2p = (
        x[..., :, None, None] * d2r[..., None, :, :]
        + dx[..., :, :, None] * dr[..., None, None, :]
        + dx[..., :, None, :] * dr[..., None, :, None]
        + r[..., None, None, None] * ddx
    )
    return _assemble(grid, p, dp, d2p)


def support_embedding(grid, h):
    """Surface with support function ``h`` indexed by the unit normal."""
    h = np.asarray(h, dtype=float)
    g = grid.round_metric
    binv = h[..., None, None] * np.eye(2) + hessian_op(grid, h, g)
    binv = 0.5 * (binv + np.swapaxes(binv, -1, -2))  # symmetric for a conformal metric
    ev = np.linalg.eigvalsh(binv)
    if np.any(ev[grid.weight > 0] <= 0):
        raise NotConvexError(f"h id + Hess h is not positive definite (min eigenvalue {ev.min():.3e})")
    grad = np.einsum("...ai,...ij,...j->...a", grid.dx, metric_inverse(g), grid.gradient(h))
    p = h[..., None] * grid.x + grad
    dp = np.einsum("...ak,...ki->...ai", grid.dx, binv)
    return _assemble(grid, p, dp, nu=grid.x.copy(), B=inv2(binv))


# ---- integrals ----------------------------------------------------------------


def _check_origin_inside(geom):
    h = geom.h[geom.grid.weight > 0]
    if np.any(h <= 0):
        raise OriginNotInsideError(f"support value not positive (min {h.min():.3e})")


def volume(geom, method="support_integral"):
    _check_origin_inside(geom)
    if method == "support_integral":
        return geom.integrate(geom.h) / 3.0
    if method == "wedge_integral":
        return geom.grid.integrate_chart(wedge_density(geom.p, geom.dp, geom.dp), 1.0) / 6.0
    raise InvalidArgumentError(f"unknown volume method {method!r}")


def area(geom):
    return geom.integrate(np.ones(geom.grid.shape))


def total_mean_curvature(geom):
    return geom.integrate(geom.H)


def codazzi_residual(geom):
    """Pointwise ``(nabla_1 B) e_2 - (nabla_2 B) e_1`` measured in the metric, over the live nodes."""
    from .grid import christoffels

    grid = geom.grid
    gam = christoffels(grid, geom.I)
    B = geom.B
    dB = np.stack([grid.partial(B, i, ncomp=2) for i in (0, 1)], axis=-3)  # [..., i, a, j]
    cov = dB + np.einsum("...aik,...kj->...iaj", gam, B)
    vec = cov[..., 0, :, 1] - cov[..., 1, :, 0]
    norm = np.sqrt(np.einsum("...a,...ab,...b->...", vec, geom.I, vec))
    return np.where(grid.weight > 0, norm, 0.0)


def identity_residuals(geom):
    """Minkowski integral identities and the Codazzi equation."""
    area_ = area(geom)
    tmc = total_mean_curvature(geom)
    h = geom.h
    scale_B = np.max(np.abs(geom.B)[geom.grid.weight > 0])
    return {
        "minkowski_mean": tmc - geom.integrate(h * geom.K),
        "minkowski_area": area_ - geom.integrate(h * geom.H),
        "codazzi_max": float(np.max(codazzi_residual(geom)) / scale_B),
        "area": area_,
        "total_mean_curvature": tmc,
    }


# ---- deformations ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DeformationState:
    xi: np.ndarray
    gdot: np.ndarray
    Bdot: np.ndarray
    Kdot: np.ndarray
    nudot: np.ndarray
    IIdot: np.ndarray


def deformation_flow(geom, xi, eps=None):
    """Derivatives at ``t = 0`` of the geometry of ``p + t xi``, by Richardson-extrapolated differences."""
    xi = np.asarray(xi, dtype=float)
    grid = geom.grid
    if eps is None:
        eps = 1e-3 * geom.diameter  # Richardson makes truncation negligible; smaller steps only add roundoff
    cache = {}

    def flowed(t):
        if t not in cache:
            cache[t] = from_positions(grid, geom.p + t * xi)
        return cache[t]

    def d(attr):
        return richardson(lambda t: getattr(flowed(t), attr), eps)

    return DeformationState(xi, d("I"), d("B"), d("K"), d("nu"), d("II"))


@dataclass(frozen=True, eq=False)
class RotationTranslation:
    eta: np.ndarray
    tau: np.ndarray
    residuals: dict


def _live_max(grid, arr, axes):
    vals = np.max(np.abs(arr), axis=axes) if axes else np.abs(arr)
    return float(np.max(vals[grid.weight > 0]))


def rotation_translation_fields(geom, xi, iso_tol=1e-8, flow=None):
    """Rotation and translation fields of an isometric deformation ``xi``."""
    grid = geom.grid
    xi = np.asarray(xi, dtype=float)
    p = geom.p
    dp = grid.gradient(p, ncomp=1)  # plain differences: consistent with dxi
    dxi = grid.gradient(xi, ncomp=1)
    scale = max(_live_max(grid, dxi, (-2, -1)), 1.0) * _live_max(grid, dp, (-2, -1))
    pair = np.einsum("...ai,...aj->...ij", dp, dxi)
    gdot = pair + np.swapaxes(pair, -1, -2)
    iso = _live_max(grid, gdot, (-2, -1)) / scale
    if iso > iso_tol:
        raise NotIsometricError(f"deformation is not isometric: |gdot| / scale = {iso:.3e}")
    eta, _ = axial_extension(dp, dxi, tol=np.inf)
    tau = xi - np.cross(eta, p)
    deta = grid.gradient(eta, ncomp=1)
    dtau = grid.gradient(tau, ncomp=1)
    cross = lambda a, F: np.cross(a[..., :, None], F, axis=-2)
    if flow is None:
        flow = deformation_flow(geom, xi)
    I = np.einsum("...ai,...aj->...ij", dp, dp)
    C = frame_operator(dp, I, deta)
    J = frame_operator(dp, I, cross(geom.nu, dp))
    T = frame_operator(dp, I, dtau)
    bscale = max(_live_max(grid, flow.Bdot, (-2, -1)), _live_max(grid, C, (-2, -1)), 1e-300)
    res = {
        "isometry": iso,
        "dxi_eta_dp": _live_max(grid, dxi - cross(eta, dp), (-2, -1)) / scale,
        "dtau_p_deta": _live_max(grid, dtau - cross(p, deta), (-2, -1)) / max(scale, 1e-300),
        "deta_tangent": _live_max(grid, np.einsum("...a,...ai->...i", geom.nu, deta), -1)
        / max(_live_max(grid, deta, (-2, -1)), 1.0),
        "deta_J_Bdot": _live_max(grid, C - J @ flow.Bdot, (-2, -1)) / max(bscale, 1.0),
        "dtau_h_Bdot": _live_max(grid, T + geom.h[..., None, None] * flow.Bdot, (-2, -1)) / max(bscale, 1.0),
    }
    return RotationTranslation(eta, tau, res)


def tangent_derivative(geom, eta, tol=1e-3):
    """``d eta`` as an operator on the tangent planes, plus its normal-leakage residual."""
    grid = geom.grid
    deta = grid.gradient(np.asarray(eta, dtype=float), ncomp=1)
    leak = np.einsum("...a,...ai->...i", geom.nu, deta)
    scale = max(_live_max(grid, deta, (-2, -1)), _live_max(grid, geom.dp, (-2, -1)))
    resid = _live_max(grid, leak, -1) / scale
    if resid > tol:
        raise TangencyError(f"d eta leaves the tangent planes (residual {resid:.3e})")
    return geom.tangential(deta), deta, resid


def blaschke_integral(geom, eta, tol=1e-3):
    """Integral of ``2 h det(d eta)`` over the surface."""
    C, _, _ = tangent_derivative(geom, eta, tol)
    return geom.integrate(2.0 * geom.h * det2(C))


def vol_derivatives(geom, eta, tol=1e-3):
    """First and second variation of volume along ``p + t eta``, each by two wedge routes."""
    _, deta, _ = tangent_derivative(geom, eta, tol)
    eta = np.asarray(eta, dtype=float)
    p, dp = geom.p, geom.dp
    integ = lambda dens: geom.grid.integrate_chart(dens, 1.0)
    vdot_a = 0.5 * integ(wedge_density(eta, dp, dp))
    vdot_b = (integ(wedge_density(eta, dp, dp)) + 2.0 * integ(wedge_density(p, deta, dp))) / 6.0
    vddot_a = integ(wedge_density(p, deta, deta))
    vddot_b = integ(wedge_density(eta, deta, dp))
    return {"vdot": (vdot_a, vdot_b), "vddot": (vddot_a, vddot_b)}


def volume_along(geom, eta, t):
    """Volume of the flowed surface ``p + t eta`` from its own support integral."""
    return volume(from_positions(geom.grid, geom.p + t * np.asarray(eta)), "support_integral")


def support_flow_field(grid, k):
    """The Gauss-map preserving field ``k x + grad k`` of a scalar ``k`` on the sphere."""
    k = np.asarray(k, dtype=float)
    grad = np.einsum("...ai,...ij,...j->...a", grid.dx, metric_inverse(grid.round_metric), grid.gradient(k))
    return k[..., None] * grid.x + grad


# ---- polar duality -----------------------------------------------------------------


def polar_dual_r3(geom):
    """Surface of poles ``nu / h`` of the tangent planes."""
    h = geom.h
    if np.any(np.abs(h[geom.grid.weight > 0]) < 1e-12):
        raise OriginNotInsideError("support value vanishes; polar dual undefined")
    # the dual tangent plane is orthogonal to p, so its normal is exact
    p = geom.p
    return from_positions(geom.grid, geom.nu / h[..., None], nu=p / np.linalg.norm(p, axis=-1, keepdims=True))


@dataclass(frozen=True, eq=False)
class WreathState:
    phi: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    tau: np.ndarray
    psi: np.ndarray
    zeta: np.ndarray
    residuals: dict
    flagged_nodes: np.ndarray


def wreath_step(geom, xi, iso_tol=1e-8):
    """One step of the dual-surface construction ``zeta = tau x psi - eta``."""
    grid = geom.grid
    rt = rotation_translation_fields(geom, xi, iso_tol)
    eta, tau = rt.eta, rt.tau
    h = geom.h
    psi = geom.nu / h[..., None]
    zeta = np.cross(tau, psi) - eta
    dpsi = grid.gradient(psi, ncomp=1)
    dzeta = grid.gradient(zeta, ncomp=1)
    dtau = grid.gradient(tau, ncomp=1)
    deta = grid.gradient(eta, ncomp=1)
    pair = np.einsum("...ai,...aj->...ij", dpsi, dzeta)
    scale = max(_live_max(grid, dpsi, (-2, -1)), 1e-300) * max(_live_max(grid, dzeta, (-2, -1)), 1.0)
    cross = lambda a, F: np.cross(a[..., :, None], F, axis=-2)
    gram = np.einsum("...ai,...aj->...ij", dpsi, dpsi)
    sv = np.sqrt(np.clip(np.linalg.eigvalsh(gram), 0, None))
    flagged = np.argwhere((sv[..., 0] < 1e-8 * max(sv[..., 1].max(), 1e-300)) & (grid.weight > 0))
    res = dict(rt.residuals)
    res.update(
        {
            "zeta_isometric": _live_max(grid, pair + np.swapaxes(pair, -1, -2), (-2, -1)) / scale,
            "psi_dtau_deta": _live_max(grid, cross(psi, dtau) + deta, (-2, -1)) / scale,
            "dzeta_tau_dpsi": _live_max(grid, dzeta - cross(tau, dpsi), (-2, -1)) / scale,
        }
    )
    return WreathState(geom.p, xi, eta, tau, psi, zeta, res, flagged)
