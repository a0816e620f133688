"""Graph surfaces ``rho = r(x)`` in the cone metric built from a sphere metric ``g`` and ``r``.

For a metric ``g`` on the sphere and a positive function ``r`` with
``|grad r|_g < 1`` the 3-metric ``d rho^2 + (rho / r)^2 (g - dr dr)`` restricts
to ``g`` on the graph ``rho = r``.  Everything here is computed intrinsically
from ``(g, r)`` with two-dimensional operators.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NotAGraphError
from .grid import (
    SphereGrid,
    check_metric,
    christoffels,
    gauss_curvature,
    hessian_op,
    metric_inverse,
)
from .surface import det2, richardson


class MetricBase:
    """Quantities depending on ``g`` alone, shared by every ``r``."""

    def __init__(self, grid: SphereGrid, g):
        g = np.asarray(g, dtype=float)
        check_metric(g)
        self.grid = grid
        self.g = g
        self.ginv = metric_inverse(g)
        self.gamma = christoffels(grid, g)
        self.density = grid.density(g)

    @cached_property
    def K(self):
        return gauss_curvature(self.grid, self.g)

    def integrate(self, f):
        return self.grid.integrate(np.asarray(f) * self.density)

    def fields(self, r):
        """Pointwise graph quantities for ``r`` of shape (..., 2, M, M)."""
        grid = self.grid
        r = np.asarray(r, dtype=float)
        dr = grid.gradient(r)
        sin2 = np.einsum("...i,...ij,...j->...", dr, self.ginv, dr)
        cos = np.sqrt(np.clip(1.0 - sin2, 0.0, None))
        h = r * cos
        hess = hessian_op(grid, 0.5 * r**2, self.g, self.gamma)
        B = (np.eye(2) - hess) / h[..., None, None]
        detB = det2(B)
        sec = self.K - detB
        return {"dr": dr, "sin2": sin2, "cos": cos, "h": h, "B": B, "detB": detB, "sec": sec}

    def sec_over_cos(self, r):
        f = self.fields(r)
        return f["sec"] / f["cos"]


@dataclass(frozen=True, eq=False)
class WarpedData:
    base: MetricBase
    r: np.ndarray
    dr: np.ndarray
    sin2: np.ndarray
    cos: np.ndarray
    h: np.ndarray
    B: np.ndarray
    detB: np.ndarray
    sec: np.ndarray

    @property
    def grid(self):
        return self.base.grid

    @property
    def g(self):
        return self.base.g

    @property
    def K(self):
        return self.base.K

    @property
    def H(self):
        return 0.5 * (self.B[..., 0, 0] + self.B[..., 1, 1])

    @property
    def sin_alpha(self):
        return np.sqrt(self.sin2)

    def integrate(self, f):
        return self.base.integrate(f)

    @cached_property
    def cone_metric(self):
        drdr = np.einsum("...i,...j->...ij", self.dr, self.dr)
        return (self.g - drdr) / self.r[..., None, None] ** 2

    @cached_property
    def K_cone(self):
        return gauss_curvature(self.grid, self.cone_metric)

    def with_r(self, r):
        return warped_data(self.base, r)


def warped_data(g, r, grid=None):
    """Build the graph data for ``(g, r)``; ``g`` may be a metric array or a ``MetricBase``."""
    base = g if isinstance(g, MetricBase) else MetricBase(grid, g)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        node = tuple(int(i) for i in np.unravel_index(np.argmin(r), r.shape))
        raise NotAGraphError(f"r must be positive (min {r.min():.3e} at node {node})", node=node)
    f = base.fields(r)
    live = base.grid.weight > 0
    worst = np.where(live, f["sin2"], -np.inf)
    if np.max(worst) >= 1.0:
        node = tuple(int(i) for i in np.unravel_index(np.argmax(worst), worst.shape))
        raise NotAGraphError(f"|grad r|_g >= 1 at node {node}", node=node)
    return WarpedData(base, r, **f)


# ---- integrals ------------------------------------------------------------------


def total_scalar(wd):
    """Total scalar curvature of the cone region, as a boundary integral."""
    return 2.0 * wd.integrate(wd.r * wd.sec / wd.cos)


def he_functional(wd, method="boundary_formula"):
    if method == "definition":
        return 0.5 * total_scalar(wd) + 2.0 * wd.integrate(wd.H)
    if method == "boundary_formula":
        return wd.integrate(wd.h * (wd.K + wd.detB))
    raise ValueError(f"unknown method {method!r}")


def random_variation(grid, rng, degree=4, spread=0.2):
    """Random smooth ``rdot`` with a positive mean, so that the first variation does not cancel."""
    from .grid import real_harmonics_upto

    Y = real_harmonics_upto(degree, grid.x)[..., 1:]
    return rng.uniform(0.5, 1.5) + spread * (Y @ rng.normal(size=Y.shape[-1])) / np.sqrt(Y.shape[-1])


def he_dot(wd, rdot):
    return wd.integrate(np.asarray(rdot) * wd.sec / wd.cos)


def _along(wd, rdot):
    cache = {}

    def at(t):
        if t not in cache:
            cache[t] = wd.with_r(wd.r + t * rdot)
        return cache[t]

    return at


def he_ddot(wd, rdot, eps=1e-4):
    """Both second-variation formulas; ``t``-derivatives by Richardson differences."""
    rdot = np.asarray(rdot, dtype=float)
    step = eps * max(np.max(np.abs(wd.r)), 1.0) / max(np.max(np.abs(rdot)), 1e-300)
    at = _along(wd, rdot)
    soc_dot = richardson(lambda t: at(t).sec / at(t).cos, step)
    Bdot = richardson(lambda t: at(t).B, step)
    cos_ddot = richardson(lambda t: at(t).cos, step, deriv=2)
    f1 = wd.integrate(rdot * soc_dot)
    f2 = wd.integrate(2.0 * wd.h * det2(Bdot)) + wd.integrate(wd.r * cos_ddot * wd.sec)
    return f1, f2


def he_fd(wd, rdot, eps=1e-4, deriv=1, method="boundary_formula"):
    """Richardson difference of the functional along ``r + t rdot``."""
    rdot = np.asarray(rdot, dtype=float)
    step = eps * max(np.max(np.abs(wd.r)), 1.0) / max(np.max(np.abs(rdot)), 1e-300)
    at = _along(wd, rdot)
    return richardson(lambda t: he_functional(at(t), method), step, deriv=deriv)


def mean_curvature_parts_residual(wd):
    """Integration-by-parts identity linking mean curvature and det B; vanishes in the continuum."""
    return wd.integrate(2.0 * (wd.H - wd.h * wd.detB)) + wd.integrate(wd.r * wd.sin2 * wd.sec / wd.cos)


def sec_cross_check(wd):
    """Pointwise ``sec - cos^2(alpha) (K_cone - 1) / r^2``."""
    return wd.sec - wd.cos**2 * (wd.K_cone - 1.0) / wd.r**2


# ---- ambient curvature tensor ----------------------------------------------------


def _metric3(cone, rho):
    """Components of ``d rho^2 + rho^2 cone`` in coordinates (rho, u1, u2)."""
    G = np.zeros(cone.shape[:-2] + (3, 3))
    G[..., 0, 0] = 1.0
    G[..., 1:, 1:] = rho**2 * cone
    return G


FIRST_5 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
SECOND_5 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _metric_jet(grid, cone, rho, node):
    """Metric, first and second coordinate derivatives in (u1, u2) at ``node`` for one level.

    The 3-metric is written ``D G_hat D`` with ``D = diag(1, sqrt(lam), sqrt(lam))``;
    only ``G_hat`` is differenced, the chart factor is differentiated exactly.
    """
    c, i, j = node
    lam = grid.conformal[c, i, j]
    dl = grid.log_conformal_grad[c, i, j]
    hl = grid.log_conformal_hess[c, i, j]
    Ghat = _metric3(cone / grid.conformal[..., None, None], rho)
    Gh = Ghat[c, i, j]
    dGh = np.stack([grid.partial(Ghat, k, ncomp=2)[c, i, j] for k in (0, 1)])
    ddGh = np.array([[grid.partial2(Ghat, k, l, ncomp=2)[c, i, j] for l in (0, 1)] for k in (0, 1)])

    s = np.sqrt(lam)
    sel = np.array([0.0, 1.0, 1.0])
    D = np.diag(np.where(sel > 0, s, 1.0))
    dD = np.stack([np.diag(sel * 0.5 * s * dl[k]) for k in (0, 1)])
    ddD = np.array(
        [[np.diag(sel * s * (0.5 * hl[k, l] + 0.25 * dl[k] * dl[l])) for l in (0, 1)] for k in (0, 1)]
    )

    G = D @ Gh @ D
    dG = np.stack([dD[k] @ Gh @ D + D @ dGh[k] @ D + D @ Gh @ dD[k] for k in (0, 1)])
    ddG = np.empty((2, 2, 3, 3))
    for k in (0, 1):
        for l in (0, 1):
            ddG[k, l] = (
                ddD[k, l] @ Gh @ D + D @ Gh @ ddD[k, l] + D @ ddGh[k, l] @ D
                + dD[k] @ dGh[l] @ D + dD[l] @ dGh[k] @ D
                + D @ dGh[k] @ dD[l] + D @ dGh[l] @ dD[k]
                + dD[k] @ Gh @ dD[l] + dD[l] @ Gh @ dD[k]
            )
    return G, dG, ddG


def _riemann(G, dG, ddG):
    """``R[a, b, c, d]`` with ``R(e_c, e_d) e_b = R[:, b, c, d]`` from a metric 2-jet.

    ``dG[e]`` and ``ddG[e, f]`` are coordinate derivatives of the metric matrix.
    """
    Ginv = np.linalg.inv(G)
    # first kind: F[d, b, c] = 1/2 (d_b G_dc + d_c G_db - d_d G_bc)
    dGt = np.einsum("eab->abe", dG)  # [a, b, e] = d_e G_ab
    F = 0.5 * (np.einsum("dcb->dbc", dGt) + np.einsum("dbc->dbc", dGt) - np.einsum("bcd->dbc", dGt))
    gam = np.einsum("ad,dbc->abc", Ginv, F)
    ddGt = np.einsum("efab->abef", ddG)  # [a, b, e, f] = d_e d_f G_ab
    dF = 0.5 * (
        np.einsum("dcbe->dbce", ddGt) + np.einsum("dbce->dbce", ddGt) - np.einsum("bcde->dbce", ddGt)
    )
    dGinv = -np.einsum("ap,pqe,qd->ade", Ginv, dGt, Ginv)
    dgam = np.einsum("ade,dbc->abce", dGinv, F) + np.einsum("ad,dbce->abce", Ginv, dF)
    return (
        np.einsum("adbc->abcd", dgam)
        - np.einsum("acbd->abcd", dgam)
        + np.einsum("ace,edb->abcd", gam, gam)
        - np.einsum("ade,ecb->abcd", gam, gam)
    )


def warped_curvature_tensor(wd, node, X, Y, Z, drho=None):
    """``R(X, Y) Z`` at the graph point over ``node``, by two independent routes.

    ``node`` is a (chart, i, j) index triple and ``X, Y, Z`` are coordinate
    vectors in (rho, u1, u2).  Returns ``(direct, structural)``.
    """
    grid = wd.grid
    c, i, j = node
    rho0 = float(wd.r[c, i, j])
    drho = drho or 1e-2 * rho0
    cone = wd.cone_metric
    X, Y, Z = (np.asarray(v, dtype=float) for v in (X, Y, Z))

    # direct: full metric 2-jet, rho-derivatives by 5-point stencils across nearby levels
    jets = [_metric_jet(grid, cone, rho0 + k * drho, node) for k in (-2, -1, 0, 1, 2)]
    G = jets[2][0]
    Gs = np.array([jet[0] for jet in jets])
    dGs = np.array([jet[1] for jet in jets])
    dG = np.empty((3, 3, 3))
    dG[0] = np.tensordot(FIRST_5, Gs, axes=1) / drho
    dG[1:] = jets[2][1]
    ddG = np.empty((3, 3, 3, 3))
    ddG[0, 0] = np.tensordot(SECOND_5, Gs, axes=1) / drho**2
    ddG[0, 1:] = ddG[1:, 0] = np.tensordot(FIRST_5, dGs, axes=1) / drho
    ddG[1:, 1:] = jets[2][2]
    R = _riemann(G, dG, ddG)
    # antisymmetrize in the plane arguments so that X = Y gives exactly zero
    direct = 0.5 * (np.einsum("abcd,b,c,d->a", R, Z, X, Y) - np.einsum("abcd,b,c,d->a", R, Z, Y, X))

    # structural: only the sectional curvature of the radial-normal planes survives
    Gm = _metric3(cone[c, i, j], rho0)
    vol = np.sqrt(np.linalg.det(Gm))
    sec_n = (wd.K_cone[c, i, j] - 1.0) / rho0**2
    dvol = vol * (X[1] * Y[2] - X[2] * Y[1])  # volume of (d_rho, X, Y)
    cross = np.linalg.solve(Gm, vol * np.cross(Z, [1.0, 0.0, 0.0]))
    structural = sec_n * dvol * cross
    return direct, structural
