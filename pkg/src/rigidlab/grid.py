"""Two-chart stereographic discretization of the unit sphere.

Fields live on the nodes of both charts.  A scalar field has shape
``(..., 2, M, M)`` with ``M = 2N + 1``; tensor fields append their component
axes, e.g. a metric is ``(..., 2, M, M, 2, 2)``.  Chart 0 projects from the
south pole (it covers the northern cap), chart 1 from the north pole.  Both
charts are oriented so that ``d1 x  cross  d2 x`` points outward.
"""

from __future__ import annotations

from functools import cached_property
from math import factorial

import numpy as np

from .errors import DegenerateMetricError, InvalidArgumentError

HALF_WIDTH = 1.5
RAMP_START = 1.0


def fd_weights(offsets, m):
    """Weights ``c`` with ``sum c_j f(x + o_j) ~ f^(m)(x)`` for unit spacing."""
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    vander = np.array([offsets**k / factorial(k) for k in range(n)])
    rhs = np.zeros(n)
    rhs[m] = 1.0
    return np.linalg.solve(vander, rhs)


def fd_matrix(M, spacing, m, order):
    """Dense differentiation matrix: centered in the interior, one-sided near the ends."""
    D = np.zeros((M, M))
    k = order // 2
    width = order + m
    for i in range(M):
        if i - k >= 0 and i + k <= M - 1:
            idx = np.arange(i - k, i + k + 1)
        else:
            start = min(max(i - width // 2, 0), M - width)
            idx = np.arange(start, start + width)
        D[i, idx] = fd_weights(idx - i, m)
    return D / spacing**m


def lagrange_weights(nodes, t):
    """Lagrange basis values at points ``t`` (shape (q,)) for stencil ``nodes`` (shape (q, p))."""
    nodes = np.asarray(nodes, dtype=float)
    q, p = nodes.shape
    w = np.ones((q, p))
    for j in range(p):
        for k in range(p):
            if k != j:
                w[:, j] *= (t - nodes[:, k]) / (nodes[:, j] - nodes[:, k])
    return w


def _smoothstep5(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def _bump(s):
    """1 inside the unit disk, quintic ramp down to 0 at HALF_WIDTH."""
    return 1.0 - _smoothstep5((s - RAMP_START) / (HALF_WIDTH - RAMP_START))


def chart_to_sphere(u1, u2, chart):
    s = u1**2 + u2**2
    q = 1.0 + s
    sign = 1.0 if chart == 0 else -1.0
    return np.stack([2 * u1 / q, sign * 2 * u2 / q, sign * (1 - s) / q], axis=-1)


def sphere_to_chart(x, chart):
    """Inverse projection; the excluded pole maps to infinity."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if chart == 0:
            return x[..., 0] / (1 + x[..., 2]), x[..., 1] / (1 + x[..., 2])
        return x[..., 0] / (1 - x[..., 2]), -x[..., 1] / (1 - x[..., 2])


def _spatial_last(f, ncomp):
    if ncomp == 0:
        return f
    return np.moveaxis(f, (-ncomp - 2, -ncomp - 1), (-2, -1))


def _spatial_back(f, ncomp):
    if ncomp == 0:
        return f
    return np.moveaxis(f, (-2, -1), (-ncomp - 2, -ncomp - 1))


class SphereGrid:
    """Node layout, stencils and quadrature for a resolution-``N`` two-chart grid."""

    def __init__(self, N: int, order: int = 8):
        if int(N) != N or N < 8:
            raise InvalidArgumentError(f"grid resolution must be an integer >= 8, got {N!r}")
        if order not in (4, 6, 8, 10, 12):
            raise InvalidArgumentError(f"finite-difference order must be an even number between 4 and 12, got {order!r}")
        self.N = int(N)
        self.order = order
        self.M = 2 * self.N + 1
        self.h = 2 * HALF_WIDTH / (2 * self.N)
        self.coord = np.linspace(-HALF_WIDTH, HALF_WIDTH, self.M)
        U1, U2 = np.meshgrid(self.coord, self.coord, indexing="ij")
        self.u = np.broadcast_to(np.stack([U1, U2], axis=-1), (2, self.M, self.M, 2)).copy()
        self.radius = np.hypot(self.u[..., 0], self.u[..., 1])
        self.x = np.stack([chart_to_sphere(U1, U2, c) for c in (0, 1)])
        self.D1 = fd_matrix(self.M, self.h, 1, order)
        self.D2 = fd_matrix(self.M, self.h, 2, order)

    @property
    def shape(self):
        return (2, self.M, self.M)

    @property
    def size(self):
        return 2 * self.M * self.M

    # ---- chart geometry -------------------------------------------------

    @cached_property
    def dx(self):
        """Exact chart Jacobian of the direction map, shape (2, M, M, 3, 2)."""
        u1, u2 = self.u[..., 0], self.u[..., 1]
        q = 1.0 + u1**2 + u2**2
        J = np.zeros(self.shape + (3, 2))
        for i, ui in enumerate((u1, u2)):
            J[..., 0, i] = 2 * (i == 0) / q - 4 * u1 * ui / q**2
            J[..., 1, i] = 2 * (i == 1) / q - 4 * u2 * ui / q**2
            J[..., 2, i] = -4 * ui / q**2
        J[1, :, :, 1:, :] *= -1.0
        return J

    @cached_property
    def ddx(self):
        """Exact second chart derivatives of the direction map, shape (2, M, M, 3, 2, 2)."""
        u = self.u
        q = (1.0 + self.radius**2)[..., None]
        eye = np.eye(2)
        d_inv = -2.0 * u / q**2  # d_i (1/q)
        dd_inv = -2.0 * eye / q[..., None] ** 2 + 8.0 * np.einsum("...i,...j->...ij", u, u) / q[..., None] ** 3
        H = np.zeros(self.shape + (3, 2, 2))
        for a in (0, 1):
            H[..., a, :, :] = (
                2.0 * (eye[a][:, None] * d_inv[..., None, :] + eye[a][None, :] * d_inv[..., :, None])
                + 2.0 * u[..., a, None, None] * dd_inv
            )
        H[..., 2, :, :] = 2.0 * dd_inv
        H[1, :, :, 1:] *= -1.0
        return H

    @cached_property
    def round_metric(self):
        q = 1.0 + self.radius**2
        g = np.zeros(self.shape + (2, 2))
        g[..., 0, 0] = g[..., 1, 1] = 4.0 / q**2
        return g

    @cached_property
    def round_christoffels(self):
        return christoffels(self, self.round_metric)

    @cached_property
    def conformal(self):
        """Conformal factor ``lam`` of the round metric in either chart."""
        return 4.0 / (1.0 + self.radius**2) ** 2

    @cached_property
    def log_conformal_grad(self):
        q = 1.0 + self.radius**2
        return -4.0 * self.u / q[..., None]

    @cached_property
    def log_conformal_hess(self):
        q = (1.0 + self.radius**2)[..., None, None]
        uu = np.einsum("...i,...j->...ij", self.u, self.u)
        return -4.0 * np.eye(2) / q + 8.0 * uu / q**2

    @cached_property
    def weight(self):
        """Partition of unity: w_0 + w_1 = 1 at every point of the sphere."""
        own = _bump(self.radius)
        with np.errstate(divide="ignore"):
            other = _bump(np.where(self.radius > 0, 1.0 / self.radius, np.inf))
        return own / (own + other)

    @cached_property
    def quad_round(self):
        """Round-sphere quadrature weights per node.

        Start from the partition-of-unity trapezoid weights and apply the smallest
        relative correction that makes them exact on spherical harmonics up to
        degree ``quad_degree``.  The trapezoid rule alone is limited by how few
        nodes resolve the partition ramp.
        """
        q0 = self.weight * self.conformal * self.h**2
        live = q0 > 0
        Y = real_harmonics_upto(self.quad_degree, self.x[live])  # (nodes, nharm)
        target = np.zeros(Y.shape[1])
        target[0] = np.sqrt(4 * np.pi)
        w = q0[live]
        gram = (Y * w[:, None]).T @ Y
        lam = np.linalg.solve(gram, target - Y.T @ w)
        q = np.zeros_like(q0)
        q[live] = w * (1.0 + Y @ lam)
        return q

    @property
    def quad_degree(self):
        return min(int(1.5 * self.N), 40)

    def density(self, g):
        """Area density of ``g`` relative to the round metric."""
        return np.sqrt(metric_det(g)) / self.conformal

    # ---- differentiation -----------------------------------------------

    def partial(self, f, i, ncomp=0):
        """Chart derivative along coordinate ``i`` of a field with ``ncomp`` trailing component axes."""
        f = _spatial_last(np.asarray(f), ncomp)
        out = self.D1 @ f if i == 0 else f @ self.D1.T
        return _spatial_back(out, ncomp)

    def partial2(self, f, i, j, ncomp=0):
        f = _spatial_last(np.asarray(f), ncomp)
        if i == j == 0:
            out = self.D2 @ f
        elif i == j == 1:
            out = f @ self.D2.T
        else:
            out = self.D1 @ f @ self.D1.T
        return _spatial_back(out, ncomp)

    def gradient(self, f, ncomp=0):
        """Chart differential, new last axis indexes the coordinate."""
        return np.stack([self.partial(f, 0, ncomp), self.partial(f, 1, ncomp)], axis=-1)

    # ---- quadrature ----------------------------------------------------

    def integrate(self, f, g=None):
        """Integral of ``f`` against the area of ``g`` (round metric by default)."""
        f = np.asarray(f)
        if g is not None:
            f = f * self.density(g)
        return np.sum(f * self.quad_round, axis=(-3, -2, -1))

    def integrate_chart(self, f, chart_density):
        """Integrate ``f`` against an area density given relative to du1 du2."""
        return self.integrate(np.asarray(f) * chart_density / self.conformal)

    # ---- chart transitions ---------------------------------------------

    def other_chart_coords(self):
        """Coordinates of every node in the opposite chart."""
        out = np.empty_like(self.u)
        for c in (0, 1):
            a, b = sphere_to_chart(self.x[c], 1 - c)
            out[c, ..., 0], out[c, ..., 1] = a, b
        return out

    @cached_property
    def dofs(self):
        return DofMap(self)

    def interpolation_rows(self, chart, pts, width=6):
        """Flat node indices and weights of tensor Lagrange interpolation in ``chart`` at ``pts`` (q, 2)."""
        pts = np.atleast_2d(pts)
        pos = (pts + HALF_WIDTH) / self.h
        start = np.clip(np.floor(pos).astype(int) - (width // 2 - 1), 0, self.M - width)
        offs = np.arange(width)
        idx1 = start[:, 0:1] + offs
        idx2 = start[:, 1:2] + offs
        w1 = lagrange_weights(idx1, pos[:, 0])
        w2 = lagrange_weights(idx2, pos[:, 1])
        flat = chart * self.M * self.M + idx1[:, :, None] * self.M + idx2[:, None, :]
        wts = w1[:, :, None] * w2[:, None, :]
        return flat.reshape(len(pts), -1), wts.reshape(len(pts), -1)

    def overlap_mismatch(self, f):
        """Max disagreement between node values and interpolation from the other chart.

        Only nodes inside the other chart's partition support are compared.
        """
        f = np.asarray(f)
        other = self.other_chart_coords()
        worst = 0.0
        flat = f.reshape(-1)
        for c in (0, 1):
            rad = np.hypot(other[c, ..., 0], other[c, ..., 1])
            mask = (rad <= HALF_WIDTH) & (self.radius[c] <= HALF_WIDTH)
            idx, wts = self.interpolation_rows(1 - c, other[c][mask])
            interp = np.sum(flat[idx] * wts, axis=1)
            worst = max(worst, np.max(np.abs(interp - f[c][mask])))
        return worst


def _angles(x):
    x = np.asarray(x, dtype=float)
    theta = np.arccos(np.clip(x[..., 2], -1.0, 1.0))
    phi = np.arctan2(x[..., 1], x[..., 0])
    return theta, phi


def _realify(y, m):
    if m == 0:
        return y.real
    # no Condon-Shortley phase: (1, 1) ~ x1 and (1, -1) ~ x2
    scale = np.sqrt(2.0) * (-1.0) ** m
    return scale * (y.real if m > 0 else y.imag)


def real_harmonics_upto(L, x):
    """Orthonormal real spherical harmonics of degree <= L at unit vectors ``x`` (..., 3).

    Columns are ordered (0,0), (1,-1), (1,0), (1,1), (2,-2), ...
    """
    from scipy.special import sph_harm_y_all

    theta, phi = _angles(x)
    Y = sph_harm_y_all(L, L, theta, phi)
    cols = [_realify(Y[l, abs(m)], m) for l in range(L + 1) for m in range(-l, l + 1)]
    return np.stack(cols, axis=-1)


def real_harmonic(l, m, x):
    from scipy.special import sph_harm_y

    if abs(m) > l or l < 0:
        raise InvalidArgumentError(f"no spherical harmonic with l={l}, m={m}")
    theta, phi = _angles(x)
    return _realify(sph_harm_y(l, abs(m), theta, phi), m)


class DofMap:
    """Single-valued degrees of freedom for fields on the two-chart grid.

    Chart 0 owns the nodes with ``|u| <= 1`` and chart 1 those with ``|u| < 1``,
    so every point of the sphere is owned exactly once.  The remaining (ghost)
    nodes take values interpolated from the other chart; since interpolation
    stencils near the equator touch ghosts of the other chart, the ghost values
    solve a sparse linear system.
    """

    def __init__(self, grid: SphereGrid, width: int | None = None):
        from scipy.sparse import csc_matrix, identity
        from scipy.sparse.linalg import splu

        self.grid = grid
        width = width or grid.order + 2
        owned = np.zeros(grid.shape, dtype=bool)
        owned[0] = grid.radius[0] <= 1.0
        owned[1] = grid.radius[1] < 1.0
        self.owned = owned
        flat_owned = owned.reshape(-1)
        self.owned_index = np.flatnonzero(flat_owned)
        self.ghost_index = np.flatnonzero(~flat_owned)
        self.n = self.owned_index.size

        other = grid.other_chart_coords()
        chart_of = self.ghost_index // (grid.M * grid.M)
        pts = other.reshape(-1, 2)[self.ghost_index]
        idx = np.empty((self.ghost_index.size, width * width), dtype=int)
        wts = np.empty(idx.shape)
        for c in (0, 1):
            sel = chart_of == c
            idx[sel], wts[sel] = grid.interpolation_rows(1 - c, pts[sel], width)
        rows = np.repeat(np.arange(self.ghost_index.size), idx.shape[1])
        cols, vals = idx.reshape(-1), wts.reshape(-1)

        # position of every node inside the owned / ghost lists
        pos = np.empty(grid.size, dtype=int)
        pos[self.owned_index] = np.arange(self.n)
        pos[self.ghost_index] = np.arange(self.ghost_index.size)
        to_owned = flat_owned[cols]
        ng = self.ghost_index.size
        self._A_go = csc_matrix((vals[to_owned], (rows[to_owned], pos[cols[to_owned]])), shape=(ng, self.n))
        A_gg = csc_matrix((vals[~to_owned], (rows[~to_owned], pos[cols[~to_owned]])), shape=(ng, ng))
        self._lu = splu((identity(ng, format="csc") - A_gg).tocsc())

    def restrict(self, f):
        f = np.asarray(f)
        return f.reshape(f.shape[:-3] + (-1,))[..., self.owned_index]

    def prolong(self, v):
        """Full node field (..., 2, M, M) from owned values (..., n)."""
        v = np.asarray(v, dtype=float)
        batch = v.shape[:-1]
        flat_v = v.reshape(-1, self.n)
        ghosts = self._lu.solve(np.ascontiguousarray((self._A_go @ flat_v.T)))
        out = np.empty((flat_v.shape[0], self.grid.size))
        out[:, self.owned_index] = flat_v
        out[:, self.ghost_index] = ghosts.T
        return out.reshape(batch + self.grid.shape)

    def pullback_weights(self, q):
        """Owned-node weights ``w`` with ``w . v == sum(q * prolong(v))``."""
        q = np.asarray(q).reshape(-1)
        qg = self._lu.solve(np.ascontiguousarray(q[self.ghost_index]), trans="T")
        return q[self.owned_index] + self._A_go.T @ qg

    @cached_property
    def weights(self):
        """Round-metric quadrature weights on the owned nodes."""
        return self.pullback_weights(self.grid.quad_round)

    def weights_for(self, g):
        return self.pullback_weights(self.grid.quad_round * self.grid.density(g))


# ---- metric calculus ----------------------------------------------------


def metric_det(g):
    return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]


def metric_inverse(g):
    det = metric_det(g)
    inv = np.empty_like(g)
    inv[..., 0, 0] = g[..., 1, 1] / det
    inv[..., 1, 1] = g[..., 0, 0] / det
    inv[..., 0, 1] = -g[..., 0, 1] / det
    inv[..., 1, 0] = -g[..., 1, 0] / det
    return inv


def check_metric(g):
    bad = (g[..., 0, 0] <= 0) | (metric_det(g) <= 0) | ~np.isfinite(metric_det(g))
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DegenerateMetricError(f"metric is not positive definite at node {node}", node=node)


def _flat_christoffels(grid, m):
    dm = np.stack([grid.partial(m, i, ncomp=2) for i in (0, 1)], axis=-3)  # [..., l, a, b] = d_l m_ab
    # first kind: G_lij = 1/2 (d_i m_jl + d_j m_il - d_l m_ij)
    first = 0.5 * (np.einsum("...ijl->...lij", dm) + np.einsum("...jil->...lij", dm) - dm)
    return np.einsum("...kl,...lij->...kij", metric_inverse(m), first)


def christoffels(grid, g):
    """Symbols ``G[..., k, i, j]`` of the Levi-Civita connection of ``g``.

    The chart conformal factor ``lam`` of the round metric is handled exactly:
    only the reduced metric ``g / lam`` is differenced.
    """
    m = g / grid.conformal[..., None, None]
    dl = grid.log_conformal_grad
    eye = np.eye(2)
    shift = 0.5 * (
        np.einsum("ki,...j->...kij", eye, dl)
        + np.einsum("kj,...i->...kij", eye, dl)
        - np.einsum("...ij,...kl,...l->...kij", m, metric_inverse(m), dl)
    )
    return _flat_christoffels(grid, m) + shift


def gradient_field(grid, f, g):
    return np.einsum("...ij,...j->...i", metric_inverse(g), grid.gradient(f))


def hessian_op(grid, f, g, gamma=None):
    """Hessian of ``f`` as a (1,1)-tensor ``H[..., k, j]`` (row = output component)."""
    if gamma is None:
        gamma = christoffels(grid, g)
    df = grid.gradient(f)
    d2 = np.empty(df.shape + (2,))
    d2[..., 0, 0] = grid.partial2(f, 0, 0)
    d2[..., 1, 1] = grid.partial2(f, 1, 1)
    d2[..., 0, 1] = d2[..., 1, 0] = grid.partial2(f, 0, 1)
    cov = d2 - np.einsum("...lij,...l->...ij", gamma, df)
    return np.einsum("...ki,...ij->...kj", metric_inverse(g), cov)


def brioschi(grid, g):
    """Gauss curvature of a chart metric by the Brioschi formula (plain differencing)."""
    E, F, G = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
    Eu, Ev = grid.partial(E, 0), grid.partial(E, 1)
    Fu, Fv = grid.partial(F, 0), grid.partial(F, 1)
    Gu, Gv = grid.partial(G, 0), grid.partial(G, 1)
    Evv = grid.partial2(E, 1, 1)
    Guu = grid.partial2(G, 0, 0)
    Fuv = grid.partial2(F, 0, 1)
    m1 = np.stack(
        [
            np.stack([-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev], axis=-1),
            np.stack([Fv - 0.5 * Gu, E, F], axis=-1),
            np.stack([0.5 * Gv, F, G], axis=-1),
        ],
        axis=-2,
    )
    zero = np.zeros_like(E)
    m2 = np.stack(
        [
            np.stack([zero, 0.5 * Ev, 0.5 * Gu], axis=-1),
            np.stack([0.5 * Ev, E, F], axis=-1),
            np.stack([0.5 * Gu, F, G], axis=-1),
        ],
        axis=-2,
    )
    return (np.linalg.det(m1) - np.linalg.det(m2)) / (E * G - F**2) ** 2


def gauss_curvature(grid, g):
    """Gauss curvature of ``g``: Brioschi on the reduced metric plus the exact conformal correction."""
    check_metric(g)
    lam = grid.conformal
    m = g / lam[..., None, None]
    dl = grid.log_conformal_grad
    gam = _flat_christoffels(grid, m)
    lap = np.einsum(
        "...ij,...ij->...", metric_inverse(m), grid.log_conformal_hess - np.einsum("...kij,...k->...ij", gam, dl)
    )
    return (brioschi(grid, m) - 0.5 * lap) / lam


def pullback_metric(grid, vec):
    """Metric induced by an R^n-valued node field ``vec`` (..., 2, M, M, n)."""
    d = grid.gradient(vec, ncomp=1)  # (..., n, 2)
    return np.einsum("...ai,...aj->...ij", d, d)
