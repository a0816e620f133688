"""Linearized curvature operators, their kernels, and the kernel comparison experiment.

Operators act on the owned degrees of freedom of a ``DofMap``: a column is the
central difference of the nonlinear map along the full-grid field obtained by
prolonging one unit dof.  The inner product on dofs is the quadrature one, so
self-adjointness is measured as symmetry of ``W A``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import subspace_angles

from .errors import InvalidArgumentError, NotConvexError
from .grid import DofMap, SphereGrid, hessian_op
from .surface import det2
from .warped import MetricBase, warped_data

FD_STEP = 1e-5
BATCH = 48


@dataclass(frozen=True, eq=False)
class LinearizedOp:
    matrix: np.ndarray
    weights: np.ndarray
    label: str
    dofmap: DofMap = field(repr=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def norm(self):
        """Operator 2-norm in the weighted inner product."""
        return float(np.linalg.norm(self.symmetrized_form(), 2))

    def symmetrized_form(self):
        s = np.sqrt(self.weights)
        return s[:, None] * self.matrix / s[None, :]

    def apply(self, field):
        """Apply to a full-grid field; returns owned values."""
        return self.matrix @ self.dofmap.restrict(field)

    def symmetry_residual(self):
        WA = self.weights[:, None] * self.matrix
        return float(np.linalg.norm(WA - WA.T) / np.linalg.norm(WA))

    def pairing_residual(self, u, v):
        """``|<Au, v>_W - <u, Av>_W| / (|A| |u|_W |v|_W)`` for owned-dof vectors."""
        w = self.weights
        lhs = np.dot(w * (self.matrix @ u), v)
        rhs = np.dot(w * u, self.matrix @ v)
        scale = self.norm * np.sqrt(np.dot(w * u, u) * np.dot(w * v, v))
        return float(abs(lhs - rhs) / scale)


def fd_jacobian(fun, base, dofmap, step, batch=BATCH, order=2):
    """Dense Jacobian of ``fun`` (full field -> full field) restricted to owned dofs.

    ``order=4`` adds the doubled step and cancels the cubic term, which matters
    when ``fun`` is strongly nonlinear in a single-node perturbation.
    """
    n = dofmap.n
    A = np.empty((n, n))
    for start in range(0, n, batch):
        stop = min(start + batch, n)
        units = np.zeros((stop - start, n))
        units[np.arange(stop - start), np.arange(start, stop)] = 1.0
        dirs = dofmap.prolong(units)
        diff = lambda t: dofmap.restrict(fun(base + t * dirs)) - dofmap.restrict(fun(base - t * dirs))
        if order == 2:
            cols = diff(step) / (2 * step)
        elif order == 4:
            cols = (8 * diff(step) - diff(2 * step)) / (12 * step)
        else:
            raise InvalidArgumentError(f"difference order must be 2 or 4, got {order}")
        A[:, start:stop] = cols.T
    return A


def _sec_over_cos_map(base):
    def fun(r):
        f = base.fields(r)
        return f["sec"] / f["cos"]

    return fun


def assemble_L1(g, r, grid: SphereGrid, dofmap: DofMap | None = None, step=FD_STEP):
    """Linearization of ``r -> sec / cos(alpha)`` at fixed metric ``g``."""
    base = g if isinstance(g, MetricBase) else MetricBase(grid, g)
    warped_data(base, r)  # validates the graph condition
    dofmap = dofmap or DofMap(grid)
    r = np.asarray(r, dtype=float)
    A = fd_jacobian(_sec_over_cos_map(base), r, dofmap, step * np.max(np.abs(r)), order=4)
    return LinearizedOp(A, dofmap.weights_for(base.g), "L1", dofmap)


def support_det(grid: SphereGrid, h):
    """``det(h id + Hess h)`` on the round sphere; the reciprocal Gauss curvature by normal."""
    h = np.asarray(h, dtype=float)
    hess = hessian_op(grid, h, grid.round_metric, grid.round_christoffels)
    return det2(h[..., None, None] * np.eye(2) + hess)


def check_convex(grid, h):
    hess = hessian_op(grid, h, grid.round_metric, grid.round_christoffels)
    Binv = np.asarray(h)[..., None, None] * np.eye(2) + hess
    sym = 0.5 * (Binv + np.swapaxes(Binv, -1, -2))
    ev = np.linalg.eigvalsh(sym)[..., 0]
    live = grid.weight > 0
    if np.any(ev[live] <= 0):
        raise NotConvexError(f"h id + Hess h is not positive definite (min eigenvalue {ev[live].min():.3e})")


def assemble_L2(h, grid: SphereGrid, dofmap: DofMap | None = None, step=FD_STEP):
    """Linearization of ``h -> det(h id + Hess h)`` on the round sphere."""
    h = np.asarray(h, dtype=float)
    check_convex(grid, h)
    dofmap = dofmap or DofMap(grid)
    A = fd_jacobian(lambda f: support_det(grid, f), h, dofmap, step * np.max(np.abs(h)))
    return LinearizedOp(A, dofmap.weights, "L2", dofmap)


@dataclass(frozen=True, eq=False)
class KernelResult:
    dimension: int
    basis: np.ndarray  # (dim, n) owned-dof vectors, orthonormal in the weighted product
    singular_values: np.ndarray  # descending
    gap_ratio: float
    ambiguous: bool

    def fields(self, dofmap):
        return dofmap.prolong(self.basis)


def _fix_sign(v, tol=1e-12):
    for k in range(v.shape[0]):
        nz = np.flatnonzero(np.abs(v[k]) > tol * np.max(np.abs(v[k])))
        if nz.size and v[k, nz[0]] < 0:
            v[k] = -v[k]
    return v


def kernel(op: LinearizedOp, rank_tol=1e-6, expected=3):
    """Numerical kernel by SVD of the weight-symmetrized matrix.

    The gap ratio compares the ``expected + 1``-th smallest singular value with
    the ``expected``-th smallest one.
    """
    S = op.symmetrized_form()
    _, sig, Vt = np.linalg.svd(S)
    dim = int(np.sum(sig <= rank_tol * sig[0]))
    n = sig.size
    gap = float(sig[n - expected - 1] / max(sig[n - expected], 1e-300))
    basis = Vt[n - dim :][::-1] / np.sqrt(op.weights)[None, :] if dim else np.zeros((0, n))
    basis = _fix_sign(np.array(basis))
    ambiguous = gap < 10.0
    if ambiguous:
        warnings.warn(f"{op.label}: no clear spectral gap (ratio {gap:.2e})", RuntimeWarning, stacklevel=2)
    return KernelResult(dim, basis, sig, gap, ambiguous)


def kernel_of_size(op: LinearizedOp, k=3):
    """The ``k`` least singular directions, regardless of tolerance."""
    S = op.symmetrized_form()
    _, sig, Vt = np.linalg.svd(S)
    basis = _fix_sign(np.array(Vt[-k:][::-1] / np.sqrt(op.weights)[None, :]))
    return basis, sig


def kernel_compare(k1, k2, weights):
    """Principal angles (radians, ascending) between two dof subspaces in the weighted product."""
    k1, k2 = np.atleast_2d(k1), np.atleast_2d(k2)
    if k1.shape[1] != k2.shape[1]:
        raise InvalidArgumentError("bases live on different dof spaces")
    s = np.sqrt(weights)
    return np.sort(subspace_angles((k1 * s).T, (k2 * s).T))


def linear_fields(grid):
    """The three coordinate functions ``<e_i, x>`` on the grid."""
    return np.moveaxis(grid.x, -1, 0)


def trivial_residual(op: LinearizedOp):
    """Largest ``|A <a, x>|_inf / (|A| |<a, x>|_inf)`` over the coordinate directions."""
    grid = op.dofmap.grid
    worst = 0.0
    for f in linear_fields(grid):
        v = op.dofmap.restrict(f)
        worst = max(worst, np.max(np.abs(op.matrix @ v)) / (op.norm * np.max(np.abs(v))))
    return float(worst)


def conjecture_report(g, r0, grid: SphereGrid, dofmap: DofMap | None = None):
    """Compare L1 at ``(g, r0)`` with L2 at ``1 / r0`` under two identifications of inputs.

    Report only: nothing here is asserted.
    """
    dofmap = dofmap or DofMap(grid)
    r0 = np.asarray(r0, dtype=float)
    L1 = assemble_L1(g, r0, grid, dofmap)
    L2 = assemble_L2(1.0 / r0, grid, dofmap)
    ro = dofmap.restrict(r0)
    n1 = np.linalg.norm(L1.matrix)
    same = np.linalg.norm(L1.matrix - L2.matrix) / n1
    scaled = np.linalg.norm(L1.matrix - L2.matrix * (-1.0 / ro**2)[None, :]) / n1
    k1 = kernel(L1)
    k2 = kernel(L2)
    b1, _ = kernel_of_size(L1)
    b2, _ = kernel_of_size(L2)
    return {
        "rel_diff_identity": float(same),
        "rel_diff_reciprocal": float(scaled),
        "kernel_dim_L1": k1.dimension,
        "kernel_dim_L2": k2.dimension,
        "gap_L1": k1.gap_ratio,
        "gap_L2": k2.gap_ratio,
        "kernel_angles": kernel_compare(b1, b2, L1.weights).tolist(),
        "symmetry_L1": L1.symmetry_residual(),
        "symmetry_L2": L2.symmetry_residual(),
    }


def xi_to_rdot(geom, xi):
    """Change of the distance function under the deformation ``xi`` of a radial graph."""
    p = geom.p
    return np.einsum("...a,...a->...", np.asarray(xi), p / np.linalg.norm(p, axis=-1, keepdims=True))
