"""Newton continuation for the Weyl problem (find ``r`` from ``g``) and the Minkowski problem.

Both solvers march a homotopy parameter ``t`` from 0 to 1 and correct with a
damped Newton method on the owned degrees of freedom.  The linearized operators
annihilate the three linear functions ``<a, x>``; the Newton system is bordered
so that every update is orthogonal to them in the quadrature inner product.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import least_squares

from .errors import BadInitializationError, GeometryError, HypothesisViolatedError, NoConvergenceError
from .grid import DofMap, SphereGrid
from .rigidity import check_convex, fd_jacobian, linear_fields, support_det
from .warped import MetricBase, warped_data

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    dt: float = 0.1
    dt_min: float = 1e-4
    max_steps: int = 50
    max_newton: int = 8
    newton_tol: float = 1e-9  # relative to the initial residual
    final_tol: float = 1e-6
    fd_step: float = 1e-5
    armijo: float = 1e-4
    min_damping: float = 1.0 / 16

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ContinuationTrace:
    steps: list = field(default_factory=list)
    final: np.ndarray | None = None
    converged: bool = False
    rejected: int = 0

    def summary(self):
        return {
            "accepted_steps": len(self.steps),
            "rejected_steps": self.rejected,
            "newton_iterations": int(sum(s["iterations"] for s in self.steps)),
            "max_projection": float(max((s["projection"] for s in self.steps), default=0.0)),
            "final_residual": float(self.steps[-1]["residual"]) if self.steps else None,
            "converged": self.converged,
        }


def induced_metric(grid: SphereGrid, r):
    """Metric ``r^2 round + dr dr`` of the radial graph ``r x`` in chart components."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise HypothesisViolatedError("distance function must be positive")
    dr = grid.gradient(r)
    return r[..., None, None] ** 2 * grid.round_metric + np.einsum("...i,...j->...ij", dr, dr)


class _GaugedNewton:
    """Damped Newton on owned dofs with the trivial fields removed from the update."""

    def __init__(self, dofmap, residual, jacobian, weights, opts):
        self.dofmap = dofmap
        self.residual = residual  # full field -> owned residual
        self.jacobian = jacobian  # full field -> n x n
        self.w = weights
        self.opts = opts
        self.X = np.stack([dofmap.restrict(f) for f in linear_fields(dofmap.grid)], axis=1)
        WX = self.w[:, None] * self.X
        self.WX = WX
        self._gram = np.linalg.inv(self.X.T @ WX)

    def norm(self, F):
        return float(np.sqrt(np.dot(self.w * F, F)))

    def perp(self, F):
        """Residual with its trivial component removed (the part Newton can act on)."""
        return F - self.X @ (self._gram @ (self.WX.T @ F))

    def solve(self, v, tol):
        opts = self.opts
        field_ = self.dofmap.prolong(v)
        F = self.residual(field_)
        damping_used, proj = 1.0, 0.0
        for it in range(opts.max_newton + 1):
            if np.max(np.abs(self.perp(F))) <= tol:
                return v, F, it, damping_used, proj
            if it == opts.max_newton:
                break
            J = self.jacobian(field_)
            n = J.shape[0]
            big = np.zeros((n + 3, n + 3))
            big[:n, :n] = J
            big[:n, n:] = self.X
            big[n:, :n] = self.WX.T
            sol = lu_solve(lu_factor(big), np.concatenate([-F, np.zeros(3)]))
            # the border only fixes the gauge up to LU roundoff; finish it exactly
            dv = self.perp(sol[:n])
            leak = self.X @ (self._gram @ (self.WX.T @ dv))
            proj = max(proj, self.norm(leak) / max(self.norm(dv), 1e-300))
            f0 = self.norm(self.perp(F))
            lam = 1.0
            while True:
                try:
                    trial = self.dofmap.prolong(v + lam * dv)
                    Ft = self.residual(trial)
                    ok = np.all(np.isfinite(Ft)) and self.norm(self.perp(Ft)) <= (1 - opts.armijo * lam) * f0
                except GeometryError:
                    ok = False
                if ok:
                    break
                lam /= 2
                if lam < opts.min_damping:
                    return None, F, it + 1, lam, proj
            damping_used = min(damping_used, lam)
            v, field_, F = v + lam * dv, trial, Ft
        return None, F, opts.max_newton, damping_used, proj


def _continue(newton, v0, target_at, set_target, scale, opts, label):
    trace = ContinuationTrace()
    t, dt, v = 0.0, opts.dt, v0
    tol = opts.newton_tol * scale
    while t < 1.0:
        if len(trace.steps) >= opts.max_steps:
            raise NoConvergenceError(f"{label}: step budget of {opts.max_steps} exhausted at t={t:.4f}", trace)
        t_new = 1.0 if t + dt > 1.0 - 1e-12 else t + dt
        set_target(target_at(t_new))
        v_new, F, its, lam, proj = newton.solve(v, tol)
        if v_new is None:
            trace.rejected += 1
            dt /= 2
            log.info("%s: step to t=%.4f rejected, dt -> %.2e", label, t_new, dt)
            if dt < opts.dt_min:
                raise NoConvergenceError(f"{label}: step size underflow at t={t:.4f}", trace)
            continue
        t, v = t_new, v_new
        trace.steps.append(
            {
                "t": t,
                "iterations": its,
                "residual": float(np.max(np.abs(F))),
                "residual_perp": float(np.max(np.abs(newton.perp(F)))),
                "projection": proj,
                "damping": lam,
            }
        )
        dt = min(opts.dt, 2 * dt)
    trace.final = newton.dofmap.prolong(v)
    return trace


def solve_weyl(g, R, grid: SphereGrid, opts=None, dofmap=None):
    """Find ``r`` with ``sec(g, r) = 0`` by continuation from the constant ``R``.

    Returns ``(r, trace)``; ``r`` is determined up to the trivial fields ``<a, x>``.
    """
    opts = opts if isinstance(opts, SolverOptions) else SolverOptions.from_dict(opts)
    base = MetricBase(grid, g)
    live = grid.weight > 0
    if np.any(base.K[live] <= 0):
        raise HypothesisViolatedError(f"metric must have positive curvature (min K {base.K[live].min():.3e})")
    r0 = np.full(grid.shape, float(R))
    try:
        wd0 = warped_data(base, r0)
    except GeometryError as exc:
        raise BadInitializationError(f"R={R} does not give a valid graph: {exc}") from exc
    sec0 = wd0.sec
    if np.any(sec0[live] <= 0) or np.any(sec0[live] >= base.K[live]):
        raise BadInitializationError(f"R={R} violates 0 < sec < K at the start")
    dofmap = dofmap or DofMap(grid)
    target = {"sec": None}

    def sec_map(r):
        return base.fields(r)["sec"]

    def residual(r):
        wd = warped_data(base, r)
        return dofmap.restrict(wd.sec - target["sec"])

    def jacobian(r):
        return fd_jacobian(sec_map, r, dofmap, opts.fd_step * np.max(np.abs(r)))

    newton = _GaugedNewton(dofmap, residual, jacobian, dofmap.weights_for(base.g), opts)
    scale = float(np.max(np.abs(sec0[live])))
    trace = _continue(
        newton,
        dofmap.restrict(r0),
        lambda t: (1 - t) * sec0,
        lambda s: target.__setitem__("sec", s),
        scale,
        opts,
        "weyl",
    )
    # the discrete system lives on owned dofs; ghost values are interpolated
    final_sec = np.max(np.abs(dofmap.restrict(warped_data(base, trace.final).sec)))
    trace.converged = bool(final_sec <= opts.final_tol)
    if not trace.converged:
        warnings.warn(f"weyl: final |sec| = {final_sec:.2e} above {opts.final_tol:.1e}", RuntimeWarning, stacklevel=2)
    return trace.final, trace


def minkowski_closure_check(grid: SphereGrid, K):
    """``int (1/K) x darea`` over the round sphere; zero for the curvature of a closed convex surface."""
    K = np.asarray(K, dtype=float)
    if np.any(K <= 0):
        raise HypothesisViolatedError("curvature must be positive")
    return np.array([grid.integrate(grid.x[..., k] / K) for k in range(3)])


def solve_minkowski(K_target, h0, grid: SphereGrid, opts=None, dofmap=None, closure_tol=1e-6):
    """Find a support function with Gauss curvature ``K_target`` (indexed by normal).

    Homotopy ``G(h) = G* + (1 - t)(G(h0) - G*)`` with ``G(h) = det(h id + Hess h) = 1/K``.
    Returns ``(h, trace)``; ``h`` is determined up to translations ``<a, x>``.
    """
    opts = opts if isinstance(opts, SolverOptions) else SolverOptions.from_dict(opts)
    K_target = np.asarray(K_target, dtype=float)
    closure = minkowski_closure_check(grid, K_target)
    total = grid.integrate(1.0 / K_target)
    if np.linalg.norm(closure) > closure_tol * total:
        warnings.warn(f"closure condition violated (|c| = {np.linalg.norm(closure):.2e}); continuation may stall", RuntimeWarning, stacklevel=2)
    h0 = np.asarray(h0, dtype=float)
    check_convex(grid, h0)
    G_star = 1.0 / K_target
    G0 = support_det(grid, h0)
    dofmap = dofmap or DofMap(grid)
    target = {"G": None}

    def residual(h):
        check_convex(grid, h)
        return dofmap.restrict(support_det(grid, h) - target["G"])

    def jacobian(h):
        return fd_jacobian(lambda f: support_det(grid, f), h, dofmap, opts.fd_step * np.max(np.abs(h)))

    newton = _GaugedNewton(dofmap, residual, jacobian, dofmap.weights, opts)
    live = grid.weight > 0
    scale = float(max(np.max(np.abs((G0 - G_star)[live])), np.max(np.abs(G_star[live]))))
    trace = _continue(
        newton,
        dofmap.restrict(h0),
        lambda t: G_star + (1 - t) * (G0 - G_star),
        lambda s: target.__setitem__("G", s),
        scale,
        opts,
        "minkowski",
    )
    final = np.max(np.abs(dofmap.restrict(support_det(grid, trace.final) - G_star)))
    trace.converged = bool(final <= opts.final_tol * max(1.0, float(np.max(G_star[live]))))
    if not trace.converged:
        warnings.warn(f"minkowski: final residual {final:.2e}", RuntimeWarning, stacklevel=2)
    return trace.final, trace


# ---- gauge removal for comparisons -------------------------------------------------


def _fit_weights(grid):
    # positive partition-of-unity weights; the corrected quadrature has negative entries
    return grid.weight * grid.conformal * grid.h**2


def remove_translation(grid, h, h_ref):
    """Best ``h - <a, x>`` against ``h_ref`` in the quadrature least-squares sense; returns (h', a)."""
    X = np.moveaxis(grid.x, -1, 0).reshape(3, -1)
    w = _fit_weights(grid).reshape(-1)
    d = (np.asarray(h) - np.asarray(h_ref)).reshape(-1)
    a = np.linalg.solve((X * w) @ X.T, (X * w) @ d)
    return np.asarray(h) - np.einsum("...k,k->...", grid.x, a), a


def remove_origin_shift(grid, r, points_ref):
    """Fit ``|p_ref + b|`` to the distance function ``r``; returns (fitted distance, b).

    A rigid motion of the reference surface changes its distance function
    exactly this way, with ``b`` the moved origin in body coordinates.
    """
    r = np.asarray(r, dtype=float)
    sw = np.sqrt(_fit_weights(grid))

    def fun(b):
        return (sw * (np.linalg.norm(points_ref + b, axis=-1) - r)).reshape(-1)

    b = least_squares(fun, np.zeros(3), xtol=1e-15, ftol=1e-15, gtol=1e-15).x
    return np.linalg.norm(points_ref + b, axis=-1), b


def live_rel_error(grid, a, b):
    live = grid.weight > 0
    return float(np.max(np.abs(a - b)[live]) / np.max(np.abs(b)[live]))
