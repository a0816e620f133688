"""Command-line front end: ``rigidlab <command> --config run.json --out DIR``.

Every command writes ``report.json`` (full) and ``summary.csv`` (one row per
check) into the output directory; ``convergence`` also writes
``convergence.csv``.  Exit status is 0 when all asserted checks pass, 1 on a
failed check or numerical failure, 2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from . import continuation as cont
from . import mixed_det as md
from . import rigidity as rig
from . import s3
from . import surface as surf
from . import warped as wp
from .errors import GeometryError, InvalidArgumentError
from .grid import DofMap, SphereGrid, real_harmonics_upto
from .shapes import ellipsoid_curvature_at_normal, synth_field

log = logging.getLogger("rigidlab")

COMMANDS = ("geom", "verify", "rigidity", "conjecture", "herglotz", "solve-weyl", "solve-minkowski", "convergence")
REPORT_ONLY = {"geom", "conjecture", "convergence"}
UNIT_SPHERE = {"kind": "sphere", "radius": 1.0}

DEFAULT_TOL = {
    "closed_form": 1e-6,
    "identity": 1e-5,
    "codazzi": 1e-2,
    "sec": 1e-3,
    "he_two_route": 1e-5,
    "variation": 1e-4,
    "mixed_det": 1e-8,
    "kernel_gap": 1e3,
    "trivial": 1e-5,
    "angle": 1e-3,
    "pairing": 1e-3,
    "herglotz": 1e-5,
    "gauss_bonnet": 1e-6,
    "steiner": 1e-5,
    "tube": 1e-6,
    "swap": 1e-6,
    "recovery": 1e-4,
    "closure": 1e-8,
}


class ConfigError(Exception):
    pass


@dataclass
class Check:
    name: str
    value: float
    tolerance: float | None
    passed: bool | None
    anchor: str
    relation: str = "<="


class Report:
    def __init__(self, command, config):
        self.command = command
        self.config = config
        self.checks: list[Check] = []
        self.values: dict = {}
        self.tables: dict = {}
        self.warnings: list[str] = []
        self.error: str | None = None

    def check(self, name, value, tol, anchor, relation="<="):
        value = float(value)
        if relation == "<=":
            ok = bool(abs(value) <= tol)
        elif relation == ">=":
            ok = bool(value >= tol)
        elif relation == "==":
            ok = bool(value == tol)
        else:
            raise ValueError(relation)
        self.checks.append(Check(name, value, float(tol), ok, anchor, relation))
        return ok

    def note(self, name, value, anchor):
        """A reported quantity with no pass/fail."""
        self.checks.append(Check(name, float(value), None, None, anchor, ""))

    @property
    def passed(self):
        return all(c.passed is not False for c in self.checks)

    def as_dict(self):
        return _clean(
            {
                "command": self.command,
                "config": self.config,
                "passed": self.passed and self.error is None,
                "checks": [asdict(c) for c in self.checks],
                "values": self.values,
                "tables": self.tables,
                "warnings": self.warnings,
                "error": self.error,
            }
        )


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---- configuration -----------------------------------------------------------------


def load_schema():
    return json.loads(resources.files("rigidlab").joinpath("config.schema.json").read_text())


def load_config(path, grid_override=None):
    import jsonschema

    if path is None:
        cfg = {}
    else:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config violates schema at {where}: {exc.message}") from exc
    if grid_override is not None:
        if grid_override < 8:
            raise ConfigError("--grid must be at least 8")
        cfg.setdefault("grid", {})["N"] = grid_override
    return cfg


def _grid(cfg, N=None):
    g = cfg.get("grid", {})
    return SphereGrid(N or g.get("N", 16), g.get("order", 8))


def _tol(cfg, key):
    return cfg.get("tolerances", {}).get(key, DEFAULT_TOL[key])


def _shape(cfg, default=UNIT_SPHERE):
    return cfg.get("shape", default)


def _closed_forms(shape):
    """Area, volume, total mean curvature and HE of shapes with known values."""
    if shape["kind"] == "sphere":
        R = shape["radius"]
        return {"area": 4 * np.pi * R**2, "volume": 4 * np.pi * R**3 / 3, "total_mean_curvature": 4 * np.pi * R, "he": 8 * np.pi * R}
    if shape["kind"] == "ellipsoid":
        return {"volume": 4 * np.pi * float(np.prod(shape["axes"])) / 3}
    return {}


def _is_support_shape(shape):
    return shape["kind"] == "ellipsoid" and shape.get("mode") == "support"


def _geometry(grid, shape):
    field = synth_field(grid, shape)
    if _is_support_shape(shape):
        return surf.support_embedding(grid, field), None
    return surf.radial_embedding(grid, field), field


def _radial_field(grid, shape):
    if _is_support_shape(shape):
        raise InvalidArgumentError("this command needs a distance function, not a support function")
    r = synth_field(grid, shape)
    if np.any(r <= 0):
        raise InvalidArgumentError("distance function must be positive")
    return r


def _support_for(shape):
    """Support-function spec of the same body when it is known in closed form."""
    if shape["kind"] == "sphere":
        return shape
    if shape["kind"] == "ellipsoid":
        return {"kind": "ellipsoid", "axes": shape["axes"], "mode": "support"}
    return None


# ---- commands ----------------------------------------------------------------------


def cmd_geom(cfg, rep, rng):
    grid = _grid(cfg)
    shape = _shape(cfg)
    geom, r = _geometry(grid, shape)
    vals = {
        "area": surf.area(geom),
        "volume_support": surf.volume(geom, "support_integral"),
        "volume_wedge": surf.volume(geom, "wedge_integral"),
        "total_mean_curvature": surf.total_mean_curvature(geom),
        "total_gauss_curvature": geom.integrate(geom.K),
        "min_gauss_curvature": float(np.min(geom.K[grid.weight > 0])),
        "max_gauss_curvature": float(np.max(geom.K[grid.weight > 0])),
    }
    if r is not None:
        wd = wp.warped_data(cont.induced_metric(grid, r), r, grid)
        vals["he_boundary"] = wp.he_functional(wd, "boundary_formula")
        vals["he_definition"] = wp.he_functional(wd, "definition")
    for k, v in vals.items():
        rep.note(k, v, "surface-quantity")
    rep.values.update(vals)


def _random_smooth(grid, rng, degree=4, scale=0.1):
    Y = real_harmonics_upto(degree, grid.x)
    return scale * (Y @ rng.normal(size=Y.shape[-1])) / np.sqrt(Y.shape[-1])


def cmd_verify(cfg, rep, rng):
    grid = _grid(cfg)
    shape = _shape(cfg)

    rep.check("mixed_det_signature", float(md.signature() != (1, 1, -1, -1)), 0, "mixed-det-signature", "==")
    rep.check("mixed_det_signature_symmetric", float(md.signature(True) != (1, -1, -1)), 0, "mixed-det-signature", "==")
    A, B = rng.normal(size=(2, 2, 2))
    eps = 1e-4
    fd = (np.linalg.det(B + eps * A) - np.linalg.det(B - eps * A)) / (2 * eps)
    rep.check("det_derivative", abs(md.det_derivative(B, A) - fd) / max(abs(fd), 1.0), _tol(cfg, "mixed_det"), "det-derivative")

    geom, r = _geometry(grid, shape)
    res = surf.identity_residuals(geom)
    a = res["area"]
    rep.check("minkowski_mean", res["minkowski_mean"] / a, _tol(cfg, "identity"), "minkowski-identity-mean")
    rep.check("minkowski_area", res["minkowski_area"] / a, _tol(cfg, "identity"), "minkowski-identity-area")
    rep.check("codazzi", res["codazzi_max"], _tol(cfg, "codazzi"), "codazzi")
    v1, v2 = surf.volume(geom, "support_integral"), surf.volume(geom, "wedge_integral")
    rep.check("volume_two_route", (v1 - v2) / v1, _tol(cfg, "identity"), "volume-two-route")
    rep.check("gauss_bonnet", (geom.integrate(geom.K) - 4 * np.pi) / (4 * np.pi), _tol(cfg, "identity"), "gauss-bonnet")
    exact = _closed_forms(shape)
    got = {"area": a, "volume": v1, "total_mean_curvature": res["total_mean_curvature"]}
    for k, v in exact.items():
        if k in got:
            rep.check(f"{k}_closed_form", (got[k] - v) / v, _tol(cfg, "closed_form"), f"{k}-closed-form")

    if r is not None:
        wd = wp.warped_data(cont.induced_metric(grid, r), r, grid)
        he_b, he_d = wp.he_functional(wd, "boundary_formula"), wp.he_functional(wd, "definition")
        rep.check("he_two_route", (he_b - he_d) / he_b, _tol(cfg, "he_two_route"), "he-two-route")
        if "he" in exact:
            rep.check("he_closed_form", (he_b - exact["he"]) / exact["he"], _tol(cfg, "closed_form"), "he-closed-form")
        scale = float(np.max(np.abs(wd.K)))
        rep.check("flat_sec", np.max(np.abs(wd.sec[grid.weight > 0])) / scale, _tol(cfg, "sec"), "flat-sec-vanishes")
        rep.check("mean_curvature_parts", wp.mean_curvature_parts_residual(wd) / a, _tol(cfg, "identity"), "mean-curvature-parts")
        # variations are checked away from the flat case, where sec is of order one
        wd2 = wd.with_r(1.5 * r)
        for k in range(int(cfg.get("samples", 2))):
            rdot = wp.random_variation(grid, rng)
            fd1 = wp.he_fd(wd2, rdot)
            fd2 = wp.he_fd(wd2, rdot, deriv=2)
            f1, f2 = wp.he_ddot(wd2, rdot)
            rep.check(f"he_dot_{k}", (wp.he_dot(wd2, rdot) - fd1) / abs(fd1), _tol(cfg, "variation"), "he-first-variation")
            rep.check(f"he_ddot_a_{k}", (f1 - fd2) / abs(fd2), _tol(cfg, "variation"), "he-second-variation")
            rep.check(f"he_ddot_b_{k}", (f2 - fd2) / abs(fd2), _tol(cfg, "variation"), "he-second-variation")


def cmd_rigidity(cfg, rep, rng):
    grid = _grid(cfg)
    shape = _shape(cfg)
    r = _radial_field(grid, shape)
    dofmap = DofMap(grid)
    L1 = rig.assemble_L1(cont.induced_metric(grid, r), r, grid, dofmap)
    L2_dual = rig.assemble_L2(1.0 / r, grid, dofmap)
    ops = {"L1": L1, "L2_reciprocal": L2_dual}
    support = cfg.get("support") or _support_for(shape)
    if support is not None:
        ops["L2"] = rig.assemble_L2(synth_field(grid, support), grid, dofmap)
    kernels = {}
    for name, op in ops.items():
        k = rig.kernel(op)
        kernels[name] = k
        rep.check(f"{name}_kernel_dim", k.dimension, 3, "trivial-kernel-dimension", "==")
        rep.check(f"{name}_gap_ratio", k.gap_ratio, _tol(cfg, "kernel_gap"), "spectral-gap", ">=")
        rep.check(f"{name}_trivial", rig.trivial_residual(op), _tol(cfg, "trivial"), "trivial-fields-annihilated")
        pair = max(
            op.pairing_residual(dofmap.restrict(_random_smooth(grid, rng, 6)), dofmap.restrict(_random_smooth(grid, rng, 6)))
            for _ in range(3)
        )
        rep.check(f"{name}_self_adjoint", pair, _tol(cfg, "pairing"), "self-adjoint")
        rep.note(f"{name}_matrix_symmetry", op.symmetry_residual(), "self-adjoint-matrix-level")
        rep.values[f"{name}_smallest_singular_values"] = (k.singular_values[-5:] / k.singular_values[0]).tolist()
    b1, _ = rig.kernel_of_size(L1)
    b2, _ = rig.kernel_of_size(L2_dual)
    angles = rig.kernel_compare(b1, b2, L1.weights)
    rep.check("kernel_angle_max", float(np.max(angles)), _tol(cfg, "angle"), "kernel-equality")
    rep.values["kernel_angles"] = angles.tolist()


def cmd_conjecture(cfg, rep, rng):
    grid = _grid(cfg)
    shape = _shape(cfg)
    r = _radial_field(grid, shape)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = rig.conjecture_report(cont.induced_metric(grid, r), r, grid)
    rep.note("rel_diff_identity", out["rel_diff_identity"], "operator-equality-identity")
    rep.note("rel_diff_reciprocal", out["rel_diff_reciprocal"], "operator-equality-reciprocal")
    for i, a in enumerate(out["kernel_angles"]):
        rep.note(f"kernel_angle_{i}", a, "kernel-equality")
    rep.values.update(out)


def cmd_herglotz(cfg, rep, rng):
    grid = _grid(cfg)
    shape = _shape(cfg, {"kind": "s3_radial", "base": {"kind": "constant", "value": np.pi / 4}})
    u = synth_field(grid, shape)
    body = s3.s3_radial_body(grid, u)
    dual = s3.polar_dual_s3(body)
    h = s3.herglotz_suite(body, dual)
    rep.check("herglotz", h.herglotz / np.pi**2, _tol(cfg, "herglotz"), "herglotz-pi-squared")
    rep.check("gauss_bonnet_duality", h.gauss_bonnet / (4 * np.pi), _tol(cfg, "gauss_bonnet"), "area-plus-dual-area")
    rep.check("steiner", h.steiner / (2 * np.pi**2), _tol(cfg, "steiner"), "steiner-total-volume")
    rep.check("tube_quadrature", (h.tube_quadrature - h.tube_closed_form) / h.tube_closed_form, _tol(cfg, "tube"), "tube-volume")
    for k, v in dual.residuals.items():
        rep.check(f"dual_{k}", v, _tol(cfg, "swap"), "fundamental-form-swap")
    rep.note("mean_curvature_integral_difference", h.mean_curvature_integral - h.dual_mean_curvature_integral, "dual-total-mean-curvature")
    if np.ptp(u) == 0:
        a = float(u.flat[0])
        rep.check("volume_closed_form", (h.volume - s3.ball_volume(a)) / s3.ball_volume(a), _tol(cfg, "closed_form"), "geodesic-ball-volume")
    rep.values.update(asdict(h))


def _report_trace(rep, trace):
    rep.values["trace"] = trace.summary()
    rep.tables["trace"] = trace.steps


def cmd_solve_weyl(cfg, rep, rng):
    grid = _grid(cfg)
    shape = _shape(cfg, {"kind": "ellipsoid", "axes": [1.0, 1.0, 1.2]})
    r_true = _radial_field(grid, shape)
    R = cfg.get("R", 2.0 * float(np.max(r_true)))
    opts = cont.SolverOptions.from_dict(cfg.get("solver"))
    r, trace = cont.solve_weyl(cont.induced_metric(grid, r_true), R, grid, opts)
    fitted, b = cont.remove_origin_shift(grid, r, r_true[..., None] * grid.x)
    _report_trace(rep, trace)
    rep.values["origin_shift"] = b.tolist()
    rep.check("converged", float(trace.converged), 1.0, "continuation-converged", "==")
    rep.check("recovery_rel_err", cont.live_rel_error(grid, fitted, r), _tol(cfg, "recovery"), "distance-function-recovery")
    rep.check("steps", len(trace.steps), opts.max_steps, "continuation-budget")


def cmd_solve_minkowski(cfg, rep, rng):
    grid = _grid(cfg)
    shape = _shape(cfg, {"kind": "ellipsoid", "axes": [1.0, 1.0, 1.2], "mode": "support"})
    h_true = synth_field(grid, shape)
    if shape["kind"] == "ellipsoid":
        K = ellipsoid_curvature_at_normal(shape["axes"], grid.x)
    else:
        K = 1.0 / rig.support_det(grid, h_true)
    closure = cont.minkowski_closure_check(grid, K)
    rep.values["closure"] = closure.tolist()
    rep.check("closure", np.linalg.norm(closure) / grid.integrate(1.0 / K), _tol(cfg, "closure"), "closure-condition")
    h0 = synth_field(grid, cfg["initial"]) if "initial" in cfg else np.full(grid.shape, float(np.max(h_true)))
    opts = cont.SolverOptions.from_dict(cfg.get("solver"))
    h, trace = cont.solve_minkowski(K, h0, grid, opts)
    fitted, a = cont.remove_translation(grid, h, h_true)
    _report_trace(rep, trace)
    rep.values["translation"] = a.tolist()
    rep.check("converged", float(trace.converged), 1.0, "continuation-converged", "==")
    rep.check("recovery_rel_err", cont.live_rel_error(grid, fitted, h_true), _tol(cfg, "recovery"), "support-function-recovery")
    rep.check("steps", len(trace.steps), opts.max_steps, "continuation-budget")


def observed_orders(Ns, errors, floor=0.0):
    """Orders ``log(e_k / e_{k+1}) / log(N_{k+1} / N_k)``; None where undefined or at roundoff."""
    out = [None]
    for k in range(1, len(Ns)):
        e0, e1 = errors[k - 1], errors[k]
        if e0 is not None and e1 is not None and e0 > floor and e1 > floor:
            out.append(math.log(e0 / e1) / math.log(Ns[k] / Ns[k - 1]))
        else:
            out.append(None)
    return out


def cmd_convergence(cfg, rep, rng):
    shape = _shape(cfg)
    levels = sorted(cfg.get("levels", [12, 16, 24]))
    exact = _closed_forms(shape)
    rows = {}
    for N in levels:
        grid = _grid(cfg, N)
        geom, r = _geometry(grid, shape)
        vals = {
            "area": surf.area(geom),
            "volume": surf.volume(geom),
            "total_mean_curvature": surf.total_mean_curvature(geom),
        }
        if r is not None:
            wd = wp.warped_data(cont.induced_metric(grid, r), r, grid)
            vals["he"] = wp.he_functional(wd, "boundary_formula")
            vals["he_two_route_diff"] = vals["he"] - wp.he_functional(wd, "definition")
        rows[N] = (grid.h, vals)
    table = []
    for name in rows[levels[0]][1]:
        values = [rows[N][1][name] for N in levels]
        if name == "he_two_route_diff":
            ref = 0.0
        elif name in exact:
            ref = exact[name]
        else:
            ref = values[-1]
        errs = [abs(v - ref) for v in values]
        if name not in exact and name != "he_two_route_diff":
            errs[-1] = None
        orders = observed_orders(levels, errs, floor=1e-12 * max(abs(values[-1]), 1.0))
        for N, v, e, o in zip(levels, values, errs, orders):
            table.append({"quantity": name, "N": N, "h": rows[N][0], "value": v, "error": e, "order": o})
        if orders[-1] is not None:
            rep.note(f"{name}_order", orders[-1], "refinement-order")
    rep.tables["convergence"] = table


HANDLERS = {
    "geom": cmd_geom,
    "verify": cmd_verify,
    "rigidity": cmd_rigidity,
    "conjecture": cmd_conjecture,
    "herglotz": cmd_herglotz,
    "solve-weyl": cmd_solve_weyl,
    "solve-minkowski": cmd_solve_minkowski,
    "convergence": cmd_convergence,
}


# ---- output ------------------------------------------------------------------------


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    return "" if v is None else repr(v)


def write_outputs(rep: Report, out_dir, wall_clock):
    os.makedirs(out_dir, exist_ok=True)
    data = rep.as_dict()
    _atomic_write(os.path.join(out_dir, "report.json"), json.dumps(data, indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "value", "tolerance", "relation", "pass", "anchor"])
    for c in data["checks"]:
        w.writerow([c["name"], _fmt(c["value"]), _fmt(c["tolerance"]), c["relation"], _fmt(c["passed"]), c["anchor"]])
    _atomic_write(os.path.join(out_dir, "summary.csv"), buf.getvalue())
    if "convergence" in data["tables"]:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "N", "h", "value", "error", "order"])
        for row in data["tables"]["convergence"]:
            w.writerow([row["quantity"]] + [_fmt(row[k]) for k in ("N", "h", "value", "error", "order")])
        _atomic_write(os.path.join(out_dir, "convergence.csv"), buf.getvalue())
    # kept apart so that report.json is byte-stable across runs
    _atomic_write(os.path.join(out_dir, "timing.json"), json.dumps({"wall_clock_s": wall_clock}) + "\n")


def build_parser():
    p = argparse.ArgumentParser(prog="rigidlab", description="Numerical checks of curvature identities and rigidity on convex surfaces.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p.add_argument("--out", metavar="DIR", default="rigidlab-out", help="output directory (default: %(default)s)")
    p.add_argument("--grid", metavar="N", type=int, help="override the grid resolution")
    p.add_argument("--seed", metavar="S", type=int, default=0, help="seed for randomized sweeps")
    p.add_argument("--strict", action="store_true", help="treat warnings as failures")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(command, cfg, out_dir, seed=0, strict=False):
    """Run one command; returns the exit code and the report."""
    rep = Report(command, cfg)
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    code = 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            HANDLERS[command](cfg, rep, rng)
        except InvalidArgumentError as exc:
            rep.error = f"invalid input: {exc}"
            code = 2
        except GeometryError as exc:
            rep.error = f"{type(exc).__name__}: {exc}"
            code = 1
    rep.warnings = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    if code == 0:
        if command not in REPORT_ONLY and not rep.passed:
            code = 1
        if strict and rep.warnings:
            code = 1
    write_outputs(rep, out_dir, time.perf_counter() - start)
    return code, rep


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.grid)
    except ConfigError as exc:
        print(f"rigidlab: error: {exc}", file=sys.stderr)
        return 2
    code, rep = run(args.command, cfg, args.out, args.seed, args.strict)
    for c in rep.checks:
        status = "----" if c.passed is None else ("PASS" if c.passed else "FAIL")
        tol = "" if c.tolerance is None else f" (tol {c.relation} {c.tolerance:.1e})"
        print(f"{status} {c.name}: {c.value:.6e}{tol}")
    if rep.error:
        print(f"rigidlab: {rep.error}", file=sys.stderr)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
