"""Closed grammar of scalar shape specifications and their exact evaluation.

A spec is a JSON-style dict with a ``kind`` key:

- ``{"kind": "constant", "value": c}``
- ``{"kind": "sphere", "radius": R}``  (the constant field R)
- ``{"kind": "ellipsoid", "axes": [a, b, c], "mode": "radial" | "support"}``
- ``{"kind": "linear", "a": [a1, a2, a3]}``  (the field <a, x>)
- ``{"kind": "harmonics", "coeffs": [[l, m, c], ...]}``  (real orthonormal harmonics)
- ``{"kind": "sum" | "product", "terms": [spec, ...]}``
- ``{"kind": "s3_radial", "base": spec}``  (geodesic radius of a body in the 3-sphere)
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .grid import real_harmonic

KINDS = ("constant", "sphere", "ellipsoid", "linear", "harmonics", "sum", "product", "s3_radial")


def _vector(spec, key, n=3):
    v = np.asarray(spec.get(key), dtype=float)
    if v.shape != (n,):
        raise InvalidArgumentError(f"'{key}' must be a list of {n} numbers")
    return v


def evaluate(spec, x):
    """Evaluate ``spec`` at unit vectors ``x`` of shape (..., 3)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InvalidArgumentError(f"shape spec must be an object with a 'kind', got {spec!r}")
    kind = spec["kind"]
    x = np.asarray(x, dtype=float)
    if kind == "constant":
        return np.full(x.shape[:-1], float(spec["value"]))
    if kind == "sphere":
        radius = float(spec["radius"])
        if radius <= 0:
            raise InvalidArgumentError("sphere radius must be positive")
        return np.full(x.shape[:-1], radius)
    if kind == "ellipsoid":
        axes = _vector(spec, "axes")
        if np.any(axes <= 0):
            raise InvalidArgumentError("ellipsoid axes must be positive")
        mode = spec.get("mode", "radial")
        if mode == "radial":
            return 1.0 / np.sqrt(np.sum((x / axes) ** 2, axis=-1))
        if mode == "support":
            return np.sqrt(np.sum((x * axes) ** 2, axis=-1))
        raise InvalidArgumentError(f"unknown ellipsoid mode {mode!r}")
    if kind == "linear":
        return x @ _vector(spec, "a")
    if kind == "harmonics":
        out = np.zeros(x.shape[:-1])
        for entry in spec["coeffs"]:
            l, m, c = entry
            out = out + float(c) * real_harmonic(int(l), int(m), x)
        return out
    if kind in ("sum", "product"):
        terms = spec.get("terms")
        if not terms:
            raise InvalidArgumentError(f"'{kind}' needs a non-empty 'terms' list")
        vals = [evaluate(t, x) for t in terms]
        if kind == "sum":
            return sum(vals)
        out = vals[0]
        for v in vals[1:]:
            out = out * v
        return out
    if kind == "s3_radial":
        return evaluate(spec["base"], x)
    raise InvalidArgumentError(f"unknown shape kind {kind!r}; expected one of {', '.join(KINDS)}")


def synth_field(grid, spec):
    """Node field of ``spec`` on ``grid``."""
    return evaluate(spec, grid.x)


def ellipsoid_curvature_at_normal(axes, n):
    """Gauss curvature of the ellipsoid at the point with outward normal ``n``."""
    axes = np.asarray(axes, dtype=float)
    h = np.sqrt(np.sum((np.asarray(n) * axes) ** 2, axis=-1))
    return h**4 / np.prod(axes) ** 2


def ellipsoid_curvature_at_point(axes, p):
    axes = np.asarray(axes, dtype=float)
    return 1.0 / (np.prod(axes) ** 2 * np.sum(np.asarray(p) ** 2 / axes**4, axis=-1) ** 2)
