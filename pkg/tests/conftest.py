import numpy as np
import pytest

from rigidlab.grid import SphereGrid

ELLIPSOID = {"kind": "ellipsoid", "axes": [1.0, 1.0, 1.2]}
ELLIPSOID_SUPPORT = {"kind": "ellipsoid", "axes": [1.0, 1.0, 1.2], "mode": "support"}


@pytest.fixture(scope="session")
def grid12():
    return SphereGrid(12)


@pytest.fixture(scope="session")
def grid16():
    return SphereGrid(16)


@pytest.fixture(scope="session")
def grid24():
    return SphereGrid(24)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def live(grid, f):
    """Values of a node field at nodes that carry quadrature weight."""
    return np.asarray(f)[grid.weight > 0]


def rel(a, b):
    return abs(a - b) / abs(b)


@pytest.fixture(scope="session")
def ellipsoid_operators(grid16):
    """L1 at the flat ellipsoid base, L2 at its support function and at 1/r, all at N=16."""
    from rigidlab import rigidity as rig
    from rigidlab import shapes
    from rigidlab.continuation import induced_metric
    from rigidlab.grid import DofMap

    dofmap = DofMap(grid16)
    r = shapes.synth_field(grid16, ELLIPSOID)
    h = shapes.synth_field(grid16, ELLIPSOID_SUPPORT)
    return {
        "r": r,
        "L1": rig.assemble_L1(induced_metric(grid16, r), r, grid16, dofmap),
        "L2": rig.assemble_L2(h, grid16, dofmap),
        "L2_reciprocal": rig.assemble_L2(1.0 / r, grid16, dofmap),
    }


def _timed(fun):
    import time

    start = time.perf_counter()
    out = fun()
    return out, time.perf_counter() - start


@pytest.fixture(scope="session")
def weyl_ellipsoid(grid16):
    """Continuation from R=3 on the ellipsoid metric at N=16: (r_true, r, trace, seconds)."""
    from rigidlab import shapes
    from rigidlab.continuation import induced_metric, solve_weyl

    r_true = shapes.synth_field(grid16, ELLIPSOID)
    (r, trace), secs = _timed(lambda: solve_weyl(induced_metric(grid16, r_true), 3.0, grid16))
    return r_true, r, trace, secs


@pytest.fixture(scope="session")
def minkowski_ellipsoid(grid16):
    """Continuation from h = 1.3 towards the ellipsoid curvature at N=16: (h_true, h, trace, seconds)."""
    from rigidlab import shapes
    from rigidlab.continuation import solve_minkowski

    h_true = shapes.synth_field(grid16, ELLIPSOID_SUPPORT)
    K = shapes.ellipsoid_curvature_at_normal(ELLIPSOID["axes"], grid16.x)
    (h, trace), secs = _timed(lambda: solve_minkowski(K, np.full(grid16.shape, 1.3), grid16))
    return h_true, h, trace, secs
