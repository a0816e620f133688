import numpy as np
import pytest

from rigidlab import shapes
from rigidlab import warped as wp
from rigidlab.continuation import induced_metric
from rigidlab.errors import NotAGraphError
from rigidlab.grid import SphereGrid
from rigidlab.surface import richardson

from conftest import ELLIPSOID, live, rel


def round_data(grid, r):
    return wp.warped_data(grid.round_metric, np.broadcast_to(r, grid.shape).astype(float), grid)


def flat_data(grid, r):
    return wp.warped_data(induced_metric(grid, r), r, grid)


@pytest.fixture(scope="module")
def flat_ellipsoid24(grid24):
    return flat_data(grid24, shapes.synth_field(grid24, ELLIPSOID))


@pytest.fixture(scope="module")
def fine24():
    # pointwise curvature at the chart centres needs the higher stencil order
    return SphereGrid(24, order=12)


@pytest.fixture(scope="module")
def perturbed16(grid16):
    return round_data(grid16, 1 + 0.1 * grid16.x[..., 2])


def test_unit_sphere_is_flat(grid16):
    wd = round_data(grid16, 1.0)
    for f, v in ((wd.sin_alpha, 0.0), (wd.h, 1.0), (wd.sec, 0.0), (wd.K_cone, 1.0)):
        np.testing.assert_allclose(live(grid16, f), v, atol=1e-10)
    np.testing.assert_allclose(live(grid16, wd.B), np.broadcast_to(np.eye(2), wd.B.shape)[grid16.weight > 0], atol=1e-10)


def test_constant_radius_two(grid16):
    wd = round_data(grid16, 2.0)
    np.testing.assert_allclose(live(grid16, wd.K_cone), 4.0, atol=1e-8)
    np.testing.assert_allclose(live(grid16, wd.B), np.broadcast_to(0.5 * np.eye(2), wd.B.shape)[grid16.weight > 0], atol=1e-12)
    np.testing.assert_allclose(live(grid16, wd.sec), 0.75, atol=1e-12)
    np.testing.assert_allclose(live(grid16, wd.cos**2 * (wd.K_cone - 1) / wd.r**2), 0.75, atol=1e-8)


def test_flat_ellipsoid_sec_vanishes(fine24):
    wd = flat_data(fine24, shapes.synth_field(fine24, ELLIPSOID))
    assert np.max(np.abs(live(fine24, wd.sec))) <= 1e-5


def test_flat_sec_converges():
    errs = []
    for N in (12, 24):
        grid = SphereGrid(N)
        wd = flat_data(grid, shapes.synth_field(grid, ELLIPSOID))
        errs.append(np.max(np.abs(live(grid, wd.sec))))
    assert np.log2(errs[0] / errs[1]) >= 3.5


def test_not_a_graph(grid12):
    # |grad r| > 1 for the round metric once the slope exceeds one
    with pytest.raises(NotAGraphError) as err:
        round_data(grid12, 1 + 2.0 * grid12.x[..., 2])
    assert err.value.node is not None
    with pytest.raises(NotAGraphError):
        round_data(grid12, -1.0)


# ---- sectional curvature cross-check ----------------------------------------------


def test_cross_check_constant(grid16):
    for r in (1.0, 2.0, 0.7):
        assert np.max(np.abs(live(grid16, wp.sec_cross_check(round_data(grid16, r))))) <= 1e-8


def test_cross_check_flat(fine24):
    wd = flat_data(fine24, shapes.synth_field(fine24, ELLIPSOID))
    assert np.max(np.abs(live(fine24, wp.sec_cross_check(wd)))) <= 1e-5
    np.testing.assert_allclose(live(fine24, wd.K_cone), 1.0, atol=1e-4)


def test_cross_check_perturbed(grid24):
    wd = round_data(grid24, 1 + 0.1 * grid24.x[..., 2])
    scale = np.max(np.abs(live(grid24, wd.sec)))
    assert np.max(np.abs(live(grid24, wp.sec_cross_check(wd)))) <= 1e-4 * scale


# ---- ambient curvature tensor --------------------------------------------------------


def random_nodes(grid, rng, count):
    ok = np.argwhere(grid.weight > 0)
    return [tuple(int(v) for v in ok[i]) for i in rng.choice(len(ok), count, replace=False)]


def test_tensor_vanishes_in_flat_space(grid16, rng):
    wd = round_data(grid16, 1.0)
    for node in random_nodes(grid16, rng, 5):
        X, Y, Z = rng.normal(size=(3, 3))
        direct, structural = wp.warped_curvature_tensor(wd, node, X, Y, Z)
        assert np.max(np.abs(direct)) <= 1e-6
        assert np.max(np.abs(structural)) <= 1e-6


def test_tensor_antisymmetric(perturbed16, grid16, rng):
    node = random_nodes(grid16, rng, 1)[0]
    X, Z = rng.normal(size=(2, 3))
    direct, structural = wp.warped_curvature_tensor(perturbed16, node, X, X, Z)
    assert np.all(direct == 0) and np.all(structural == 0)


def test_tensor_routes_agree(perturbed16, grid16, rng):
    # the tensor vanishes along a circle for this r, so compare against its size over the sample
    diffs, sizes = [], []
    for node in random_nodes(grid16, rng, 20):
        X, Y, Z = rng.normal(size=(3, 3))
        direct, structural = wp.warped_curvature_tensor(perturbed16, node, X, Y, Z)
        diffs.append(np.linalg.norm(direct - structural))
        sizes.append(np.linalg.norm(structural))
    assert max(diffs) <= 1e-3 * max(sizes)
    big = np.array(sizes) > 1e-2 * max(sizes)
    assert np.all(np.array(diffs)[big] <= 1e-3 * np.array(sizes)[big])


# ---- functional ---------------------------------------------------------------------


def test_functional_on_unit_sphere(grid16):
    wd = round_data(grid16, 1.0)
    for method in ("boundary_formula", "definition"):
        assert wp.he_functional(wd, method) == pytest.approx(8 * np.pi, rel=1e-10)


def test_functional_on_radius_two(grid16):
    # K_g = 1, det B = 1/4, h = 2 against the round area form
    wd = round_data(grid16, 2.0)
    assert wp.he_functional(wd, "boundary_formula") == pytest.approx(10 * np.pi, rel=1e-10)
    assert wp.he_functional(wd, "definition") == pytest.approx(10 * np.pi, rel=1e-6)


def test_functional_routes_on_flat_ellipsoid(flat_ellipsoid24):
    he_b = wp.he_functional(flat_ellipsoid24, "boundary_formula")
    assert rel(wp.he_functional(flat_ellipsoid24, "definition"), he_b) <= 1e-5


def test_unknown_method(grid12):
    with pytest.raises(ValueError):
        wp.he_functional(round_data(grid12, 1.0), "average")


def test_first_variation_constant(grid16):
    wd = round_data(grid16, 2.0)
    rdot = np.ones(grid16.shape)
    assert wp.he_dot(wd, rdot) == pytest.approx(3 * np.pi, rel=1e-10)
    assert wp.he_fd(wd, rdot) == pytest.approx(3 * np.pi, rel=1e-5)


def test_first_variation_vanishes_when_flat(flat_ellipsoid24, grid24, rng):
    rdot = wp.random_variation(grid24, rng)
    scale = abs(wp.he_functional(flat_ellipsoid24))
    assert abs(wp.he_dot(flat_ellipsoid24, rdot)) <= 1e-5 * scale


def test_trivial_variation_of_flat_case(flat_ellipsoid24, grid24):
    rdot = grid24.x @ np.array([0.2, -0.1, 0.3])
    f1, f2 = wp.he_ddot(flat_ellipsoid24, rdot)
    scale = abs(wp.he_functional(flat_ellipsoid24))
    assert abs(f1) <= 1e-7 * scale
    assert abs(f2) <= 1e-7 * scale
    # the shape operator in g-frames does not move under a shift of origin
    at = lambda t: flat_ellipsoid24.with_r(flat_ellipsoid24.r + t * rdot)
    Bdot = richardson(lambda t: at(t).B, 1e-4)
    assert np.max(np.abs(live(grid24, Bdot))) <= 1e-5


@pytest.mark.parametrize("seed", range(3))
def test_variations_match_differences(grid16, seed):
    rng = np.random.default_rng(seed)
    base = round_data(grid16, 1.5 * (1 + 0.1 * grid16.x[..., 2]))
    rdot = wp.random_variation(grid16, rng)
    fd1 = wp.he_fd(base, rdot)
    fd2 = wp.he_fd(base, rdot, deriv=2)
    f1, f2 = wp.he_ddot(base, rdot)
    assert rel(wp.he_dot(base, rdot), fd1) <= 1e-4
    assert rel(f1, fd2) <= 1e-4
    assert rel(f2, fd2) <= 1e-4


def test_first_variation_against_definition_route(grid16, rng):
    base = round_data(grid16, 1.5 * (1 + 0.1 * grid16.x[..., 2]))
    rdot = wp.random_variation(grid16, rng)
    assert rel(wp.he_dot(base, rdot), wp.he_fd(base, rdot, method="definition")) <= 1e-4


def test_parts_identity(grid16, flat_ellipsoid24):
    assert abs(wp.mean_curvature_parts_residual(round_data(grid16, 1.0))) <= 1e-8
    assert abs(wp.mean_curvature_parts_residual(round_data(grid16, 2.0))) <= 1e-8
    assert abs(wp.mean_curvature_parts_residual(flat_ellipsoid24)) <= 1e-4 * 4 * np.pi
    wd = round_data(grid16, 1 + 0.1 * grid16.x[..., 2])
    assert abs(wp.mean_curvature_parts_residual(wd)) <= 1e-6 * 4 * np.pi
