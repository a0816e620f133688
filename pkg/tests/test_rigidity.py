import warnings

import numpy as np
import pytest

from rigidlab import rigidity as rig
from rigidlab import shapes
from rigidlab.errors import InvalidArgumentError, NotAGraphError, NotConvexError
from rigidlab.grid import DofMap, SphereGrid, real_harmonics_upto
from rigidlab.surface import radial_embedding

A = np.array([0.2, -0.5, 0.3])


@pytest.fixture(scope="module")
def unit_ops(grid16):
    dofmap = DofMap(grid16)
    one = np.ones(grid16.shape)
    return rig.assemble_L1(grid16.round_metric, one, grid16, dofmap), rig.assemble_L2(one, grid16, dofmap)


@pytest.fixture(scope="module")
def unit_ops24(grid24):
    dofmap = DofMap(grid24)
    one = np.ones(grid24.shape)
    return rig.assemble_L1(grid24.round_metric, one, grid24, dofmap), rig.assemble_L2(one, grid24, dofmap)


def smooth(grid, rng, degree=6):
    Y = real_harmonics_upto(degree, grid.x)
    return Y @ rng.normal(size=Y.shape[-1]) / np.sqrt(Y.shape[-1])


def test_matrix_is_finite_and_square(unit_ops):
    for op in unit_ops:
        assert op.matrix.shape == (op.n, op.n)
        assert np.all(np.isfinite(op.matrix))
        assert np.all(op.weights > 0)


@pytest.mark.slow
def test_linear_fields_annihilated_on_unit_sphere(unit_ops24, grid24):
    for op in unit_ops24:
        assert np.max(np.abs(op.apply(grid24.x @ A))) <= 1e-6


def test_dilation_is_not_curvature_preserving(unit_ops, grid16):
    L1, L2 = unit_ops
    one = np.ones(grid16.shape)
    # sec of the radius 1 + t sphere is 1 - 1 / (1 + t)^2
    np.testing.assert_allclose(L1.apply(one), 2.0, atol=1e-4)
    np.testing.assert_allclose(L2.apply(one), 2.0, atol=1e-6)


@pytest.mark.parametrize("which", [0, 1], ids=["L1", "L2"])
def test_self_adjoint_on_smooth_fields(unit_ops, grid16, rng, which):
    op = unit_ops[which]
    dm = op.dofmap
    for _ in range(3):
        u, v = dm.restrict(smooth(grid16, rng)), dm.restrict(smooth(grid16, rng))
        assert op.pairing_residual(u, v) <= 1e-3


def test_self_adjoint_on_ellipsoid(ellipsoid_operators, grid16, rng):
    for name in ("L1", "L2", "L2_reciprocal"):
        op = ellipsoid_operators[name]
        u, v = (op.dofmap.restrict(smooth(grid16, rng)) for _ in range(2))
        assert op.pairing_residual(u, v) <= 1e-3, name


def test_matrix_symmetry_improves_with_refinement():
    res = []
    for N in (12, 16):
        grid = SphereGrid(N)
        res.append(rig.assemble_L2(np.ones(grid.shape), grid).symmetry_residual())
    assert res[1] < res[0]


@pytest.mark.xfail(strict=True, reason="grid-scale modes keep the weighted matrix asymmetry near 0.09 at N=16")
def test_matrix_level_symmetry(unit_ops):
    assert unit_ops[0].symmetry_residual() <= 1e-3


def test_kernel_of_unit_sphere(unit_ops, grid16):
    L1, L2 = unit_ops
    k1, k2 = rig.kernel(L1), rig.kernel(L2)
    assert k1.dimension == k2.dimension == 3
    lin = np.stack([L2.dofmap.restrict(f) for f in rig.linear_fields(grid16)])
    assert np.max(rig.kernel_compare(k2.basis, lin, L2.weights)) <= 1e-6
    assert np.max(rig.kernel_compare(k1.basis, k2.basis, L1.weights)) <= 1e-4


def test_ellipsoid_kernels(ellipsoid_operators):
    for name in ("L1", "L2", "L2_reciprocal"):
        k = rig.kernel(ellipsoid_operators[name])
        assert k.dimension == 3, name
        assert k.gap_ratio >= 1e3, name
        assert not k.ambiguous
        assert rig.trivial_residual(ellipsoid_operators[name]) <= 1e-5, name


def test_ellipsoid_kernels_coincide(ellipsoid_operators):
    L1, L2r = ellipsoid_operators["L1"], ellipsoid_operators["L2_reciprocal"]
    b1, _ = rig.kernel_of_size(L1)
    b2, _ = rig.kernel_of_size(L2r)
    assert np.max(rig.kernel_compare(b1, b2, L1.weights)) <= 1e-3


def test_mismatched_bases_are_detected(ellipsoid_operators, grid16):
    # L1 at a base that is not flat has no reason to share the translation kernel
    r = ellipsoid_operators["r"]
    dofmap = ellipsoid_operators["L1"].dofmap
    wrong = rig.assemble_L1(grid16.round_metric, r, grid16, dofmap)
    b_wrong, _ = rig.kernel_of_size(wrong)
    b2, _ = rig.kernel_of_size(ellipsoid_operators["L2_reciprocal"])
    assert np.max(rig.kernel_compare(b_wrong, b2, wrong.weights)) >= 1e-2
    lin = np.stack([dofmap.restrict(f) for f in rig.linear_fields(grid16)])
    quad = np.stack([dofmap.restrict(x * y) for x, y in [(0, 1), (1, 2), (0, 2)] for x, y in [(grid16.x[..., x], grid16.x[..., y])]])
    assert np.min(rig.kernel_compare(lin, quad, wrong.weights)) >= 1.0


def test_compare_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        rig.kernel_compare(np.ones((3, 5)), np.ones((3, 6)), np.ones(5))


def test_ambiguous_gap_warns(grid12):
    op = rig.LinearizedOp(np.eye(10), np.ones(10), "identity", DofMap(grid12))
    with pytest.warns(RuntimeWarning):
        k = rig.kernel(op)
    assert k.ambiguous and k.dimension == 0


def test_kernel_basis_signs_fixed(ellipsoid_operators):
    k = rig.kernel(ellipsoid_operators["L2"])
    for v in k.basis:
        first = v[np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())[0]]
        assert first > 0


def test_nonconvex_support_rejected(grid12):
    with pytest.raises(NotConvexError):
        rig.assemble_L2(-np.ones(grid12.shape), grid12)


def test_not_a_graph_rejected(grid12):
    with pytest.raises(NotAGraphError):
        rig.assemble_L1(grid12.round_metric, 1 + 2.0 * grid12.x[..., 2], grid12)


def test_bad_difference_order(grid12):
    with pytest.raises(InvalidArgumentError):
        rig.fd_jacobian(lambda f: f, np.ones(grid12.shape), DofMap(grid12), 1e-5, order=3)


def test_support_det_of_sphere(grid12):
    np.testing.assert_allclose(rig.support_det(grid12, np.full(grid12.shape, 2.0)), 4.0, atol=1e-10)


def test_deformation_to_radial_rate(unit_ops, grid16):
    L1 = unit_ops[0]
    geom = radial_embedding(grid16, np.ones(grid16.shape))
    b = np.array([0.1, 0.3, -0.2])
    s = rig.xi_to_rdot(geom, np.broadcast_to(b, geom.p.shape))
    np.testing.assert_allclose(s, grid16.x @ b, atol=1e-14)
    assert np.max(np.abs(L1.apply(s))) <= 1e-5
    np.testing.assert_allclose(rig.xi_to_rdot(geom, np.cross(A, geom.p)), 0.0, atol=1e-15)
    s = rig.xi_to_rdot(geom, geom.p)
    np.testing.assert_allclose(s, 1.0, atol=1e-14)
    assert np.max(np.abs(L1.apply(s))) >= 1.0


def test_conjecture_report_fields(grid12):
    r = shapes.synth_field(grid12, {"kind": "ellipsoid", "axes": [1.0, 1.0, 1.2]})
    from rigidlab.continuation import induced_metric

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = rig.conjecture_report(induced_metric(grid12, r), r, grid12)
    for key in ("rel_diff_identity", "rel_diff_reciprocal", "kernel_angles", "symmetry_L1", "symmetry_L2"):
        assert key in out
    assert np.all(np.isfinite(out["kernel_angles"]))
    assert out["rel_diff_identity"] >= 0 and out["rel_diff_reciprocal"] >= 0
