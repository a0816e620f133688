import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigidlab import shapes
from rigidlab import surface as S
from rigidlab.errors import InvalidArgumentError, NotConvexError, NotIsometricError, OriginNotInsideError
from rigidlab.grid import SphereGrid

from conftest import ELLIPSOID, ELLIPSOID_SUPPORT, live, rel

A = np.array([0.3, -0.2, 0.5])
B = np.array([0.1, 0.4, -0.3])


def sphere(grid, radius=1.0):
    return S.radial_embedding(grid, np.full(grid.shape, radius))


def ellipsoid(grid):
    return S.radial_embedding(grid, shapes.synth_field(grid, ELLIPSOID))


def const(geom, v):
    return np.broadcast_to(v, geom.p.shape).copy()


# ---- embeddings --------------------------------------------------------------


def test_unit_sphere_fields(grid16):
    g = sphere(grid16)
    for f in (g.K, g.H, g.h):
        np.testing.assert_allclose(live(grid16, f), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(g.nu, axis=-1), 1.0, atol=1e-12)


def test_radius_two_sphere(grid16):
    g = sphere(grid16, 2.0)
    np.testing.assert_allclose(live(grid16, g.K), 0.25, atol=1e-12)
    np.testing.assert_allclose(live(grid16, g.h), 2.0, atol=1e-12)
    assert S.volume(g) == pytest.approx(32 * np.pi / 3, rel=1e-10)
    assert S.total_mean_curvature(g) == pytest.approx(8 * np.pi, rel=1e-10)


def test_ellipsoid_pole_curvature(grid24):
    g = ellipsoid(grid24)
    pole = np.argmax(g.p[..., 2])
    assert g.K.reshape(-1)[pole] == pytest.approx(1.44, rel=1e-4)


def test_invariants_on_ellipsoid(grid16):
    g = ellipsoid(grid16)
    np.testing.assert_allclose(np.linalg.norm(g.nu, axis=-1), 1.0, atol=1e-12)
    # II is symmetric, and B is self-adjoint with respect to I
    IB = g.I @ g.B
    assert np.max(np.abs(IB - np.swapaxes(IB, -1, -2))) <= 1e-10 * np.max(np.abs(IB))
    np.testing.assert_allclose(g.K, np.linalg.det(g.B), atol=1e-12)
    np.testing.assert_allclose(g.H, 0.5 * np.trace(g.B, axis1=-2, axis2=-1), atol=1e-12)
    assert live(grid16, g.h).min() > 0 and live(grid16, g.K).min() > 0


def test_nonpositive_radius_rejected(grid12):
    r = np.ones(grid12.shape)
    r[0, 3, 3] = 0.0
    with pytest.raises(InvalidArgumentError):
        S.radial_embedding(grid12, r)


def test_support_unit_sphere(grid16):
    g = S.support_embedding(grid16, np.ones(grid16.shape))
    np.testing.assert_allclose(live(grid16, g.B), np.broadcast_to(np.eye(2), g.B.shape)[grid16.weight > 0], atol=1e-10)


def test_support_ellipsoid_lies_on_ellipsoid(grid16):
    g = S.support_embedding(grid16, shapes.synth_field(grid16, ELLIPSOID_SUPPORT))
    q = g.p
    level = q[..., 0] ** 2 + q[..., 1] ** 2 + (q[..., 2] / 1.2) ** 2
    assert np.max(np.abs(live(grid16, level) - 1)) <= 1e-6


def test_support_of_translated_sphere(grid24):
    g = S.support_embedding(grid24, 1 + 0.1 * grid24.x[..., 2])
    np.testing.assert_allclose(live(grid24, g.K), 1.0, atol=1e-6)
    np.testing.assert_allclose(live(grid24, g.p), live(grid24, grid24.x + [0, 0, 0.1]), atol=1e-6)


def test_support_not_convex(grid12):
    with pytest.raises(NotConvexError):
        S.support_embedding(grid12, -np.ones(grid12.shape))


# ---- integrals ------------------------------------------------------------------


def test_unit_sphere_integrals(grid16):
    g = sphere(grid16)
    assert S.volume(g) == pytest.approx(4 * np.pi / 3, rel=1e-10)
    assert S.area(g) == pytest.approx(4 * np.pi, rel=1e-10)
    assert S.total_mean_curvature(g) == pytest.approx(4 * np.pi, rel=1e-10)


def test_ellipsoid_volume(grid16):
    g = ellipsoid(grid16)
    assert S.volume(g) == pytest.approx(4 * np.pi * 1.2 / 3, rel=1e-8)


def test_origin_outside(grid12):
    g = sphere(grid12)
    moved = S.from_positions(grid12, g.p + [0.0, 0.0, 2.0])
    with pytest.raises(OriginNotInsideError):
        S.volume(moved)


def test_unknown_volume_method(grid12):
    with pytest.raises(InvalidArgumentError):
        S.volume(sphere(grid12), "monte_carlo")


@given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(0.8, 1.5))
@settings(max_examples=8, deadline=None)
def test_volume_routes_agree(c1, c2, scale):
    g16 = SphereGrid(16)
    x = g16.x
    r = scale * (1 + c1 * x[..., 0] * x[..., 2] + c2 * x[..., 1] ** 2)
    g = S.radial_embedding(g16, r)
    v1, v2 = S.volume(g, "support_integral"), S.volume(g, "wedge_integral")
    assert abs(v1 - v2) <= 1e-8 * v1


def test_identities_unit_sphere(grid16):
    res = S.identity_residuals(sphere(grid16))
    for k in ("minkowski_mean", "minkowski_area", "codazzi_max"):
        assert abs(res[k]) <= 1e-8


@pytest.mark.parametrize(
    "field, N, tol",
    [
        (lambda x: shapes.evaluate(ELLIPSOID, x), 24, 1e-5),
        (lambda x: 1 + 0.05 * (x[..., 0] * x[..., 1] + x[..., 2] ** 2), 16, 1e-4),
    ],
    ids=["ellipsoid", "perturbed"],
)
def test_integral_identities(field, N, tol):
    grid = SphereGrid(N)
    res = S.identity_residuals(S.radial_embedding(grid, field(grid.x)))
    assert abs(res["minkowski_mean"]) <= tol * res["area"]
    assert abs(res["minkowski_area"]) <= tol * res["area"]


def test_codazzi_perturbed_sphere(grid16):
    x = grid16.x
    g = S.radial_embedding(grid16, 1 + 0.05 * (x[..., 0] * x[..., 1] + x[..., 2] ** 2))
    assert S.identity_residuals(g)["codazzi_max"] <= 1e-4


def test_codazzi_converges_on_ellipsoid():
    errs = [S.identity_residuals(ellipsoid(SphereGrid(N)))["codazzi_max"] for N in (12, 24)]
    assert np.log2(errs[0] / errs[1]) >= 3.5


@pytest.mark.xfail(strict=True, reason="pointwise Codazzi residual is 1.8e-4 at N=24; third derivatives near the chart centres")
def test_codazzi_ellipsoid_pointwise(grid24):
    assert S.identity_residuals(ellipsoid(grid24))["codazzi_max"] <= 1e-5


# ---- deformations ---------------------------------------------------------------


@pytest.mark.parametrize("make", [sphere, ellipsoid], ids=["sphere", "ellipsoid"])
def test_translation_and_rotation_flows(grid16, make):
    g = make(grid16)
    f = S.deformation_flow(g, const(g, B))
    for arr in (f.gdot, f.Bdot, f.Kdot):
        assert np.max(np.abs(live(grid16, arr))) <= 1e-8
    f = S.deformation_flow(g, np.cross(A, g.p))
    assert np.max(np.abs(live(grid16, f.gdot))) <= 1e-9
    assert np.max(np.abs(live(grid16, f.Kdot))) <= 1e-8
    # Bdot is self-adjoint for I when the flow is isometric
    IB = g.I @ f.Bdot
    assert np.max(np.abs(live(grid16, IB - np.swapaxes(IB, -1, -2)))) <= 1e-8


def test_dilation_curvature_rate(grid24):
    g = sphere(grid24)
    f = S.deformation_flow(g, g.p)
    np.testing.assert_allclose(live(grid24, f.Kdot), -2.0, atol=1e-6)


@pytest.mark.parametrize("k", [lambda x: x[..., 2] ** 2, lambda x: x[..., 0] * x[..., 1]], ids=["x3sq", "x1x2"])
def test_gauss_map_preserving_curvature_rate(k):
    errs = []
    for N in (12, 24):
        grid = SphereGrid(N)
        g = sphere(grid)
        eta = S.support_flow_field(grid, k(grid.x))
        C, _, _ = S.tangent_derivative(g, eta)
        f = S.deformation_flow(g, eta)
        errs.append(np.max(np.abs(live(grid, f.Kdot + g.K * np.trace(C, axis1=-2, axis2=-1)))))
    assert errs[1] <= 1e-4
    assert np.log2(errs[0] / errs[1]) >= 3.5


@pytest.mark.parametrize("make", [sphere, ellipsoid], ids=["sphere", "ellipsoid"])
def test_killing_field_rotation_translation(grid16, make):
    g = make(grid16)
    rt = S.rotation_translation_fields(g, np.cross(A, g.p) + B)
    np.testing.assert_allclose(live(grid16, rt.eta), np.broadcast_to(A, rt.eta.shape)[grid16.weight > 0], atol=1e-9)
    np.testing.assert_allclose(live(grid16, rt.tau), np.broadcast_to(B, rt.tau.shape)[grid16.weight > 0], atol=1e-9)
    for name, v in rt.residuals.items():
        assert v <= 1e-9, name


def test_translation_has_no_rotation(grid16):
    g = ellipsoid(grid16)
    rt = S.rotation_translation_fields(g, const(g, B))
    assert np.max(np.abs(live(grid16, rt.eta))) <= 1e-12
    np.testing.assert_allclose(live(grid16, rt.tau), np.broadcast_to(B, rt.tau.shape)[grid16.weight > 0], atol=1e-12)


def test_rotation_field_not_isometric(grid12):
    g = sphere(grid12)
    with pytest.raises(NotIsometricError):
        S.rotation_translation_fields(g, g.p)


# ---- volume variations ------------------------------------------------------------


def test_blaschke_of_killing_fields(grid16):
    g = ellipsoid(grid16)
    scale = np.max(live(grid16, g.h)) * g.diameter**2
    assert abs(S.blaschke_integral(g, const(g, A))) <= 1e-14 * scale
    eta = S.rotation_translation_fields(g, np.cross(A, g.p) + B).eta
    assert abs(S.blaschke_integral(g, eta)) <= 1e-8 * scale


def test_dilation_volume_rate(grid16):
    vd = S.vol_derivatives(sphere(grid16), grid16.x)
    assert vd["vdot"][0] == pytest.approx(4 * np.pi, rel=1e-10)
    assert vd["vdot"][1] == pytest.approx(4 * np.pi, rel=1e-6)


def test_constant_field_volume_rates(grid16):
    g = ellipsoid(grid16)
    vd = S.vol_derivatives(g, const(g, A))
    for v in vd["vdot"] + vd["vddot"]:
        assert abs(v) <= 1e-10


@pytest.mark.parametrize(
    "k", [lambda x: x[..., 2], lambda x: x[..., 0] * x[..., 1], lambda x: x[..., 2] ** 2], ids=["x3", "x1x2", "x3sq"]
)
def test_volume_rates_against_differences(grid24, k):
    g = sphere(grid24)
    kk = k(grid24.x)
    eta = S.support_flow_field(grid24, kk)
    vd = S.vol_derivatives(g, eta)
    fd1 = S.richardson(lambda t: S.volume_along(g, eta, t), 1e-3)
    fd2 = S.richardson(lambda t: S.volume_along(g, eta, t), 1e-3, deriv=2)
    scale = 4 * np.pi / 3
    assert abs(vd["vdot"][0] - fd1) <= 1e-5 * max(abs(fd1), scale)
    assert abs(vd["vdot"][0] - grid24.integrate(kk)) <= 1e-10 * scale
    assert abs(vd["vddot"][0] - fd2) <= 1e-4 * max(abs(fd2), scale)
    assert abs(S.blaschke_integral(g, eta) - fd2) <= 1e-4 * max(abs(fd2), scale)


# ---- polar duals and the wreath -----------------------------------------------


def test_sphere_duals(grid16):
    d = S.polar_dual_r3(sphere(grid16))
    np.testing.assert_allclose(live(grid16, d.p), live(grid16, grid16.x), atol=1e-12)
    d = S.polar_dual_r3(sphere(grid16, 2.0))
    np.testing.assert_allclose(np.linalg.norm(live(grid16, d.p), axis=-1), 0.5, atol=1e-12)


def test_ellipsoid_dual_and_double_dual(grid16):
    g = ellipsoid(grid16)
    d = S.polar_dual_r3(g)
    q = d.p
    level = q[..., 0] ** 2 + q[..., 1] ** 2 + (1.2 * q[..., 2]) ** 2
    assert np.max(np.abs(live(grid16, level) - 1)) <= 1e-8
    dd = S.polar_dual_r3(d)
    assert np.max(np.abs(live(grid16, dd.p - g.p))) <= 1e-8 * g.diameter


def test_wreath_of_killing_field(grid16):
    g = sphere(grid16)
    w = S.wreath_step(g, np.cross(A, g.p) + B)
    expect = np.cross(B, grid16.x) - A
    np.testing.assert_allclose(live(grid16, w.zeta), live(grid16, expect), atol=1e-8)
    for name in ("zeta_isometric", "psi_dtau_deta", "dzeta_tau_dpsi", "dtau_p_deta"):
        assert w.residuals[name] <= 1e-8, name
    assert len(w.flagged_nodes) == 0


def test_wreath_of_translation(grid16):
    g = ellipsoid(grid16)
    w = S.wreath_step(g, const(g, B))
    np.testing.assert_allclose(live(grid16, w.zeta), live(grid16, np.cross(B, w.psi)), atol=1e-12)
    assert w.residuals["zeta_isometric"] <= 1e-8
    w = S.wreath_step(g, np.zeros_like(g.p))
    assert np.all(w.zeta == 0)
