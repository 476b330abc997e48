import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ife2d.geometry import (
    Circle,
    CutLine,
    FluxPointMode,
    GeometryError,
    H1Violation,
    LevelSetCurve,
    StraightLine,
    edge_intersections,
    find_flux_point,
    foot_of_perpendicular,
    gradient_jump_apply,
    jump_matrices,
    line_jump_matrices,
    make_curve,
    normal_at,
    projection_bound,
)
from ife2d.verification import check_geometry_bounds, check_gradient_jump

from conftest import classification


@pytest.mark.parametrize(
    "r, X, expected",
    [(0.5, (0.5, 0.0), (1.0, 0.0)), (0.5, (0.0, 0.5), (0.0, 1.0)), (0.3, (0.18, 0.24), (0.6, 0.8))],
)
def test_normal_at_circle(r, X, expected):
    np.testing.assert_allclose(normal_at(Circle(r=r), X), expected, atol=1e-15)


def test_normal_at_rejects_vanishing_gradient():
    curve = LevelSetCurve(lambda X: X[..., 0] ** 2 + X[..., 1] ** 2, kappa=0.0)
    with pytest.raises(GeometryError):
        normal_at(curve, (0.0, 0.0))


def test_edge_intersections_examples():
    c = Circle(r=0.5)
    (p,) = edge_intersections(c, (0, 0), (1, 0))
    np.testing.assert_allclose(p, (0.5, 0.0), atol=1e-12)
    assert edge_intersections(c, (0.6, -1), (0.6, 1)) == []
    pts = sorted(edge_intersections(c, (0.3, -1), (0.3, 1)), key=lambda q: q[1])
    np.testing.assert_allclose(pts, [(0.3, -0.4), (0.3, 0.4)], atol=1e-12)


def test_edge_intersections_too_many_crossings():
    wavy = LevelSetCurve(lambda X: X[..., 1] - 0.1 * np.sin(20 * X[..., 0]), kappa=40.0)
    with pytest.raises(H1Violation):
        edge_intersections(wavy, (-1.0, 0.0), (1.0, 0.0), samples=200)


def test_foot_of_perpendicular():
    line = CutLine.through((0.0, 0.0), (1.0, 0.0), orient=(0.0, 1.0))
    np.testing.assert_allclose(line.n_bar, (0.0, 1.0))
    np.testing.assert_allclose(foot_of_perpendicular((0.3, 0.7), line), (0.3, 0.0))
    np.testing.assert_allclose(foot_of_perpendicular((0.4, 0.0), line), (0.4, 0.0))


def test_jump_matrices_examples():
    Mm, Mp = jump_matrices((0.0, 1.0), 0.25)
    np.testing.assert_allclose(Mm, [[1, 0], [0, 0.25]])
    np.testing.assert_allclose(Mp, [[1, 0], [0, 4]])
    a, b = jump_matrices((0.6, 0.8), 1.0)
    np.testing.assert_allclose(a, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(b, np.eye(2), atol=1e-15)
    Mm, Mp = jump_matrices((0.6, 0.8), 0.5)
    assert np.abs(Mm @ Mp - np.eye(2)).max() <= 1e-14


@settings(max_examples=200, deadline=None)
@given(theta=st.floats(0.0, 2 * math.pi), log_rho=st.floats(-4.0, 0.0))
def test_jump_matrix_eigenstructure(theta, log_rho):
    rho = 10.0**log_rho
    n = np.array([math.cos(theta), math.sin(theta)])
    t = np.array([n[1], -n[0]])
    Mm, Mp = jump_matrices(n, rho)
    np.testing.assert_allclose(Mm.T, Mm)
    assert abs(np.linalg.det(Mm) - rho) <= 1e-14
    np.testing.assert_allclose(Mm @ t, t, atol=1e-15)
    np.testing.assert_allclose(Mm @ n, rho * n, atol=1e-15)
    # relative to the size of M+, the product is the identity to rounding
    assert np.abs(Mm @ Mp - np.eye(2)).max() <= 4e-16 * np.abs(Mp).max() + 1e-15


def test_line_jump_reduces_to_pointwise_matrices():
    n = np.array([0.6, 0.8])
    Bm, Bp = line_jump_matrices(n, n, 0.3)
    Mm, Mp = jump_matrices(n, 0.3)
    np.testing.assert_allclose(Bm, Mm, atol=1e-15)
    np.testing.assert_allclose(Bp, Mp, atol=1e-14)
    Bm, Bp = line_jump_matrices((0.0, 1.0), (0.1, math.sqrt(0.99)), 1.0)
    np.testing.assert_allclose(Bm, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(Bp, np.eye(2), atol=1e-15)


def test_line_jump_eigenvectors():
    nbar = np.array([0.0, 1.0])
    nF = np.array([0.1, math.sqrt(0.99)])
    rho = 0.01
    tbar = np.array([nbar[1], -nbar[0]])
    Bm, Bp = line_jump_matrices(nbar, nF, rho)
    assert np.abs(Bm.T @ tbar - tbar).max() <= 1e-12
    assert np.abs(Bm.T @ nF - rho * nF).max() <= 1e-12
    assert np.abs(Bp.T @ nF - nF / rho).max() * rho <= 1e-12
    assert np.abs(Bm @ Bp - np.eye(2)).max() <= 1e-12


def test_line_jump_rejects_tangential_cut():
    with pytest.raises(GeometryError):
        line_jump_matrices((1.0, 0.0), (0.0, 1.0), 0.5)


def test_gradient_jump_apply():
    n = np.array([0.6, 0.8])
    t = np.array([0.8, -0.6])
    Mm, _ = jump_matrices(n, 0.2)
    np.testing.assert_allclose(gradient_jump_apply(Mm, t), t, atol=1e-15)
    np.testing.assert_allclose(gradient_jump_apply(Mm, n), 0.2 * n, atol=1e-15)


@pytest.mark.parametrize("betas", [(1.0, 10000.0), (10000.0, 1.0), (3.0, 7.0)])
def test_gradient_jump_on_manufactured_solution(betas):
    from ife2d.problems import CircleProblem

    assert check_gradient_jump(CircleProblem(*betas)) <= 1e-10


def test_flux_point_on_circle():
    c = Circle(r=0.5)
    D = 0.5 * np.array([math.cos(0.3), math.sin(0.3)])
    E = 0.5 * np.array([math.cos(0.5), math.sin(0.5)])
    cut = CutLine.through(D, E, orient=D + E)
    F, nF = find_flux_point(c, cut, FluxPointMode.TANGENT_PARALLEL)
    np.testing.assert_allclose(F, 0.5 * cut.n_bar, atol=1e-12)
    assert nF @ cut.n_bar >= 1 - 1e-10
    F, nF = find_flux_point(c, cut, FluxPointMode.MIDPOINT_FOOT)
    mid = 0.5 * (D + E)
    np.testing.assert_allclose(F, 0.5 * mid / np.linalg.norm(mid), atol=1e-12)
    np.testing.assert_allclose(foot_of_perpendicular(F, cut), mid, atol=1e-12)


@pytest.mark.parametrize("mode", list(FluxPointMode))
def test_flux_point_on_straight_line(mode):
    line = StraightLine((0.1, 0.2), (0.6, 0.8))
    D = np.array([0.1, 0.2]) + 0.05 * np.array([0.8, -0.6])
    E = np.array([0.1, 0.2]) - 0.05 * np.array([0.8, -0.6])
    cut = CutLine.through(D, E, orient=(0.6, 0.8))
    F, nF = find_flux_point(line, cut, mode)
    assert abs(line.level(F)) <= 1e-14
    np.testing.assert_allclose(nF, cut.n_bar, atol=1e-14)


def test_make_curve():
    assert isinstance(make_curve("circle", r=0.2), Circle)
    with pytest.raises(ValueError):
        make_curve("spiral")


@pytest.mark.parametrize("n", [40, 80])
def test_arc_to_chord_and_normal_bounds(n):
    cls = classification("q1", n)
    ratio_p, ratio_n, count = check_geometry_bounds(cls, epsilon=0.4, samples=50)
    assert count > 0
    assert ratio_p <= 1.0
    assert ratio_n <= 1.0


def test_projection_bound_direct_distance():
    cls = classification("p1", 40)
    kappa = cls.curve.kappa
    for data in list(cls.interface.values())[:20]:
        X = cls.curve.arc(data.D, data.E).point(np.linspace(0, 1, 7))
        d = np.linalg.norm(X - foot_of_perpendicular(X, data.cut), axis=1)
        assert d.max() <= projection_bound(kappa, data.h, 0.4)
