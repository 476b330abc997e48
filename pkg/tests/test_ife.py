import io

import numpy as np
import pytest

import ife2d.ife as ife_mod
from ife2d.geometry import Circle, StraightLine
from ife2d.ife import (
    ConfigurationError,
    IFESpace,
    UnisolvenceMargin,
    build_ife_basis,
    check_unisolvence_precondition,
    dump_bases,
    eval_ife,
    grad_ife,
    interpolate,
    lambda_residual,
)
from ife2d.local_fe import PolySpaceTag, standard_shapes
from ife2d.mesh import cut_element
from ife2d.verification import (
    check_identities,
    identity_residuals,
    random_cut,
    rho_one_gap,
    sherman_morrison_gap,
)

from conftest import classification

TAGS = list(PolySpaceTag)


@pytest.mark.parametrize("tag", TAGS)
def test_rho_one_equals_standard(tag):
    gap, count = rho_one_gap(classification(tag, 40))
    assert count > 0
    assert gap <= 1e-12


def test_rho_one_has_zero_c0(q1_cls_40):
    data = next(iter(q1_cls_40.interface.values()))
    b = build_ife_basis(data, "q1", 2.0, 2.0)
    assert np.all(b.c0 == 0.0)
    assert b.sm.mu == 0.0


@pytest.mark.parametrize("tag", TAGS)
def test_sherman_morrison_matches_dense(tag, rng):
    for _ in range(50):
        data = random_cut(rng, tag)
        for betas in [(1.0, 1e4), (1e4, 1.0), (1.0, 3.0)]:
            assert sherman_morrison_gap(data, *betas) <= 1e-11


def test_dense_system_oracle(rng):
    data = random_cut(rng, PolySpaceTag.Q1)
    sm = ife_mod.build_sm_system(data, 1.0, 100.0)
    b = rng.standard_normal(len(sm.I_o))
    A = np.eye(len(sm.I_o)) + sm.mu * np.outer(sm.delta, sm.gamma)
    np.testing.assert_allclose(sm.dense_matrix(), A)
    np.testing.assert_allclose(sm.sherman_morrison(b), np.linalg.solve(A, b), atol=1e-12)


def test_concrete_q1_element_invariants(q1_cls_40, rng):
    # an element with both sides present, beta- = 1, beta+ = 10000
    data = max(q1_cls_40.interface.values(), key=lambda d: min(len(d.I_minus), len(d.I_plus)))
    basis = build_ife_basis(data, "q1", 1.0, 10000.0)
    res = identity_residuals(basis, rng)
    assert max(res.values()) <= 1e-9, res
    # continuity of the second-degree coefficient across the cut
    np.testing.assert_allclose(basis.coef_minus[:, 3], basis.coef_plus[:, 3], atol=1e-13)


def test_identity_suite(rng):
    worst, count = check_identities(rng, elements=200)
    assert count >= 190
    assert max(worst.values()) <= 1e-9, worst


def test_eval_side_selection(q1_cls_40):
    data = next(iter(q1_cls_40.interface.values()))
    basis = build_ife_basis(data, "q1", 1.0, 10.0)
    X = data.vertices.mean(axis=0)
    side = -1 if q1_cls_40.curve.level(X) <= 0 else 1
    for i in range(4):
        assert eval_ife(basis, i, X) == pytest.approx(basis.piece(i, side)(X))
        np.testing.assert_allclose(grad_ife(basis, i, X), basis.piece(i, side).grad(X))


def test_lambda_residual_standard_element():
    V = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    data = cut_element(V, StraightLine((0.3, 0.5), (0.6, 0.8)), "q1")
    basis = build_ife_basis(data, "q1", 1.0, 1.0)
    X = np.random.default_rng(3).random((30, 2))
    res = lambda_residual(basis, X)
    assert np.abs(res.value).max() <= 1e-13
    shapes = standard_shapes(V, PolySpaceTag.Q1)
    direct = sum((data.nodes[i] - X) * shapes[i](X)[:, None] for i in range(4))
    assert np.abs(direct).max() <= 1e-13


def test_q1_precondition_gate():
    check_unisolvence_precondition(PolySpaceTag.Q1, 1.0, 1e4, 0.031)
    with pytest.raises(ConfigurationError):
        check_unisolvence_precondition(PolySpaceTag.Q1, 1.0, 1e4, 0.04)


def test_rq1_precondition_depends_on_contrast():
    check_unisolvence_precondition(PolySpaceTag.RQ1, 1.0, 2.0, 0.031, lam=0.1)
    with pytest.raises(ConfigurationError):
        check_unisolvence_precondition(PolySpaceTag.RQ1, 1.0, 1e4, 0.031, lam=0.5)


def test_unisolvence_margin(q1_cls_40, monkeypatch):
    data = next(iter(q1_cls_40.interface.values()))
    monkeypatch.setattr(ife_mod, "MARGIN_TOL", 1e9)
    with pytest.raises(UnisolvenceMargin):
        build_ife_basis(data, "q1", 1.0, 10.0)


@pytest.mark.parametrize("tag", TAGS)
def test_interpolation_of_constants_and_linears(tag):
    cls = classification(tag, 10, Circle(cx=0.05, cy=-0.02, r=0.43))
    one = lambda X: np.ones(X.shape[:-1])  # noqa: E731
    space = IFESpace(cls, 1.0, 1e3, kappa_bar=None)
    u = interpolate((one, one), space)
    X = np.random.default_rng(4).uniform(-1, 1, (400, 2))
    assert np.abs(_evaluate(space, u, X) - 1.0).max() <= 1e-12
    lin = lambda X: 0.3 + 2.0 * X[..., 0] - 1.5 * X[..., 1]  # noqa: E731
    space1 = IFESpace(cls, 2.0, 2.0)
    v = interpolate((lin, lin), space1)
    assert np.abs(_evaluate(space1, v, X) - lin(X)).max() <= 1e-12


def _evaluate(space, coeffs, X):
    mesh = space.mesh
    out = np.empty(len(X))
    for k, P in enumerate(X):
        for e, vs in enumerate(mesh.elements):
            V = mesh.vertices[vs]
            if _inside(V, P):
                side = -1 if space.cls.curve.level(P) <= 0 else 1
                vals, _ = space.element_values(e, P[None], side)
                out[k] = vals[0] @ coeffs[space.dofs[e]]
                break
    return out


def _inside(V, P):
    edges = np.roll(V, -1, axis=0) - V
    rel = P - V
    return np.all(edges[:, 0] * rel[:, 1] - edges[:, 1] * rel[:, 0] >= -1e-14)


def test_dump_bases(q1_cls_40):
    space = IFESpace(q1_cls_40, 1.0, 1e4)
    buf = io.StringIO()
    dump_bases(space, buf)
    assert len(buf.getvalue().splitlines()) >= len(q1_cls_40.interface)
