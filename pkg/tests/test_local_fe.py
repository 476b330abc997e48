import numpy as np
import pytest

from ife2d.local_fe import LocalPoly, PolySpaceTag, eval, grad, nodes, second_degree_coeff, standard_shapes

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
ALL = [(PolySpaceTag.P1, TRIANGLE), (PolySpaceTag.CR, TRIANGLE), (PolySpaceTag.Q1, SQUARE), (PolySpaceTag.RQ1, SQUARE)]


def test_nodes():
    np.testing.assert_allclose(nodes(SQUARE, PolySpaceTag.Q1), SQUARE)
    np.testing.assert_allclose(nodes(SQUARE, PolySpaceTag.RQ1), [[0.5, 0], [1, 0.5], [0.5, 1], [0, 0.5]])
    np.testing.assert_allclose(nodes(TRIANGLE, PolySpaceTag.CR), [[0.5, 0], [1, 0.5], [0.5, 0.5]])
    with pytest.raises(ValueError):
        nodes(TRIANGLE, PolySpaceTag.Q1)


def test_q1_first_shape():
    psi = standard_shapes(SQUARE, PolySpaceTag.Q1)[0]
    X = np.random.default_rng(0).random((20, 2))
    np.testing.assert_allclose(psi(X), (1 - X[:, 0]) * (1 - X[:, 1]), atol=1e-15)


@pytest.mark.parametrize("tag, V", ALL)
@pytest.mark.parametrize("shift, h", [((0.0, 0.0), 1.0), ((-0.35, 0.7), 0.05)])
def test_kronecker_and_unity(tag, V, shift, h):
    V = np.asarray(shift) + h * V
    shapes = standard_shapes(V, tag)
    M = nodes(V, tag)
    vals = np.array([p(M) for p in shapes])
    # the oracle is a direct evaluation at the nodes
    assert np.abs(vals - np.eye(tag.dof)).max() <= 1e-13
    X = V.mean(axis=0) + 0.1 * h * np.random.default_rng(1).standard_normal((10, 2))
    assert np.abs(sum(p(X) for p in shapes) - 1).max() <= 1e-13
    assert np.abs(sum(p.grad(X) for p in shapes)).max() <= 1e-10 / h


def test_rq1_dense_oracle():
    M = nodes(SQUARE, PolySpaceTag.RQ1)
    vander = np.column_stack([np.ones(4), M[:, 0], M[:, 1], M[:, 0] ** 2 - M[:, 1] ** 2])
    coef = np.linalg.solve(vander, np.eye(4))
    shapes = standard_shapes(SQUARE, PolySpaceTag.RQ1)
    X = np.random.default_rng(2).random((7, 2))
    mono = np.column_stack([np.ones(7), X[:, 0], X[:, 1], X[:, 0] ** 2 - X[:, 1] ** 2])
    for i, p in enumerate(shapes):
        np.testing.assert_allclose(p(X), mono @ coef[:, i], atol=1e-14)


def test_local_poly_examples():
    p = LocalPoly(np.array([0.0, 0.0, 0.0, 1.0]), "xy", np.zeros(2), 1.0)
    assert eval(p, (2.0, 3.0)) == pytest.approx(6.0)
    np.testing.assert_allclose(grad(p, (2.0, 3.0)), (3.0, 2.0))
    q = LocalPoly(np.array([0.0, 0.0, 0.0, 2.5]), "x2-y2", np.zeros(2), 1.0)
    assert second_degree_coeff(q) == 2.5
    # frame change: coefficient of the physical term scales with 1/scale^2
    r = LocalPoly(np.array([0.0, 0.0, 0.0, 1.0]), "xy", np.array([1.0, 1.0]), 0.5)
    assert second_degree_coeff(r) == pytest.approx(4.0)
    np.testing.assert_allclose(r((1.5, 2.0)), 0.5 * 1.0 / 0.25)


def test_local_poly_arithmetic():
    a, b = standard_shapes(SQUARE, PolySpaceTag.Q1)[:2]
    X = np.array([[0.3, 0.8]])
    np.testing.assert_allclose((a + 2 * b)(X), a(X) + 2 * b(X))
    c = standard_shapes(SQUARE + 1, PolySpaceTag.Q1)[0]
    with pytest.raises(ValueError):
        a - c


@pytest.mark.parametrize("tag, V", ALL)
def test_shapes_independent_of_beta(tag, V):
    # standard shapes carry no coefficient dependence; equal frames give identical coefficients
    s1 = standard_shapes(V, tag)
    s2 = standard_shapes(V.copy(), tag)
    for p, q in zip(s1, s2):
        np.testing.assert_array_equal(p.coef, q.coef)


def test_parse_tag():
    assert PolySpaceTag.parse("Q1") is PolySpaceTag.Q1
    with pytest.raises(ValueError):
        PolySpaceTag.parse("q2")
