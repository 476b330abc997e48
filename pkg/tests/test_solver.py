import math
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp

from ife2d.geometry import Circle
from ife2d.ife import IFESpace
from ife2d.problems import CircleProblem
from ife2d.solver import NoConvergence, PenaltyParams, assemble, cg_solve, solve_interface_problem

from conftest import classification


def test_cg_identity():
    b = np.array([1.0, -2.0, 3.0])
    x, its = cg_solve((sp.identity(3), b))
    np.testing.assert_allclose(x, b)
    assert its == 1


def test_cg_two_by_two():
    x, _ = cg_solve((np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0])))
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)


def test_cg_no_convergence():
    A = sp.diags(np.linspace(1, 1e6, 200))
    A = A + sp.diags(np.full(199, 0.4), 1) + sp.diags(np.full(199, 0.4), -1)
    with pytest.raises(NoConvergence):
        cg_solve((A, np.ones(200)), tol=1e-14, max_iter=3)


def test_penalty_params():
    assert PenaltyParams.default(1.0, 1e4).sigma == 1e5
    with pytest.raises(ValueError):
        PenaltyParams(0.0, -1)
    with pytest.raises(ValueError):
        PenaltyParams(1.0, 2)


@pytest.fixture(scope="module")
def q1_system():
    prob = CircleProblem(1.0, 10000.0)
    space = IFESpace(classification("q1", 40, prob.curve), 1.0, 10000.0)
    g = lambda X: space.side_values(prob.u_minus, prob.u_plus, X)  # noqa: E731
    system = assemble(space, PenaltyParams.default(1.0, 1e4), prob.f, g)
    return space, prob, system


def test_matrix_symmetric(q1_system):
    A = q1_system[2].matrix
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()


def test_cg_matches_dense_solve(q1_system):
    system = q1_system[2]
    x_cg, _ = cg_solve(system, tol=1e-13)
    x_lu = np.linalg.solve(system.matrix.toarray(), system.rhs)
    assert np.abs(x_cg - x_lu).max() <= 1e-8


@pytest.mark.parametrize("tag", ["q1", "p1", "cr", "rq1"])
def test_constants_in_kernel(tag):
    # no Dirichlet elimination: a_h(1, v) = 0 for every test function v
    cls = classification(tag, 8, Circle(cx=0.03, cy=0.01, r=0.41))
    space = IFESpace(cls, 1.0, 50.0, kappa_bar=None)
    system = assemble(space, PenaltyParams.default(1.0, 50.0), lambda X: np.zeros(X.shape[:-1]), None, keep_full=True)
    A = system.full_matrix
    assert np.abs(A @ np.ones(space.n_dofs)).max() <= 1e-10 * abs(A).max()


def sine_problem():
    s = math.pi
    u = lambda X: np.sin(s * X[..., 0]) * np.sin(s * X[..., 1])  # noqa: E731
    g = lambda X: s * np.stack(  # noqa: E731
        [np.cos(s * X[..., 0]) * np.sin(s * X[..., 1]), np.sin(s * X[..., 0]) * np.cos(s * X[..., 1])], axis=-1)
    f = lambda X: 2 * s * s * u(X)  # noqa: E731
    return SimpleNamespace(u_minus=u, u_plus=u, u=(u, u), grad=(g, g), f=f)


@pytest.mark.parametrize("tag", ["q1", "p1"])
def test_standard_fem_rates(tag):
    prob = sine_problem()
    errs = []
    for n in (8, 16, 32):
        space = IFESpace(classification(tag, n), 1.0, 1.0)
        errs.append(solve_interface_problem(space, prob).norms)
    l2 = [math.log2(a.L2 / b.L2) for a, b in zip(errs, errs[1:])]
    h1 = [math.log2(a.H1 / b.H1) for a, b in zip(errs, errs[1:])]
    assert 1.9 <= l2[-1] <= 2.1
    assert 0.95 <= h1[-1] <= 1.05


def test_interface_solution_value(q1_system):
    space, prob, _ = q1_system
    res = solve_interface_problem(space, prob)
    assert res.norms.L2 == pytest.approx(3.7917e-4, rel=0.15)
    assert res.norms.H1 == pytest.approx(1.5276e-2, rel=0.15)


def test_manufactured_source_is_negative_laplacian():
    prob = CircleProblem(1.0, 1.0)
    X = np.array([[0.3, -0.2], [0.7, 0.5]])
    h = 1e-4
    lap = sum((prob.u_minus(X + h * e) - 2 * prob.u_minus(X) + prob.u_minus(X - h * e)) / h**2
              for e in np.eye(2))
    np.testing.assert_allclose(-lap, prob.f(X), rtol=1e-6)
