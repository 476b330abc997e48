"""Symmetric partially penalised IFE discretisation and a Jacobi-preconditioned CG solver.

Bilinear form (edge sums over interface edges only, ``n_e`` pointing from the first to
the second neighbour of the edge)::

    a(u, v) = sum_T int_T beta grad u . grad v
              - sum_e int_e {beta grad u . n_e}[v]
              + eps * sum_e int_e {beta grad v . n_e}[u]
              + sum_e sigma/|e| int_e [u][v]
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .ife import IFESpace, boundary_dofs
from .local_fe import ElementKind, monomial_grads, monomials, shape_coefficients
from .quadrature import DEFAULT_DEGREE, curved_subelements, gauss_1d, reference_rule

EDGE_POINTS = 5


class NoConvergence(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"CG stopped after {iterations} iterations with relative residual {residual:.3e}")


@dataclass(frozen=True)
class PenaltyParams:
    sigma: float
    epsilon: int = -1

    def __post_init__(self):
        if self.epsilon not in (-1, 0, 1):
            raise ValueError("epsilon_flag must be -1, 0 or 1")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.epsilon == -1 and self.sigma <= 0:
            raise ValueError("the symmetric scheme needs sigma > 0")

    @classmethod
    def default(cls, beta_minus: float, beta_plus: float) -> "PenaltyParams":
        return cls(10.0 * max(beta_minus, beta_plus), -1)


@dataclass(eq=False)
class SparseSystem:
    matrix: sp.csr_matrix  # free-dof block
    rhs: np.ndarray
    free: np.ndarray  # global dof ids of the unknowns
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_dofs: int
    full_matrix: sp.csr_matrix | None = None

    @property
    def indptr(self):
        return self.matrix.indptr

    @property
    def indices(self):
        return self.matrix.indices

    @property
    def data(self):
        return self.matrix.data

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        x = np.empty(self.n_dofs)
        x[self.free] = x_free
        x[self.fixed] = self.fixed_values
        return x


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, dofs_r, dofs_c, block):
        self.rows.append(np.repeat(dofs_r, len(dofs_c)))
        self.cols.append(np.tile(dofs_c, len(dofs_r)))
        self.vals.append(np.ravel(block))

    def add_batch(self, dofs, blocks):
        # dofs (m, k), blocks (m, k, k)
        k = dofs.shape[1]
        self.rows.append(np.repeat(dofs, k, axis=1).ravel())
        self.cols.append(np.tile(dofs, (1, k)).ravel())
        self.vals.append(blocks.ravel())

    def matrix(self, n):
        if not self.rows:
            return sp.csr_matrix((n, n))
        r = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        v = np.concatenate(self.vals)
        return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def _edge_rule(A, B, cuts):
    """Gauss points on AB split at the interface crossings; returns points, weights, piece ids."""
    ts = sorted(float(np.dot(P - A, B - A) / np.dot(B - A, B - A)) for P in cuts)
    knots = [0.0] + [t for t in ts if 0.0 < t < 1.0] + [1.0]
    g = gauss_1d(EDGE_POINTS)
    length = float(np.linalg.norm(B - A))
    pts, wts, mids = [], [], []
    for a, b in zip(knots[:-1], knots[1:]):
        if b - a <= 1e-15:
            continue
        t = a + (b - a) * g.points
        pts.append(A + t[:, None] * (B - A))
        wts.append((b - a) * length * g.weights)
        mids.append(np.broadcast_to(A + 0.5 * (a + b) * (B - A), (len(t), 2)))
    return np.concatenate(pts), np.concatenate(wts), np.concatenate(mids)


def assemble(space: IFESpace, penalty: PenaltyParams, f: tuple[Callable, Callable] | Callable,
             g: Callable | None = None, degree: int = DEFAULT_DEGREE, keep_full: bool = False) -> SparseSystem:
    """Assemble the SPP-IFE system; ``g`` gives Dirichlet values at boundary nodes (None: no elimination)."""
    mesh = space.mesh
    cls = space.cls
    tag = space.tag
    if isinstance(f, tuple):
        f_minus, f_plus = f
    else:
        f_minus = f_plus = f
    missing = [e for e in cls.interface if e not in space.bases]
    if missing:
        raise ValueError(f"no IFE basis for interface elements {missing[:5]}")

    n = space.n_dofs
    trip = _Triplets()
    load = np.zeros(n)
    dofs = space.dofs

    # non-interface elements: one local stiffness per element class
    triangular = mesh.kind is ElementKind.TRIANGULAR
    regular = np.nonzero(cls.side != 0)[0]
    for c in ((0, 1) if triangular else (0,)):
        xi, W = reference_rule(mesh, c, degree)
        psi, _, scale = shape_coefficients(mesh.element_vertices(c), tag)
        phi = monomials(tag.quad, xi) @ psi.T  # (q, k)
        dphi = np.einsum("qmd,km->qkd", monomial_grads(tag.quad, xi), psi) / scale
        K = np.einsum("q,qid,qjd->ij", W, dphi, dphi)
        elems = regular[regular % 2 == c] if triangular else regular
        for side, fs in ((-1, f_minus), (1, f_plus)):
            es = elems[cls.side[elems] == side]
            if len(es) == 0:
                continue
            beta = space.beta_minus if side < 0 else space.beta_plus
            trip.add_batch(dofs[es], np.broadcast_to(beta * K, (len(es),) + K.shape))
            origin = mesh.vertices[mesh.elements[es, 0]]
            X = origin[:, None, :] + scale * xi[None]
            F = fs(X)  # (m, q)
            np.add.at(load, dofs[es], (F * W) @ phi)

    # interface elements
    for e, basis in space.bases.items():
        K = np.zeros((basis.dof, basis.dof))
        b = np.zeros(basis.dof)
        for reg in curved_subelements(basis.data, degree):
            X, W = reg.quadrature(degree)
            phi = basis.values(X, reg.side)
            dphi = basis.grads(X, reg.side)
            beta = space.beta_minus if reg.side < 0 else space.beta_plus
            K += beta * np.einsum("q,qid,qjd->ij", W, dphi, dphi)
            fs = f_minus if reg.side < 0 else f_plus
            b += (fs(X) * W) @ phi
        trip.add(dofs[e], dofs[e], K)
        np.add.at(load, dofs[e], b)

    # interface edges
    for edge, cuts in cls.edge_cuts.items():
        k1, k2 = mesh.edge_elements[edge]
        if k2 < 0:
            continue
        A, B = mesh.vertices[mesh.edges[edge]]
        X, W, mids = _edge_rule(A, B, cuts)
        side = np.where(cls.curve.level(mids) <= 0.0, -1, 1)
        beta = space.beta(side)
        length = float(np.linalg.norm(B - A))
        # normal from k1 to k2
        tvec = (B - A) / length
        normal = np.array([tvec[1], -tvec[0]])
        c1 = mesh.element_vertices(k1).mean(axis=0)
        if float(normal @ (A - c1)) < 0.0:
            normal = -normal
        v1, g1 = space.element_values(int(k1), X, side)
        v2, g2 = space.element_values(int(k2), X, side)
        jump = np.concatenate([v1, -v2], axis=1)  # (q, 2k)
        flux = 0.5 * beta[:, None] * np.concatenate([g1 @ normal, g2 @ normal], axis=1)
        # entry (row = test b, col = trial a)
        consist = -np.einsum("q,qb,qa->ba", W, jump, flux)
        sym = penalty.epsilon * np.einsum("q,qb,qa->ba", W, flux, jump)
        pen = penalty.sigma / length * np.einsum("q,qb,qa->ba", W, jump, jump)
        ed = np.concatenate([dofs[k1], dofs[k2]])
        trip.add(ed, ed, consist + sym + pen)

    A_full = trip.matrix(n)
    if penalty.epsilon == -1:
        asym = abs(A_full - A_full.T).max() if A_full.nnz else 0.0
        scale = abs(A_full).max() if A_full.nnz else 1.0
        assert asym <= 1e-10 * scale, f"symmetric scheme assembled a non-symmetric matrix ({asym:.2e})"

    if g is None:
        fixed = np.zeros(0, dtype=np.int64)
        gvals = np.zeros(0)
    else:
        fixed = boundary_dofs(mesh, tag)
        gvals = np.asarray(g(space.nodes[fixed]), dtype=float)
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.nonzero(mask)[0]
    A_ff = A_full[free][:, free].tocsr()
    rhs = load[free] - A_full[free][:, fixed] @ gvals
    return SparseSystem(A_ff, rhs, free, fixed, gvals, n, A_full if keep_full else None)


def cg_solve(system, tol: float = 1e-10, max_iter: int | None = None, x0=None) -> tuple[np.ndarray, int]:
    """Jacobi-preconditioned conjugate gradients; ``system`` is a SparseSystem or a matrix with ``rhs`` given as a pair."""
    if isinstance(system, SparseSystem):
        A, b = system.matrix, system.rhs
    else:
        A, b = system
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    max_iter = 20 * n if max_iter is None else max_iter
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise ValueError("matrix diagonal must be positive")
    inv_d = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return x, 0
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, it
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NoConvergence(max_iter, res)


@dataclass
class SolveResult:
    u: np.ndarray
    iterations: int
    norms: object
    system: SparseSystem


def solve_interface_problem(space: IFESpace, problem, penalty: PenaltyParams | None = None,
                            degree: int = DEFAULT_DEGREE, tol: float = 1e-10) -> SolveResult:
    """Assemble, solve, and measure the error against ``problem`` (a manufactured solution)."""
    from .quadrature import error_norms

    penalty = penalty or PenaltyParams.default(space.beta_minus, space.beta_plus)
    g = lambda X: space.side_values(problem.u_minus, problem.u_plus, X)  # noqa: E731
    f = getattr(problem, "f_pair", None) or problem.f
    system = assemble(space, penalty, f, g, degree)
    x, its = cg_solve(system, tol=tol)
    u = system.expand(x)
    norms = error_norms(problem.u, problem.grad, u, space, degree)
    return SolveResult(u, its, norms, system)
