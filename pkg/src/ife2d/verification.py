"""Randomised identity checks shared by the ``verify`` mode and the test-suite."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    Circle,
    GeometryError,
    StraightLine,
    jump_matrices,
    line_jump_matrices,
    normal_variation_bound,
    projection_bound,
    unit_normals,
)
from .ife import IFEBasis, UnisolvenceMargin, build_ife_basis, lambda_residual
from .local_fe import PolySpaceTag, shape_coefficients
from .mesh import Classification, InterfaceElementData, cut_element

ALL_TAGS = (PolySpaceTag.P1, PolySpaceTag.CR, PolySpaceTag.Q1, PolySpaceTag.RQ1)


@dataclass
class SuiteResult:
    name: str
    count: int
    worst: float
    tol: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.count > 0 and self.worst <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.note})" if self.note else ""
        return f"{status}  {self.name:<28} n={self.count:<7d} worst={self.worst:.3e}  tol={self.tol:.1e}{extra}"


def cell_vertices(tag: PolySpaceTag, origin, h: float, upper: bool = False) -> np.ndarray:
    o = np.asarray(origin, dtype=float)
    if tag.kind.value == "rectangular":
        return o + h * np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    if upper:
        return o + h * np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return o + h * np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])


def random_point_in(V: np.ndarray, rng: np.random.Generator, m: int = 1) -> np.ndarray:
    if len(V) == 3:
        return rng.dirichlet(np.ones(3), size=m) @ V
    lo, hi = V.min(axis=0), V.max(axis=0)
    return lo + rng.random((m, 2)) * (hi - lo)


def random_cut(rng: np.random.Generator, tag: PolySpaceTag, h: float = 0.05, curved: bool = True,
               radius_range=(10.0, 1000.0)) -> InterfaceElementData:
    """A uniform cell crossed by a random line or large circle through a random interior point."""
    for _ in range(1000):
        origin = rng.uniform(-1.0, 1.0, size=2)
        V = cell_vertices(tag, origin, h, upper=bool(rng.integers(2)))
        P = random_point_in(V, rng)[0]
        theta = rng.uniform(0.0, 2.0 * math.pi)
        normal = np.array([math.cos(theta), math.sin(theta)])
        if curved:
            R = h * math.exp(rng.uniform(math.log(radius_range[0]), math.log(radius_range[1])))
            curve = Circle(*(P - R * normal), R)
        else:
            curve = StraightLine(P, normal)
        try:
            data = cut_element(V, curve, tag)
        except GeometryError:
            continue
        if data is not None:
            return data
    raise RuntimeError("could not generate a cut element")


def random_betas(rng: np.random.Generator, rho_min: float = 1e-4) -> tuple[float, float]:
    rho = math.exp(rng.uniform(math.log(rho_min), 0.0))
    return (rho, 1.0) if rng.integers(2) else (1.0, rho)


# ---------------------------------------------------------------------------


def check_jump_matrices(rng: np.random.Generator, samples: int = 10_000, rho_min: float = 1e-4,
                        kappa_bar: float = 0.031) -> dict[str, float]:
    worst = dict.fromkeys(["inverse", "det", "bar_inverse", "eig_tangent", "eig_minus", "eig_plus", "translation"], 0.0)
    I = np.eye(2)
    for _ in range(samples):
        rho = math.exp(rng.uniform(math.log(rho_min), 0.0))
        a = rng.uniform(0.0, 2.0 * math.pi)
        n = np.array([math.cos(a), math.sin(a)])
        Mm, Mp = jump_matrices(n, rho)
        worst["inverse"] = max(worst["inverse"], np.abs(Mm @ Mp - I).max())
        worst["det"] = max(worst["det"], abs(np.linalg.det(Mm) - rho))
        # admissible chord normal: n_bar . nF >= 1 - kappa_bar
        dev = rng.uniform(-1.0, 1.0) * math.acos(1.0 - kappa_bar)
        nbar = np.array([math.cos(a + dev), math.sin(a + dev)])
        tbar = np.array([nbar[1], -nbar[0]])
        Bm, Bp = line_jump_matrices(nbar, n, rho)
        worst["bar_inverse"] = max(worst["bar_inverse"], np.abs(Bm @ Bp - I).max())
        worst["eig_tangent"] = max(worst["eig_tangent"], np.abs(Bm.T @ tbar - tbar).max())
        worst["eig_minus"] = max(worst["eig_minus"], np.abs(Bm.T @ n - rho * n).max())
        worst["eig_plus"] = max(worst["eig_plus"], np.abs(Bp.T @ n - n / rho).max() * rho)
        # (Mbar - I)^T (P - Xbar) does not depend on where Xbar sits on the line
        D = rng.uniform(-1, 1, 2)
        X1 = D + rng.uniform(-1, 1) * tbar
        X2 = D + rng.uniform(-1, 1) * tbar
        P = rng.uniform(-1, 1, 2)
        for B in (Bm, Bp):
            d = np.abs((B - I).T @ (P - X1) - (B - I).T @ (P - X2)).max() / max(1.0, np.abs(B).max())
            worst["translation"] = max(worst["translation"], d)
    return worst


def check_gradient_jump(problem, samples: int = 200) -> float:
    """Worst |M^-(X) grad u^-(X) - grad u^+(X)| over points of the circle."""
    rho = problem.beta_minus / problem.beta_plus
    theta = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
    X = np.column_stack([problem.cx + problem.r0 * np.cos(theta), problem.cy + problem.r0 * np.sin(theta)])
    n = unit_normals(problem.curve, X)
    gm = problem.grad_minus(X)
    gp = problem.grad_plus(X)
    worst = 0.0
    for i in range(samples):
        Mm, _ = jump_matrices(n[i], rho)
        worst = max(worst, float(np.abs(Mm @ gm[i] - gp[i]).max()))
    return worst


def check_geometry_bounds(cls: Classification, epsilon: float = 0.4, samples: int = 50) -> tuple[float, float, int]:
    """Worst ratios (distance to chord)/bound and (normal variation)/bound over all interface elements."""
    kappa = cls.curve.kappa
    worst_p = worst_n = 0.0
    t = np.linspace(0.0, 1.0, samples)
    for data in cls.interface.values():
        h = data.h
        arc = cls.curve.arc(data.D, data.E)
        pts = arc.point(t)
        dist = np.abs(data.cut.L(pts))
        worst_p = max(worst_p, float(dist.max()) / projection_bound(kappa, h, epsilon))
        nr = unit_normals(cls.curve, pts)
        spread = float(np.max(np.linalg.norm(nr[:, None, :] - nr[None, :, :], axis=-1)))
        worst_n = max(worst_n, spread / normal_variation_bound(kappa, h, epsilon))
    return worst_p, worst_n, len(cls.interface)


def sherman_morrison_gap(data: InterfaceElementData, beta_minus: float, beta_plus: float) -> float:
    """Infinity-norm gap between the closed form and a dense solve, over all unit nodal vectors."""
    from .ife import build_sm_system

    sm = build_sm_system(data, beta_minus, beta_plus)
    if abs(sm.denom) < 1e-8:
        raise UnisolvenceMargin(sm.denom)
    if not sm.I_o:
        return 0.0
    b = sm.rhs(np.eye(len(data.nodes)))
    c_sm = sm.sherman_morrison(b)
    c_lu = np.linalg.solve(sm.dense_matrix(), b.T).T
    gap = float(np.abs(c_sm - c_lu).max())
    # the basis stores the same solution in a rearranged closed form
    basis = build_ife_basis(data, data.tag, beta_minus, beta_plus, kappa_bar=None)
    return max(gap, float(np.abs(basis.c - c_lu).max()))


def check_sherman_morrison(rng: np.random.Generator, samples: int = 10_000, tags=ALL_TAGS,
                           rho_min: float = 1e-4) -> tuple[float, int, int]:
    worst, count, refused = 0.0, 0, 0
    for s in range(samples):
        tag = tags[s % len(tags)]
        data = random_cut(rng, tag, curved=bool(s % 2))
        bm, bp = random_betas(rng, rho_min)
        try:
            worst = max(worst, sherman_morrison_gap(data, bm, bp))
            count += 1
        except UnisolvenceMargin:
            refused += 1
    return worst, count, refused


def sample_points(basis: IFEBasis, rng: np.random.Generator, m: int) -> np.ndarray:
    return random_point_in(basis.data.vertices, rng, m)


def identity_residuals(basis: IFEBasis, rng: np.random.Generator, points: int = 100, line_points: int = 20) -> dict[str, float]:
    data = basis.data
    k = basis.dof
    out = {}
    side_nodes = np.where(np.isin(np.arange(k), data.I_minus), -1, 1)
    out["kronecker"] = float(np.abs(basis.values(data.nodes, side_nodes) - np.eye(k)).max())
    X = sample_points(basis, rng, points)
    out["partition_of_unity"] = float(np.abs(basis.values(X).sum(axis=-1) - 1.0).max())
    out["gradient_sum"] = float(np.abs(basis.grads(X).sum(axis=-2)).max())
    s = np.linspace(0.0, 1.0, line_points)[:, None]
    Y = data.D + s * (data.E - data.D)
    out["trace_continuity"] = float(np.abs(basis.values(Y, -1) - basis.values(Y, 1)).max())
    fm = basis.beta_minus * (basis.grads(data.F, -1) @ data.nF)
    fp = basis.beta_plus * (basis.grads(data.F, 1) @ data.nF)
    out["flux_at_F"] = float(np.abs(fm - fp).max()) / max(basis.beta_minus, basis.beta_plus)
    res = lambda_residual(basis, X)
    out["lambda"] = float(np.abs(res.value).max())
    out["lambda_derivative"] = float(np.abs(res.derivative).max())
    t = rng.uniform(-1.0, 2.0, size=(k, 1))
    Xbar = data.D + t * (data.E - data.D)
    out["lambda_translation"] = float(np.abs(lambda_residual(basis, X, Xbar).value - res.value).max())
    return out


def check_identities(rng: np.random.Generator, elements: int = 1000, tags=ALL_TAGS, rho_min: float = 1e-4,
                     points: int = 100) -> tuple[dict[str, float], int]:
    worst: dict[str, float] = {}
    count = 0
    for s in range(elements):
        tag = tags[s % len(tags)]
        data = random_cut(rng, tag, curved=True)
        bm, bp = random_betas(rng, rho_min)
        try:
            basis = build_ife_basis(data, tag, bm, bp, kappa_bar=None)
        except UnisolvenceMargin:
            continue
        count += 1
        for key, v in identity_residuals(basis, rng, points).items():
            worst[key] = max(worst.get(key, 0.0), v)
    return worst, count


def rho_one_gap(cls: Classification) -> tuple[float, int]:
    """Largest coefficient difference between IFE shapes at beta- = beta+ and standard shapes."""
    worst = 0.0
    for data in cls.interface.values():
        basis = build_ife_basis(data, cls.tag, 1.0, 1.0)
        psi, _, _ = shape_coefficients(data.vertices, cls.tag)
        worst = max(worst, float(np.abs(basis.coef_minus - psi).max()), float(np.abs(basis.coef_plus - psi).max()))
    return worst, len(cls.interface)
