"""Quadrature on straight and curved (sub)elements, and piecewise L2 / H1 error norms.

A curved subelement is fanned into triangles sharing one corner ``V``.  Each triangle
``(V, gamma(t))`` where ``gamma`` is either a straight side or the interface arc is
mapped from ``[0, 1]^2`` by the collapsed transfinite map
``X(lam, t) = (1 - lam) V + lam gamma(t)`` with Jacobian ``lam * cross(gamma - V, gamma')``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .geometry import Arc, GeometryError, cross2
from .local_fe import ElementKind, monomial_grads, monomials, shape_coefficients
from .mesh import CartesianMesh, InterfaceElementData

DEFAULT_DEGREE = 5
_CHUNK = 8192


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=32)
def gauss_1d(n: int) -> QuadRule:
    """``n``-point Gauss-Legendre rule on [0, 1]."""
    if n < 1:
        raise ValueError("need at least one point")
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadRule(0.5 * (x + 1.0), 0.5 * w)


@lru_cache(maxsize=32)
def gauss_square(n: int) -> QuadRule:
    g = gauss_1d(n)
    X, Y = np.meshgrid(g.points, g.points, indexing="ij")
    W = np.outer(g.weights, g.weights)
    return QuadRule(np.column_stack([X.ravel(), Y.ravel()]), W.ravel())


@lru_cache(maxsize=32)
def collapsed_triangle(n: int) -> QuadRule:
    """Rule on the unit right triangle from the collapsed square; weights sum to 1/2."""
    g = gauss_1d(n)
    lam, t = np.meshgrid(g.points, g.points, indexing="ij")
    W = np.outer(g.weights, g.weights) * lam
    pts = np.column_stack([(lam * (1 - t)).ravel(), (lam * t).ravel()])
    return QuadRule(pts, W.ravel())


def _segment(P, Q):
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    d = Q - P
    return Arc(lambda t: P + np.asarray(t)[..., None] * d,
               lambda t: np.broadcast_to(d, np.shape(t) + (2,)).copy(), P, Q)


@dataclass(frozen=True, eq=False)
class CurvedTriangle:
    """Fan triangle from ``V`` over the side ``side`` (a straight segment or an arc)."""

    V: np.ndarray
    side: Arc
    curved: bool

    def points(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        g = gauss_1d(n)
        lam = g.points[:, None]
        G = self.side.point(g.points)  # (n, 2)
        dG = self.side.tangent(g.points)
        X = (1.0 - lam)[..., None] * self.V + lam[..., None] * G[None]
        J = lam * cross2(G - self.V, dG)[None, :]
        W = np.outer(g.weights, g.weights) * J
        return X.reshape(-1, 2), W.ravel()


@dataclass(eq=False)
class CurvedRegion:
    """One side of an interface element: straight boundary chain plus the interface arc."""

    element: int
    side: int
    chain: list[np.ndarray]  # boundary points ordered counterclockwise, arc runs from chain[-1] to chain[0]
    arc: Arc
    corners: list[bool]  # chain[i] is an element vertex
    fan: list[CurvedTriangle] = field(default_factory=list)

    def quadrature(self, degree: int = DEFAULT_DEGREE) -> tuple[np.ndarray, np.ndarray]:
        pts, wts = zip(*(tri.points(degree) for tri in self.fan))
        X = np.concatenate(pts)
        W = np.concatenate(wts)
        if np.any(W <= 0.0):
            raise GeometryError(f"non-positive Jacobian in region of element {self.element}")
        return X, W

    def area(self, degree: int = DEFAULT_DEGREE) -> float:
        return float(self.quadrature(degree)[1].sum())


def _fan(chain, arc, V_idx) -> list[CurvedTriangle]:
    V = chain[V_idx]
    tris = []
    for a in range(len(chain) - 1):
        if V_idx in (a, a + 1):
            continue
        P, Q = chain[a], chain[a + 1]
        if abs(cross2(P - V, Q - V)) <= 1e-14 * max(np.sum((Q - P) ** 2), 1e-300):
            continue
        tris.append(CurvedTriangle(V, _segment(P, Q), False))
    tris.append(CurvedTriangle(V, arc, True))
    return tris


def _fan_ok(tris, degree) -> bool:
    for t in tris:
        _, W = t.points(degree)
        if np.any(W <= 0.0):
            return False
    return True


def _subarc(arc: Arc, a: float, b: float) -> Arc:
    return Arc(lambda t: arc.point(a + (b - a) * t), lambda t: (b - a) * arc.tangent(a + (b - a) * t),
               arc.point(a), arc.point(b))


def _fan_search(chain, corners, arc, degree, h, depth) -> list[CurvedTriangle] | None:
    """Fan from the best admissible vertex; if none works, cut at the arc midpoint and recurse."""
    m = len(chain)
    incident = []
    for i in range(m):
        ln = 0.0
        if i > 0:
            ln += np.linalg.norm(chain[i] - chain[i - 1])
        if i < m - 1:
            ln += np.linalg.norm(chain[i + 1] - chain[i])
        incident.append(ln)
    order = sorted(range(m), key=lambda i: (not corners[i], -round(incident[i] / h, 9), i))
    for i in order:
        tris = _fan(chain, arc, i)
        if _fan_ok(tris, degree):
            return tris
    if depth == 0:
        return None
    # a strongly curved arc bulging into the region: split along a segment from a corner
    # to the arc midpoint, so each half sees a flatter piece of the arc
    P = arc.point(0.5)
    first, second = _subarc(arc, 0.0, 0.5), _subarc(arc, 0.5, 1.0)
    for c in order:
        if c in (0, m - 1):
            continue
        part_a = _fan_search([P] + chain[c:], [False] + corners[c:], first, degree, h, depth - 1)
        if part_a is None:
            continue
        part_b = _fan_search(chain[: c + 1] + [P], corners[: c + 1] + [False], second, degree, h, depth - 1)
        if part_b is not None:
            return part_a + part_b
    return None


def curved_subelements(data: InterfaceElementData, degree: int = DEFAULT_DEGREE) -> tuple[CurvedRegion, CurvedRegion]:
    """Split an interface element into its minus and plus regions."""
    V = np.asarray(data.vertices, dtype=float)
    k = len(V)
    h = data.h
    tol = 1e-12 * h

    # perimeter parameter: vertex i at s = i, a cut on edge j at j + t
    def param(P, edges):
        best = None
        for j in edges:
            A, B = V[j], V[(j + 1) % k]
            t = float(np.dot(P - A, B - A) / np.dot(B - A, B - A))
            s = j + min(max(t, 0.0), 1.0)
            if best is None or s < best:
                best = s
        return best % k

    sD = param(data.D, data.edge_D)
    sE = param(data.E, data.edge_E)
    curve = data.curve
    arc_DE = curve.arc(data.D, data.E)
    regions = {}
    for start, s0, end, s1 in ((data.D, sD, data.E, sE), (data.E, sE, data.D, sD)):
        # walk counterclockwise from `start` to `end`
        chain = [start]
        corners = [False]
        span = (s1 - s0) % k
        for i in sorted(range(k), key=lambda i: (i - s0) % k):
            d = (i - s0) % k
            if tol / h < d < span - tol / h:
                chain.append(V[i])
                corners.append(True)
        chain.append(end)
        corners.append(False)
        # snap cut points that sit on a vertex
        for j in (0, -1):
            dist = np.linalg.norm(V - chain[j], axis=1)
            if dist.min() <= tol:
                corners[j] = True
        # which side: probe the middle of the straight chain
        lengths = [np.linalg.norm(chain[a + 1] - chain[a]) for a in range(len(chain) - 1)]
        half = 0.5 * sum(lengths)
        acc = 0.0
        probe = chain[0]
        for a, ln in enumerate(lengths):
            if acc + ln >= half and ln > 0:
                probe = chain[a] + (half - acc) / ln * (chain[a + 1] - chain[a])
                break
            acc += ln
        side = -1 if float(curve.level(probe)) <= 0.0 else 1
        arc = arc_DE.reversed() if start is data.D else arc_DE
        if side in regions:
            raise GeometryError(f"element {data.element}: both boundary chains lie on the same side")
        regions[side] = (chain, corners, arc)

    out = {}
    for side, (chain, corners, arc) in regions.items():
        fan = _fan_search(chain, corners, arc, degree, h, depth=3)
        if fan is None:
            raise GeometryError(f"element {data.element}: no fan vertex gives a positive transfinite Jacobian")
        out[side] = CurvedRegion(data.element, side, chain, arc, corners, fan)
    if set(out) != {-1, 1}:
        raise GeometryError(f"element {data.element}: could not identify both subelements")
    return out[-1], out[1]


def integrate(region, f: Callable, degree: int = DEFAULT_DEGREE) -> float:
    """Integral of a vectorised ``f`` over a region, a fan triangle or a polygon given by its vertices."""
    if isinstance(region, CurvedRegion):
        X, W = region.quadrature(degree)
    elif isinstance(region, CurvedTriangle):
        X, W = region.points(degree)
        if np.any(W <= 0.0):
            raise GeometryError("non-positive Jacobian")
    else:
        X, W = polygon_rule(np.asarray(region, dtype=float), degree)
    return float(np.sum(W * f(X)))


def polygon_rule(V: np.ndarray, degree: int = DEFAULT_DEGREE) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights for a straight convex polygon (tensor rule on axis-aligned rectangles)."""
    if len(V) == 4 and _is_axis_rect(V):
        q = gauss_square(degree)
        lo = V.min(axis=0)
        ext = V.max(axis=0) - lo
        return lo + q.points * ext, q.weights * ext[0] * ext[1]
    tris = [CurvedTriangle(V[0], _segment(V[i], V[i + 1]), False) for i in range(1, len(V) - 1)]
    pts, wts = zip(*(t.points(degree) for t in tris))
    W = np.concatenate(wts)
    if np.any(W <= 0.0):
        raise GeometryError("polygon must be convex and counterclockwise")
    return np.concatenate(pts), W


def _is_axis_rect(V) -> bool:
    xs = np.unique(np.round(V[:, 0], 14))
    ys = np.unique(np.round(V[:, 1], 14))
    return len(xs) == 2 and len(ys) == 2


def reference_rule(mesh: CartesianMesh, e: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature points in the element frame (``xi``) and physical weights for element ``e``'s class."""
    V = mesh.element_vertices(e)
    X, W = polygon_rule(V, degree)
    _, origin, scale = shape_coefficients(V, _any_tag(mesh))
    return (X - origin) / scale, W


def _any_tag(mesh):
    from .local_fe import PolySpaceTag

    return PolySpaceTag.Q1 if mesh.kind is ElementKind.RECTANGULAR else PolySpaceTag.P1


@dataclass
class ErrorNorms:
    L2_minus: float
    L2_plus: float
    H1_minus: float
    H1_plus: float

    @property
    def L2(self) -> float:
        return float(np.sqrt(self.L2_minus**2 + self.L2_plus**2))

    @property
    def H1(self) -> float:
        return float(np.sqrt(self.H1_minus**2 + self.H1_plus**2))

    def as_dict(self) -> dict:
        return {"L2_minus": self.L2_minus, "L2_plus": self.L2_plus, "H1semi_minus": self.H1_minus,
                "H1semi_plus": self.H1_plus, "L2": self.L2, "H1semi": self.H1}


def error_norms(u_exact: Sequence[Callable], grad_exact: Sequence[Callable], coeffs: np.ndarray, space,
                degree: int = DEFAULT_DEGREE) -> ErrorNorms:
    """Subdomain-split L2 and broken H1-seminorm errors of the IFE function ``coeffs``.

    ``u_exact`` and ``grad_exact`` are (minus, plus) pairs of vectorised callables.
    """
    mesh = space.mesh
    cls = space.cls
    tag = space.tag
    coeffs = np.asarray(coeffs, dtype=float)
    sq = {(-1, 0): 0.0, (1, 0): 0.0, (-1, 1): 0.0, (1, 1): 0.0}

    def accumulate(side, X, W, val, grad):
        s = 0 if side < 0 else 1
        du = u_exact[s](X) - val
        dg = grad_exact[s](X) - grad
        sq[(side, 0)] += float(np.sum(W * du * du))
        sq[(side, 1)] += float(np.sum(W * np.sum(dg * dg, axis=-1)))

    # non-interface elements, one frame template per element class
    dofs = space.dofs
    regular = np.nonzero(cls.side != 0)[0]
    triangular = mesh.kind is ElementKind.TRIANGULAR
    for c in ((0, 1) if triangular else (0,)):
        rep = c
        xi, W = reference_rule(mesh, rep, degree)
        psi, _, scale = shape_coefficients(mesh.element_vertices(rep), tag)
        mono = monomials(tag.quad, xi)  # (q, 4)
        mgrad = monomial_grads(tag.quad, xi) / scale  # (q, 4, 2)
        elems = regular[regular % 2 == c] if triangular else regular
        for side in (-1, 1):
            es = elems[cls.side[elems] == side]
            for start in range(0, len(es), _CHUNK):
                chunk = es[start : start + _CHUNK]
                origin = mesh.vertices[mesh.elements[chunk, 0]]
                coef = coeffs[dofs[chunk]] @ psi  # (m, 4)
                X = origin[:, None, :] + scale * xi[None]
                val = coef @ mono.T
                grad = np.einsum("qad,ma->mqd", mgrad, coef)
                accumulate(side, X, W[None, :], val, grad)

    for e, basis in space.bases.items():
        regions = curved_subelements(basis.data, degree)
        u_loc = coeffs[dofs[e]]
        for reg in regions:
            X, W = reg.quadrature(degree)
            val = basis.values(X, reg.side) @ u_loc
            grad = np.einsum("qkd,k->qd", basis.grads(X, reg.side), u_loc)
            accumulate(reg.side, X, W, val, grad)

    return ErrorNorms(*(float(np.sqrt(max(sq[k], 0.0))) for k in [(-1, 0), (1, 0), (-1, 1), (1, 1)]))


def subdomain_areas(space_or_cls, degree: int = DEFAULT_DEGREE) -> tuple[float, float]:
    """Total areas of the minus and plus subdomains on the mesh."""
    cls = getattr(space_or_cls, "cls", space_or_cls)
    mesh = cls.mesh
    areas = mesh.element_areas()
    a = {-1: float(areas[cls.side == -1].sum()), 1: float(areas[cls.side == 1].sum())}
    for data in cls.interface.values():
        for reg in curved_subelements(data, degree):
            a[reg.side] += reg.area(degree)
    return a[-1], a[1]
