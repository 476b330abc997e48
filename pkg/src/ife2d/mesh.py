"""Uniform Cartesian meshes and their classification against an interface curve."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .geometry import (
    CutLine,
    FluxPointMode,
    GeometryError,
    H2Violation,
    InterfaceCurve,
    cross2,
    find_flux_point,
    segment_roots,
    unit_normals,
)
from .local_fe import ElementKind, PolySpaceTag, nodes

EDGE_SAMPLES = 16
_CHUNK = 20000


@dataclass(frozen=True, eq=False)
class CartesianMesh:
    x0: float
    x1: float
    y0: float
    y1: float
    n: int
    kind: ElementKind
    vertices: np.ndarray  # (V, 2)
    elements: np.ndarray  # (E, k), counterclockwise from the lower-left corner
    edges: np.ndarray  # (M, 2) vertex ids, lower id first
    edge_elements: np.ndarray  # (M, 2) adjacent elements, -1 on the boundary
    element_edges: np.ndarray  # (E, k) global id of local edge b_i = A_i A_{i+1}

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / self.n

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / self.n

    @property
    def spacing(self) -> float:
        """Cell side length; the ``h`` of the convergence tables."""
        return max(self.hx, self.hy)

    @property
    def h(self) -> float:
        """Maximum edge length."""
        if self.kind is ElementKind.RECTANGULAR:
            return self.spacing
        return math.hypot(self.hx, self.hy)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def element_vertices(self, e: int) -> np.ndarray:
        return self.vertices[self.elements[e]]

    def element_areas(self) -> np.ndarray:
        V = self.vertices[self.elements]
        # shoelace
        x, y = V[..., 0], V[..., 1]
        return 0.5 * np.abs(np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1))

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.nonzero(self.edge_elements[:, 1] < 0)[0]

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edges])

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def element_class(self, e: int) -> int:
        """0 for the lower triangle (or any rectangle), 1 for the upper triangle of a cell."""
        if self.kind is ElementKind.RECTANGULAR:
            return 0
        return e % 2


def build_mesh(domain=(0.0, 1.0, 0.0, 1.0), n: int = 2, kind: ElementKind | str = ElementKind.RECTANGULAR) -> CartesianMesh:
    """``n`` cells per axis; triangles split every cell along its lower-left to upper-right diagonal."""
    kind = ElementKind(kind) if not isinstance(kind, ElementKind) else kind
    if n < 1:
        raise ValueError("n must be positive")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("empty domain box")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.divmod(np.arange(n * n), n)
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v11 = v10 + n + 1
    v01 = v00 + n + 1
    if kind is ElementKind.RECTANGULAR:
        elements = np.column_stack([v00, v10, v11, v01])
    else:
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        elements = np.empty((2 * n * n, 3), dtype=np.int64)
        elements[0::2] = lower
        elements[1::2] = upper
    elements = elements.astype(np.int64)

    k = elements.shape[1]
    pairs = np.stack([elements, np.roll(elements, -1, axis=1)], axis=-1).reshape(-1, 2)
    pairs = np.sort(pairs, axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    element_edges = inverse.reshape(-1, k)

    owner = np.repeat(np.arange(len(elements)), k)
    order = np.argsort(inverse, kind="stable")
    occ = inverse[order]
    first = np.r_[True, occ[1:] != occ[:-1]]
    edge_elements = np.full((len(edges), 2), -1, dtype=np.int64)
    edge_elements[occ[first], 0] = owner[order][first]
    edge_elements[occ[~first], 1] = owner[order][~first]

    return CartesianMesh(x0, x1, y0, y1, n, kind, vertices, elements, edges, edge_elements, element_edges)


@dataclass(frozen=True, eq=False)
class InterfaceElementData:
    element: int
    tag: PolySpaceTag
    vertices: np.ndarray
    nodes: np.ndarray
    D: np.ndarray
    E: np.ndarray
    edge_D: tuple[int, ...]  # local edges containing D
    edge_E: tuple[int, ...]
    cut: CutLine
    I_minus: tuple[int, ...]
    I_plus: tuple[int, ...]
    F: np.ndarray
    nF: np.ndarray
    curve: InterfaceCurve = field(repr=False)

    @property
    def h(self) -> float:
        V = self.vertices
        return float(np.max(np.linalg.norm(V - np.roll(V, -1, axis=0), axis=1)))


@dataclass(eq=False)
class Classification:
    mesh: CartesianMesh
    curve: InterfaceCurve
    tag: PolySpaceTag
    side: np.ndarray  # (E,) -1 / +1 for non-interface elements, 0 for interface elements
    vertex_side: np.ndarray  # (V,) -1 where level <= 0
    edge_cuts: dict[int, list[np.ndarray]]
    interface: dict[int, InterfaceElementData]

    @property
    def interface_elements(self) -> np.ndarray:
        return np.array(sorted(self.interface), dtype=np.int64)

    @property
    def interface_edges(self) -> np.ndarray:
        """Edges whose interior is crossed by the interface."""
        return np.array(sorted(self.edge_cuts), dtype=np.int64)


def default_flux_mode(tag: PolySpaceTag) -> FluxPointMode:
    if tag in (PolySpaceTag.P1, PolySpaceTag.CR):
        return FluxPointMode.TANGENT_PARALLEL
    return FluxPointMode.MIDPOINT_FOOT


def _edge_crossings(mesh: CartesianMesh, curve: InterfaceCurve, samples: int) -> dict[int, list[np.ndarray]]:
    A_all = mesh.vertices[mesh.edges[:, 0]]
    B_all = mesh.vertices[mesh.edges[:, 1]]
    ts = np.linspace(0.0, 1.0, samples + 1)
    cuts: dict[int, list[np.ndarray]] = {}
    for start in range(0, len(A_all), _CHUNK):
        A = A_all[start : start + _CHUNK]
        B = B_all[start : start + _CHUNK]
        for k, roots in enumerate(segment_roots(curve, A, B, ts)):
            if roots:
                cuts[start + k] = [A[k] + t * (B[k] - A[k]) for t in roots]
    return cuts


def _arc_chord_area(curve: InterfaceCurve, P, Q) -> float:
    arc = curve.arc(P, Q)
    t, w = np.polynomial.legendre.leggauss(8)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    return abs(0.5 * float(np.sum(w * cross2(arc.point(t) - P, arc.tangent(t)))))


def classify_elements(
    mesh: CartesianMesh,
    curve: InterfaceCurve,
    tag: PolySpaceTag | str | None = None,
    flux_mode: FluxPointMode | None = None,
    samples: int = EDGE_SAMPLES,
) -> Classification:
    if tag is None:
        tag = PolySpaceTag.Q1 if mesh.kind is ElementKind.RECTANGULAR else PolySpaceTag.P1
    tag = PolySpaceTag.parse(tag)
    if tag.kind is not mesh.kind:
        raise ValueError(f"{tag.name} elements need a {tag.kind.value} mesh")
    flux_mode = flux_mode or default_flux_mode(tag)

    vlevel = curve.level(mesh.vertices)
    vertex_side = np.where(vlevel <= 0.0, -1, 1).astype(np.int8)
    edge_cuts = _edge_crossings(mesh, curve, samples)

    h = mesh.h
    zero_tol = 1e-14 * max(curve.scale, 1.0)
    on_curve = np.abs(vlevel) <= zero_tol
    if on_curve.any():
        both = on_curve[mesh.edges[:, 0]] & on_curve[mesh.edges[:, 1]]
        for e_id in np.nonzero(both)[0]:
            mid = mesh.vertices[mesh.edges[e_id]].mean(axis=0)
            if abs(float(curve.level(mid))) <= zero_tol:
                raise GeometryError(f"edge {e_id} lies on the interface")

    elem_vs = vertex_side[mesh.elements]
    side = np.where(elem_vs.max(axis=1) < 0, -1, 1).astype(np.int8)
    mixed = elem_vs.min(axis=1) != elem_vs.max(axis=1)
    has_cut = np.zeros(mesh.n_elements, dtype=bool)
    if edge_cuts:
        cut_edges = np.fromiter(edge_cuts, dtype=np.int64)
        has_cut = np.isin(mesh.element_edges, cut_edges).any(axis=1)

    interface: dict[int, InterfaceElementData] = {}
    merge_tol = 1e-12 * h
    for e in np.nonzero(has_cut | mixed)[0]:
        e = int(e)
        V = mesh.element_vertices(e)
        points: list[np.ndarray] = []
        owners: list[set[int]] = []
        for li, g in enumerate(mesh.element_edges[e]):
            for P in edge_cuts.get(int(g), []):
                for k, Q in enumerate(points):
                    if np.linalg.norm(P - Q) <= merge_tol:
                        owners[k].add(li)
                        break
                else:
                    points.append(P)
                    owners.append({li})
        # a crossing at a vertex also sits on the neighbouring edge
        for k, P in enumerate(points):
            for li in range(len(V)):
                A, B = V[li], V[(li + 1) % len(V)]
                if min(np.linalg.norm(P - A), np.linalg.norm(P - B)) <= merge_tol:
                    owners[k].add(li)

        if len(points) <= 1:
            if mixed[e] and not points:
                raise GeometryError(f"element {e}: vertex signs differ but no edge crossing was found")
            side[e] = -1 if np.all(elem_vs[e] < 0) else 1
            if mixed[e]:
                # interface touches a vertex without entering the element
                side[e] = 1 if np.sum(elem_vs[e] > 0) >= np.sum(elem_vs[e] < 0) else -1
            continue
        if len(points) > 2:
            raise GeometryError(f"element {e}: interface crosses the boundary {len(points)} times; refine the mesh")
        if owners[0] & owners[1] and not (len(owners[0]) > 1 and len(owners[1]) > 1 and owners[0] != owners[1]):
            # both crossings on one edge: grazing cut or an H2 violation
            if _arc_chord_area(curve, points[0], points[1]) < 1e-12 * h * h:
                side[e] = 1 if np.sum(elem_vs[e] > 0) >= np.sum(elem_vs[e] < 0) else -1
                continue
            raise H2Violation(f"element {e}: both intersection points lie on one edge; refine the mesh")

        side[e] = 0
        interface[e] = _interface_data(e, tag, V, points, owners, curve, flux_mode)

    return Classification(mesh, curve, tag, side, vertex_side, edge_cuts, interface)


def cut_element(vertices, curve: InterfaceCurve, tag: PolySpaceTag | str, flux_mode: FluxPointMode | None = None,
                element: int = -1) -> InterfaceElementData | None:
    """Cut record of a single element, or None when the interface does not cross it.

    Standalone counterpart of :func:`classify_elements` for randomised checks.
    """
    tag = PolySpaceTag.parse(tag)
    V = np.asarray(vertices, dtype=float)
    k = len(V)
    A = V
    B = np.roll(V, -1, axis=0)
    roots = segment_roots(curve, A, B, np.linspace(0.0, 1.0, EDGE_SAMPLES + 1))
    h = float(np.max(np.linalg.norm(B - A, axis=1)))
    points: list[np.ndarray] = []
    owners: list[set[int]] = []
    for li in range(k):
        for t in roots[li]:
            P = A[li] + t * (B[li] - A[li])
            for j, Q in enumerate(points):
                if np.linalg.norm(P - Q) <= 1e-12 * h:
                    owners[j].add(li)
                    break
            else:
                points.append(P)
                owners.append({li})
    if len(points) != 2:
        return None
    if owners[0] & owners[1]:
        raise H2Violation("both intersection points lie on one edge")
    return _interface_data(element, tag, V, points, owners, curve, flux_mode or default_flux_mode(tag))


def _interface_data(e, tag, V, points, owners, curve, flux_mode) -> InterfaceElementData:
    order = sorted(range(2), key=lambda k: min(owners[k]))
    D, E = points[order[0]], points[order[1]]
    normal_hint = unit_normals(curve, D) + unit_normals(curve, E)
    cut = CutLine.through(D, E, normal_hint)
    M = nodes(V, tag)
    node_minus = curve.level(M) <= 0.0
    I_minus = tuple(int(i) for i in np.nonzero(node_minus)[0])
    I_plus = tuple(int(i) for i in np.nonzero(~node_minus)[0])
    F, nF = find_flux_point(curve, cut, flux_mode)
    return InterfaceElementData(
        element=e,
        tag=tag,
        vertices=V,
        nodes=M,
        D=D,
        E=E,
        edge_D=tuple(sorted(owners[order[0]])),
        edge_E=tuple(sorted(owners[order[1]])),
        cut=cut,
        I_minus=I_minus,
        I_plus=I_plus,
        F=F,
        nF=nF,
        curve=curve,
    )


@dataclass(frozen=True)
class MeshSizeVerdict:
    ok: bool
    h: float
    h_required: float

    def __bool__(self):
        return self.ok


def required_mesh_size(kappa: float, epsilon: float, kappa_bar: float) -> float:
    if not 0.0 < epsilon < math.sqrt(2.0) / 2.0:
        raise ValueError("epsilon must lie in (0, sqrt(2)/2)")
    if not 0.0 < kappa_bar <= 1.0:
        raise ValueError("kappa_bar must lie in (0, 1]")
    if kappa <= 0.0:
        return math.inf
    growth = (1.0 - 2.0 * epsilon**2) ** -1.5
    return min(math.sqrt(kappa_bar) / (math.sqrt(2.0) * (1.0 + growth) * kappa), epsilon / kappa)


def validate_mesh_size(h: float, kappa: float, epsilon: float = 0.4, kappa_bar: float = 0.031) -> MeshSizeVerdict:
    bound = required_mesh_size(kappa, epsilon, kappa_bar)
    return MeshSizeVerdict(h < bound, h, bound)


def _fmt(v) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(v))


def dump_classification(cls: Classification, out: TextIO) -> None:
    """Line-based dump: one record per line, first token is the record type."""
    m = cls.mesh
    out.write("# ife2d mesh dump v1\n")
    out.write(f"mesh {m.kind.value} {m.n} {_fmt([m.x0, m.x1, m.y0, m.y1])}\n")
    out.write(f"curve {cls.curve!r}\n")
    for i, v in enumerate(m.vertices):
        out.write(f"vertex {i} {_fmt(v)}\n")
    names = {-1: "minus", 1: "plus", 0: "interface"}
    for e, vs in enumerate(m.elements):
        out.write(f"element {e} {' '.join(map(str, vs))} {names[int(cls.side[e])]}\n")
    for e in cls.interface_elements:
        d = cls.interface[int(e)]
        out.write(
            f"cut {e} D {_fmt(d.D)} E {_fmt(d.E)} F {_fmt(d.F)} nbar {_fmt(d.cut.n_bar)} nF {_fmt(d.nF)} "
            f"Iminus {','.join(map(str, d.I_minus)) or '-'} Iplus {','.join(map(str, d.I_plus)) or '-'}\n"
        )
