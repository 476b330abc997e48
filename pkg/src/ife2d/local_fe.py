"""Standard local finite elements: P1, Crouzeix-Raviart, Q1 and rotated Q1.

Polynomials live in the four-term basis {1, x, y, q} written in element-local
coordinates ``xi = (X - origin) / scale``; ``q`` is ``xi*eta`` (Q1), ``xi**2 - eta**2``
(rotated Q1) or absent.  A single isotropic scale keeps ``x**2 - y**2`` inside the
space under the change of frame.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class ElementKind(enum.Enum):
    TRIANGULAR = "triangular"
    RECTANGULAR = "rectangular"


class PolySpaceTag(enum.Enum):
    P1 = "p1"
    CR = "cr"
    Q1 = "q1"
    RQ1 = "rq1"

    @property
    def kind(self) -> ElementKind:
        return ElementKind.TRIANGULAR if self in (PolySpaceTag.P1, PolySpaceTag.CR) else ElementKind.RECTANGULAR

    @property
    def dof(self) -> int:
        return 3 if self.kind is ElementKind.TRIANGULAR else 4

    @property
    def edge_nodes(self) -> bool:
        """True when the local nodes are edge midpoints rather than vertices."""
        return self in (PolySpaceTag.CR, PolySpaceTag.RQ1)

    @property
    def quad(self) -> str | None:
        return {PolySpaceTag.Q1: "xy", PolySpaceTag.RQ1: "x2-y2"}.get(self)

    @classmethod
    def parse(cls, value) -> "PolySpaceTag":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


# sup |psi| and h * sup |grad psi| on a unit reference cell (closed-form values)
SHAPE_BOUNDS = {
    PolySpaceTag.P1: (1.0, math.sqrt(2.0)),
    PolySpaceTag.CR: (1.0, 2.0 * math.sqrt(2.0)),
    PolySpaceTag.Q1: (1.0, math.sqrt(2.0)),
    PolySpaceTag.RQ1: (1.0, math.sqrt(5.0)),
}


def monomials(quad: str | None, xi: np.ndarray) -> np.ndarray:
    """Basis values, shape ``xi.shape[:-1] + (4,)``."""
    x = xi[..., 0]
    y = xi[..., 1]
    if quad == "xy":
        q = x * y
    elif quad == "x2-y2":
        q = x * x - y * y
    else:
        q = np.zeros_like(x)
    return np.stack([np.ones_like(x), x, y, q], axis=-1)


def monomial_grads(quad: str | None, xi: np.ndarray) -> np.ndarray:
    """Local-coordinate gradients, shape ``xi.shape[:-1] + (4, 2)``."""
    x = xi[..., 0]
    y = xi[..., 1]
    zero = np.zeros_like(x)
    one = np.ones_like(x)
    if quad == "xy":
        qx, qy = y, x
    elif quad == "x2-y2":
        qx, qy = 2.0 * x, -2.0 * y
    else:
        qx, qy = zero, zero
    gx = np.stack([zero, one, zero, qx], axis=-1)
    gy = np.stack([zero, zero, one, qy], axis=-1)
    return np.stack([gx, gy], axis=-1)


@dataclass(frozen=True, eq=False)
class LocalPoly:
    coef: np.ndarray
    quad: str | None
    origin: np.ndarray
    scale: float

    def local(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.origin) / self.scale

    def __call__(self, X):
        return monomials(self.quad, self.local(X)) @ self.coef

    def grad(self, X):
        g = np.einsum("...kd,k->...d", monomial_grads(self.quad, self.local(X)), self.coef)
        return g / self.scale

    def second_degree_coeff(self) -> float:
        """Coefficient of the physical ``xy`` or ``x**2 - y**2`` term."""
        return float(self.coef[3]) / self.scale**2

    def _same_frame(self, other: "LocalPoly"):
        if self.quad != other.quad or self.scale != other.scale or not np.array_equal(self.origin, other.origin):
            raise ValueError("polynomials live in different local frames")

    def __add__(self, other: "LocalPoly") -> "LocalPoly":
        self._same_frame(other)
        return LocalPoly(self.coef + other.coef, self.quad, self.origin, self.scale)

    def __sub__(self, other: "LocalPoly") -> "LocalPoly":
        self._same_frame(other)
        return LocalPoly(self.coef - other.coef, self.quad, self.origin, self.scale)

    def __mul__(self, a: float) -> "LocalPoly":
        return LocalPoly(self.coef * a, self.quad, self.origin, self.scale)

    __rmul__ = __mul__

    def __repr__(self):
        return f"LocalPoly({np.array2string(self.coef, precision=6)}, quad={self.quad})"


def eval(p: LocalPoly, X):  # noqa: A001 - mirrors the operation name
    return p(X)


def grad(p: LocalPoly, X):
    return p.grad(X)


def second_degree_coeff(p: LocalPoly) -> float:
    return p.second_degree_coeff()


def frame(vertices) -> tuple[np.ndarray, float]:
    """Origin (first vertex) and isotropic scale of an element."""
    V = np.asarray(vertices, dtype=float)
    ext = V.max(axis=0) - V.min(axis=0)
    return V[0].copy(), float(max(ext[0], ext[1]))


def nodes(vertices, tag: PolySpaceTag) -> np.ndarray:
    V = np.asarray(vertices, dtype=float)
    if len(V) != tag.dof:
        raise ValueError(f"{tag.name} needs {tag.dof} vertices, got {len(V)}")
    if tag.edge_nodes:
        return 0.5 * (V + np.roll(V, -1, axis=0))
    return V.copy()


@lru_cache(maxsize=64)
def _template(tag: PolySpaceTag, local_vertices: tuple) -> np.ndarray:
    M = nodes(np.array(local_vertices), tag)
    vander = monomials(tag.quad, M)
    if tag.quad is None:
        vander = vander[:, :3]
    cond = np.linalg.cond(vander)
    assert cond < 1e8, f"degenerate element (Vandermonde condition {cond:.2e})"
    coef = np.linalg.inv(vander).T
    if tag.quad is None:
        coef = np.hstack([coef, np.zeros((len(coef), 1))])
    return coef


def shape_coefficients(vertices, tag: PolySpaceTag) -> tuple[np.ndarray, np.ndarray, float]:
    """Rows are the coefficient vectors of the standard shape functions in the element frame."""
    origin, scale = frame(vertices)
    local = np.round((np.asarray(vertices, dtype=float) - origin) / scale, 12)
    key = tuple(map(tuple, local.tolist()))
    return _template(tag, key), origin, scale


def standard_shapes(vertices, tag: PolySpaceTag) -> list[LocalPoly]:
    coef, origin, scale = shape_coefficients(vertices, tag)
    return [LocalPoly(c.copy(), tag.quad, origin, scale) for c in coef]
