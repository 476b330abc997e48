"""Interface curves, cut geometry and the jump matrices built from interface normals.

Points and vectors are plain ``numpy`` arrays of shape ``(2,)``; every level-set
evaluation is vectorised over a trailing axis of length 2.

Sign convention: ``level(X) < 0`` inside the minus subdomain, ``> 0`` inside the plus
subdomain, and all normals point from the minus side to the plus side.
"""
from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np

BISECTION_ITERS = 60
LEVEL_TOL = 1e-13


class GeometryError(ValueError):
    """Raised when the interface geometry cannot be resolved on an element."""


class SingularLevelSet(GeometryError):
    pass


class H1Violation(GeometryError):
    """An edge is crossed by the interface more than twice."""


class H2Violation(GeometryError):
    """Both intersection points of an element lie on one edge."""


def _perp(v: np.ndarray) -> np.ndarray:
    # (vy, -vx): the tangent convention t = (n_y, -n_x)
    return np.array([v[1], -v[0]])


def cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


class Arc:
    """Parametrisation t in [0, 1] of the interface piece between two of its points."""

    def __init__(self, point: Callable, tangent: Callable, start: np.ndarray, end: np.ndarray):
        self._point = point
        self._tangent = tangent
        self.start = np.asarray(start, dtype=float)
        self.end = np.asarray(end, dtype=float)

    def point(self, t):
        return self._point(np.asarray(t, dtype=float))

    def tangent(self, t):
        """Derivative of :meth:`point` with respect to ``t``."""
        return self._tangent(np.asarray(t, dtype=float))

    def reversed(self) -> "Arc":
        return Arc(lambda t: self._point(1.0 - t), lambda t: -self._tangent(1.0 - t), self.end, self.start)


class InterfaceCurve(ABC):
    """Signed level-set description of the interface."""

    @abstractmethod
    def level(self, X) -> np.ndarray: ...

    @abstractmethod
    def gradient(self, X) -> np.ndarray: ...

    @property
    @abstractmethod
    def kappa(self) -> float:
        """Maximum curvature."""

    @property
    def scale(self) -> float:
        return 1.0

    def arc(self, D, E) -> Arc:
        """Default arc: project chord points onto the curve along the chord normal."""
        D = np.asarray(D, dtype=float)
        E = np.asarray(E, dtype=float)
        chord = E - D
        length = float(np.hypot(*chord))
        if length == 0.0:
            raise GeometryError("degenerate arc: coincident end points")
        nbar = _perp(chord) / length
        reach = max(length, 1e-12)

        def point(t):
            flat = np.atleast_1d(t).ravel()
            base = D + flat[:, None] * chord
            s = _project_along(self, base, nbar, reach)
            return (base + s[:, None] * nbar).reshape(np.shape(t) + (2,))

        def tangent(t):
            step = 1e-6
            lo = np.clip(np.asarray(t) - step, 0.0, 1.0)
            hi = np.clip(np.asarray(t) + step, 0.0, 1.0)
            return (point(hi) - point(lo)) / (hi - lo)[..., None]

        return Arc(point, tangent, D, E)


def _project_along(curve: InterfaceCurve, base: np.ndarray, direction: np.ndarray, reach: float) -> np.ndarray:
    """Offsets s with level(base + s*direction) = 0, vectorised over ``base``."""
    lo = np.full(len(base), -reach)
    hi = np.full(len(base), reach)
    f_lo = curve.level(base + lo[:, None] * direction)
    f_hi = curve.level(base + hi[:, None] * direction)
    for _ in range(8):
        bad = np.sign(f_lo) == np.sign(f_hi)
        if not bad.any():
            break
        lo[bad] *= 2.0
        hi[bad] *= 2.0
        f_lo = curve.level(base + lo[:, None] * direction)
        f_hi = curve.level(base + hi[:, None] * direction)
    else:
        raise GeometryError("could not bracket the interface along the projection line")
    return _bisect(lambda s: curve.level(base + s[:, None] * direction), lo, hi, f_lo)


def _bisect(fn, lo: np.ndarray, hi: np.ndarray, f_lo: np.ndarray) -> np.ndarray:
    lo = lo.copy()
    hi = hi.copy()
    f_lo = f_lo.copy()
    for _ in range(BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if np.all(np.abs(f_mid) <= LEVEL_TOL):
            return mid
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(left, mid, lo)
        f_lo = np.where(left, f_mid, f_lo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


class Circle(InterfaceCurve):
    def __init__(self, cx: float = 0.0, cy: float = 0.0, r: float = 0.5):
        if r <= 0:
            raise ValueError("radius must be positive")
        self.center = np.array([cx, cy], dtype=float)
        self.r = float(r)

    def level(self, X):
        X = np.asarray(X, dtype=float)
        return np.hypot(X[..., 0] - self.center[0], X[..., 1] - self.center[1]) - self.r

    def gradient(self, X):
        X = np.asarray(X, dtype=float)
        d = X - self.center
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    @property
    def kappa(self):
        return 1.0 / self.r

    @property
    def scale(self):
        return self.r

    def arc(self, D, E):
        c, r = self.center, self.r
        a0 = math.atan2(D[1] - c[1], D[0] - c[0])
        a1 = math.atan2(E[1] - c[1], E[0] - c[0])
        da = (a1 - a0 + math.pi) % (2.0 * math.pi) - math.pi

        def point(t):
            th = a0 + t * da
            return c + r * np.stack([np.cos(th), np.sin(th)], axis=-1)

        def tangent(t):
            th = a0 + t * da
            return r * da * np.stack([-np.sin(th), np.cos(th)], axis=-1)

        return Arc(point, tangent, D, E)

    def __repr__(self):
        return f"Circle(cx={self.center[0]}, cy={self.center[1]}, r={self.r})"


class Ellipse(InterfaceCurve):
    def __init__(self, cx: float = 0.0, cy: float = 0.0, a: float = 0.6, b: float = 0.4):
        if a <= 0 or b <= 0:
            raise ValueError("semi-axes must be positive")
        self.center = np.array([cx, cy], dtype=float)
        self.a = float(a)
        self.b = float(b)

    def level(self, X):
        X = np.asarray(X, dtype=float)
        u = (X[..., 0] - self.center[0]) / self.a
        v = (X[..., 1] - self.center[1]) / self.b
        return u * u + v * v - 1.0

    def gradient(self, X):
        X = np.asarray(X, dtype=float)
        gx = 2.0 * (X[..., 0] - self.center[0]) / self.a**2
        gy = 2.0 * (X[..., 1] - self.center[1]) / self.b**2
        return np.stack([gx, gy], axis=-1)

    @property
    def kappa(self):
        return max(self.a / self.b**2, self.b / self.a**2)

    @property
    def scale(self):
        return min(self.a, self.b)

    def arc(self, D, E):
        c, a, b = self.center, self.a, self.b
        t0 = math.atan2((D[1] - c[1]) / b, (D[0] - c[0]) / a)
        t1 = math.atan2((E[1] - c[1]) / b, (E[0] - c[0]) / a)
        dt = (t1 - t0 + math.pi) % (2.0 * math.pi) - math.pi

        def point(t):
            th = t0 + t * dt
            return c + np.stack([a * np.cos(th), b * np.sin(th)], axis=-1)

        def tangent(t):
            th = t0 + t * dt
            return dt * np.stack([-a * np.sin(th), b * np.cos(th)], axis=-1)

        return Arc(point, tangent, D, E)

    def __repr__(self):
        return f"Ellipse(cx={self.center[0]}, cy={self.center[1]}, a={self.a}, b={self.b})"


class LevelSetCurve(InterfaceCurve):
    """Interface given by an arbitrary vectorised level function; gradients by central differences."""

    def __init__(self, fn: Callable, kappa: float, h: float = 1.0, scale: float = 1.0):
        self._fn = fn
        self._kappa = float(kappa)
        self._step = 1e-7 * h
        self._scale = scale

    def level(self, X):
        return np.asarray(self._fn(np.asarray(X, dtype=float)), dtype=float)

    def gradient(self, X):
        X = np.asarray(X, dtype=float)
        ex = np.array([self._step, 0.0])
        ey = np.array([0.0, self._step])
        gx = (self.level(X + ex) - self.level(X - ex)) / (2 * self._step)
        gy = (self.level(X + ey) - self.level(X - ey)) / (2 * self._step)
        return np.stack([gx, gy], axis=-1)

    @property
    def kappa(self):
        return self._kappa

    @property
    def scale(self):
        return self._scale


class StraightLine(InterfaceCurve):
    """Line n.(X - P) = 0; the minus side is where n.(X - P) < 0."""

    def __init__(self, point, normal):
        n = np.asarray(normal, dtype=float)
        self.n = n / np.linalg.norm(n)
        self.p = np.asarray(point, dtype=float)

    def level(self, X):
        X = np.asarray(X, dtype=float)
        return (X - self.p) @ self.n

    def gradient(self, X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(self.n, X.shape).copy()

    @property
    def kappa(self):
        return 0.0

    def arc(self, D, E):
        D = np.asarray(D, dtype=float)
        E = np.asarray(E, dtype=float)

        def point(t):
            t = np.asarray(t)
            return D + t[..., None] * (E - D)

        def tangent(t):
            t = np.asarray(t)
            return np.broadcast_to(E - D, t.shape + (2,)).copy()

        return Arc(point, tangent, D, E)


def make_curve(name: str, **params) -> InterfaceCurve:
    """Build a curve from its configuration name: ``circle`` {cx, cy, r} or ``ellipse`` {cx, cy, a, b}."""
    name = name.lower()
    if name == "circle":
        return Circle(**params)
    if name == "ellipse":
        return Ellipse(**params)
    raise ValueError(f"unknown curve {name!r}")


def normal_at(curve: InterfaceCurve, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if abs(float(curve.level(X))) > 1e-10 * max(curve.scale, 1.0):
        raise GeometryError(f"point {X} is not on the interface")
    g = np.asarray(curve.gradient(X), dtype=float)
    nrm = math.hypot(g[0], g[1])
    if nrm == 0.0 or not np.isfinite(nrm):
        raise SingularLevelSet(f"zero level-set gradient at {X}")
    return g / nrm


def unit_normals(curve: InterfaceCurve, X) -> np.ndarray:
    """Vectorised normals without the on-curve check."""
    g = np.asarray(curve.gradient(X), dtype=float)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def edge_intersections(curve: InterfaceCurve, A, B, tol: float = 1e-10, samples: int = 16) -> list[np.ndarray]:
    """Points where the interface crosses segment AB, ordered from A to B.

    Sign changes of ``level > 0`` are searched on ``samples`` sub-intervals and refined
    by bisection in the segment parameter.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if np.array_equal(A, B):
        raise ValueError("degenerate segment")
    ts = np.linspace(0.0, 1.0, samples + 1)
    return [A + t * (B - A) for t in segment_roots(curve, A[None], B[None], ts)[0]]


def segment_roots(curve: InterfaceCurve, A: np.ndarray, B: np.ndarray, ts: np.ndarray) -> list[list[float]]:
    """Crossing parameters for many segments at once; A, B have shape (m, 2)."""
    pts = A[:, None, :] + ts[None, :, None] * (B - A)[:, None, :]
    plus = curve.level(pts) > 0.0
    change = plus[:, 1:] != plus[:, :-1]
    seg_idx, sub_idx = np.nonzero(change)
    roots: list[list[float]] = [[] for _ in range(len(A))]
    if len(seg_idx) == 0:
        return roots
    counts = np.bincount(seg_idx, minlength=len(A))
    if counts.max() > 2:
        bad = int(np.argmax(counts))
        raise H1Violation(f"segment {A[bad]}-{B[bad]} crosses the interface {counts[bad]} times; refine the mesh")
    a = A[seg_idx]
    d = (B - A)[seg_idx]
    lo = ts[sub_idx].astype(float)
    hi = ts[sub_idx + 1].astype(float)
    lo_plus = plus[seg_idx, sub_idx]
    for _ in range(BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        same = (curve.level(a + mid[:, None] * d) > 0.0) == lo_plus
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    t = 0.5 * (lo + hi)
    for k, tk in zip(seg_idx, t):
        roots[k].append(float(tk))
    return roots


@dataclass(frozen=True)
class CutLine:
    """Chord DE of an interface element with its unit normal (minus to plus) and tangent."""

    D: np.ndarray
    E: np.ndarray
    n_bar: np.ndarray
    t_bar: np.ndarray

    @classmethod
    def through(cls, D, E, orient) -> "CutLine":
        """Chord from D to E with the normal oriented along ``orient``."""
        D = np.asarray(D, dtype=float)
        E = np.asarray(E, dtype=float)
        chord = E - D
        length = math.hypot(chord[0], chord[1])
        if length == 0.0:
            raise GeometryError("intersection points coincide")
        n = np.array([-chord[1], chord[0]]) / length
        if float(n @ np.asarray(orient, dtype=float)) < 0.0:
            n = -n
        return cls(D, E, n, _perp(n))

    def L(self, X):
        X = np.asarray(X, dtype=float)
        return (X - self.D) @ self.n_bar

    @property
    def midpoint(self):
        return 0.5 * (self.D + self.E)

    @property
    def length(self):
        return float(np.linalg.norm(self.E - self.D))


def foot_of_perpendicular(X, line: CutLine) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X - line.L(X)[..., None] * line.n_bar if np.ndim(X) > 1 else X - line.L(X) * line.n_bar


def jump_matrices(n, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Matrices mapping one-sided gradients across the interface at a point with normal ``n``.

    ``M_minus @ grad(u-) = grad(u+)`` and ``M_plus @ grad(u+) = grad(u-)`` with
    ``rho = beta-/beta+``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    nx, ny = float(n[0]), float(n[1])
    off = (rho - 1.0) * nx * ny
    m_minus = np.array([[ny * ny + rho * nx * nx, off], [off, nx * nx + rho * ny * ny]])
    r = 1.0 / rho
    off = (r - 1.0) * nx * ny
    m_plus = np.array([[ny * ny + r * nx * nx, off], [off, nx * nx + r * ny * ny]])
    return m_minus, m_plus


def line_jump_matrices(n_bar, nF, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Jump matrices mixing the chord normal with the curve normal at the flux point."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    n_bar = np.asarray(n_bar, dtype=float)
    nF = np.asarray(nF, dtype=float)
    cos = float(n_bar @ nF)
    if cos <= 0.0:
        raise GeometryError(f"near-tangential cut: n_bar . n(F) = {cos:.3e}")
    # N^s rows: chord tangent, beta^s * curve normal; beta scales cancel to rho
    N_minus = np.array([[n_bar[1], -n_bar[0]], [rho * nF[0], rho * nF[1]]])
    N_plus = np.array([[n_bar[1], -n_bar[0]], [nF[0], nF[1]]])
    mbar_minus = np.linalg.solve(N_plus, N_minus)
    mbar_plus = np.linalg.solve(N_minus, N_plus)
    return mbar_minus, mbar_plus


def gradient_jump_apply(M, g) -> np.ndarray:
    return np.asarray(M, dtype=float) @ np.asarray(g, dtype=float)


class FluxPointMode(enum.Enum):
    TANGENT_PARALLEL = "tangent_parallel"
    MIDPOINT_FOOT = "midpoint_foot"


def find_flux_point(curve: InterfaceCurve, cut: CutLine, mode: FluxPointMode) -> tuple[np.ndarray, np.ndarray]:
    """Flux point F on the cut arc and the curve normal there."""
    if mode is FluxPointMode.MIDPOINT_FOOT:
        base = cut.midpoint[None, :]
        s = _project_along(curve, base, cut.n_bar, max(cut.length, 1e-14))
        F = base[0] + s[0] * cut.n_bar
    elif mode is FluxPointMode.TANGENT_PARALLEL:
        arc = curve.arc(cut.D, cut.E)
        tb = cut.t_bar

        def g(t):
            return unit_normals(curve, arc.point(t)) @ tb

        lo, hi = np.array([0.0]), np.array([1.0])
        g_lo, g_hi = g(lo), g(hi)
        if max(abs(g_lo[0]), abs(g_hi[0])) <= 1e-12:
            # straight arc: every point qualifies
            F = arc.point(0.5)
        elif abs(g_lo[0]) <= 1e-15:
            F = arc.point(0.0)
        elif abs(g_hi[0]) <= 1e-15:
            F = arc.point(1.0)
        else:
            if np.sign(g_lo[0]) == np.sign(g_hi[0]):
                raise GeometryError("flux point search failed to bracket a tangent parallel to the chord")
            for _ in range(BISECTION_ITERS):
                mid = 0.5 * (lo + hi)
                gm = g(mid)
                left = np.sign(gm) == np.sign(g_lo)
                lo = np.where(left, mid, lo)
                g_lo = np.where(left, gm, g_lo)
                hi = np.where(left, hi, mid)
                if hi[0] - lo[0] < 1e-15:
                    break
            F = arc.point(0.5 * (lo[0] + hi[0]))
    else:
        raise ValueError(mode)
    nF = unit_normals(curve, F)
    return np.asarray(F, dtype=float), nF


def projection_bound(kappa: float, h: float, epsilon: float) -> float:
    """Upper bound for the distance from an arc point to the chord."""
    return 2.0 * (1.0 - 2.0 * epsilon**2) ** -1.5 * kappa * h * h


def normal_variation_bound(kappa: float, h: float, epsilon: float) -> float:
    """Upper bound for |n(X1) - n(X2)| over one interface element."""
    return math.sqrt(2.0) * (1.0 + (1.0 - 2.0 * epsilon**2) ** -1.5) * kappa * h
