"""Immersed finite element shape functions and the global IFE interpolation operator.

On an interface element the IFE function is a pair of polynomials in the same local
space.  The pair agrees on the chord ``l`` (it differs by a multiple of ``L``), has
matching second-degree coefficients by construction, and satisfies a flux condition
at the flux point ``F``.  The free coefficients follow from a rank-one system solved
in closed form with the Sherman-Morrison formula.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, TextIO

import numpy as np

from .geometry import line_jump_matrices
from .local_fe import LocalPoly, PolySpaceTag, monomial_grads, monomials, shape_coefficients
from .mesh import CartesianMesh, Classification, InterfaceElementData

MARGIN_TOL = 1e-8
DEFAULT_LAMBDA = 0.5


class UnisolvenceMargin(ArithmeticError):
    """The rank-one system ``I + mu*delta*gamma^T`` is (numerically) singular."""

    def __init__(self, denom: float, element: int | None = None):
        self.denom = denom
        self.element = element
        where = f" on element {element}" if element is not None else ""
        super().__init__(f"unisolvence margin lost{where}: 1 + mu*gamma.delta = {denom:.3e}")


class ConfigurationError(ValueError):
    """Parameters outside the range where the IFE space is known to be unisolvent."""


def q1_precondition(kappa_bar: float) -> bool:
    return math.sqrt(kappa_bar) < 1.0 / (4.0 * math.sqrt(2.0))


def rq1_kappa_bar_limit(rho: float, lam: float) -> float:
    """Largest admissible ``sqrt(kappa_bar)`` for rotated Q1 at contrast ``rho <= 1``."""
    return rho * (1.0 - lam) / (4.0 - (3.0 + lam) * rho)


def check_unisolvence_precondition(tag: PolySpaceTag, beta_minus: float, beta_plus: float,
                                   kappa_bar: float = 0.031, lam: float = DEFAULT_LAMBDA) -> None:
    tag = PolySpaceTag.parse(tag)
    if tag is PolySpaceTag.Q1 and not q1_precondition(kappa_bar):
        raise ConfigurationError(
            f"Q1 needs sqrt(kappa_bar) < 1/(4*sqrt(2)); got kappa_bar={kappa_bar}")
    if tag is PolySpaceTag.RQ1:
        if not 0.0 <= lam < 1.0:
            raise ConfigurationError("lambda must lie in [0, 1)")
        rho = min(beta_minus, beta_plus) / max(beta_minus, beta_plus)
        limit = rq1_kappa_bar_limit(rho, lam)
        if math.sqrt(kappa_bar) > limit:
            raise ConfigurationError(
                f"RQ1 at rho={rho:.3g}, lambda={lam} needs kappa_bar <= {limit**2:.3e}; got {kappa_bar}")


@dataclass(frozen=True, eq=False)
class SMSystem:
    """Data of the rank-one system on the non-expansion side ``I_o``."""

    expansion_side: int  # +1 or -1
    I_e: tuple[int, ...]
    I_o: tuple[int, ...]
    gamma_all: np.ndarray  # grad psi_i(F) . n(F) for every local node
    delta_all: np.ndarray  # L(M_i) for every local node
    mu: float

    @property
    def gamma(self) -> np.ndarray:
        return self.gamma_all[list(self.I_o)]

    @property
    def delta(self) -> np.ndarray:
        return self.delta_all[list(self.I_o)]

    @property
    def denom(self) -> float:
        return 1.0 + self.mu * float(self.gamma @ self.delta)

    def rhs(self, v: np.ndarray) -> np.ndarray:
        """``b`` for nodal value vectors ``v`` of shape (..., k)."""
        v = np.asarray(v, dtype=float)
        w = v[..., list(self.I_e)] @ self.gamma_all[list(self.I_e)]
        return v[..., list(self.I_o)] - self.mu * w[..., None] * self.delta

    def sherman_morrison(self, b: np.ndarray) -> np.ndarray:
        g, d = self.gamma, self.delta
        return b - self.mu * (b @ g)[..., None] * d / self.denom

    def dense_matrix(self) -> np.ndarray:
        m = len(self.I_o)
        return np.eye(m) + self.mu * np.outer(self.delta, self.gamma)


def build_sm_system(data: InterfaceElementData, beta_minus: float, beta_plus: float,
                    psi: np.ndarray | None = None) -> SMSystem:
    tag = data.tag
    if psi is None:
        psi, origin, scale = shape_coefficients(data.vertices, tag)
    else:
        origin, scale = psi[1], psi[2]
        psi = psi[0]
    xi_F = (data.F - origin) / scale
    grads = np.einsum("kd,ik->id", monomial_grads(tag.quad, xi_F), psi) / scale
    gamma_all = grads @ data.nF
    delta_all = data.cut.L(data.nodes)
    if len(data.I_plus) >= len(data.I_minus):
        side, I_e, I_o = 1, data.I_plus, data.I_minus
        ratio = beta_plus / beta_minus
    else:
        side, I_e, I_o = -1, data.I_minus, data.I_plus
        ratio = beta_minus / beta_plus
    cos = float(data.cut.n_bar @ data.nF)
    mu = (ratio - 1.0) / cos
    return SMSystem(side, tuple(I_e), tuple(I_o), gamma_all, delta_all, mu)


@dataclass(frozen=True, eq=False)
class IFEBasis:
    data: InterfaceElementData
    beta_minus: float
    beta_plus: float
    sm: SMSystem
    coef_minus: np.ndarray  # (k, 4) in the element frame
    coef_plus: np.ndarray
    c0: np.ndarray  # (k,), p_minus - p_plus = c0 * L
    c: np.ndarray  # (k, |I_o|)
    origin: np.ndarray
    scale: float

    @property
    def tag(self) -> PolySpaceTag:
        return self.data.tag

    @property
    def element(self) -> int:
        return self.data.element

    @property
    def dof(self) -> int:
        return len(self.coef_minus)

    def piece(self, i: int, side: int) -> LocalPoly:
        coef = self.coef_minus[i] if side < 0 else self.coef_plus[i]
        return LocalPoly(coef.copy(), self.tag.quad, self.origin, self.scale)

    def minus(self, i: int) -> LocalPoly:
        return self.piece(i, -1)

    def plus(self, i: int) -> LocalPoly:
        return self.piece(i, +1)

    def side_of(self, X) -> np.ndarray:
        return np.where(self.data.curve.level(X) <= 0.0, -1, 1)

    def values(self, X, side=None) -> np.ndarray:
        """All shape function values at ``X``; shape ``X.shape[:-1] + (k,)``."""
        X = np.asarray(X, dtype=float)
        side = self.side_of(X) if side is None else np.broadcast_to(side, X.shape[:-1])
        mono = monomials(self.tag.quad, (X - self.origin) / self.scale)
        vm = mono @ self.coef_minus.T
        vp = mono @ self.coef_plus.T
        return np.where(np.asarray(side)[..., None] < 0, vm, vp)

    def grads(self, X, side=None) -> np.ndarray:
        """All shape function gradients; shape ``X.shape[:-1] + (k, 2)``."""
        X = np.asarray(X, dtype=float)
        side = self.side_of(X) if side is None else np.broadcast_to(side, X.shape[:-1])
        mg = monomial_grads(self.tag.quad, (X - self.origin) / self.scale)
        gm = np.einsum("...md,km->...kd", mg, self.coef_minus) / self.scale
        gp = np.einsum("...md,km->...kd", mg, self.coef_plus) / self.scale
        return np.where(np.asarray(side)[..., None, None] < 0, gm, gp)

    def line_coef(self) -> np.ndarray:
        n = self.data.cut.n_bar
        return np.array([float(n @ (self.origin - self.data.D)), self.scale * n[0], self.scale * n[1], 0.0])


def build_ife_basis(data: InterfaceElementData, tag: PolySpaceTag | str | None, beta_minus: float, beta_plus: float,
                    kappa_bar: float | None = 0.031, lam: float = DEFAULT_LAMBDA) -> IFEBasis:
    """IFE shape functions on one interface element.

    ``kappa_bar=None`` skips the family precondition check (the numerical margin on
    ``1 + mu*gamma.delta`` is still enforced).
    """
    tag = data.tag if tag is None else PolySpaceTag.parse(tag)
    if tag is not data.tag:
        raise ValueError(f"element data was classified for {data.tag.name}, not {tag.name}")
    if beta_minus <= 0 or beta_plus <= 0:
        raise ValueError("coefficients must be positive")
    if kappa_bar is not None:
        check_unisolvence_precondition(tag, beta_minus, beta_plus, kappa_bar, lam)
    psi, origin, scale = shape_coefficients(data.vertices, tag)
    sm = build_sm_system(data, beta_minus, beta_plus, (psi, origin, scale))
    denom = sm.denom
    if abs(denom) < MARGIN_TOL:
        raise UnisolvenceMargin(denom, data.element)

    k = len(psi)
    V = np.eye(k)
    I_e, I_o = list(sm.I_e), list(sm.I_o)
    # Closed form of the Sherman-Morrison solution: gamma.c = gamma.b/denom turns the
    # flux relation for c0 into mu*(gamma_all.v)/denom, and c = v_o - c0*delta.  The
    # result equals sm.sherman_morrison(sm.rhs(v)) but does not amplify its rounding by mu.
    c0e = sm.mu * (V @ sm.gamma_all) / denom
    c = V[:, I_o] - np.outer(c0e, sm.delta)
    coef_e = c @ psi[I_o] + V[:, I_e] @ psi[I_e]
    n = data.cut.n_bar
    lcoef = np.array([float(n @ (origin - data.D)), scale * n[0], scale * n[1], 0.0])
    coef_o = coef_e + np.outer(c0e, lcoef)
    if sm.expansion_side > 0:
        coef_plus, coef_minus, c0 = coef_e, coef_o, c0e
    else:
        coef_minus, coef_plus, c0 = coef_e, coef_o, -c0e
    return IFEBasis(data, float(beta_minus), float(beta_plus), sm, coef_minus, coef_plus, c0, c, origin, scale)


def eval_ife(basis: IFEBasis, i: int, X):
    return basis.values(X)[..., i]


def grad_ife(basis: IFEBasis, i: int, X):
    return basis.grads(X)[..., i, :]


class LambdaResidual(NamedTuple):
    value: np.ndarray  # (..., 2)
    derivative: np.ndarray  # (..., 2, 2); [..., a, d] = d/dx_d of component a


def lambda_residual(basis: IFEBasis, X, Xbar=None) -> LambdaResidual:
    """Residuals of the vector identities reproducing position on each piece.

    ``Xbar`` holds one point of ``l`` per local node (default: ``D`` for all).
    """
    data = basis.data
    X = np.asarray(X, dtype=float)
    k = basis.dof
    if Xbar is None:
        Xbar = np.broadcast_to(data.D, (k, 2))
    Xbar = np.asarray(Xbar, dtype=float)
    rho = basis.beta_minus / basis.beta_plus
    mbar_minus, mbar_plus = line_jump_matrices(data.cut.n_bar, data.nF, rho)
    side = basis.side_of(X)
    phi = basis.values(X, side)  # (..., k)
    dphi = basis.grads(X, side)  # (..., k, 2)
    M = data.nodes

    # correction vectors: (Mbar - I)^T (M_i - Xbar_i) on the opposite index set
    corr_minus = np.zeros((k, 2))
    corr_plus = np.zeros((k, 2))
    for i in data.I_plus:
        corr_minus[i] = (mbar_minus - np.eye(2)).T @ (M[i] - Xbar[i])
    for i in data.I_minus:
        corr_plus[i] = (mbar_plus - np.eye(2)).T @ (M[i] - Xbar[i])
    corr = np.where(np.asarray(side)[..., None, None] < 0, corr_minus, corr_plus)  # (..., k, 2)

    value = np.einsum("...k,...ka->...a", phi, M + corr) - X * phi.sum(axis=-1)[..., None]
    deriv = np.einsum("...kd,...ka->...ad", dphi, M + corr)
    deriv = deriv - X[..., :, None] * dphi.sum(axis=-2)[..., None, :] - np.eye(2) * phi.sum(axis=-1)[..., None, None]
    return LambdaResidual(value, deriv)


# ---------------------------------------------------------------------------
# global space


def node_coordinates(mesh: CartesianMesh, tag: PolySpaceTag) -> np.ndarray:
    if tag.edge_nodes:
        return mesh.edge_midpoints()
    return mesh.vertices


def element_dofs(mesh: CartesianMesh, tag: PolySpaceTag) -> np.ndarray:
    return mesh.element_edges if tag.edge_nodes else mesh.elements


def boundary_dofs(mesh: CartesianMesh, tag: PolySpaceTag) -> np.ndarray:
    return mesh.boundary_edges if tag.edge_nodes else mesh.boundary_vertices


class IFESpace:
    """Global IFE space: standard shapes away from the interface, IFE shapes on interface elements."""

    def __init__(self, classification: Classification, beta_minus: float, beta_plus: float,
                 kappa_bar: float | None = 0.031, lam: float = DEFAULT_LAMBDA):
        self.cls = classification
        self.mesh = classification.mesh
        self.tag = classification.tag
        self.beta_minus = float(beta_minus)
        self.beta_plus = float(beta_plus)
        if kappa_bar is not None:
            check_unisolvence_precondition(self.tag, beta_minus, beta_plus, kappa_bar, lam)
        self.bases: dict[int, IFEBasis] = {
            e: build_ife_basis(d, self.tag, beta_minus, beta_plus, kappa_bar=None)
            for e, d in classification.interface.items()
        }
        self.dofs = element_dofs(self.mesh, self.tag)
        self.nodes = node_coordinates(self.mesh, self.tag)
        self.n_dofs = len(self.nodes)

    def beta(self, side) -> np.ndarray:
        return np.where(np.asarray(side) < 0, self.beta_minus, self.beta_plus)

    def standard_template(self, e: int) -> tuple[np.ndarray, np.ndarray, float]:
        return shape_coefficients(self.mesh.element_vertices(e), self.tag)

    def element_values(self, e: int, X, side) -> tuple[np.ndarray, np.ndarray]:
        """Shape values (q, k) and gradients (q, k, 2) of element ``e`` on side ``side``."""
        if e in self.bases:
            b = self.bases[e]
            return b.values(X, side), b.grads(X, side)
        psi, origin, scale = self.standard_template(e)
        xi = (np.asarray(X, dtype=float) - origin) / scale
        vals = monomials(self.tag.quad, xi) @ psi.T
        grads = np.einsum("...md,km->...kd", monomial_grads(self.tag.quad, xi), psi) / scale
        return vals, grads

    def side_values(self, u_minus: Callable, u_plus: Callable, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        minus = self.cls.curve.level(X) <= 0.0
        out = np.empty(X.shape[:-1])
        if minus.any():
            out[minus] = u_minus(X[minus])
        if (~minus).any():
            out[~minus] = u_plus(X[~minus])
        return out

    def interpolate(self, u_minus: Callable, u_plus: Callable) -> np.ndarray:
        return self.side_values(u_minus, u_plus, self.nodes)


def interpolate(u_pair, space: IFESpace) -> np.ndarray:
    """Nodal coefficient vector of the IFE interpolant of ``(u_minus, u_plus)``."""
    return space.interpolate(*u_pair)


def _fmt(v) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(v))


def dump_bases(space: IFESpace, out: TextIO) -> None:
    """Per interface element: gamma, delta, mu, denom and per-function c, c0."""
    for e in sorted(space.bases):
        b = space.bases[e]
        sm = b.sm
        out.write(
            f"ife {e} side {'plus' if sm.expansion_side > 0 else 'minus'} mu {sm.mu!r} denom {sm.denom!r} "
            f"gamma {_fmt(sm.gamma) or '-'} delta {_fmt(sm.delta) or '-'}\n"
        )
        for i in range(b.dof):
            out.write(f"ifefn {e} {i} c0 {b.c0[i]!r} c {_fmt(b.c[i]) or '-'}\n")
