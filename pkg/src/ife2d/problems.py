"""Manufactured interface problems with closed-form solutions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Circle

DEFAULT_R0 = math.pi / 6.28


@dataclass(frozen=True)
class CircleProblem:
    """``u = r**alpha / beta`` inside the circle, shifted outside so that ``u`` is continuous.

    Both pieces satisfy ``beta * grad(u) . n`` continuity on the circle, and
    ``-div(beta grad u) = -alpha**2 r**(alpha-2)`` on each side.
    """

    beta_minus: float
    beta_plus: float
    r0: float = DEFAULT_R0
    alpha: float = 5.0
    cx: float = 0.0
    cy: float = 0.0

    @property
    def curve(self) -> Circle:
        return Circle(self.cx, self.cy, self.r0)

    def _r(self, X):
        X = np.asarray(X, dtype=float)
        return np.hypot(X[..., 0] - self.cx, X[..., 1] - self.cy)

    def u_minus(self, X):
        return self._r(X) ** self.alpha / self.beta_minus

    def u_plus(self, X):
        shift = (1.0 / self.beta_minus - 1.0 / self.beta_plus) * self.r0**self.alpha
        return self._r(X) ** self.alpha / self.beta_plus + shift

    def _grad(self, X, beta):
        X = np.asarray(X, dtype=float)
        d = np.stack([X[..., 0] - self.cx, X[..., 1] - self.cy], axis=-1)
        r = np.hypot(d[..., 0], d[..., 1])
        return (self.alpha / beta) * (r ** (self.alpha - 2.0))[..., None] * d

    def grad_minus(self, X):
        return self._grad(X, self.beta_minus)

    def grad_plus(self, X):
        return self._grad(X, self.beta_plus)

    def f(self, X):
        return -(self.alpha**2) * self._r(X) ** (self.alpha - 2.0)

    @property
    def u(self):
        return (self.u_minus, self.u_plus)

    @property
    def grad(self):
        return (self.grad_minus, self.grad_plus)

    def u_at(self, X):
        X = np.asarray(X, dtype=float)
        return np.where(self.curve.level(X) <= 0.0, self.u_minus(X), self.u_plus(X))
