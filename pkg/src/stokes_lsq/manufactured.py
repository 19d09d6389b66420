"""Closed-form scalar functions with exact derivatives for manufactured solutions.

Every function exposes ``derivative(x, alpha)`` returning the physical partial
derivative ``D^alpha`` at points ``x`` of shape ``(dim, npts)``. Polynomials
are differentiated exactly from their monomial table; separable trigonometric
products and the one non-separable pressure used by the bench have their
derivatives written out by hand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .spectral import multi_indices


class ScalarFunction:
    dim: int

    def derivative(self, x, alpha) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return self.derivative(x, (0,) * self.dim)

    def __add__(self, other):
        return FunctionSum((self, other))


@dataclass(frozen=True)
class FunctionSum(ScalarFunction):
    parts: tuple

    @property
    def dim(self):
        return self.parts[0].dim

    def derivative(self, x, alpha):
        return sum(p.derivative(x, alpha) for p in self.parts)


class Poly(ScalarFunction):
    """Multivariate polynomial as ``{exponents: coefficient}``."""

    def __init__(self, dim: int, terms=None):
        self.dim = dim
        self.terms = {k: float(v) for k, v in (terms or {}).items() if v != 0.0}

    @classmethod
    def var(cls, k: int, dim: int) -> "Poly":
        e = [0] * dim
        e[k] = 1
        return cls(dim, {tuple(e): 1.0})

    @classmethod
    def const(cls, c: float, dim: int) -> "Poly":
        return cls(dim, {(0,) * dim: float(c)})

    def _lift(self, other):
        return other if isinstance(other, Poly) else Poly.const(other, self.dim)

    def __add__(self, other):
        if not isinstance(other, (Poly, int, float)):
            return FunctionSum((self, other))
        other = self._lift(other)
        acc = dict(self.terms)
        for k, v in other.terms.items():
            acc[k] = acc.get(k, 0.0) + v
        return Poly(self.dim, acc)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.dim, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        acc = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                acc[k] = acc.get(k, 0.0) + v1 * v2
        return Poly(self.dim, acc)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = Poly.const(1.0, self.dim)
        for _ in range(n):
            out = out * self
        return out

    @property
    def degrees(self) -> tuple:
        """Maximum exponent per variable."""
        return tuple(max((k[i] for k in self.terms), default=0) for i in range(self.dim))

    def derivative(self, x, alpha):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[1])
        for k, c in self.terms.items():
            coef = c
            for e, a in zip(k, alpha):
                if a > e:
                    coef = 0.0
                    break
                coef *= math.perm(e, a)
            if coef == 0.0:
                continue
            term = np.full(x.shape[1], coef)
            for i, (e, a) in enumerate(zip(k, alpha)):
                if e - a:
                    term = term * x[i] ** (e - a)
            out += term
        return out


def poly_vars(dim: int):
    return [Poly.var(k, dim) for k in range(dim)]


@dataclass(frozen=True)
class TrigProduct(ScalarFunction):
    """``coef * prod_k f_k(freq * x_k)`` with ``f_k`` in ``{"sin", "cos", "1"}``."""

    coef: float
    kinds: tuple
    freq: float = math.pi

    @property
    def dim(self):
        return len(self.kinds)

    @staticmethod
    def _factor(kind, t, order, w):
        if kind == "1":
            return np.ones_like(t) if order == 0 else np.zeros_like(t)
        # d^m sin = w^m sin(t + m pi/2), likewise cos
        shift = order * math.pi / 2.0
        base = np.sin if kind == "sin" else np.cos
        return w ** order * base(w * t + shift)

    def derivative(self, x, alpha):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[1], self.coef)
        for k, kind in enumerate(self.kinds):
            out = out * self._factor(kind, x[k], alpha[k], self.freq)
        return out


@dataclass(frozen=True)
class CosExpPressure(ScalarFunction):
    """``cos(pi x1) exp(x1 x2)`` with derivatives up to order two."""

    dim: int = 2

    def derivative(self, x, alpha):
        x1, x2 = np.asarray(x, dtype=float)
        pi = math.pi
        e = np.exp(x1 * x2)
        c, s = np.cos(pi * x1), np.sin(pi * x1)
        table = {
            (0, 0): c * e,
            (1, 0): e * (x2 * c - pi * s),
            (0, 1): e * x1 * c,
            (2, 0): e * ((x2 ** 2 - pi ** 2) * c - 2 * pi * x2 * s),
            (1, 1): e * ((1 + x1 * x2) * c - pi * x1 * s),
            (0, 2): e * x1 ** 2 * c,
        }
        key = tuple(alpha)
        if key not in table:
            raise ValueError(f"derivative {key} not available")
        return table[key]


@dataclass(frozen=True)
class ExactSolution:
    """Velocity components and pressure of a manufactured Stokes solution."""

    velocity: tuple
    pressure: ScalarFunction

    @property
    def dim(self) -> int:
        return len(self.velocity)

    @property
    def fields(self) -> tuple:
        return tuple(self.velocity) + (self.pressure,)

    def jet(self, x, max_order: int = 2) -> dict:
        """``{(field, alpha): values}`` for all fields and ``|alpha| <= max_order``."""
        out = {}
        for f, fn in enumerate(self.fields):
            for alpha in multi_indices(self.dim, max_order):
                out[(f, alpha)] = fn.derivative(x, alpha)
        return out

    def u(self, x) -> np.ndarray:
        return np.array([c(x) for c in self.velocity])

    def p(self, x) -> np.ndarray:
        return self.pressure(x)

    def grad_u(self, x) -> np.ndarray:
        """``G[i, j] = du_i/dx_j`` at the points, shape ``(dim, dim, npts)``."""
        eye = np.eye(self.dim, dtype=int)
        return np.array([[c.derivative(x, tuple(eye[j])) for j in range(self.dim)] for c in self.velocity])

    def source(self, x) -> np.ndarray:
        """``f = -Lap u + grad p``."""
        eye = np.eye(self.dim, dtype=int)
        out = []
        for i, c in enumerate(self.velocity):
            lap = sum(c.derivative(x, tuple(2 * eye[k])) for k in range(self.dim))
            out.append(-lap + self.pressure.derivative(x, tuple(eye[i])))
        return np.array(out)

    def divergence_data(self, x) -> np.ndarray:
        """``chi = -div u``."""
        g = self.grad_u(x)
        return -np.trace(g, axis1=0, axis2=1)


def finite_difference_check(fn: ScalarFunction, x: np.ndarray, alpha: Sequence[int], step: float = 1e-5):
    """Central-difference approximation of ``D^alpha fn`` built from lower orders."""
    alpha = list(alpha)
    k = next(i for i, a in enumerate(alpha) if a > 0)
    lower = alpha.copy()
    lower[k] -= 1
    e = np.zeros((fn.dim, 1))
    e[k] = step
    return (fn.derivative(x + e, tuple(lower)) - fn.derivative(x - e, tuple(lower))) / (2 * step)
