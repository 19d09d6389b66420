"""Linear differential operators on (u, p) as constant-coefficient stencils.

An :class:`Op` is a finite sum ``sum c * D^alpha field`` where ``field`` is a
velocity component (``0 .. dim-1``) or the pressure (``dim``). Because element
maps are affine and faces axis-aligned, every operator the least-squares
functional needs has constant coefficients per locus, so it is represented
exactly by this table and is linear by construction.

The vector helpers (``dot``, ``cross_n``, ``tangential`` ...) only use ``+``,
``-`` and scalar ``*`` and therefore work on lists of :class:`Op` as well as
on lists of numpy arrays (for boundary data).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np


@dataclass(frozen=True)
class Op:
    terms: tuple = ()  # sorted ((field, alpha, coef), ...), no zero coefficients

    @staticmethod
    def _make(acc: dict) -> "Op":
        return Op(tuple(sorted((f, a, c) for (f, a), c in acc.items() if c != 0.0)))

    @classmethod
    def field(cls, index: int, dim: int) -> "Op":
        return cls(((index, (0,) * dim, 1.0),))

    def _acc(self) -> dict:
        return {(f, a): c for f, a, c in self.terms}

    def __add__(self, other):
        if isinstance(other, (int, float)) and other == 0:
            return self
        if not isinstance(other, Op):
            return NotImplemented
        acc = self._acc()
        for f, a, c in other.terms:
            acc[(f, a)] = acc.get((f, a), 0.0) + c
        return Op._make(acc)

    __radd__ = __add__

    def __neg__(self):
        return Op(tuple((f, a, -c) for f, a, c in self.terms))

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        if isinstance(s, Op):
            return NotImplemented
        s = float(s)
        if s == 0.0:
            return Op()
        return Op(tuple((f, a, c * s) for f, a, c in self.terms))

    __rmul__ = __mul__

    def d(self, axis: int) -> "Op":
        """Partial derivative along physical axis ``axis``."""
        acc = {}
        for f, a, c in self.terms:
            b = list(a)
            b[axis] += 1
            acc[(f, tuple(b))] = acc.get((f, tuple(b)), 0.0) + c
        return Op._make(acc)

    @property
    def fields(self) -> set:
        return {f for f, _, _ in self.terms}

    @property
    def max_order(self) -> int:
        return max((sum(a) for _, a, _ in self.terms), default=0)

    def apply(self, jet: Mapping) -> np.ndarray:
        """Evaluate on a jet ``{(field, alpha): values}``."""
        out = 0.0
        for f, a, c in self.terms:
            out = out + c * np.asarray(jet[(f, a)])
        return out

    def is_zero(self) -> bool:
        return not self.terms


Stencil = tuple  # tuple of Op, one per output component


def apply_stencil(stencil, jet: Mapping, npts: int) -> np.ndarray:
    out = np.zeros((len(stencil), npts))
    for c, op in enumerate(stencil):
        out[c] = op.apply(jet) if op.terms else 0.0
    return out


# --- building blocks -------------------------------------------------------

def velocity(dim: int) -> list:
    return [Op.field(i, dim) for i in range(dim)]


def pressure(dim: int) -> Op:
    return Op.field(dim, dim)


def grad_u(dim: int) -> list:
    """``G[i][j] = du_i/dx_j``."""
    u = velocity(dim)
    return [[u[i].d(j) for j in range(dim)] for i in range(dim)]


def momentum(dim: int) -> list:
    """``-Lap u + grad p``."""
    u, p = velocity(dim), pressure(dim)
    return [sum((-u[i].d(k).d(k) for k in range(dim)), Op()) + p.d(i) for i in range(dim)]


def continuity(dim: int) -> list:
    """``-div u`` as a one-component stencil."""
    u = velocity(dim)
    return [-sum((u[k].d(k) for k in range(dim)), Op())]


def strain_rate(dim: int) -> list:
    """``e_ij(u) = du_i/dx_j + du_j/dx_i`` (twice the strain tensor)."""
    g = grad_u(dim)
    return [[g[i][j] + g[j][i] for j in range(dim)] for i in range(dim)]


def curl(dim: int) -> list:
    """Scalar vorticity in 2D, full curl vector in 3D."""
    g = grad_u(dim)
    if dim == 2:
        return [g[1][0] - g[0][1]]
    return [g[2][1] - g[1][2], g[0][2] - g[2][0], g[1][0] - g[0][1]]


def dot(vec, n) -> object:
    return sum((vec[i] * n[i] for i in range(len(n)) if n[i] != 0.0), 0)


def matvec(mat, n) -> list:
    return [dot(row, n) for row in mat]


def tangential(vec, frame) -> list:
    """Components of ``vec`` along the face tangents (one per tangent)."""
    return [dot(vec, t) for t in frame.tangents]


def cross_n(vec, frame) -> list:
    """``v x n``: the scalar ``v1 n2 - v2 n1`` in 2D, tangential components in 3D."""
    n = frame.normal
    if len(n) == 2:
        return [vec[0] * n[1] - vec[1] * n[0]]
    c = [vec[1] * n[2] - vec[2] * n[1],
         vec[2] * n[0] - vec[0] * n[2],
         vec[0] * n[1] - vec[1] * n[0]]
    return tangential(c, frame)


def curl_cross_n(frame) -> list:
    """``(curl u) x n``: vorticity (the tangent component) in 2D, tangential
    components of the vector in 3D."""
    dim = len(frame.normal)
    w = curl(dim)
    if dim == 2:
        return w
    return cross_n(w, frame)


def curl_tangential(frame) -> list:
    """``n x ((curl u) x n)`` = tangential curl; the vorticity itself in 2D."""
    dim = len(frame.normal)
    w = curl(dim)
    if dim == 2:
        return w
    return tangential(w, frame)


def traction(frame) -> list:
    """Stress vector ``sigma(u, p) = (-p I + e(u)) n``."""
    dim = len(frame.normal)
    e = strain_rate(dim)
    p = pressure(dim)
    n = frame.normal
    return [dot(e[i], n) - p * n[i] for i in range(dim)]


def sigma_n(frame) -> list:
    return [dot(traction(frame), frame.normal)]


def sigma_tau(frame) -> list:
    return tangential(traction(frame), frame)


def normal_derivative(frame) -> list:
    """``(grad u) n = du/dn``."""
    dim = len(frame.normal)
    return matvec(grad_u(dim), frame.normal)


def data_curl_cross_n(k, frame) -> list:
    """``k x n`` for vorticity-type data (scalar in 2D, vector in 3D)."""
    if len(frame.normal) == 2:
        return [k[0]]
    return cross_n(k, frame)


def data_curl_tangential(k, frame) -> list:
    if len(frame.normal) == 2:
        return [k[0]]
    return tangential(k, frame)
