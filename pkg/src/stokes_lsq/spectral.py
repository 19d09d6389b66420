"""Tensor-product Legendre spectral elements.

Each element carries degree-``W`` polynomials per variable for every velocity
component and for the pressure. Coefficients live in the Legendre basis
``P_k``; this spans the same space as the monomials ``xi^i eta^j`` but keeps
Gram matrices well conditioned at high degree.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np
from numpy.polynomial import legendre as npleg

from .geometry import Decomposition, face_points_reference, inverse_map

MAX_DERIVATIVE = 2


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def npoints(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=None)
def gauss_rule(n: int) -> QuadratureRule:
    """Gauss-Legendre rule on (-1, 1), exact up to degree ``2n - 1``."""
    if n < 1:
        raise ValueError("a Gauss rule needs at least one point")
    x, w = npleg.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w)


def tensor_rule(n: int, dim: int):
    """Tensor Gauss points (shape ``(dim, n**dim)``, C order) and weights."""
    rule = gauss_rule(n)
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids])
    w = rule.weights
    for _ in range(dim - 1):
        w = np.multiply.outer(w, rule.weights)
    return pts, np.asarray(w).ravel()


@lru_cache(maxsize=None)
def _legendre_derivative_operator(degree: int, order: int, normalized: bool = False) -> np.ndarray:
    """Coefficient-space matrix of d^order/dxi^order for the Legendre modes."""
    n = degree + 1
    norm = np.sqrt((2 * np.arange(n) + 1) / 2.0) if normalized else np.ones(n)
    op = np.zeros((n, n))
    for k in range(n):
        c = np.zeros(n)
        c[k] = norm[k]
        d = npleg.legder(c, order) if order else c
        op[: len(d), k] = d
    return op


def legendre_basis(degree: int, x, order: int = 0, normalized: bool = False) -> np.ndarray:
    """Values of the ``order``-th derivative of ``P_0 .. P_degree`` at ``x``.

    With ``normalized`` the modes are scaled to unit L2 norm on (-1, 1).
    Returns shape ``(len(x), degree + 1)``.
    """
    x = np.asarray(x, dtype=float)
    vander = npleg.legvander(x, degree)
    return vander @ _legendre_derivative_operator(degree, order, normalized)


@dataclass(frozen=True)
class Basis1D:
    degree: int
    nodes: np.ndarray
    eval_matrix: np.ndarray
    diff_matrix: np.ndarray
    diff2_matrix: np.ndarray
    endpoint_values: np.ndarray  # shape (2, degree+1): rows xi=-1, xi=+1

    @classmethod
    def build(cls, degree: int, npoints: int | None = None) -> "Basis1D":
        rule = gauss_rule(npoints or degree + 2)
        return cls(
            degree,
            rule.nodes,
            legendre_basis(degree, rule.nodes, 0),
            legendre_basis(degree, rule.nodes, 1),
            legendre_basis(degree, rule.nodes, 2),
            legendre_basis(degree, np.array([-1.0, 1.0]), 0),
        )


@lru_cache(maxsize=None)
def lagrange_diff_matrix(n: int) -> np.ndarray:
    """Differentiation matrix of the interpolant through ``n`` Gauss nodes."""
    rule = gauss_rule(n)
    v = legendre_basis(n - 1, rule.nodes, 0, normalized=True)
    vd = legendre_basis(n - 1, rule.nodes, 1, normalized=True)
    # orthonormal modes are discretely orthonormal on the n-point rule
    return vd @ (v.T * rule.weights)


def multi_indices(dim: int, max_order: int):
    return [a for a in product(range(max_order + 1), repeat=dim) if sum(a) <= max_order]


def basis_jet(degree: int, xi: np.ndarray, scale, max_order: int = MAX_DERIVATIVE) -> dict:
    """Physical-space derivative matrices of all tensor modes at points ``xi``.

    ``xi`` has shape ``(dim, npts)`` in reference coordinates and ``scale`` is
    d(xi)/dx per axis. Returns ``{alpha: (npts, (degree+1)**dim)}`` for every
    multi-index with ``|alpha| <= max_order``.
    """
    xi = np.atleast_2d(xi)
    dim = xi.shape[0]
    one_d = [[legendre_basis(degree, xi[k], o) * scale[k] ** o for o in range(max_order + 1)]
             for k in range(dim)]
    out = {}
    for alpha in multi_indices(dim, max_order):
        mats = [one_d[k][alpha[k]] for k in range(dim)]
        if dim == 2:
            m = np.einsum("pi,pj->pij", *mats)
        else:
            m = np.einsum("pi,pj,pk->pijk", *mats)
        out[alpha] = m.reshape(xi.shape[1], -1)
    return out


@dataclass
class StokesField:
    """Per-element Legendre coefficients, shape ``(L, dim + 1, (W+1)**dim)``.

    Index ``dim`` along the second axis is the pressure.
    """

    dim: int
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        nb = (self.degree + 1) ** self.dim
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 3 or self.coeffs.shape[1:] != (self.dim + 1, nb):
            raise ValueError(
                f"coefficient array shape {self.coeffs.shape} inconsistent with dim={self.dim}, W={self.degree}"
            )

    @classmethod
    def zeros(cls, decomp: Decomposition, degree: int) -> "StokesField":
        nb = (degree + 1) ** decomp.dim
        return cls(decomp.dim, degree, np.zeros((decomp.n_elements, decomp.dim + 1, nb)))

    @classmethod
    def from_vector(cls, decomp: Decomposition, degree: int, x) -> "StokesField":
        nb = (degree + 1) ** decomp.dim
        return cls(decomp.dim, degree, np.asarray(x, dtype=float).reshape(decomp.n_elements, decomp.dim + 1, nb))

    @property
    def n_basis(self) -> int:
        return (self.degree + 1) ** self.dim

    def as_vector(self) -> np.ndarray:
        return self.coeffs.ravel().copy()

    def element_block(self, eid: int) -> np.ndarray:
        return self.coeffs[eid].ravel()


def evaluate(field: StokesField, decomp: Decomposition, eid: int, xi, derivative=None) -> np.ndarray:
    """Values (shape ``(dim + 1, npts)``) of all components at reference points.

    ``derivative`` is a multi-index of physical partial derivatives.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    dim = decomp.dim
    alpha = tuple(derivative) if derivative is not None else (0,) * dim
    if len(alpha) != dim or min(alpha) < 0:
        raise ValueError(f"bad derivative multi-index {alpha}")
    if sum(alpha) > MAX_DERIVATIVE:
        raise ValueError(f"derivative order {sum(alpha)} exceeds {MAX_DERIVATIVE}")
    e = decomp.element(eid)
    mats = [legendre_basis(field.degree, xi[k], alpha[k]) * e.scale[k] ** alpha[k] for k in range(dim)]
    c = field.coeffs[eid].reshape((dim + 1,) + (field.degree + 1,) * dim)
    if dim == 2:
        return np.einsum("fij,pi,pj->fp", c, *mats)
    return np.einsum("fijk,pi,pj,pk->fp", c, *mats)


def trace_coefficients(coeffs, dim: int, degree: int, face: int, normal_derivative: int = 0,
                       scale: float = 1.0) -> np.ndarray:
    """Restrict a coefficient tensor (last axes = modes) to a face.

    The result is a tensor over the face's tangential modes; with
    ``normal_derivative=1`` the physical normal-axis derivative (``scale`` is
    d(xi)/dx along that axis) is traced instead.
    """
    if not 0 <= face < 2 * dim:
        raise ValueError(f"invalid face index {face} for dim {dim}")
    if normal_derivative not in (0, 1):
        raise ValueError("trace supports derivative order <= 1")
    axis, side = divmod(face, 2)
    c = np.asarray(coeffs, dtype=float)
    modes = (degree + 1,) * dim
    lead = c.shape[:-dim] if c.ndim >= dim and c.shape[-dim:] == modes else c.shape[:-1]
    c = c.reshape(lead + modes)
    end = legendre_basis(degree, np.array([1.0 if side else -1.0]), normal_derivative)[0]
    end = end * scale ** normal_derivative
    return np.tensordot(c, end, axes=([len(lead) + axis], [0]))


def trace(field: StokesField, decomp: Decomposition, eid: int, face: int, s, derivative=None) -> np.ndarray:
    """Values of all components on ``face`` at face coordinates ``s``.

    ``derivative`` (order <= 1) selects a physical partial derivative.
    """
    if not 0 <= face < 2 * decomp.dim:
        raise ValueError(f"invalid face index {face}")
    alpha = tuple(derivative) if derivative is not None else (0,) * decomp.dim
    if sum(alpha) > 1:
        raise ValueError("trace supports derivative order <= 1")
    xi = face_points_reference(decomp.dim, face, s)
    return evaluate(field, decomp, eid, xi, alpha)


def interpolate(fn, decomp: Decomposition, eid: int, degree: int) -> np.ndarray:
    """Legendre coefficients of the degree-``W`` interpolant of ``fn`` at Gauss points.

    ``fn`` maps physical points ``(dim, npts)`` to values ``(npts,)`` or
    ``(ncomp, npts)``. Polynomials of degree <= W per variable are reproduced
    exactly.
    """
    dim = decomp.dim
    e = decomp.element(eid)
    xi, w = tensor_rule(degree + 1, dim)
    vals = np.asarray(fn(inverse_map(e, xi)), dtype=float)
    v = basis_jet(degree, xi, e.scale, 0)[(0,) * dim]
    # P_k are discretely orthogonal on the (W+1)-point rule with squared norm 2/(2k+1)
    inv_mass = np.ones(1)
    for _ in range(dim):
        inv_mass = np.multiply.outer(inv_mass, (2 * np.arange(degree + 1) + 1) / 2.0)
    return (vals * w) @ v * inv_mass.ravel()
