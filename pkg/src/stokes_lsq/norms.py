"""Discrete Sobolev norms on elements and faces.

Face norms act on nodal values at tensor Gauss points of the face and measure
the polynomial interpolant through those values. For ``mu = 1/2`` the
Sobolev-Slobodeckij kernel ``|xi - xi'|^-2`` turns the double integral into the
square of a divided difference, which is a polynomial; off-diagonal pairs use
``(u_i - u_j) / (xi_i - xi_j)`` and diagonal pairs the interpolant's
derivative, so the removable singularity is never evaluated.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .spectral import gauss_rule, lagrange_diff_matrix, multi_indices


class NormOrder(enum.Enum):
    L2_ELEM = "L2_elem"
    H1_ELEM = "H1_elem"
    H2_ELEM = "H2_elem"
    L2_FACE = "L2_face"
    H_HALF_FACE = "H_half_face"
    H_THREEHALF_FACE = "H_threehalf_face"

    @property
    def on_face(self) -> bool:
        return self.name.endswith("_FACE")

    @property
    def element_order(self) -> int:
        return {"L2_ELEM": 0, "H1_ELEM": 1, "H2_ELEM": 2}[self.name]


@dataclass(frozen=True)
class FaceKernelTable:
    """Paired-node data for the mu = 1/2 seminorm on n Gauss points.

    ``divided_difference`` maps nodal values to the n*n divided differences;
    ``seminorm_matrix`` is its weighted Gram matrix (symmetric PSD).
    """

    nodes: np.ndarray
    weights: np.ndarray
    diff_matrix: np.ndarray
    divided_difference: np.ndarray
    pair_weights: np.ndarray
    seminorm_matrix: np.ndarray

    @property
    def npoints(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=None)
def face_kernel_table(n: int) -> FaceKernelTable:
    rule = gauss_rule(n)
    x = rule.nodes
    d = lagrange_diff_matrix(n)
    k = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                k[i, j] = d[i]
            else:
                k[i, j, i] = 1.0 / (x[i] - x[j])
                k[i, j, j] = -1.0 / (x[i] - x[j])
    k = k.reshape(n * n, n)
    pw = np.outer(rule.weights, rule.weights).ravel()
    s = k.T @ (pw[:, None] * k)
    s = 0.5 * (s + s.T)
    return FaceKernelTable(x, rule.weights, d, k, pw, s)


def elem_norm_sq(jet: Mapping, order, weights, jacobian: float = 1.0) -> float:
    """Quadrature value of ``sum_{|alpha| <= m} ||D^alpha u||^2`` on one element.

    ``jet`` maps multi-indices to physical derivative values at the quadrature
    points; every multi-index up to the norm order must be present.
    """
    m = order.element_order if isinstance(order, NormOrder) else int(order)
    weights = np.asarray(weights)
    dim = len(next(iter(jet)))
    total = 0.0
    for alpha in multi_indices(dim, m):
        if alpha not in jet:
            raise KeyError(f"missing derivative data {alpha} for an order-{m} norm")
        v = np.asarray(jet[alpha])
        total += float(np.sum(weights * v * v))
    return jacobian * total


def face_l2_sq(values, weights, jacobian: float = 1.0) -> float:
    v = np.asarray(values, dtype=float)
    return jacobian * float(np.sum(np.asarray(weights) * v * v))


def _face_shape(values, nface_dims: int):
    v = np.asarray(values, dtype=float)
    n = round(v.shape[-1] ** (1.0 / nface_dims))
    if n ** nface_dims != v.shape[-1]:
        raise ValueError("face values must live on a tensor Gauss grid")
    return v, n


def half_seminorm_sq(values, extents: Sequence[float]) -> float:
    """mu = 1/2 seminorm of nodal face values (last axis = face nodes, C order).

    On 2D faces the two single-direction kernel integrals are summed, each
    scaled by the transverse Jacobian; in 1D the seminorm is scale invariant.
    """
    nd = len(extents)
    v, n = _face_shape(values, nd)
    tab = face_kernel_table(n)
    if nd == 1:
        dd = v @ tab.divided_difference.T
        return float(np.sum(tab.pair_weights * dd * dd))
    grid = v.reshape(v.shape[:-1] + (n, n))
    # divided differences along the first face axis, for each second-axis line
    dd1 = np.einsum("pa,...ab->...pb", tab.divided_difference, grid)
    dd2 = np.einsum("pb,...ab->...ap", tab.divided_difference, grid)
    t1 = np.einsum("p,b,...pb->", tab.pair_weights, tab.weights, dd1 * dd1) * extents[1] / 2.0
    t2 = np.einsum("a,p,...ap->", tab.weights, tab.pair_weights, dd2 * dd2) * extents[0] / 2.0
    return float(t1 + t2)


def face_fractional_half_sq(values, extents: Sequence[float], mu: float = 0.5) -> float:
    """``||u||^2_{1/2}``: face L2 part plus the double-integral seminorm."""
    if mu != 0.5:
        raise ValueError("only mu = 1/2 is supported")
    nd = len(extents)
    v, n = _face_shape(values, nd)
    w = face_weights(n, nd)
    jac = float(np.prod(np.asarray(extents) / 2.0))
    return face_l2_sq(v, w, jac) + half_seminorm_sq(v, extents)


def face_fractional_threehalf_sq(values, tangential_derivatives, extents: Sequence[float]) -> float:
    """``||u||^2_{3/2} := ||u||^2_{1,face} + sum_t |du/ds_t|^2_{1/2, semi}``.

    ``tangential_derivatives`` holds one array of physical tangential
    derivative values per face coordinate.
    """
    nd = len(extents)
    if tangential_derivatives is None or len(tangential_derivatives) != nd:
        raise ValueError(f"need {nd} tangential derivative traces for the 3/2 norm")
    v, n = _face_shape(values, nd)
    w = face_weights(n, nd)
    jac = float(np.prod(np.asarray(extents) / 2.0))
    total = face_l2_sq(v, w, jac)
    for dv in tangential_derivatives:
        total += face_l2_sq(dv, w, jac) + half_seminorm_sq(dv, extents)
    return total


def face_weights(n: int, nface_dims: int) -> np.ndarray:
    w = gauss_rule(n).weights
    if nface_dims == 2:
        w = np.outer(w, w).ravel()
    return np.asarray(w)


def tensor_diff(n: int, ndims: int, axis: int) -> np.ndarray:
    """Nodal differentiation along ``axis`` of an ``ndims``-dimensional Gauss grid."""
    d = lagrange_diff_matrix(n)
    eye = np.eye(n)
    mats = [d if k == axis else eye for k in range(ndims)]
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


@lru_cache(maxsize=None)
def _face_matrix(order: NormOrder, n: int, extents: tuple) -> np.ndarray:
    nd = len(extents)
    w = face_weights(n, nd)
    jac = float(np.prod(np.asarray(extents) / 2.0))
    l2 = np.diag(jac * w)
    if order is NormOrder.L2_FACE:
        return l2
    tab = face_kernel_table(n)
    if nd == 1:
        semi = tab.seminorm_matrix
    else:
        wd = np.diag(tab.weights)
        semi = (np.kron(tab.seminorm_matrix, wd) * extents[1] / 2.0
                + np.kron(wd, tab.seminorm_matrix) * extents[0] / 2.0)
    if order is NormOrder.H_HALF_FACE:
        return l2 + semi
    if order is NormOrder.H_THREEHALF_FACE:
        m = l2.copy()
        for t in range(nd):
            dt = tensor_diff(n, nd, t) * (2.0 / extents[t])
            m += dt.T @ (l2 + semi) @ dt
        return 0.5 * (m + m.T)
    raise ValueError(f"{order} is not a face norm")


def face_weight_matrix(order: NormOrder, n: int, extents) -> np.ndarray:
    """Symmetric matrix ``M`` with ``v^T M v`` = squared face norm of nodal values."""
    return _face_matrix(order, n, tuple(float(h) for h in extents))


@lru_cache(maxsize=None)
def _elem_matrix(order: NormOrder, n: int, sizes: tuple) -> np.ndarray:
    dim = len(sizes)
    w = face_weights(n, 1)
    wt = w
    for _ in range(dim - 1):
        wt = np.multiply.outer(wt, w)
    wt = np.asarray(wt).ravel()
    jac = float(np.prod(np.asarray(sizes) / 2.0))
    wdiag = np.diag(jac * wt)
    m = wdiag.copy()
    ordm = order.element_order
    if ordm == 0:
        return m
    ds = [tensor_diff(n, dim, k) * (2.0 / sizes[k]) for k in range(dim)]
    for alpha in multi_indices(dim, ordm):
        if sum(alpha) == 0:
            continue
        op = np.eye(len(wt))
        for k, a in enumerate(alpha):
            for _ in range(a):
                op = ds[k] @ op
        m += op.T @ wdiag @ op
    return 0.5 * (m + m.T)


def elem_weight_matrix(order: NormOrder, n: int, sizes) -> np.ndarray:
    """Nodal weight matrix of an element norm on the ``n``-point tensor grid."""
    return _elem_matrix(order, n, tuple(float(h) for h in sizes))
