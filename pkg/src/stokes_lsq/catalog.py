"""Residual terms of the least-squares functional.

The functional is a sum of squared norms of affine residuals ``K(u, p) - g``
over elements, interior faces and boundary faces. The interior part (momentum,
continuity and inter-element jumps) is the same for every problem; each
boundary-condition family ``B1`` .. ``B18`` contributes its own list of
boundary residuals. Dirichlet-type traces are measured in ``H^{3/2}``,
derivative and pressure traces in ``H^{1/2}``.

A ``DIR`` family (``u = g`` in ``H^{3/2}``) is provided to close mixed problems
where one of the families holds only on part of the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import operators as ops
from .geometry import (
    BoundarySegment,
    Decomposition,
    FaceFrame,
    Interface,
    face_points_reference,
    face_trace_frame,
    frame_from_normal,
    inverse_map,
    map_face_coords,
)
from .norms import (
    NormOrder,
    elem_norm_sq,
    elem_weight_matrix,
    face_fractional_half_sq,
    face_fractional_threehalf_sq,
    face_l2_sq,
    face_weight_matrix,
    face_weights,
    tensor_diff,
)
from .spectral import StokesField, basis_jet, multi_indices, tensor_rule


class CatalogError(ValueError):
    """Family/data mismatch or a boundary tag that the mesh does not have."""


HALF = NormOrder.H_HALF_FACE
THREEHALF = NormOrder.H_THREEHALF_FACE


# --- family tables ---------------------------------------------------------

@dataclass(frozen=True)
class SlotDef:
    """A boundary datum and the physical quantity of (u, p) it prescribes."""

    name: str
    exact: Callable  # (frame, params) -> list[Op]


@dataclass(frozen=True)
class TermDef:
    role: str
    norm: NormOrder
    quantity: Callable  # (frame, params) -> list[Op]
    slot: Optional[str] = None
    to_target: Optional[Callable] = None  # (slot values, frame) -> components
    label: str = ""


@dataclass(frozen=True)
class FamilyDef:
    name: str
    roles: tuple
    slots: tuple
    params: tuple
    terms: tuple

    def slot(self, name: str) -> SlotDef:
        for s in self.slots:
            if s.name == name:
                return s
        raise KeyError(name)


def _dim(fr: FaceFrame) -> int:
    return len(fr.normal)


# quantities of (u, p)
def _u(fr, pr):
    return ops.velocity(_dim(fr))


def _un(fr, pr):
    return [ops.dot(ops.velocity(_dim(fr)), fr.normal)]


def _ut(fr, pr):
    return ops.tangential(ops.velocity(_dim(fr)), fr)


def _uxn(fr, pr):
    return ops.cross_n(ops.velocity(_dim(fr)), fr)


def _p(fr, pr):
    return [ops.pressure(_dim(fr))]


def _curl(fr, pr):
    return ops.curl(_dim(fr))


def _curl_x_n(fr, pr):
    return ops.curl_cross_n(fr)


def _curl_t(fr, pr):
    return ops.curl_tangential(fr)


def _full_cross(vec, n):
    if len(n) == 2:
        return [vec[0] * n[1] - vec[1] * n[0]]
    return [vec[1] * n[2] - vec[2] * n[1], vec[2] * n[0] - vec[0] * n[2], vec[0] * n[1] - vec[1] * n[0]]


def _uxn_full(fr, pr):
    return _full_cross(ops.velocity(_dim(fr)), fr.normal)


def _u_tangent_kind(fr, pr):
    # scalar u.tau in 2D, the velocity itself in 3D (projected by the target map)
    if _dim(fr) == 2:
        return ops.tangential(ops.velocity(2), fr)
    return ops.velocity(3)


def _b2_vec(fr, pr):
    dim = _dim(fr)
    u, p, dn = ops.velocity(dim), ops.pressure(dim), ops.normal_derivative(fr)
    return [dn[i] - p * fr.normal[i] + pr["b"] * u[i] for i in range(dim)]


def _b3_vec(fr, pr):
    dim = _dim(fr)
    u, t = ops.velocity(dim), ops.traction(fr)
    return [t[i] + pr["b"] * u[i] for i in range(dim)]


def _two_du_n(fr, pr):
    e = ops.strain_rate(_dim(fr))
    return [ops.dot(e[i], fr.normal) for i in range(_dim(fr))]


def _b10_scalar(fr, pr):
    dim = _dim(fr)
    return [pr["nu"] * ops.dot(ops.normal_derivative(fr), fr.normal) - ops.pressure(dim)]


def _traction(fr, pr):
    return ops.traction(fr)


def _sigma_n(fr, pr):
    return ops.sigma_n(fr)


def _b16_vec(fr, pr):
    dim = _dim(fr)
    u, t = ops.velocity(dim), ops.traction(fr)
    return [pr["nu"] * u[i] + t[i] for i in range(dim)]


def _b18_vec(fr, pr):
    dim = _dim(fr)
    u, e = ops.velocity(dim), _two_du_n(fr, pr)
    return [e[i] + pr["alpha"] * u[i] for i in range(dim)]


def _tang_of(q):
    return lambda fr, pr: ops.tangential(q(fr, pr), fr)


# slot value -> residual target components
def _same(v, fr):
    return list(v)


def _normal_of(v, fr):
    return [ops.dot(v, fr.normal)]


def _tangential_of(v, fr):
    return ops.tangential(v, fr)


def _cross_of(v, fr):
    return ops.cross_n(v, fr)


def _curl_cross_of(v, fr):
    return ops.data_curl_cross_n(v, fr)


def _curl_tang_of(v, fr):
    return ops.data_curl_tangential(v, fr)


def _tangent_kind_of(v, fr):
    if len(fr.normal) == 2:
        return [v[0]]
    return ops.tangential(v, fr)


def _b18_h(fr, pr):
    return _b18_vec(fr, pr)


_S = SlotDef
_T = TermDef

FAMILIES = {
    "B1": FamilyDef(
        "B1", ("Gamma1", "Gamma2"),
        (_S("g", _u), _S("g_n", _un), _S("k", _curl)), (),
        (_T("Gamma1", THREEHALF, _u, "g", _same, "u - g"),
         _T("Gamma2", THREEHALF, _un, "g_n", _same, "u.n - g_n"),
         _T("Gamma2", HALF, _curl_x_n, "k", _curl_cross_of, "(curl u) x n - k x n"))),
    "B2": FamilyDef(
        "B2", ("Gamma",),
        (_S("g_n", _un), _S("h", _b2_vec)), ("b",),
        (_T("Gamma", THREEHALF, _un, "g_n", _same, "u_n - g_n"),
         _T("Gamma", HALF, _tang_of(_b2_vec), "h", _tangential_of, "[du/dn - p n + b u]_tau - h_tau"))),
    "B3": FamilyDef(
        "B3", ("Gamma",),
        (_S("g_n", _un), _S("h", _b3_vec)), ("b",),
        (_T("Gamma", THREEHALF, _un, "g_n", _same, "u_n - g_n"),
         _T("Gamma", HALF, _tang_of(_b3_vec), "h", _tangential_of,
            "([grad u + grad u^T - p I] n + b u)_tau - h_tau"))),
    "B4": FamilyDef(
        "B4", ("Gamma",),
        (_S("g", _un), _S("h", _curl)), (),
        (_T("Gamma", THREEHALF, _un, "g", _same, "u.n - g"),
         _T("Gamma", HALF, _curl_x_n, "h", _curl_cross_of, "(curl u) x n - h x n"))),
    "B5": FamilyDef(
        "B5", ("Gamma",),
        (_S("g", _u), _S("p_tilde", _p)), (),
        (_T("Gamma", THREEHALF, _uxn, "g", _cross_of, "u x n - g x n"),
         _T("Gamma", HALF, _p, "p_tilde", _same, "p - p_tilde"))),
    "B6": FamilyDef(
        "B6", ("Gamma1", "Gamma2", "Gamma3"),
        (_S("u0", _u), _S("a", _u), _S("p0", _p), _S("b", _u), _S("h", _curl)), (),
        (_T("Gamma1", THREEHALF, _u, "u0", _same, "u - u0"),
         _T("Gamma2", THREEHALF, _uxn, "a", _cross_of, "u x n - a x n"),
         _T("Gamma2", HALF, _p, "p0", _same, "p - p0"),
         _T("Gamma3", THREEHALF, _un, "b", _normal_of, "u.n - b.n"),
         _T("Gamma3", HALF, _curl_x_n, "h", _curl_cross_of, "(curl u) x n - h x n"))),
    "B7": FamilyDef(
        "B7", ("Gamma",),
        (_S("g", _un), _S("h", _two_du_n)), (),
        (_T("Gamma", THREEHALF, _un, "g", _same, "u.n - g"),
         _T("Gamma", HALF, _tang_of(_two_du_n), "h", _tangential_of, "[(2 D u) n]_tau - h"))),
    "B8": FamilyDef(
        "B8", ("Gamma",), (), (),
        (_T("Gamma", THREEHALF, _un, None, None, "u.n"),
         _T("Gamma", HALF, _curl_t, None, None, "(curl u)_tau"))),
    "B9": FamilyDef(
        "B9", ("Gamma1", "Gamma2"),
        (_S("g", _u), _S("phi", _p), _S("g_tilde", _uxn_full)), (),
        (_T("Gamma1", THREEHALF, _u, "g", _same, "u - g"),
         _T("Gamma2", HALF, _p, "phi", _same, "p - phi"),
         _T("Gamma2", THREEHALF, _uxn, "g_tilde", _tangent_kind_of, "u x n - g_tilde"))),
    "B10": FamilyDef(
        "B10", ("Gamma",),
        (_S("g", _b10_scalar),), ("nu",),
        (_T("Gamma", HALF, _b10_scalar, "g", _same, "((nu grad u - p I) n).n - g"),
         _T("Gamma", THREEHALF, _ut, None, None, "u_tau"))),
    "B11": FamilyDef(
        "B11", ("Gamma",), (), (),
        (_T("Gamma", THREEHALF, _un, None, None, "u.n"),
         _T("Gamma", HALF, _curl, None, None, "curl u"))),
    "B12": FamilyDef(
        "B12", ("Gamma1", "Gamma2", "Gamma3"),
        (_S("u0", _u), _S("u02", _uxn_full), _S("phi", _p), _S("u01", _un), _S("h", _curl)), (),
        (_T("Gamma1", THREEHALF, _u, "u0", _same, "u - u0"),
         _T("Gamma2", THREEHALF, _uxn, "u02", _tangent_kind_of, "u x n - u02"),
         _T("Gamma2", HALF, _p, "phi", _same, "p - phi"),
         _T("Gamma3", THREEHALF, _un, "u01", _same, "u.n - u01"),
         _T("Gamma3", HALF, _curl_t, "h", _curl_tang_of, "(curl u).tau - h"))),
    "B13": FamilyDef(
        "B13", ("Gamma1", "Gamma2", "Gamma3", "Gamma4"),
        (_S("g", _u), _S("g_n", _un), _S("w_s", _curl), _S("psi", _p), _S("g_s", _u),
         _S("g_s_curl", _curl)), (),
        (_T("Gamma1", THREEHALF, _u, "g", _same, "u - g"),
         _T("Gamma2", THREEHALF, _un, "g_n", _same, "n.u - g_n"),
         _T("Gamma2", HALF, _curl_t, "w_s", _curl_tang_of, "n x ((curl u) x n) - w_s"),
         _T("Gamma3", HALF, _p, "psi", _same, "p - psi"),
         _T("Gamma3", THREEHALF, _ut, "g_s", _tangential_of, "n x (u x n) - g_s"),
         _T("Gamma4", HALF, _p, "psi", _same, "p - psi"),
         _T("Gamma4", HALF, _curl_t, "g_s_curl", _curl_tang_of, "n x ((curl u) x n) - g_s"))),
    "B14": FamilyDef(
        "B14", ("Gamma0", "Gamma1"),
        (_S("omega_n", _sigma_n),), (),
        (_T("Gamma0", THREEHALF, _u, None, None, "u"),
         _T("Gamma1", THREEHALF, _ut, None, None, "u_tau"),
         _T("Gamma1", HALF, _sigma_n, "omega_n", _same, "sigma_n - omega_n"))),
    "B15": FamilyDef(
        "B15", ("Gamma0", "Gamma1"),
        (_S("omega_tau", _traction),), (),
        (_T("Gamma0", THREEHALF, _u, None, None, "u"),
         _T("Gamma1", THREEHALF, _un, None, None, "u_n"),
         _T("Gamma1", HALF, _tang_of(_traction), "omega_tau", _tangential_of, "sigma_tau - omega_tau"))),
    "B16": FamilyDef(
        "B16", ("Gamma",),
        (_S("g", _u), _S("s", _b16_vec)), ("nu",),
        (_T("Gamma", THREEHALF, _un, "g", _normal_of, "u.n - g.n"),
         _T("Gamma", HALF, _tang_of(_b16_vec), "s", _tangential_of, "nu u_tau + sigma_tau - s"))),
    "B17": FamilyDef(
        "B17", ("Gamma",),
        (_S("g", _u_tangent_kind), _S("h", _p)), (),
        (_T("Gamma", THREEHALF, _ut, "g", _tangent_kind_of, "u.tau - g"),
         _T("Gamma", HALF, _p, "h", _same, "p - h"))),
    "B18": FamilyDef(
        "B18", ("Gamma",),
        (_S("g", _un), _S("h", _b18_h)), ("alpha",),
        (_T("Gamma", THREEHALF, _un, "g", _same, "u.n - g"),
         _T("Gamma", HALF, _tang_of(_b18_vec), "h", _tangential_of, "[(2 D u) n]_tau + alpha u_tau - h"))),
    "DIR": FamilyDef(
        "DIR", ("Gamma",), (_S("g", _u),), (),
        (_T("Gamma", THREEHALF, _u, "g", _same, "u - g"),)),
}

FAMILY_NAMES = tuple(FAMILIES)
PENALTY_FLAGS = ("velocity_mean", "rotation")


def family(name: str) -> FamilyDef:
    try:
        return FAMILIES[name]
    except KeyError:
        raise CatalogError(f"unknown family {name!r}") from None


# --- problem description ---------------------------------------------------

@dataclass(frozen=True)
class BoundaryConditionSpec:
    """One boundary-condition family applied to tagged boundary pieces.

    ``segments`` maps each family role (``"Gamma"``, ``"Gamma1"``, ...) to the
    decomposition tags it covers. ``data`` maps slot names to callables
    ``fn(x, n)`` with ``x`` of shape ``(dim, npts)`` and ``n`` the outward
    normal, returning ``(npts,)`` or ``(ncomp, npts)``.
    """

    family: str
    segments: Mapping
    data: Mapping = field(default_factory=dict)
    params: Mapping = field(default_factory=dict)
    penalties: tuple = ()

    def validate(self) -> FamilyDef:
        fam = family(self.family)
        roles = set(self.segments)
        if roles != set(fam.roles):
            missing = sorted(set(fam.roles) - roles)
            extra = sorted(roles - set(fam.roles))
            raise CatalogError(f"{self.family}: roles mismatch (missing {missing}, unexpected {extra})")
        need = {s.name for s in fam.slots}
        have = set(self.data)
        if need - have:
            raise CatalogError(f"{self.family}: missing data slot(s) {sorted(need - have)}")
        if have - need:
            raise CatalogError(f"{self.family}: unexpected data slot(s) {sorted(have - need)}")
        if set(self.params) != set(fam.params):
            raise CatalogError(
                f"{self.family}: parameters must be exactly {list(fam.params)}, got {sorted(self.params)}"
            )
        bad = set(self.penalties) - set(PENALTY_FLAGS)
        if bad:
            raise CatalogError(f"unknown penalty flag(s) {sorted(bad)}")
        return fam


@dataclass(frozen=True)
class ElementTarget:
    fn: Callable  # x -> (ncomp, npts) or (npts,)

    def __call__(self, x, ncomp):
        return _as_components(self.fn(x), ncomp, x.shape[1])


@dataclass(frozen=True)
class BoundaryTarget:
    fn: Callable  # (x, n) -> slot values
    frame: FaceFrame
    to_target: Callable

    def __call__(self, x, ncomp):
        raw = np.asarray(self.fn(x, np.asarray(self.frame.normal)), dtype=float)
        raw = np.atleast_2d(raw) if raw.ndim else np.full((1, x.shape[1]), float(raw))
        if raw.shape[1] != x.shape[1]:
            raw = np.broadcast_to(raw, (raw.shape[0], x.shape[1]))
        comps = self.to_target(list(raw), self.frame)
        return _as_components(np.array([np.broadcast_to(c, (x.shape[1],)) for c in comps]), ncomp, x.shape[1])


def _as_components(v, ncomp, npts):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = np.full((ncomp, npts), float(v))
    elif v.ndim == 1:
        v = v.reshape(1, -1)
    if v.shape != (ncomp, npts):
        v = np.broadcast_to(v, (ncomp, npts))
    return v


@dataclass(frozen=True)
class ResidualTerm:
    """``|| stencil(u, p) - target ||^2`` in ``norm`` on one locus.

    ``kind`` is ``"element"``, ``"interface"`` or ``"boundary"``; ``index``
    refers to the decomposition's elements / interfaces / boundary tuples.
    """

    kind: str
    index: int
    stencil: tuple
    norm: NormOrder
    target: Optional[object] = None
    label: str = ""

    @property
    def ncomp(self) -> int:
        return len(self.stencil)


@dataclass(frozen=True)
class GaugeTerm:
    """Rank-one penalty ``(l(u, p) - value)^2`` removing a null direction.

    ``kind`` is ``"pressure_mean"``, ``"velocity_mean"`` (with ``component``)
    or ``"rotation"`` (2D only).
    """

    kind: str
    value: float = 0.0
    component: int = 0


# --- term builders ---------------------------------------------------------

def interior_terms(decomp: Decomposition, source=None, divergence=None) -> list:
    """Momentum and continuity residuals per element plus interface jumps.

    ``source`` and ``divergence`` are callables of ``x`` (``None`` = zero).
    """
    dim = decomp.dim
    f_t = ElementTarget(source) if source is not None else None
    c_t = ElementTarget(divergence) if divergence is not None else None
    mom, cont = tuple(ops.momentum(dim)), tuple(ops.continuity(dim))
    terms = []
    for e in decomp.elements:
        terms.append(ResidualTerm("element", e.id, mom, NormOrder.L2_ELEM, f_t, "L(u,p) - f"))
        terms.append(ResidualTerm("element", e.id, cont, NormOrder.H1_ELEM, c_t, "D u - chi"))
    u = ops.velocity(dim)
    p = ops.pressure(dim)
    for i, _ in enumerate(decomp.interfaces):
        terms.append(ResidualTerm("interface", i, tuple(u), NormOrder.L2_FACE, None, "[u]"))
        for k in range(dim):
            terms.append(ResidualTerm("interface", i, tuple(c.d(k) for c in u), HALF, None, f"[u_x{k + 1}]"))
        terms.append(ResidualTerm("interface", i, (p,), HALF, None, "[p]"))
    return terms


def boundary_terms(spec: BoundaryConditionSpec, decomp: Decomposition) -> list:
    """Boundary residuals of one family restricted to its tagged segments."""
    fam = spec.validate()
    tags = decomp.tags
    terms = []
    for role in fam.roles:
        role_tags = spec.segments[role]
        if isinstance(role_tags, str):
            role_tags = (role_tags,)
        for tag in role_tags:
            if tag not in tags:
                raise CatalogError(f"{spec.family}: tag {tag!r} not present in the decomposition")
        segs = [(i, s) for i, s in enumerate(decomp.boundary) if s.tag in role_tags]
        for i, seg in segs:
            fr = face_trace_frame(decomp, seg)
            for td in fam.terms:
                if td.role != role:
                    continue
                stencil = tuple(td.quantity(fr, spec.params))
                target = None
                if td.slot is not None:
                    target = BoundaryTarget(spec.data[td.slot], frame_from_normal(fr.normal, fr.extents),
                                            td.to_target)
                terms.append(ResidualTerm("boundary", i, stencil, td.norm, target, f"{spec.family}: {td.label}"))
    return terms


def check_coverage(specs: Sequence[BoundaryConditionSpec], decomp: Decomposition) -> None:
    """Every boundary segment must be claimed by exactly one role of one spec."""
    count = np.zeros(len(decomp.boundary), dtype=int)
    for spec in specs:
        for role_tags in spec.segments.values():
            if isinstance(role_tags, str):
                role_tags = (role_tags,)
            for i, seg in enumerate(decomp.boundary):
                if seg.tag in role_tags:
                    count[i] += 1
    if np.any(count == 0):
        i = int(np.flatnonzero(count == 0)[0])
        raise CatalogError(f"boundary segment with tag {decomp.boundary[i].tag!r} has no condition")
    if np.any(count > 1):
        i = int(np.flatnonzero(count > 1)[0])
        raise CatalogError(f"boundary segment with tag {decomp.boundary[i].tag!r} has several conditions")


def pressure_is_free(bterms: Sequence[ResidualTerm], dim: int) -> bool:
    """True when no boundary residual involves the pressure."""
    return all(dim not in op.fields for t in bterms for op in t.stencil)


def gauge_terms(bterms, specs, dim: int, pressure_integral: float = 0.0,
                velocity_integral=None, rotation: float = 0.0) -> list:
    """Penalties for null directions: the pressure constant when unconstrained,
    plus any velocity mean/rotation flags requested by the specs."""
    out = []
    if pressure_is_free(bterms, dim):
        out.append(GaugeTerm("pressure_mean", float(pressure_integral)))
    flags = {f for s in specs for f in s.penalties}
    if "velocity_mean" in flags:
        vm = velocity_integral if velocity_integral is not None else [0.0] * dim
        out.extend(GaugeTerm("velocity_mean", float(vm[k]), k) for k in range(dim))
    if "rotation" in flags:
        if dim != 2:
            raise CatalogError("rotation penalty is implemented for 2D only")
        out.append(GaugeTerm("rotation", float(rotation)))
    return out


def assemble_terms(decomp: Decomposition, specs: Sequence[BoundaryConditionSpec],
                   source=None, divergence=None) -> list:
    check_coverage(specs, decomp)
    terms = interior_terms(decomp, source, divergence)
    for spec in specs:
        terms.extend(boundary_terms(spec, decomp))
    return terms


# --- sampling: stencils as matrices on quadrature nodes ---------------------

@dataclass(frozen=True)
class Resolution:
    """Polynomial degree and Gauss point counts per direction."""

    degree: int
    volume_points: int
    face_points: int

    @classmethod
    def default(cls, degree: int) -> "Resolution":
        return cls(degree, degree + 2, degree + 2)


@lru_cache(maxsize=256)
def _element_jet(degree: int, npts: int, dim: int, scale: tuple) -> dict:
    xi, _ = tensor_rule(npts, dim)
    return basis_jet(degree, xi, np.asarray(scale))


@lru_cache(maxsize=512)
def _face_jet(degree: int, npts: int, dim: int, face: int, scale: tuple) -> dict:
    s, _ = tensor_rule(npts, dim - 1)
    xi = face_points_reference(dim, face, s)
    return basis_jet(degree, xi, np.asarray(scale))


def stencil_matrix(stencil, jet: Mapping, dim: int, nbasis: int) -> np.ndarray:
    """Matrix of shape ``(ncomp, npts, (dim + 1) * nbasis)`` mapping one
    element's coefficients to the stencil values at the jet's points."""
    npts = next(iter(jet.values())).shape[0]
    out = np.zeros((len(stencil), npts, (dim + 1) * nbasis))
    for c, op in enumerate(stencil):
        for f, a, coef in op.terms:
            out[c, :, f * nbasis:(f + 1) * nbasis] += coef * jet[a]
    return out


@dataclass
class TermSample:
    """A residual term discretized on its quadrature nodes.

    ``elements`` lists the element ids whose coefficient blocks ``matrix``
    acts on (concatenated); ``weight`` is the nodal norm matrix applied to each
    component; ``target`` has shape ``(ncomp, npts)``.
    """

    term: ResidualTerm
    elements: tuple
    matrix: np.ndarray
    weight: np.ndarray
    target: np.ndarray
    points: np.ndarray
    extents: tuple = ()
    sizes: tuple = ()


def sample_term(term: ResidualTerm, decomp: Decomposition, res: Resolution) -> TermSample:
    dim = decomp.dim
    nb = (res.degree + 1) ** dim
    if term.kind == "element":
        e = decomp.element(term.index)
        jet = _element_jet(res.degree, res.volume_points, dim, tuple(e.scale))
        mat = stencil_matrix(term.stencil, jet, dim, nb)
        xi, _ = tensor_rule(res.volume_points, dim)
        x = inverse_map(e, xi)
        weight = elem_weight_matrix(term.norm, res.volume_points, tuple(e.size))
        target = term.target(x, term.ncomp) if term.target is not None else np.zeros((term.ncomp, x.shape[1]))
        return TermSample(term, (e.id,), mat, weight, np.asarray(target), x, (), tuple(e.size))
    if term.kind == "boundary":
        seg: BoundarySegment = decomp.boundary[term.index]
        e = decomp.element(seg.element)
        jet = _face_jet(res.degree, res.face_points, dim, seg.face, tuple(e.scale))
        mat = stencil_matrix(term.stencil, jet, dim, nb)
        s, _ = tensor_rule(res.face_points, dim - 1)
        x = inverse_map(e, face_points_reference(dim, seg.face, s))
        fr = face_trace_frame(decomp, seg)
        weight = face_weight_matrix(term.norm, res.face_points, fr.extents)
        target = term.target(x, term.ncomp) if term.target is not None else np.zeros((term.ncomp, x.shape[1]))
        return TermSample(term, (e.id,), mat, weight, np.asarray(target), x, fr.extents)
    if term.kind == "interface":
        iface: Interface = decomp.interfaces[term.index]
        ea, eb = decomp.element(iface.element_a), decomp.element(iface.element_b)
        s, _ = tensor_rule(res.face_points, dim - 1)
        jet_a = _face_jet(res.degree, res.face_points, dim, iface.face_a, tuple(ea.scale))
        xi_b = face_points_reference(dim, iface.face_b, map_face_coords(iface, s))
        jet_b = basis_jet(res.degree, xi_b, eb.scale)
        mat = np.concatenate([-stencil_matrix(term.stencil, jet_a, dim, nb),
                              stencil_matrix(term.stencil, jet_b, dim, nb)], axis=2)
        x = inverse_map(ea, face_points_reference(dim, iface.face_a, s))
        fr = face_trace_frame(decomp, iface)
        weight = face_weight_matrix(term.norm, res.face_points, fr.extents)
        return TermSample(term, (ea.id, eb.id), mat, weight, np.zeros((term.ncomp, x.shape[1])), x, fr.extents)
    raise ValueError(f"unknown locus kind {term.kind!r}")


def element_dofs(eids, dim: int, degree: int) -> np.ndarray:
    nloc = (dim + 1) * (degree + 1) ** dim
    return np.concatenate([np.arange(e * nloc, (e + 1) * nloc) for e in eids])


@dataclass
class TermValues:
    values: np.ndarray  # (ncomp, npts)
    tangential_derivatives: Optional[list] = None  # per face coordinate, (ncomp, npts)


def apply_operator(term: ResidualTerm, field: StokesField, decomp: Decomposition,
                   res: Optional[Resolution] = None) -> TermValues:
    """Linear part ``K(u, p)`` of a residual at its quadrature nodes.

    For ``H^{3/2}`` terms the physical tangential derivatives of the nodal
    interpolant are returned as well.
    """
    res = res or Resolution.default(field.degree)
    smp = sample_term(term, decomp, res)
    x = np.concatenate([field.element_block(e) for e in smp.elements])
    vals = smp.matrix @ x
    tders = None
    if term.norm is THREEHALF:
        tders = _tangential_derivatives(vals, res.face_points, smp.extents)
    return TermValues(vals, tders)


def _tangential_derivatives(vals, n, extents):
    nd = len(extents)
    return [vals @ (tensor_diff(n, nd, t) * (2.0 / extents[t])).T for t in range(nd)]


def residual_norm_sq(smp: TermSample, vals: np.ndarray, res: Resolution) -> float:
    """Squared norm of ``vals - target`` computed from nodal values."""
    r = vals - smp.target
    norm = smp.term.norm
    total = 0.0
    if not norm.on_face:
        dim = smp.points.shape[0]
        n = res.volume_points
        _, w = tensor_rule(n, dim)
        jac = float(np.prod(np.asarray(smp.sizes) / 2.0))
        m = norm.element_order
        ds = {k: tensor_diff(n, dim, k) * (2.0 / smp.sizes[k]) for k in range(dim)}
        for comp in r:
            jet = {}
            for alpha in multi_indices(dim, m):
                v = comp
                for k, a in enumerate(alpha):
                    for _ in range(a):
                        v = ds[k] @ v
                jet[alpha] = v
            total += elem_norm_sq(jet, m, w, jac)
        return total
    n = res.face_points
    ext = smp.extents
    w = face_weights(n, len(ext))
    jac = float(np.prod(np.asarray(ext) / 2.0))
    if norm is NormOrder.L2_FACE:
        return sum(face_l2_sq(c, w, jac) for c in r)
    if norm is HALF:
        return sum(face_fractional_half_sq(c, ext) for c in r)
    tders = _tangential_derivatives(r, n, ext)
    return sum(face_fractional_threehalf_sq(r[c], [d[c] for d in tders], ext) for c in range(len(r)))


def gauge_functional(g: GaugeTerm, decomp: Decomposition, degree: int) -> np.ndarray:
    """Coefficient vector ``a`` with ``a . x`` equal to the gauge functional."""
    dim = decomp.dim
    nb = (degree + 1) ** dim
    a = np.zeros(decomp.n_elements * (dim + 1) * nb)
    n = degree + 2
    xi, w = tensor_rule(n, dim)
    for e in decomp.elements:
        base = e.id * (dim + 1) * nb
        v = basis_jet(degree, xi, e.scale, 0)[(0,) * dim]
        integ = e.jacobian * (w @ v)
        if g.kind == "pressure_mean":
            a[base + dim * nb: base + (dim + 1) * nb] += integ
        elif g.kind == "velocity_mean":
            k = g.component
            a[base + k * nb: base + (k + 1) * nb] += integ
        elif g.kind == "rotation":
            x = inverse_map(e, xi)
            # integral of x1 u2 - x2 u1
            a[base + 1 * nb: base + 2 * nb] += e.jacobian * ((w * x[0]) @ v)
            a[base: base + nb] -= e.jacobian * ((w * x[1]) @ v)
        else:
            raise ValueError(f"unknown gauge kind {g.kind!r}")
    return a


def functional_value(field: StokesField, terms: Sequence, decomp: Decomposition,
                     res: Optional[Resolution] = None) -> float:
    """``R(u, p)``: sum of squared residual norms (plus gauge penalties)."""
    res = res or Resolution.default(field.degree)
    x_all = field.as_vector()
    total = 0.0
    for term in terms:
        if isinstance(term, GaugeTerm):
            a = gauge_functional(term, decomp, field.degree)
            total += float(a @ x_all - term.value) ** 2
            continue
        smp = sample_term(term, decomp, res)
        x = np.concatenate([field.element_block(e) for e in smp.elements])
        total += residual_norm_sq(smp, smp.matrix @ x, res)
    return total
