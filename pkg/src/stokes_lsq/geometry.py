"""Axis-aligned box decompositions: elements, interfaces and tagged boundary faces.

Local face numbering is ``face = 2 * axis + side`` with ``side = 0`` on the
lower coordinate plane and ``side = 1`` on the upper one, so the outward
normal of face ``f`` is ``(-1)**(side + 1) * e_axis``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TOL = 1e-12


class GeometryError(ValueError):
    """Raised for invalid decompositions or out-of-element points."""


@dataclass(frozen=True)
class ReferenceElement:
    dim: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GeometryError(f"dim must be 2 or 3, got {self.dim}")

    @property
    def extent(self):
        return ((-1.0, 1.0),) * self.dim

    @property
    def volume(self) -> float:
        return 2.0 ** self.dim


@dataclass(frozen=True)
class Element:
    id: int
    lower_corner: tuple
    upper_corner: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower_corner, dtype=float)
        hi = np.asarray(self.upper_corner, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise GeometryError("corner coordinates must be equal-length vectors")
        if not np.all(hi > lo):
            raise GeometryError(f"element {self.id}: upper corner must exceed lower corner")

    @property
    def dim(self) -> int:
        return len(self.lower_corner)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower_corner, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper_corner, dtype=float)

    @property
    def size(self) -> np.ndarray:
        """Edge lengths per axis."""
        return self.hi - self.lo

    @property
    def scale(self) -> np.ndarray:
        """d(xi)/dx per axis, constant for the affine map."""
        return 2.0 / self.size

    @property
    def jacobian(self) -> float:
        """Volume ratio |Omega_l| / |Q|."""
        return float(np.prod(self.size / 2.0))

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def face_box(self, face: int):
        axis, side = divmod(face, 2)
        lo, hi = self.lo.copy(), self.hi.copy()
        plane = hi[axis] if side else lo[axis]
        lo[axis] = hi[axis] = plane
        return lo, hi


@dataclass(frozen=True)
class Interface:
    element_a: int
    face_a: int
    element_b: int
    face_b: int
    # face_b tangential coordinate k equals (-1 if flip[k] else 1) * face_a coordinate perm[k]
    perm: tuple = ()
    flip: tuple = ()

    @property
    def orientation(self):
        return self.perm, self.flip


@dataclass(frozen=True)
class BoundarySegment:
    element: int
    face: int
    tag: str
    outward_normal: tuple


@dataclass(frozen=True)
class TagRule:
    """Assigns ``tag`` to boundary faces matching an optional normal and box.

    ``box`` is ``(lo, hi)``; a face matches when it lies entirely inside it.
    """

    tag: str
    normal: Optional[tuple] = None
    box: Optional[tuple] = None

    def matches(self, normal: np.ndarray, face_lo: np.ndarray, face_hi: np.ndarray) -> bool:
        if self.normal is not None and not np.allclose(self.normal, normal, atol=TOL):
            return False
        if self.box is not None:
            blo, bhi = (np.asarray(b, dtype=float) for b in self.box)
            if np.any(face_lo < blo - TOL) or np.any(face_hi > bhi + TOL):
                return False
        return True


@dataclass(frozen=True)
class DomainSpec:
    """Structured description of a box decomposition.

    ``blocks`` is a sequence of ``(lower_corner, upper_corner)`` pairs; boundary
    faces take the tag of the first matching rule, else ``default_tag``.
    """

    blocks: tuple
    tags: tuple = ()
    default_tag: Optional[str] = None

    @property
    def dim(self) -> int:
        return len(self.blocks[0][0])


@dataclass(frozen=True)
class Decomposition:
    dim: int
    elements: tuple
    interfaces: tuple
    boundary: tuple
    reference: ReferenceElement = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "reference", ReferenceElement(self.dim))

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def tags(self) -> set:
        return {seg.tag for seg in self.boundary}

    def element(self, eid: int) -> Element:
        return self.elements[eid]

    def segments_with_tag(self, tag: str) -> list:
        return [seg for seg in self.boundary if seg.tag == tag]

    def volume(self) -> float:
        return sum(e.volume for e in self.elements)


def face_normal(dim: int, face: int) -> np.ndarray:
    axis, side = divmod(face, 2)
    n = np.zeros(dim)
    n[axis] = 1.0 if side else -1.0
    return n


def tangential_axes(dim: int, face: int) -> list:
    axis = face // 2
    return [k for k in range(dim) if k != axis]


def _box_overlap(lo1, hi1, lo2, hi2, axes):
    """Overlap measure of two faces restricted to ``axes`` (0 if none)."""
    ext = [min(hi1[k], hi2[k]) - max(lo1[k], lo2[k]) for k in axes]
    if any(e <= TOL for e in ext):
        return 0.0
    return float(np.prod(ext))


def build_decomposition(spec: DomainSpec) -> Decomposition:
    """Build a face-conforming decomposition from axis-aligned blocks.

    Interfaces are found by exact corner matching of opposite faces. Partial
    face contact (hanging faces), overlapping blocks and boundary faces without
    a tag are rejected.
    """
    if not spec.blocks:
        raise GeometryError("domain has no blocks")
    dim = spec.dim
    ReferenceElement(dim)
    elements = tuple(
        Element(i, tuple(float(v) for v in lo), tuple(float(v) for v in hi))
        for i, (lo, hi) in enumerate(spec.blocks)
    )
    for e in elements:
        if e.dim != dim:
            raise GeometryError(f"element {e.id} has dimension {e.dim}, expected {dim}")
    for i, a in enumerate(elements):
        for b in elements[i + 1:]:
            if _box_overlap(a.lo, a.hi, b.lo, b.hi, range(dim)) > 0.0:
                raise GeometryError(f"blocks {a.id} and {b.id} overlap")

    interfaces = []
    boundary = []
    matched = set()
    for a in elements:
        for fa in range(2 * dim):
            if (a.id, fa) in matched:
                continue
            axis = fa // 2
            lo_a, hi_a = a.face_box(fa)
            taxes = tangential_axes(dim, fa)
            partner = None
            for b in elements:
                if b.id == a.id:
                    continue
                fb = fa ^ 1  # opposite side, same axis
                lo_b, hi_b = b.face_box(fb)
                if abs(lo_b[axis] - lo_a[axis]) > TOL:
                    continue
                if _box_overlap(lo_a, hi_a, lo_b, hi_b, taxes) == 0.0:
                    continue
                if not (np.allclose(lo_a, lo_b, atol=TOL) and np.allclose(hi_a, hi_b, atol=TOL)):
                    raise GeometryError(
                        f"hanging face: element {a.id} face {fa} partially overlaps element {b.id} face {fb}"
                    )
                partner = (b.id, fb)
                break
            if partner is not None:
                b_id, fb = partner
                # both reference maps increase along the same physical axes
                perm = tuple(range(dim - 1))
                flip = (False,) * (dim - 1)
                interfaces.append(Interface(a.id, fa, b_id, fb, perm, flip))
                matched.add((a.id, fa))
                matched.add(partner)
                continue
            normal = face_normal(dim, fa)
            tag = None
            for rule in spec.tags:
                if rule.matches(normal, lo_a, hi_a):
                    tag = rule.tag
                    break
            if tag is None:
                tag = spec.default_tag
            if tag is None:
                raise GeometryError(f"untagged boundary face: element {a.id} face {fa}")
            boundary.append(BoundarySegment(a.id, fa, tag, tuple(normal)))
    return Decomposition(dim, elements, tuple(interfaces), tuple(boundary))


def reference_map(e: Element, x) -> np.ndarray:
    """Map physical points (shape ``(dim,)`` or ``(dim, npts)``) into Q."""
    x = np.asarray(x, dtype=float)
    lo, hi = e.lo, e.hi
    shape = (-1,) + (1,) * (x.ndim - 1)
    xi = 2.0 * (x - lo.reshape(shape)) / (hi - lo).reshape(shape) - 1.0
    if np.any(np.abs(xi) > 1.0 + TOL):
        raise GeometryError(f"point outside element {e.id}")
    return xi


def inverse_map(e: Element, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    shape = (-1,) + (1,) * (xi.ndim - 1)
    return e.lo.reshape(shape) + (xi + 1.0) * (e.size / 2.0).reshape(shape)


@dataclass(frozen=True)
class FaceFrame:
    """Orthonormal frame of an axis-aligned face.

    ``extents`` are the physical side lengths along the face's tangential
    reference coordinates (ascending element axes), ``jacobian`` the ratio of
    physical to reference face measure.
    """

    normal: tuple
    tangents: tuple
    jacobian: float
    extents: tuple

    @property
    def dim(self) -> int:
        return len(self.normal)


def frame_from_normal(normal, extents=None) -> FaceFrame:
    """Frame determined by an axis-aligned unit normal.

    In 2D the tangent is the normal rotated by +90 degrees; in 3D the tangents
    are the remaining coordinate unit vectors in ascending order.
    """
    n = tuple(float(v) for v in normal)
    dim = len(n)
    if dim == 2:
        tangents = ((-n[1], n[0]),)
    else:
        axis = int(np.argmax(np.abs(n)))
        tangents = tuple(tuple(float(k == j) for k in range(dim)) for j in range(dim) if j != axis)
    if extents is None:
        extents = (2.0,) * (dim - 1)
    extents = tuple(float(h) for h in extents)
    jac = float(np.prod(np.asarray(extents) / 2.0))
    return FaceFrame(n, tangents, jac, extents)


def face_trace_frame(decomp: Decomposition, item) -> FaceFrame:
    """Frame of a boundary segment or an interface (normal points out of element_a)."""
    if isinstance(item, BoundarySegment):
        e, face = decomp.element(item.element), item.face
    elif isinstance(item, Interface):
        e, face = decomp.element(item.element_a), item.face_a
    else:
        raise TypeError(f"expected BoundarySegment or Interface, got {type(item).__name__}")
    normal = face_normal(decomp.dim, face)
    extents = tuple(e.size[k] for k in tangential_axes(decomp.dim, face))
    return frame_from_normal(normal, extents)


def face_points_reference(dim: int, face: int, s) -> np.ndarray:
    """Embed face coordinates ``s`` (shape ``(dim-1, npts)``) into Q on ``face``."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    axis, side = divmod(face, 2)
    xi = np.empty((dim, s.shape[1]))
    xi[axis] = 1.0 if side else -1.0
    for k, t in enumerate(tangential_axes(dim, face)):
        xi[t] = s[k]
    return xi


def map_face_coords(iface: Interface, s_a) -> np.ndarray:
    """Carry face coordinates on element_a's face to element_b's face."""
    s_a = np.atleast_2d(np.asarray(s_a, dtype=float))
    out = np.empty_like(s_a)
    for k, (src, flipped) in enumerate(zip(iface.perm, iface.flip)):
        out[k] = -s_a[src] if flipped else s_a[src]
    return out


def box_domain(lower: Sequence[float], upper: Sequence[float], divisions: Sequence[int],
               tags=(), default_tag=None) -> DomainSpec:
    """Uniform tensor split of a box into ``prod(divisions)`` blocks."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    grids = [np.linspace(lower[k], upper[k], n + 1) for k, n in enumerate(divisions)]
    blocks = []
    for idx in np.ndindex(*divisions):
        lo = tuple(float(grids[k][i]) for k, i in enumerate(idx))
        hi = tuple(float(grids[k][i + 1]) for k, i in enumerate(idx))
        blocks.append((lo, hi))
    return DomainSpec(tuple(blocks), tuple(tags), default_tag)
