import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokes_lsq.geometry import (
    DomainSpec,
    Element,
    GeometryError,
    ReferenceElement,
    TagRule,
    box_domain,
    build_decomposition,
    face_points_reference,
    face_trace_frame,
    inverse_map,
    map_face_coords,
    reference_map,
)
from stokes_lsq.spectral import tensor_rule


def test_reference_element_dims():
    assert ReferenceElement(2).volume == 4.0
    with pytest.raises(GeometryError):
        ReferenceElement(1)


def test_element_requires_positive_extent():
    with pytest.raises(GeometryError):
        Element(0, (0.0, 0.0), (1.0, 0.0))


def test_single_square(unit_square):
    d = unit_square
    assert (d.n_elements, len(d.interfaces), len(d.boundary)) == (1, 0, 4)


def test_four_squares(four_squares):
    d = four_squares
    assert (d.n_elements, len(d.interfaces), len(d.boundary)) == (4, 4, 8)


def test_l_shape(l_shape):
    d = l_shape
    assert (d.n_elements, len(d.interfaces), len(d.boundary)) == (3, 2, 8)
    assert d.volume() == pytest.approx(3.0, rel=1e-12)


def test_interfaces_unique(four_squares):
    pairs = [frozenset((i.element_a, i.element_b)) for i in four_squares.interfaces]
    assert len(pairs) == len(set(pairs))


def test_every_face_accounted_once(l_shape):
    seen = {}
    for i in l_shape.interfaces:
        for key in ((i.element_a, i.face_a), (i.element_b, i.face_b)):
            seen[key] = seen.get(key, 0) + 1
    for s in l_shape.boundary:
        seen[(s.element, s.face)] = seen.get((s.element, s.face), 0) + 1
    assert len(seen) == 3 * 4
    assert set(seen.values()) == {1}


def test_overlap_rejected():
    spec = DomainSpec((((0, 0), (1, 1)), ((0.5, 0), (1.5, 1))), (), "b")
    with pytest.raises(GeometryError, match="overlap"):
        build_decomposition(spec)


def test_hanging_face_rejected():
    spec = DomainSpec((((0, 0), (1, 1)), ((1, 0), (2, 0.5)), ((1, 0.5), (2, 1))), (), "b")
    with pytest.raises(GeometryError, match="hanging"):
        build_decomposition(spec)


def test_untagged_face_rejected():
    spec = box_domain((0, 0), (1, 1), (1, 1), (TagRule("bottom", normal=(0.0, -1.0)),))
    with pytest.raises(GeometryError, match="untagged"):
        build_decomposition(spec)


def test_tag_rule_box():
    rule = TagRule("lowleft", box=((0, 0), (0, 0.5)))
    spec = box_domain((0, 0), (1, 1), (1, 2), (rule,), "rest")
    d = build_decomposition(spec)
    assert len(d.segments_with_tag("lowleft")) == 1


@pytest.mark.parametrize("x, expected", [((0.5, 0.5), (0.0, 0.0)), ((1.0, 0.0), (1.0, -1.0))])
def test_reference_map_unit_square(x, expected):
    e = Element(0, (0.0, 0.0), (1.0, 1.0))
    np.testing.assert_allclose(reference_map(e, x), expected, atol=1e-15)


def test_reference_map_stretched():
    e = Element(0, (2.0, 0.0), (4.0, 1.0))
    np.testing.assert_allclose(reference_map(e, (3.0, 0.25)), (0.0, -0.5), atol=1e-15)


def test_reference_map_outside():
    e = Element(0, (0.0, 0.0), (1.0, 1.0))
    with pytest.raises(GeometryError):
        reference_map(e, (1.0 + 1e-9, 0.5))


corners = st.lists(st.floats(-5, 5), min_size=3, max_size=3)
sizes = st.lists(st.floats(0.01, 10), min_size=3, max_size=3)


@settings(max_examples=40, deadline=None)
@given(corners, sizes, st.integers(0, 2**31 - 1))
def test_round_trip(lo, size, seed):
    e = Element(0, tuple(lo), tuple(a + b for a, b in zip(lo, size)))
    xi = np.random.default_rng(seed).uniform(-1, 1, (3, 100))
    assert np.max(np.abs(reference_map(e, inverse_map(e, xi)) - xi)) <= 1e-12


def test_frame_bottom_of_unit_square(unit_square):
    seg = next(s for s in unit_square.boundary if s.tag == "bottom")
    fr = face_trace_frame(unit_square, seg)
    assert fr.normal == (0.0, -1.0)
    np.testing.assert_allclose(fr.tangents[0], (1.0, 0.0))
    assert fr.jacobian == pytest.approx(0.5)


def test_frame_right_of_big_square():
    d = build_decomposition(box_domain((-1, -1), (1, 1), (1, 1), (), "b"))
    seg = next(s for s in d.boundary if s.outward_normal == (1.0, 0.0))
    fr = face_trace_frame(d, seg)
    np.testing.assert_allclose(fr.tangents[0], (0.0, 1.0))
    assert fr.jacobian == pytest.approx(1.0)


def test_frame_top_of_cube(unit_cube):
    seg = next(s for s in unit_cube.boundary if s.outward_normal == (0.0, 0.0, 1.0))
    fr = face_trace_frame(unit_cube, seg)
    assert fr.tangents == ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    assert fr.jacobian == pytest.approx(0.25)


@pytest.mark.parametrize("fixture", ["four_squares", "l_shape", "unit_cube"])
def test_frames_orthonormal(request, fixture):
    d = request.getfixturevalue(fixture)
    for seg in d.boundary:
        fr = face_trace_frame(d, seg)
        basis = np.array((fr.normal,) + fr.tangents)
        np.testing.assert_allclose(basis @ basis.T, np.eye(d.dim), atol=1e-15)


def test_face_conformity():
    d = build_decomposition(box_domain((0, 0, 0), (2, 1, 1), (2, 1, 1), (), "b"))
    for d2 in (d, build_decomposition(box_domain((-1, -1), (1, 1), (2, 2), (), "b"))):
        s, _ = tensor_rule(6, d2.dim - 1)
        for iface in d2.interfaces:
            ea, eb = d2.element(iface.element_a), d2.element(iface.element_b)
            xa = inverse_map(ea, face_points_reference(d2.dim, iface.face_a, s))
            xb = inverse_map(eb, face_points_reference(d2.dim, iface.face_b, map_face_coords(iface, s)))
            assert np.max(np.abs(xa - xb)) <= 1e-12


def test_partition_volume():
    d = build_decomposition(box_domain((0, 0, 0), (1, 2, 3), (2, 3, 1), (), "b"))
    assert abs(d.volume() - 6.0) <= 1e-12 * 6.0
