import numpy as np
import pytest
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as P

from stokes_lsq import catalog as cat
from stokes_lsq import operators as ops
from stokes_lsq.bench import CASES, SIDES_2D, case_terms, derive_data, interpolate_exact
from stokes_lsq.geometry import box_domain, build_decomposition, frame_from_normal, reference_map
from stokes_lsq.norms import NormOrder
from stokes_lsq.solver import assemble_system
from stokes_lsq.spectral import StokesField, evaluate, interpolate

from oracles import half_norm_oracle_1d


def zero_data(x, n):
    return np.zeros((3, x.shape[1]))


def field_from(dm, W, fns):
    """Interpolate a list of (u1, u2, p) callables on every element."""
    coeffs = np.stack([interpolate(lambda x: np.array([f(x) for f in fns]), dm, e.id, W) for e in dm.elements])
    return StokesField(dm.dim, W, coeffs)


def b14_spec():
    return cat.BoundaryConditionSpec("B14", {"Gamma0": ("left", "top", "right"), "Gamma1": ("bottom",)},
                                     {"omega_n": zero_data})


# --- term counts -------------------------------------------------------------

def test_single_element_interior_terms(unit_square):
    terms = cat.interior_terms(unit_square)
    assert len(terms) == 2
    assert [t.norm for t in terms] == [NormOrder.L2_ELEM, NormOrder.H1_ELEM]


def test_four_element_interior_terms(four_squares):
    terms = cat.interior_terms(four_squares)
    assert len(terms) == 8 + 16
    jumps = [t for t in terms if t.kind == "interface"]
    assert len(jumps) == 16
    assert sum(t.norm is NormOrder.L2_FACE for t in jumps) == 4
    assert sum(t.norm is NormOrder.H_HALF_FACE for t in jumps) == 12


def test_b5_single_segment():
    dm = build_decomposition(box_domain((0, 0), (1, 1), (1, 1), SIDES_2D))
    specs = [cat.BoundaryConditionSpec("B5", {"Gamma": ("left",)}, {"g": zero_data, "p_tilde": zero_data}),
             cat.BoundaryConditionSpec("DIR", {"Gamma": ("right", "top", "bottom")}, {"g": zero_data})]
    terms = cat.boundary_terms(specs[0], dm)
    assert len(terms) == 2
    assert [t.norm for t in terms] == [NormOrder.H_THREEHALF_FACE, NormOrder.H_HALF_FACE]
    cat.check_coverage(specs, dm)


def test_b14_unit_square(unit_square):
    terms = cat.boundary_terms(b14_spec(), unit_square)
    norms = [t.norm for t in terms]
    assert len(terms) == 5
    assert norms.count(NormOrder.H_THREEHALF_FACE) == 4
    assert norms.count(NormOrder.H_HALF_FACE) == 1


@pytest.mark.parametrize("name", sorted(cat.FAMILIES))
def test_every_family_builds_2d_and_3d(name, unit_cube):
    fam = cat.family(name)
    for dm in (build_decomposition(box_domain((0, 0), (1, 1), (1, 1), (), "b")), unit_cube):
        tag = sorted(dm.tags)[0]
        segs = {r: () for r in fam.roles}
        segs[fam.roles[0]] = (tag,)
        data = {s.name: zero_data for s in fam.slots}
        params = {p: 1.0 for p in fam.params}
        spec = cat.BoundaryConditionSpec(name, segs, data, params)
        terms = cat.boundary_terms(spec, dm)
        per_seg = sum(t.role == fam.roles[0] for t in fam.terms)
        assert len(terms) == per_seg * len(dm.boundary)
        for t in terms:
            assert t.norm.on_face
            assert all(max(op.max_order, 0) <= 1 for op in t.stencil)


# --- validation --------------------------------------------------------------

def test_unknown_family():
    with pytest.raises(cat.CatalogError, match="unknown family"):
        cat.BoundaryConditionSpec("B19", {"Gamma": ("b",)}).validate()


def test_missing_and_extra_slots():
    with pytest.raises(cat.CatalogError, match="omega_n"):
        cat.BoundaryConditionSpec("B14", {"Gamma0": ("a",), "Gamma1": ("b",)}).validate()
    with pytest.raises(cat.CatalogError, match="unexpected data"):
        cat.BoundaryConditionSpec("B14", {"Gamma0": ("a",), "Gamma1": ("b",)},
                                  {"omega_n": zero_data, "g": zero_data}).validate()


def test_roles_params_and_penalties():
    with pytest.raises(cat.CatalogError, match="roles"):
        cat.BoundaryConditionSpec("B14", {"Gamma": ("a",)}, {"omega_n": zero_data}).validate()
    with pytest.raises(cat.CatalogError, match="parameters"):
        cat.BoundaryConditionSpec("B3", {"Gamma": ("a",)}, {"g_n": zero_data, "h": zero_data}).validate()
    with pytest.raises(cat.CatalogError, match="penalty"):
        cat.BoundaryConditionSpec("DIR", {"Gamma": ("a",)}, {"g": zero_data}, penalties=("spin",)).validate()


def test_tag_absent(unit_square):
    spec = cat.BoundaryConditionSpec("DIR", {"Gamma": ("nowhere",)}, {"g": zero_data})
    with pytest.raises(cat.CatalogError, match="not present"):
        cat.boundary_terms(spec, unit_square)


def test_coverage_errors(unit_square):
    part = cat.BoundaryConditionSpec("DIR", {"Gamma": ("left",)}, {"g": zero_data})
    with pytest.raises(cat.CatalogError, match="no condition"):
        cat.check_coverage([part], unit_square)
    dup = cat.BoundaryConditionSpec("DIR", {"Gamma": ("left", "right", "top", "bottom")}, {"g": zero_data})
    with pytest.raises(cat.CatalogError, match="several"):
        cat.check_coverage([dup, part], unit_square)


# --- apply_operator ----------------------------------------------------------

def test_momentum_of_linear_pressure(unit_square):
    f = field_from(unit_square, 3, [lambda x: 0 * x[0], lambda x: 0 * x[0], lambda x: x[0]])
    term = cat.interior_terms(unit_square)[0]
    vals = cat.apply_operator(term, f, unit_square).values
    np.testing.assert_allclose(vals[0], 1.0, atol=1e-12)
    np.testing.assert_allclose(vals[1], 0.0, atol=1e-12)


def test_continuity_of_solenoidal_field(unit_square):
    f = field_from(unit_square, 3, [lambda x: x[0], lambda x: -x[1], lambda x: 0 * x[0]])
    term = cat.interior_terms(unit_square)[1]
    np.testing.assert_allclose(cat.apply_operator(term, f, unit_square).values, 0.0, atol=1e-12)


def test_traction_of_unit_pressure(unit_square):
    f = field_from(unit_square, 2, [lambda x: 0 * x[0], lambda x: 0 * x[0], lambda x: 1 + 0 * x[0]])
    i = next(i for i, s in enumerate(unit_square.boundary) if s.tag == "bottom")
    fr = frame_from_normal((0.0, -1.0))
    term = cat.ResidualTerm("boundary", i, tuple(ops.traction(fr)), NormOrder.H_HALF_FACE)
    vals = cat.apply_operator(term, f, unit_square).values
    np.testing.assert_allclose(vals[0], 0.0, atol=1e-13)
    np.testing.assert_allclose(vals[1], 1.0, atol=1e-13)


def test_threehalf_terms_return_tangential_derivatives(unit_square):
    f = field_from(unit_square, 3, [lambda x: x[0] ** 2, lambda x: 0 * x[0], lambda x: 0 * x[0]])
    term = next(t for t in cat.boundary_terms(b14_spec(), unit_square) if t.label.endswith(": u"))
    seg = unit_square.boundary[term.index]
    tv = cat.apply_operator(term, f, unit_square)
    assert tv.tangential_derivatives is not None and len(tv.tangential_derivatives) == 1
    if seg.tag in ("top", "bottom"):
        smp = cat.sample_term(term, unit_square, cat.Resolution.default(3))
        np.testing.assert_allclose(tv.tangential_derivatives[0][0], 2 * smp.points[0], atol=1e-12)


def test_unknown_locus(unit_square):
    t = cat.ResidualTerm("edge", 0, (ops.pressure(2),), NormOrder.L2_FACE)
    with pytest.raises(ValueError):
        cat.sample_term(t, unit_square, cat.Resolution.default(2))


# --- jumps and functional ----------------------------------------------------

def test_global_polynomial_has_no_jumps(four_squares):
    W = 4
    fns = [lambda x: x[0] ** 3 * x[1], lambda x: x[1] ** 2 - x[0], lambda x: x[0] * x[1] ** 4]
    f = field_from(four_squares, W, fns)
    for t in cat.interior_terms(four_squares):
        if t.kind == "interface":
            vals = cat.apply_operator(t, f, four_squares).values
            assert np.abs(vals).max() <= 1e-13


def test_pressure_jump_matches_oracle(four_squares, rng):
    # discontinuous pressure: a random polynomial on each element
    W = 4
    dim, nb = 2, (W + 1) ** 2
    coeffs = rng.standard_normal((4, dim + 1, nb))
    f = StokesField(dim, W, coeffs)
    res = cat.Resolution.default(W)
    for t in cat.interior_terms(four_squares):
        if t.kind != "interface" or t.label != "[p]":
            continue
        iface = four_squares.interfaces[t.index]
        smp = cat.sample_term(t, four_squares, res)
        value = cat.residual_norm_sq(smp, cat.apply_operator(t, f, four_squares).values, res)
        # oracle: fit the jump polynomial along the physical face and integrate densely
        ea, eb = four_squares.element(iface.element_a), four_squares.element(iface.element_b)
        s = np.linspace(-1, 1, 3 * W)
        axis = iface.face_a // 2
        free = 1 - axis
        xs = np.linspace(ea.lo[free], ea.hi[free], 3 * W)
        pts = np.zeros((2, len(xs)))
        pts[free] = xs
        pts[axis] = ea.hi[axis] if iface.face_a % 2 else ea.lo[axis]
        jump = (evaluate(f, four_squares, eb.id, reference_map(eb, pts))[2]
                - evaluate(f, four_squares, ea.id, reference_map(ea, pts))[2])
        c = P.polyfit(s, jump, W)
        length = ea.size[free]
        ref = half_norm_oracle_1d(c)
        # L2 part scales with the physical length, the seminorm does not
        xg, wg = npleg.leggauss(50)
        l2_ref = float(wg @ P.polyval(xg, c) ** 2)
        ref = l2_ref * length / 2 + (ref - l2_ref)
        assert abs(value - ref) <= 1e-10 * ref


def test_exact_interpolant_residual_vanishes_ex1():
    case = CASES["ex1"]
    dm = build_decomposition(case.domain)
    terms = case_terms(case, dm)
    for W in (4, 6):
        f = interpolate_exact(case, dm, W)
        assert cat.functional_value(f, terms, dm) <= 1e-20
        for t in terms:
            if isinstance(t, cat.ResidualTerm) and t.kind == "boundary":
                tv = cat.apply_operator(t, f, dm).values
                smp = cat.sample_term(t, dm, cat.Resolution.default(W))
                assert np.abs(tv - smp.target).max() <= 1e-12


@pytest.mark.parametrize("case_id, W", [("ex3", 4), ("ex8", 4)])
def test_exact_interpolant_residual_vanishes_polynomial(case_id, W):
    case = CASES[case_id]
    dm = build_decomposition(case.domain)
    f = interpolate_exact(case, dm, W)
    assert cat.functional_value(f, case_terms(case, dm), dm) <= 1e-18


@pytest.mark.parametrize("case_id", ["ex2", "ex4", "ex5", "ex6", "ex7"])
def test_exact_interpolant_residual_decays(case_id):
    case = CASES[case_id]
    dm = build_decomposition(case.domain)
    terms = case_terms(case, dm)
    vals = [cat.functional_value(interpolate_exact(case, dm, W), terms, dm) for W in (4, 7, 10)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] <= 1e-6 * vals[0]


def test_zero_field_measures_the_data(unit_square):
    W = 3
    dm = unit_square
    spec = cat.BoundaryConditionSpec("DIR", {"Gamma": ("left", "right", "top", "bottom")},
                                     {"g": lambda x, n: np.array([np.ones(x.shape[1]), 2 * np.ones(x.shape[1])])})
    terms = cat.assemble_terms(dm, [spec], source=lambda x: np.array([np.ones(x.shape[1]), 0 * x[0]]),
                               divergence=lambda x: x[0])
    f = StokesField.zeros(dm, W)
    # momentum: int 1 = 1; continuity: int x^2 + int 1 = 1/3 + 1; four sides of (1, 2): 4 * 5
    expected = 1.0 + 4.0 / 3.0 + 20.0
    assert abs(cat.functional_value(f, terms, dm) - expected) <= 1e-12


def test_refined_quadrature_agrees_for_polynomials(four_squares, rng):
    W = 3
    case_specs = [cat.BoundaryConditionSpec("B14", {"Gamma0": ("left", "top", "right"), "Gamma1": ("bottom",)},
                                            {"omega_n": lambda x, n: x[0] * x[1]})]
    terms = cat.assemble_terms(four_squares, case_specs, source=lambda x: np.array([x[0], x[1] ** 2]),
                               divergence=lambda x: x[0] * x[1])
    f = StokesField(2, W, rng.standard_normal((4, 3, (W + 1) ** 2)))
    base = cat.functional_value(f, terms, four_squares)
    fine = cat.functional_value(f, terms, four_squares, cat.Resolution(W, W + 8, W + 8))
    assert abs(base - fine) <= 1e-10 * fine


def test_functional_is_exactly_quadratic(rng):
    W = 3
    case = CASES["ex5"]
    dm = build_decomposition(case.domain)
    terms = case_terms(case, dm)
    sysm = assemble_system(terms, dm, W)
    x = rng.standard_normal(sysm.size)
    y = rng.standard_normal(sysm.size)
    R = lambda v: cat.functional_value(StokesField.from_vector(dm, W, v), terms, dm)
    # along any line a quadratic has vanishing third differences
    r = [R(x + t * y) for t in (-1.0, 0.0, 1.0, 2.0)]
    assert abs(r[3] - 3 * r[2] + 3 * r[1] - r[0]) <= 1e-9 * max(r)
    for a, b in [(0.3, -1.2), (2.0, 0.5)]:
        v = a * x + b * y
        pred = v @ sysm.matvec(v) - 2 * sysm.rhs @ v + sysm.const
        assert abs(R(v) - pred) <= 1e-9 * abs(pred)


def test_interior_terms_independent_of_family(four_squares):
    src = lambda x: np.zeros((2, x.shape[1]))
    outs = []
    for name in ("B14", "B15", "B5", "B7"):
        fam = cat.family(name)
        segs = {r: () for r in fam.roles}
        segs[fam.roles[0]] = ("left", "right", "top", "bottom")
        spec = cat.BoundaryConditionSpec(name, segs, {s.name: zero_data for s in fam.slots},
                                         {p: 1.0 for p in fam.params})
        terms = cat.assemble_terms(four_squares, [spec], src, None)
        outs.append([t for t in terms if t.kind != "boundary"])
    assert all(o == outs[0] for o in outs)
    assert all(repr(o) == repr(outs[0]) for o in outs)


# --- gauge -------------------------------------------------------------------

def test_pressure_gauge_added_only_when_needed(unit_square):
    b14 = cat.boundary_terms(b14_spec(), unit_square)
    assert not cat.pressure_is_free(b14, 2)
    d = cat.BoundaryConditionSpec("DIR", {"Gamma": ("left", "right", "top", "bottom")}, {"g": zero_data})
    bd = cat.boundary_terms(d, unit_square)
    assert cat.pressure_is_free(bd, 2)
    g = cat.gauge_terms(bd, [d], 2, 0.5)
    assert g == [cat.GaugeTerm("pressure_mean", 0.5)]


def test_gauge_functionals(l_shape):
    W = 3
    f = field_from(l_shape, W, [lambda x: 1 + 0 * x[0], lambda x: x[0], lambda x: x[1] + 2])
    x = f.as_vector()
    area = l_shape.volume()
    a = cat.gauge_functional(cat.GaugeTerm("pressure_mean"), l_shape, W)
    # int (x2 + 2) over the L-shape: int x2 = -1/2 + 1/2 + 1/2
    assert abs(a @ x - (0.5 + 2 * area)) <= 1e-12
    a = cat.gauge_functional(cat.GaugeTerm("velocity_mean", component=0), l_shape, W)
    assert abs(a @ x - area) <= 1e-12
    a = cat.gauge_functional(cat.GaugeTerm("rotation"), l_shape, W)
    # int x1 * u2 - x2 * u1 = int x1^2 - x2
    assert abs(a @ x - (3 * (1 / 3) - 0.5)) <= 1e-12


def test_rotation_gauge_is_2d_only(unit_cube):
    d = cat.BoundaryConditionSpec("DIR", {"Gamma": ("boundary",)}, {"g": zero_data}, penalties=("rotation",))
    with pytest.raises(cat.CatalogError):
        cat.gauge_terms([], [d], 3)


def test_derived_data_matches_exact_traces():
    case = CASES["ex1"]
    data = derive_data(case)
    assert len(data.specs) == 1 and data.specs[0].family == "B14"
    # int x1^2 - x2^2 over the unit square
    assert abs(data.pressure_integral) <= 1e-14
