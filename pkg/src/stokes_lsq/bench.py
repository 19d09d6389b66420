"""Manufactured-solution cases, error norms and convergence studies."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import catalog as cat
from .geometry import Decomposition, DomainSpec, TagRule, box_domain, build_decomposition, frame_from_normal, inverse_map
from .manufactured import CosExpPressure, ExactSolution, TrigProduct, poly_vars
from .solver import BlockPreconditioner, PCGResult, SolverConfig, assemble_system, pcg_solve
from .spectral import StokesField, basis_jet, interpolate, tensor_rule

ERROR_POINTS_EXTRA = 10


# --- case definitions ------------------------------------------------------

@dataclass(frozen=True)
class BoundaryAssignment:
    """A family with its role -> tags map and scalar parameters."""

    family: str
    segments: Mapping
    params: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class ManufacturedCase:
    id: str
    domain: DomainSpec
    conditions: tuple
    exact: ExactSolution
    relative: bool = False
    polynomial: bool = False
    note: str = ""


SIDES_2D = (
    TagRule("left", normal=(-1.0, 0.0)),
    TagRule("right", normal=(1.0, 0.0)),
    TagRule("bottom", normal=(0.0, -1.0)),
    TagRule("top", normal=(0.0, 1.0)),
)


def _ex1_solution():
    x1, x2 = poly_vars(2)
    u1 = x1 ** 2 * (1 - x1) ** 2 * (2 * x2 - 6 * x2 ** 2 + 4 * x2 ** 3)
    u2 = x2 ** 2 * (1 - x2) ** 2 * (-2 * x1 + 6 * x1 ** 2 - 4 * x1 ** 3)
    return ExactSolution((u1, u2), x1 ** 2 - x2 ** 2)


def _ex2_solution():
    s = TrigProduct(1.0, ("sin", "sin"))
    return ExactSolution((s, s), CosExpPressure())


def _ex3_solution():
    x1, x2 = poly_vars(2)
    return ExactSolution((-x2 * (x2 ** 2 - 1), -x1 * (x1 ** 2 - 1)),
                         x1 * x2 * (x1 ** 2 - 1) * (x2 ** 2 - 1))


def _trig_solution():
    x1, x2 = poly_vars(2)
    return ExactSolution((TrigProduct(1.0, ("sin", "sin")), TrigProduct(1.0, ("cos", "cos"))), x1 * x2)


def _ex8_solution():
    x1, x2, x3 = poly_vars(3)
    u1 = 4 * x1 ** 2 * x2 * x3 * (1 - x1) ** 2 * (1 - x2) * (1 - x3) * (x3 - x2)
    u2 = 4 * x1 * x2 ** 2 * x3 * (1 - x1) * (1 - x2) ** 2 * (1 - x3) * (x1 - x3)
    u3 = 4 * x1 * x2 * x3 ** 2 * (1 - x1) * (1 - x2) * (1 - x3) ** 2 * (x2 - x1)
    p = (-2 * x1 * x2 * x3 + x1 ** 2 + x2 ** 2 + x3 ** 2 + x1 * x2 + x1 * x3 + x2 * x3 - x1 - x2 - x3)
    return ExactSolution((u1, u2, u3), p)


def _l_shape() -> DomainSpec:
    blocks = (((-1.0, -1.0), (0.0, 0.0)), ((-1.0, 0.0), (0.0, 1.0)), ((0.0, 0.0), (1.0, 1.0)))
    return DomainSpec(blocks, (), "boundary")


def make_cases() -> dict:
    unit = box_domain((0, 0), (1, 1), (1, 1), SIDES_2D)
    unit4 = box_domain((0, 0), (1, 1), (2, 2), SIDES_2D)
    big4 = box_domain((-1, -1), (1, 1), (2, 2), SIDES_2D)
    cube = box_domain((-1, -1, -1), (1, 1, 1), (1, 1, 1), (), "boundary")
    b14 = BoundaryAssignment("B14", {"Gamma0": ("left", "top", "right"), "Gamma1": ("bottom",)})
    b15 = BoundaryAssignment("B15", {"Gamma0": ("left", "top", "right"), "Gamma1": ("bottom",)})
    cases = [
        ManufacturedCase("ex1", unit, (b14,), _ex1_solution(), polynomial=True,
                         note="unit square, one element"),
        ManufacturedCase("ex2", unit, (b15,), _ex2_solution(),
                         note="unit square, one element; the velocity is not solenoidal, chi is derived"),
        ManufacturedCase("ex3", _l_shape(), (BoundaryAssignment("B5", {"Gamma": ("boundary",)}),),
                         _ex3_solution(), polynomial=True, note="L-shape from three unit squares"),
        ManufacturedCase("ex4", big4, (BoundaryAssignment(
            "B12", {"Gamma1": ("top", "bottom"), "Gamma2": ("left",), "Gamma3": ("right",)}),),
            _trig_solution(), relative=True, note="[-1,1]^2, four elements"),
        ManufacturedCase("ex5", big4, (BoundaryAssignment("B7", {"Gamma": ("top",)}),
                                       BoundaryAssignment("DIR", {"Gamma": ("left", "right", "bottom")})),
                         _trig_solution(), relative=True, note="[-1,1]^2, four elements"),
        ManufacturedCase("ex6", unit4, (BoundaryAssignment("B3", {"Gamma": ("bottom",)}, {"b": 1.0}),
                                        BoundaryAssignment("DIR", {"Gamma": ("left", "right", "top")})),
                         _trig_solution(), relative=True, note="[0,1]^2, four elements"),
        ManufacturedCase("ex7", unit4, (BoundaryAssignment("B10", {"Gamma": ("bottom",)}, {"nu": 1.0}),
                                        BoundaryAssignment("DIR", {"Gamma": ("left", "right", "top")})),
                         _trig_solution(), relative=True, note="[0,1]^2, four elements"),
        ManufacturedCase("ex8", cube, (BoundaryAssignment("B5", {"Gamma": ("boundary",)}),),
                         _ex8_solution(), polynomial=True, note="[-1,1]^3, one element"),
    ]
    return {c.id: c for c in cases}


CASES = make_cases()


def get_case(case_id: str) -> ManufacturedCase:
    key = case_id.lower().replace("-", "")
    if key not in CASES:
        raise KeyError(f"unknown case {case_id!r}; choose from {sorted(CASES)}")
    return CASES[key]


# --- data derivation -------------------------------------------------------

@dataclass(frozen=True)
class ExactTrace:
    """Boundary datum of a family slot evaluated on an exact solution."""

    exact: ExactSolution
    family: str
    slot: str
    params: tuple = ()

    def __call__(self, x, n):
        fr = frame_from_normal(np.asarray(n, dtype=float))
        stencil = cat.family(self.family).slot(self.slot).exact(fr, dict(self.params))
        jet = self.exact.jet(x, 1)
        return np.array([op.apply(jet) if op.terms else np.zeros(x.shape[1]) for op in stencil])


@dataclass(frozen=True)
class CaseData:
    source: object
    divergence: object
    specs: tuple
    pressure_integral: float


def domain_integral(fn, decomp: Decomposition, npoints: int) -> float:
    xi, w = tensor_rule(npoints, decomp.dim)
    return float(sum(e.jacobian * (w @ fn(inverse_map(e, xi))) for e in decomp.elements))


def derive_data(case: ManufacturedCase, decomp: Optional[Decomposition] = None) -> CaseData:
    """Source, divergence data and boundary data consistent with the exact solution."""
    decomp = decomp or build_decomposition(case.domain)
    ex = case.exact
    specs = []
    for bc in case.conditions:
        fam = cat.family(bc.family)
        params = tuple(sorted(bc.params.items()))
        data = {s.name: ExactTrace(ex, bc.family, s.name, params) for s in fam.slots}
        specs.append(cat.BoundaryConditionSpec(bc.family, dict(bc.segments), data, dict(bc.params)))
    p_int = domain_integral(ex.p, decomp, 20)
    return CaseData(ex.source, ex.divergence_data, tuple(specs), p_int)


def case_terms(case: ManufacturedCase, decomp: Optional[Decomposition] = None) -> list:
    decomp = decomp or build_decomposition(case.domain)
    data = derive_data(case, decomp)
    terms = cat.assemble_terms(decomp, data.specs, data.source, data.divergence)
    bterms = [t for t in terms if t.kind == "boundary"]
    terms += cat.gauge_terms(bterms, data.specs, decomp.dim, data.pressure_integral)
    return terms


def interpolate_exact(case: ManufacturedCase, decomp: Decomposition, degree: int) -> StokesField:
    ex = case.exact
    coeffs = np.stack([interpolate(lambda x: np.vstack([ex.u(x), ex.p(x)[None]]), decomp, e.id, degree)
                       for e in decomp.elements])
    return StokesField(decomp.dim, degree, coeffs)


# --- errors ----------------------------------------------------------------

@dataclass
class ErrorReport:
    case: str
    W: int
    err_u_H1: float
    err_p_L2: float
    err_c_L2: float
    iterations: int
    converged: bool = True
    wall_time: float = 0.0
    relative: bool = False

    def row(self) -> dict:
        return {"case": self.case, "W": self.W, "err_u_H1": self.err_u_H1, "err_p_L2": self.err_p_L2,
                "err_c_L2": self.err_c_L2, "iterations": self.iterations, "wall_time": self.wall_time}


@dataclass
class ErrorNorms:
    u_H1: float
    p_L2: float
    c_L2: float
    exact_u_H1: float
    exact_p_L2: float


def error_norms(field: StokesField, decomp: Decomposition, exact: ExactSolution,
                npoints: Optional[int] = None) -> ErrorNorms:
    """H1 velocity, L2 pressure and continuity-residual errors by Gauss quadrature.

    The continuity error is ``|| -div z - chi ||_0``, i.e. ``|| div z ||_0``
    for solenoidal exact velocities.
    """
    dim = decomp.dim
    n = npoints or field.degree + ERROR_POINTS_EXTRA
    xi, w = tensor_rule(n, dim)
    eu = ep = ec = nu = npr = 0.0
    for e in decomp.elements:
        jet = basis_jet(field.degree, xi, e.scale, 1)
        x = inverse_map(e, xi)
        c = field.coeffs[e.id]
        ex = exact.jet(x, 1)
        wj = w * e.jacobian
        div = np.zeros(x.shape[1])
        for alpha, mat in jet.items():
            for f in range(dim):
                err = mat @ c[f] - ex[(f, alpha)]
                eu += wj @ err ** 2
                nu += wj @ ex[(f, alpha)] ** 2
                if sum(alpha) == 1 and alpha[f] == 1:
                    div += mat @ c[f]
        perr = jet[(0,) * dim] @ c[dim] - ex[(dim, (0,) * dim)]
        ep += wj @ perr ** 2
        npr += wj @ ex[(dim, (0,) * dim)] ** 2
        ec += wj @ (-div - exact.divergence_data(x)) ** 2
    return ErrorNorms(*(float(np.sqrt(v)) for v in (eu, ep, ec, nu, npr)))


# --- running ---------------------------------------------------------------

@dataclass
class ProblemSetup:
    """A discretization-ready problem: mesh, residual terms and optional truth."""

    label: str
    decomp: Decomposition
    terms: list
    exact: Optional[ExactSolution] = None
    relative: bool = False


def setup_case(case: ManufacturedCase) -> ProblemSetup:
    decomp = build_decomposition(case.domain)
    return ProblemSetup(case.id, decomp, case_terms(case, decomp), case.exact, case.relative)


@dataclass
class CaseSolution:
    field: StokesField
    decomp: Decomposition
    terms: list
    system: object
    preconditioner: BlockPreconditioner
    pcg: PCGResult
    wall_time: float = 0.0


def solve_setup(setup: ProblemSetup, degree: int, config: Optional[SolverConfig] = None,
                history_csv=None) -> CaseSolution:
    if degree < 2:
        raise ValueError("polynomial degree W must be at least 2")
    t0 = time.perf_counter()
    system = assemble_system(setup.terms, setup.decomp, degree)
    prec = BlockPreconditioner(setup.decomp, degree)
    res = pcg_solve(system, prec, config, history_csv=history_csv)
    field = StokesField.from_vector(setup.decomp, degree, res.x)
    return CaseSolution(field, setup.decomp, setup.terms, system, prec, res, time.perf_counter() - t0)


def solve_case(case: ManufacturedCase, degree: int, config: Optional[SolverConfig] = None) -> CaseSolution:
    return solve_setup(setup_case(case), degree, config)


def make_report(setup: ProblemSetup, sol: CaseSolution) -> ErrorReport:
    """Errors of a solution; NaN entries when no exact solution is known."""
    nan = float("nan")
    eu = ep = ec = nan
    if setup.exact is not None:
        en = error_norms(sol.field, sol.decomp, setup.exact)
        eu, ep, ec = en.u_H1, en.p_L2, en.c_L2
        if setup.relative:
            eu /= en.exact_u_H1
            ep /= en.exact_p_L2
    return ErrorReport(setup.label, sol.field.degree, eu, ep, ec, sol.pcg.iterations, sol.pcg.converged,
                       sol.wall_time, setup.relative)


def run_case(case, degree: int, config: Optional[SolverConfig] = None) -> ErrorReport:
    """Solve one case at degree ``W`` and measure the errors.

    Relative cases divide the velocity and pressure errors by the exact
    solution's global ``H^1`` and ``L^2`` norms. A solver that hits its
    iteration cap still yields a report, flagged ``converged=False``.
    """
    case = get_case(case) if isinstance(case, str) else case
    setup = setup_case(case)
    return make_report(setup, solve_setup(setup, degree, config))


@dataclass
class DecayFit:
    slope: float
    intercept: float
    r_squared: float

    @property
    def converging(self) -> bool:
        return self.slope < -1e-3


def fit_decay(degrees: Sequence[int], errors: Sequence[float]) -> DecayFit:
    """Least-squares line through ``(W, log10 error)``."""
    w = np.asarray(degrees, dtype=float)
    y = np.log10(np.asarray(errors, dtype=float))
    if len(w) < 2:
        raise ValueError("need at least two points to fit a decay rate")
    slope, intercept = np.polyfit(w, y, 1)
    resid = y - (slope * w + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r2)


@dataclass
class ConvergenceStudy:
    case: str
    reports: list
    fits: dict  # error name -> DecayFit


def convergence_study(case, degrees: Sequence[int], config: Optional[SolverConfig] = None) -> ConvergenceStudy:
    """Run ``case`` for every ``W`` and fit ``log10(error)`` against ``W``."""
    degrees = list(degrees)
    if len(degrees) < 4:
        raise ValueError("a convergence study needs at least four values of W")
    case = get_case(case) if isinstance(case, str) else case
    reports = [run_case(case, w, config) for w in degrees]
    fits = {}
    for name in ("err_u_H1", "err_p_L2", "err_c_L2"):
        errs = [max(getattr(r, name), 1e-300) for r in reports]
        fits[name] = fit_decay(degrees, errs)
    return ConvergenceStudy(case.id, reports, fits)
