"""Experiment configuration: JSON schema, validation and problem construction.

A config names either a built-in case::

    {"case": "ex1", "W": "2..6", "solver": {"rel_tolerance": 1e-12}}

or a custom problem with expression-string data::

    {"problem": {
        "dim": 2,
        "domain": {"box": {"lower": [0, 0], "upper": [1, 1], "divisions": [1, 1]},
                   "tags": [{"tag": "bottom", "normal": [0, -1]}],
                   "default_tag": "rest"},
        "conditions": [
            {"family": "B14", "segments": {"Gamma0": ["rest"], "Gamma1": ["bottom"]},
             "data": {"omega_n": "exact"}}],
        "exact": {"velocity": ["...", "..."], "pressure": "..."}},
     "W": [4, 6]}

Data values are expression strings (one per component) or ``"exact"`` to
take the trace of the given exact solution. ``source`` and ``divergence``
default to the exact solution's values, or to zero without one.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import catalog as cat
from .bench import CASES, ExactTrace, ProblemSetup, domain_integral
from .expressions import DataExpression, ExpressionError, ExpressionFunction
from .geometry import DomainSpec, GeometryError, TagRule, box_domain, build_decomposition
from .manufactured import ExactSolution
from .solver import SolverConfig


class ConfigError(ValueError):
    """Schema or consistency violation, with the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


EXACT = "exact"


@dataclass(frozen=True)
class TagConfig:
    tag: str
    normal: Optional[tuple] = None
    box: Optional[tuple] = None


@dataclass(frozen=True)
class DomainConfig:
    blocks: tuple = ()
    box: Optional[tuple] = None  # (lower, upper, divisions)
    tags: tuple = ()
    default_tag: Optional[str] = None


@dataclass(frozen=True)
class ConditionConfig:
    family: str
    segments: tuple  # ((role, (tags...)), ...)
    data: tuple = ()  # ((slot, (expr, ...) or "exact"), ...)
    params: tuple = ()  # ((name, value), ...)


@dataclass(frozen=True)
class ProblemConfig:
    dim: int
    domain: DomainConfig
    conditions: tuple
    exact_velocity: Optional[tuple] = None
    exact_pressure: Optional[str] = None
    source: Optional[tuple] = None
    divergence: Optional[str] = None
    relative: bool = False
    label: str = "custom"


@dataclass(frozen=True)
class OutputConfig:
    csv: Optional[str] = None
    plot: Optional[str] = None
    history: Optional[str] = None
    timing: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    case: Optional[str] = None
    problem: Optional[ProblemConfig] = None
    W: tuple = (4,)
    rel_tolerance: float = 1e-12
    max_iterations: int = 20000
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def label(self) -> str:
        return self.case if self.case is not None else self.problem.label

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.rel_tolerance, self.max_iterations)


# --- parsing ---------------------------------------------------------------

_RANGE = re.compile(r"^\s*(\d+)\s*\.\.\s*(\d+)\s*$")


def parse_degrees(value, path: str = "W") -> tuple:
    """``4``, ``[2, 4, 6]``, ``"2..6"`` or ``"2,4,6"`` -> tuple of ints >= 2."""
    if isinstance(value, bool):
        raise ConfigError(path, "expected an integer, a list or a range 'a..b'")
    if isinstance(value, int):
        out = [value]
    elif isinstance(value, str):
        m = _RANGE.match(value)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ConfigError(path, f"empty range {value!r}")
            out = list(range(lo, hi + 1))
        else:
            try:
                out = [int(v) for v in value.split(",")]
            except ValueError:
                raise ConfigError(path, f"cannot read degrees from {value!r}") from None
    elif isinstance(value, list) and value and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        out = list(value)
    else:
        raise ConfigError(path, "expected an integer, a list or a range 'a..b'")
    bad = [w for w in out if w < 2]
    if bad:
        raise ConfigError(path, f"W values must be >= 2, got {bad}")
    return tuple(out)


def _expect(obj, kind, path):
    if not isinstance(obj, kind):
        name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(path, f"expected {name}, got {type(obj).__name__}")
    return obj


def _no_extra(obj: dict, allowed, path):
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(path, f"unknown field(s) {extra}")


def _vector(v, n, path):
    _expect(v, list, path)
    if len(v) != n or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v):
        raise ConfigError(path, f"expected {n} numbers")
    return tuple(float(c) for c in v)


def _exprs(v, path, dim, count=None):
    texts = (v,) if isinstance(v, str) else tuple(_expect(v, list, path))
    if not texts or not all(isinstance(t, str) for t in texts):
        raise ConfigError(path, "expected an expression string or a list of them")
    if count is not None and len(texts) != count:
        raise ConfigError(path, f"expected {count} component expression(s), got {len(texts)}")
    try:
        DataExpression(texts, dim)
    except ExpressionError as exc:
        raise ConfigError(path, str(exc)) from None
    return texts


def _parse_domain(d, dim, path) -> DomainConfig:
    _expect(d, dict, path)
    _no_extra(d, ("blocks", "box", "tags", "default_tag"), path)
    blocks, box = (), None
    if ("blocks" in d) == ("box" in d):
        raise ConfigError(path, "give exactly one of 'blocks' or 'box'")
    if "blocks" in d:
        parsed = []
        for i, b in enumerate(_expect(d["blocks"], list, f"{path}.blocks")):
            bp = f"{path}.blocks[{i}]"
            if len(_expect(b, list, bp)) != 2:
                raise ConfigError(bp, "expected [lower, upper]")
            parsed.append((_vector(b[0], dim, f"{bp}[0]"), _vector(b[1], dim, f"{bp}[1]")))
        blocks = tuple(parsed)
    else:
        bx = _expect(d["box"], dict, f"{path}.box")
        _no_extra(bx, ("lower", "upper", "divisions"), f"{path}.box")
        for k in ("lower", "upper"):
            if k not in bx:
                raise ConfigError(f"{path}.box", f"missing field '{k}'")
        div = bx.get("divisions", [1] * dim)
        if not (isinstance(div, list) and len(div) == dim and all(isinstance(n, int) and n >= 1 for n in div)):
            raise ConfigError(f"{path}.box.divisions", f"expected {dim} positive integers")
        box = (_vector(bx["lower"], dim, f"{path}.box.lower"), _vector(bx["upper"], dim, f"{path}.box.upper"),
               tuple(div))
    tags = []
    for i, t in enumerate(_expect(d.get("tags", []), list, f"{path}.tags")):
        tp = f"{path}.tags[{i}]"
        _expect(t, dict, tp)
        _no_extra(t, ("tag", "normal", "box"), tp)
        if not isinstance(t.get("tag"), str):
            raise ConfigError(tp, "missing string field 'tag'")
        normal = _vector(t["normal"], dim, f"{tp}.normal") if "normal" in t else None
        tbox = None
        if "box" in t:
            b = _expect(t["box"], list, f"{tp}.box")
            if len(b) != 2:
                raise ConfigError(f"{tp}.box", "expected [lower, upper]")
            tbox = (_vector(b[0], dim, f"{tp}.box[0]"), _vector(b[1], dim, f"{tp}.box[1]"))
        tags.append(TagConfig(t["tag"], normal, tbox))
    default = d.get("default_tag")
    if default is not None and not isinstance(default, str):
        raise ConfigError(f"{path}.default_tag", "expected a string")
    return DomainConfig(blocks, box, tuple(tags), default)


def _parse_condition(c, dim, has_exact, path) -> ConditionConfig:
    _expect(c, dict, path)
    _no_extra(c, ("family", "segments", "data", "params"), path)
    name = c.get("family")
    if not isinstance(name, str):
        raise ConfigError(path, "missing string field 'family'")
    if name not in cat.FAMILIES:
        raise ConfigError(f"{path}.family", f"unknown family {name!r}")
    fam = cat.FAMILIES[name]
    segs = _expect(c.get("segments"), dict, f"{path}.segments")
    if set(segs) != set(fam.roles):
        raise ConfigError(f"{path}.segments", f"{name} needs roles {list(fam.roles)}, got {sorted(segs)}")
    segments = []
    for role in fam.roles:
        v = segs[role]
        tags = (v,) if isinstance(v, str) else tuple(_expect(v, list, f"{path}.segments.{role}"))
        if not tags or not all(isinstance(t, str) for t in tags):
            raise ConfigError(f"{path}.segments.{role}", "expected tag strings")
        segments.append((role, tags))
    data = _expect(c.get("data", {}), dict, f"{path}.data")
    need = [s.name for s in fam.slots]
    missing = [s for s in need if s not in data]
    if missing:
        raise ConfigError(f"{path}.data", f"{name} is missing data slot(s) {missing}")
    extra = sorted(set(data) - set(need))
    if extra:
        raise ConfigError(f"{path}.data", f"{name} does not take data slot(s) {extra}")
    slots = []
    for s in need:
        v = data[s]
        if v == EXACT:
            if not has_exact:
                raise ConfigError(f"{path}.data.{s}", "'exact' needs an exact solution in the problem")
            slots.append((s, EXACT))
        else:
            slots.append((s, _exprs(v, f"{path}.data.{s}", dim)))
    params = _expect(c.get("params", {}), dict, f"{path}.params")
    if set(params) != set(fam.params):
        raise ConfigError(f"{path}.params", f"{name} needs parameters {list(fam.params)}, got {sorted(params)}")
    for k, v in params.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(f"{path}.params.{k}", "expected a number")
    return ConditionConfig(name, tuple(segments), tuple(slots),
                           tuple((k, float(params[k])) for k in fam.params))


def _parse_problem(p, path="problem") -> ProblemConfig:
    _expect(p, dict, path)
    _no_extra(p, ("dim", "domain", "conditions", "exact", "source", "divergence", "relative", "label"), path)
    dim = p.get("dim")
    if dim not in (2, 3):
        raise ConfigError(f"{path}.dim", "dim must be 2 or 3")
    if "domain" not in p:
        raise ConfigError(path, "missing field 'domain'")
    domain = _parse_domain(p["domain"], dim, f"{path}.domain")
    ev = epr = None
    if "exact" in p:
        ex = _expect(p["exact"], dict, f"{path}.exact")
        _no_extra(ex, ("velocity", "pressure"), f"{path}.exact")
        if "velocity" not in ex or "pressure" not in ex:
            raise ConfigError(f"{path}.exact", "needs 'velocity' and 'pressure'")
        ev = _exprs(ex["velocity"], f"{path}.exact.velocity", dim, dim)
        epr = _exprs(ex["pressure"], f"{path}.exact.pressure", dim, 1)[0]
        for i, t in enumerate(ev + (epr,)):
            try:
                ExpressionFunction(t, dim)
            except ExpressionError as exc:
                raise ConfigError(f"{path}.exact", str(exc)) from None
    conds = _expect(p.get("conditions"), list, f"{path}.conditions")
    if not conds:
        raise ConfigError(f"{path}.conditions", "at least one boundary condition is required")
    conditions = tuple(_parse_condition(c, dim, ev is not None, f"{path}.conditions[{i}]")
                       for i, c in enumerate(conds))
    source = _exprs(p["source"], f"{path}.source", dim, dim) if "source" in p else None
    divergence = _exprs(p["divergence"], f"{path}.divergence", dim, 1)[0] if "divergence" in p else None
    relative = p.get("relative", False)
    if not isinstance(relative, bool):
        raise ConfigError(f"{path}.relative", "expected true/false")
    label = p.get("label", "custom")
    if not isinstance(label, str):
        raise ConfigError(f"{path}.label", "expected a string")
    cfg = ProblemConfig(dim, domain, conditions, ev, epr, source, divergence, relative, label)
    _check_tags(cfg, path)
    return cfg


def _check_tags(cfg: ProblemConfig, path):
    try:
        decomp = build_decomposition(domain_spec(cfg.domain))
    except GeometryError as exc:
        raise ConfigError(f"{path}.domain", str(exc)) from None
    for i, c in enumerate(cfg.conditions):
        for role, tags in c.segments:
            for t in tags:
                if t not in decomp.tags:
                    raise ConfigError(f"{path}.conditions[{i}].segments.{role}",
                                      f"tag {t!r} is not a boundary tag of the domain {sorted(decomp.tags)}")


def config_from_dict(d) -> ExperimentConfig:
    _expect(d, dict, "")
    _no_extra(d, ("case", "problem", "W", "solver", "output"), "")
    case = problem = None
    if ("case" in d) == ("problem" in d):
        raise ConfigError("", "give exactly one of 'case' or 'problem'")
    if "case" in d:
        case = _expect(d["case"], str, "case").lower().replace("-", "")
        if case not in CASES:
            raise ConfigError("case", f"unknown case {d['case']!r}; choose from {sorted(CASES)}")
    else:
        problem = _parse_problem(d["problem"])
    degrees = parse_degrees(d.get("W", 4))
    solver = _expect(d.get("solver", {}), dict, "solver")
    _no_extra(solver, ("rel_tolerance", "max_iterations"), "solver")
    tol = solver.get("rel_tolerance", 1e-12)
    if not isinstance(tol, (int, float)) or isinstance(tol, bool) or not 0.0 < tol < 1.0:
        raise ConfigError("solver.rel_tolerance", "must be a number in (0, 1)")
    maxit = solver.get("max_iterations", 20000)
    if not isinstance(maxit, int) or isinstance(maxit, bool) or maxit < 1:
        raise ConfigError("solver.max_iterations", "must be a positive integer")
    out = _expect(d.get("output", {}), dict, "output")
    _no_extra(out, ("csv", "plot", "history", "timing"), "output")
    for k in ("csv", "plot", "history"):
        if k in out and out[k] is not None and not isinstance(out[k], str):
            raise ConfigError(f"output.{k}", "expected a path string")
    timing = out.get("timing", True)
    if not isinstance(timing, bool):
        raise ConfigError("output.timing", "expected true/false")
    output = OutputConfig(out.get("csv"), out.get("plot"), out.get("history"), timing)
    return ExperimentConfig(case, problem, degrees, float(tol), maxit, output)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    return config_from_dict(d)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# --- emitting --------------------------------------------------------------

def _domain_dict(d: DomainConfig) -> dict:
    out = {}
    if d.box is not None:
        out["box"] = {"lower": list(d.box[0]), "upper": list(d.box[1]), "divisions": list(d.box[2])}
    else:
        out["blocks"] = [[list(lo), list(hi)] for lo, hi in d.blocks]
    if d.tags:
        tags = []
        for t in d.tags:
            e = {"tag": t.tag}
            if t.normal is not None:
                e["normal"] = list(t.normal)
            if t.box is not None:
                e["box"] = [list(t.box[0]), list(t.box[1])]
            tags.append(e)
        out["tags"] = tags
    if d.default_tag is not None:
        out["default_tag"] = d.default_tag
    return out


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = {}
    if cfg.case is not None:
        d["case"] = cfg.case
    else:
        p = cfg.problem
        pd = {"dim": p.dim, "label": p.label, "domain": _domain_dict(p.domain), "conditions": []}
        for c in p.conditions:
            pd["conditions"].append({
                "family": c.family,
                "segments": {role: list(tags) for role, tags in c.segments},
                "data": {s: (v if v == EXACT else list(v)) for s, v in c.data},
                "params": dict(c.params),
            })
        if p.exact_velocity is not None:
            pd["exact"] = {"velocity": list(p.exact_velocity), "pressure": p.exact_pressure}
        if p.source is not None:
            pd["source"] = list(p.source)
        if p.divergence is not None:
            pd["divergence"] = p.divergence
        pd["relative"] = p.relative
        d["problem"] = pd
    d["W"] = list(cfg.W)
    d["solver"] = {"rel_tolerance": cfg.rel_tolerance, "max_iterations": cfg.max_iterations}
    d["output"] = {k: v for k, v in asdict(cfg.output).items() if v is not None}
    return d


def emit_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2)


# --- problem construction --------------------------------------------------

def domain_spec(d: DomainConfig) -> DomainSpec:
    rules = tuple(TagRule(t.tag, t.normal, t.box) for t in d.tags)
    if d.box is not None:
        return box_domain(d.box[0], d.box[1], d.box[2], rules, d.default_tag)
    return DomainSpec(tuple(d.blocks), rules, d.default_tag)


def build_problem(p: ProblemConfig) -> ProblemSetup:
    """Residual terms for a custom problem."""
    decomp = build_decomposition(domain_spec(p.domain))
    exact = None
    if p.exact_velocity is not None:
        exact = ExactSolution(tuple(ExpressionFunction(t, p.dim) for t in p.exact_velocity),
                              ExpressionFunction(p.exact_pressure, p.dim))
    specs = []
    for c in p.conditions:
        params = dict(c.params)
        data = {s: (ExactTrace(exact, c.family, s, tuple(sorted(params.items()))) if v == EXACT
                    else DataExpression(v, p.dim)) for s, v in c.data}
        specs.append(cat.BoundaryConditionSpec(c.family, dict(c.segments), data, params))
    if p.source is not None:
        source = DataExpression(p.source, p.dim)
    else:
        source = exact.source if exact is not None else None
    if p.divergence is not None:
        divergence = DataExpression((p.divergence,), p.dim)
    else:
        divergence = exact.divergence_data if exact is not None else None
    terms = cat.assemble_terms(decomp, specs, source, divergence)
    bterms = [t for t in terms if t.kind == "boundary"]
    p_int = domain_integral(exact.p, decomp, 20) if exact is not None else 0.0
    terms += cat.gauge_terms(bterms, specs, decomp.dim, p_int)
    return ProblemSetup(p.label, decomp, terms, exact, p.relative)
