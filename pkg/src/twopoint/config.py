"""Experiment configuration: a ``[section]`` / ``key = value`` document.

Every key is optional and has a documented default; unknown sections and
keys are rejected.  Numeric values accept closed-form constants such as
``2*pi``.  ``auto`` selects a value derived from the rest of the document.
See README.md for the full key reference.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
import math
import re

from .barrier import MODES as BARRIER_MODES, parse_expression
from .equations import CoefficientFamily
from .errors import ConfigurationError, TwoPointError
from .geometry import Geometry

CHECKS = ("containment", "two_point_psi", "two_point_modulus", "grad_cor15",
          "grad_cor17", "liyau", "barrier_condition")
PSI_CHECKS = ("two_point_psi", "grad_cor15")
MODULUS_CHECKS = ("two_point_modulus", "grad_cor17")

INITIAL_VARIABLES = {"circle": ("x",), "torus2": ("x", "y"),
                     "sphere_shrinking": ("theta",), "sphere_static": ("theta",)}


# -- value converters ----------------------------------------------------------

def _number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    expr, _ = parse_expression(text, ())
    try:
        return float(expr)
    except TypeError:
        raise ConfigurationError(f"not a number: {text!r}") from None


def _opt_number(text: str):
    return None if text.strip().lower() == "auto" else _number(text)


def _integer(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigurationError(f"not an integer: {text!r}") from None


def _numbers(text: str) -> tuple:
    return tuple(_number(v) for v in text.split(",") if v.strip())


def _names(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _opt_name(text: str):
    return None if text.strip().lower() == "auto" else text.strip()


def _text(text: str) -> str:
    return text.strip()


def _show(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_show(v) for v in value)
    return str(value)


def _key(default, conv):
    factory = (lambda: default) if isinstance(default, tuple) else None
    if factory is not None:
        return field(default_factory=factory, metadata={"conv": conv})
    return field(default=default, metadata={"conv": conv})


# -- blocks --------------------------------------------------------------------

@dataclass(frozen=True)
class GeometryBlock:
    family: str = _key("circle", _text)
    length: float = _key(2 * math.pi, _number)
    lengths: tuple = _key((1.0, 1.0), _numbers)
    r0: float = _key(1.0, _number)


@dataclass(frozen=True)
class EquationBlock:
    family: str = _key("heat", _text)
    p: float = _key(2.0, _number)
    epsilon_reg: float = _key(1e-6, _number)
    form: str | None = _key(None, _opt_name)
    eps_sweep: tuple = _key((), _numbers)
    s_table: tuple = _key((), _numbers)
    alpha_table: tuple = _key((), _numbers)
    beta_table: tuple = _key((), _numbers)
    q_table: tuple = _key((), _numbers)


@dataclass(frozen=True)
class GridBlock:
    n: int = _key(256, _integer)


@dataclass(frozen=True)
class InitialBlock:
    u0: str | None = _key(None, _opt_name)


@dataclass(frozen=True)
class TimeBlock:
    t_end: float = _key(0.5, _number)
    snapshots: int = _key(10, _integer)
    c_cfl: float = _key(0.4, _number)


@dataclass(frozen=True)
class BarrierBlock:
    mode: str = _key("analytic", _text)
    phi: str = _key("2*s - pi", _text)
    phi0: str = _key("sin(s)", _text)
    delta: float = _key(0.0, _number)
    margin: float | None = _key(None, _opt_number)
    condition: str | None = _key(None, _opt_name)
    s_max: float | None = _key(None, _opt_number)
    n_s: int = _key(129, _integer)


@dataclass(frozen=True)
class ChecksBlock:
    run: tuple = _key(("containment", "barrier_condition", "two_point_psi"), _names)


@dataclass(frozen=True)
class LiYauBlock:
    alpha_ly: float = _key(2.0, _number)
    t_min: float = _key(0.0, _number)


@dataclass(frozen=True)
class TolerancesBlock:
    two_point: float | None = _key(None, _opt_number)
    containment: float = _key(1e-12, _number)
    ratio: float = _key(0.02, _number)
    liyau: float = _key(0.0, _number)
    eps_spread: float = _key(10.0, _number)


@dataclass(frozen=True)
class OutputBlock:
    dir: str = _key("out", _text)


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryBlock = field(default_factory=GeometryBlock)
    equation: EquationBlock = field(default_factory=EquationBlock)
    grid: GridBlock = field(default_factory=GridBlock)
    initial: InitialBlock = field(default_factory=InitialBlock)
    time: TimeBlock = field(default_factory=TimeBlock)
    barrier: BarrierBlock = field(default_factory=BarrierBlock)
    checks: ChecksBlock = field(default_factory=ChecksBlock)
    liyau: LiYauBlock = field(default_factory=LiYauBlock)
    tolerances: TolerancesBlock = field(default_factory=TolerancesBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    # -- derived objects ------------------------------------------------------
    def make_geometry(self) -> Geometry:
        g = self.geometry
        return Geometry(g.family, circle_length=g.length, torus_lengths=g.lengths, r0=g.r0)

    def make_family(self, epsilon_reg: float | None = None) -> CoefficientFamily:
        e = self.equation
        return CoefficientFamily(
            e.family, p=e.p, epsilon_reg=e.epsilon_reg if epsilon_reg is None else epsilon_reg,
            form=e.form, s_table=e.s_table, alpha_table=e.alpha_table,
            beta_table=e.beta_table, q_table=e.q_table)

    @property
    def initial_expression(self) -> str:
        if self.initial.u0 is not None:
            return self.initial.u0
        return {"circle": "sin(x)", "torus2": "sin(2*pi*x)*sin(2*pi*y)"}.get(
            self.geometry.family, "2 + cos(theta)")

    @property
    def wants_psi(self) -> bool:
        return any(c in self.checks.run for c in PSI_CHECKS)

    @property
    def wants_modulus(self) -> bool:
        return any(c in self.checks.run for c in MODULUS_CHECKS)

    @property
    def condition_mode(self) -> str:
        if self.barrier.condition is not None:
            return self.barrier.condition
        return "parabolic_eq16"

    @property
    def needs_barrier(self) -> bool:
        return self.wants_psi or self.wants_modulus or any(
            c in self.checks.run for c in ("containment", "barrier_condition"))


_BLOCKS = {f.name: f.default_factory for f in fields(ExperimentConfig)}


def _line_of(text: str, section: str, key: str | None = None) -> int:
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if key is not None and current == section:
            m = re.match(r"\s*([^=:#;\s]+)\s*[=:]", line)
            if m and m.group(1) == key:
                return lineno
    return 0


def parse_config(text: str, validate: bool = True) -> ExperimentConfig:
    """Parse and validate a configuration document.

    Syntax errors raise immediately with a line number; all semantic
    problems are collected and raised together.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigurationError(
            f"syntax error: line {exc.lineno}: key outside any [section]") from None
    except configparser.ParsingError as exc:
        source = text.splitlines()
        where = "; ".join(f"line {n}: cannot parse {source[n - 1].strip()!r}"
                          for n, _ in exc.errors)
        raise ConfigurationError(f"syntax error: {where}") from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        what = (f"duplicate key {exc.option!r} in [{exc.section}]"
                if isinstance(exc, configparser.DuplicateOptionError)
                else f"duplicate section [{exc.section}]")
        raise ConfigurationError(f"syntax error: line {exc.lineno}: {what}") from None

    problems = []
    blocks = {}
    for section in parser.sections():
        if section not in _BLOCKS:
            problems.append(f"line {_line_of(text, section)}: unknown section [{section}]")
            continue
        block_fields = {f.name: f for f in fields(_BLOCKS[section]())}
        values = {}
        for key, raw in parser.items(section):
            where = f"line {_line_of(text, section, key)}"
            if key not in block_fields:
                problems.append(f"{where}: unknown key {key!r} in [{section}]")
                continue
            try:
                values[key] = block_fields[key].metadata["conv"](raw)
            except TwoPointError as exc:
                problems.append(f"{where}: [{section}] {key}: {exc}")
        blocks[section] = replace(_BLOCKS[section](), **values)
    cfg = ExperimentConfig(**blocks)
    if validate:
        try:
            validate_config(cfg)
        except ConfigurationError as exc:
            problems.append(str(exc))
    if problems:
        raise ConfigurationError("\n".join(problems))
    return cfg


def peek_output_dir(text: str):
    """Best-effort ``[output] dir`` of a document that failed to parse."""
    parser = configparser.ConfigParser(interpolation=None, strict=False,
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
        return parser.get("output", "dir", fallback=None)
    except configparser.Error:
        return None


def config_to_text(cfg: ExperimentConfig) -> str:
    """Render every key of ``cfg``; ``parse_config`` inverts this exactly."""
    out = []
    for f in fields(cfg):
        block = getattr(cfg, f.name)
        out.append(f"[{f.name}]")
        for bf in fields(block):
            out.append(f"{bf.name} = {_show(getattr(block, bf.name))}")
        out.append("")
    return "\n".join(out)


def validate_config(cfg: ExperimentConfig) -> None:
    """Cross-check blocks; raises one error listing every violation."""
    problems = []

    def attempt(fn):
        try:
            return fn()
        except TwoPointError as exc:
            problems.append(str(exc))
            return None

    geom = attempt(cfg.make_geometry)
    fam = attempt(cfg.make_family)
    run = cfg.checks.run
    for name in run:
        if name not in CHECKS:
            problems.append(f"unknown check {name!r}; expected some of {CHECKS}")
    if cfg.grid.n < 3:
        problems.append("grid n must be at least 3")
    if cfg.time.snapshots < 1:
        problems.append("time snapshots must be at least 1")
    if not 0 < cfg.time.c_cfl <= 1:
        problems.append("c_cfl must lie in (0, 1]")
    if cfg.time.t_end < 0:
        problems.append("t_end must be nonnegative")
    if geom is not None and cfg.time.t_end >= geom.horizon:
        problems.append(
            f"t_end={cfg.time.t_end!r} is past the horizon r0^2/2={geom.horizon!r} "
            f"of {geom.family}")
    if geom is not None:
        attempt(lambda: parse_expression(cfg.initial_expression, INITIAL_VARIABLES[geom.family]))
    if fam is not None and cfg.wants_psi:
        attempt(fam.require_time_only_beta)
    if "liyau" in run:
        if cfg.equation.family != "heat":
            problems.append("liyau check requires the heat family")
        if cfg.geometry.family == "sphere_static":
            problems.append("liyau check requires a Ricci flow geometry (not sphere_static)")
        if not cfg.liyau.alpha_ly > 1:
            problems.append("alpha_ly must exceed 1")
    b = cfg.barrier
    if cfg.needs_barrier:
        if b.mode not in ("analytic", "solve"):
            problems.append(f"barrier mode must be 'analytic' or 'solve', not {b.mode!r}")
        elif b.mode == "analytic":
            attempt(lambda: parse_expression(b.phi, ("s", "t")))
        else:
            attempt(lambda: parse_expression(b.phi0, ("s",)))
        if b.condition is not None and b.condition not in BARRIER_MODES:
            problems.append(f"barrier condition must be one of {BARRIER_MODES}")
        if b.delta < 0:
            problems.append("barrier delta must be nonnegative")
        if b.n_s < 4:
            problems.append("barrier n_s must be at least 4")
        if b.s_max is not None and b.s_max <= 0:
            problems.append("barrier s_max must be positive")
    if cfg.equation.eps_sweep and any(e < 0 for e in cfg.equation.eps_sweep):
        problems.append("eps_sweep values must be nonnegative")
    if problems:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(problems))
