"""Plain-text run configuration: an INI-like grammar with line-numbered diagnostics.

    # comment
    [section]
    key = value        # trailing comments allowed

Sections, keys and value forms are listed in ``SCHEMA``; docs/FORMATS.md
has the full grammar. Boundary data are arithmetic expressions in ``x, y, z``.
"""
from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coupled import ProblemSpec
from .elliptic import neumann_rhs
from .mesh import ConductivityModel, EdgeField, FaceField, Grid, NodeField, l2_face
from .ops import curl_edge_to_face
from .verification import CATALOG

__all__ = [
    "ConfigDiagnostic",
    "ConfigError",
    "RunConfig",
    "BoundaryData",
    "StudyOptions",
    "parse_config",
    "load_config",
    "compile_expression",
    "outward_flux",
    "tangential_flux",
]


@dataclass(frozen=True)
class ConfigDiagnostic:
    line: int | None
    key: str
    message: str

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.key}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, diagnostics: list[ConfigDiagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {d}" for d in self.diagnostics))


# ---------------------------------------------------------------------------
# expressions

_FUNCS: dict[str, Callable] = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "sinh": np.sinh, "cosh": np.cosh,
}
_CONSTS = {"pi": math.pi}
_VARS = ("x", "y", "z")
_OPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def compile_expression(text: str):
    """Compile an arithmetic expression in ``x, y, z`` into a vectorized function.

    Only numbers, ``x y z pi``, ``+ - * / **`` and the functions in
    ``_FUNCS`` are accepted; anything else raises ``ValueError``.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.Load) + _OPS):
            continue
        if isinstance(node, (ast.BinOp, ast.UnaryOp)):
            continue
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            continue
        if isinstance(node, ast.Name) and (node.id in _VARS or node.id in _CONSTS or node.id in _FUNCS):
            continue
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and len(node.args) == 1 and not node.keywords:
            continue
        raise ValueError(f"unsupported element {type(node).__name__} in expression {text!r}")
    code = compile(tree, "<expression>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_CONSTS}

    def fn(x, y, z):
        with np.errstate(all="ignore"):
            v = eval(code, env, {"x": x, "y": y, "z": z})  # noqa: S307 - AST whitelisted above
        return np.broadcast_to(np.asarray(v, dtype=float), np.broadcast(x, y, z).shape).copy()

    fn.source = text.strip()
    return fn


# ---------------------------------------------------------------------------
# schema


@dataclass(frozen=True)
class BoundaryData:
    mode: str = "electric"
    u0: Callable | None = None
    psi0: Callable | None = None
    e: tuple[float, float, float] = (0.0, 0.0, 0.0)
    g: Callable | None = None
    h0: tuple[Callable, Callable, Callable] | None = None


@dataclass(frozen=True)
class StudyOptions:
    levels: tuple[int, ...] = (8, 16, 32)
    cases: tuple[str, ...] = ("constant-sigma-uniform", "slab-sigma", "smooth-nonlinear")
    scales: tuple[float, ...] = (0.01, 0.03, 0.1, 0.3, 1.0)
    perturbation: float = 0.1
    alpha: float = 0.25
    mu: float = 4.0
    budget: int = 512
    pairs: int = 0


@dataclass(frozen=True)
class RunConfig:
    grid: Grid
    sigma: ConductivityModel
    boundary: BoundaryData
    picard_tol: float = 1e-10
    picard_maxiter: int = 200
    damping: float = 1.0
    joule: str = "divergence"
    linear_tol: float = 1e-10
    linear_maxiter: int | None = None
    output_dir: str = "out"
    write_fields: bool = True
    seed: int = 0
    study: StudyOptions = field(default_factory=StudyOptions)

    def problem_spec(self, grid: Grid | None = None, scale: float = 1.0) -> ProblemSpec:
        """Discretize the boundary data on ``grid`` (default: the configured grid).

        ``scale`` multiplies the electric data (``psi0`` and ``e``) or the
        tangential data, leaving ``u0`` unchanged.
        """
        g = self.grid if grid is None else grid
        b = self.boundary
        u0 = NodeField.zeros(g) if b.u0 is None else NodeField.from_function(g, b.u0)
        common = dict(joule=self.joule, picard_tol=self.picard_tol, picard_maxiter=self.picard_maxiter,
                      damping=self.damping, linear_tol=self.linear_tol, linear_maxiter=self.linear_maxiter)
        if b.mode == "electric":
            psi0 = None
            if b.psi0 is not None:
                psi0 = NodeField(g, scale * NodeField.from_function(g, b.psi0).values)
            return ProblemSpec(g, self.sigma, u0, mode="electric", psi0=psi0,
                               e_const=tuple(scale * c for c in b.e), **common)
        flux, curl_norm = tangential_flux(g, b)
        flux = FaceField(g, *(scale * c for c in flux))
        curl_norm = None if curl_norm is None else scale * curl_norm
        return ProblemSpec(g, self.sigma, u0, mode="tangential", flux=flux, curl_h0_l2=curl_norm, **common)


def tangential_flux(grid: Grid, b: BoundaryData):
    """Boundary flux ``g`` on faces and, when ``H0`` is given, ``|curl H0|_2``.

    With ``H0`` the flux is the face curl of ``H0`` sampled on edges, so its
    discrete total vanishes exactly (up to rounding).
    """
    if b.h0 is not None:
        curl = curl_edge_to_face(EdgeField.from_function(grid, *b.h0))
        return outward_flux(curl), l2_face(curl)
    return FaceField.from_function(grid, b.g, b.g, b.g), None


def outward_flux(H: FaceField) -> FaceField:
    """``nu . H`` on the boundary faces (sign flipped on the low faces), zero inside."""
    comps = []
    for d in range(3):
        c = np.zeros(H.grid.face_shape(d))
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[d] = 0
        hi[d] = -1
        c[tuple(lo)] = -H[d][tuple(lo)]
        c[tuple(hi)] = H[d][tuple(hi)]
        comps.append(c)
    return FaceField(H.grid, *comps)


def _floats(text, count=None):
    parts = text.replace(",", " ").split()
    vals = tuple(float(p) for p in parts)
    if count is not None and len(vals) != count:
        raise ValueError(f"expected {count} numbers, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("values must be finite")
    return vals


def _int(text):
    return int(text.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(*opts):
    def parse(text):
        t = text.strip()
        if t not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}; got {t!r}")
        return t

    return parse


def _float(text):
    (v,) = _floats(text, 1)
    return v


def _words(text):
    return tuple(text.replace(",", " ").split())


SCHEMA: dict[str, dict[str, Callable]] = {
    "grid": {"n": lambda t: tuple(int(v) for v in _words(t)), "lengths": _floats},
    "sigma": {
        "kind": _choice("constant", "sigmoid", "table"),
        "sigma0": _float, "sigma1": _float, "sigma2": _float, "s0": _float, "width": _float,
        "points": lambda t: [_floats(p, 2) for p in t.split(";") if p.strip()],
    },
    "boundary": {
        "mode": _choice("electric", "tangential"),
        "u0": compile_expression, "psi0": compile_expression, "e": lambda t: _floats(t, 3),
        "g": compile_expression, "h0x": compile_expression, "h0y": compile_expression, "h0z": compile_expression,
    },
    "picard": {
        "tol": _float, "maxiter": _int, "damping": _float,
        "joule": _choice("divergence", "pointwise"), "linear_tol": _float, "linear_maxiter": _int,
    },
    "output": {"dir": str.strip, "fields": _bool, "seed": _int},
    "study": {
        "levels": lambda t: tuple(int(v) for v in _words(t)),
        "cases": _words,
        "scales": _floats,
        "perturbation": _float, "alpha": _float, "mu": _float, "budget": _int, "pairs": _int,
    },
}
REQUIRED_SECTIONS = ("grid", "sigma", "boundary")

_SECTION = re.compile(r"^\[\s*([A-Za-z_]+)\s*\]$")
_ENTRY = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


def _strip_comment(line):
    i = line.find("#")
    return line if i < 0 else line[:i]


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raise :class:`ConfigError` listing every problem found."""
    diags: list[ConfigDiagnostic] = []
    raw: dict[str, dict[str, tuple[int, object]]] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = _strip_comment(line).strip()
        if not s:
            continue
        m = _SECTION.match(s)
        if m:
            section = m.group(1)
            if section not in SCHEMA:
                diags.append(ConfigDiagnostic(lineno, f"[{section}]", "unknown section"))
                section = "?"
            elif section in raw:
                diags.append(ConfigDiagnostic(lineno, f"[{section}]", "duplicate section"))
            raw.setdefault(section, {})
            continue
        m = _ENTRY.match(s)
        if not m:
            diags.append(ConfigDiagnostic(lineno, s, "expected 'key = value' or '[section]'"))
            continue
        key, value = m.group(1), m.group(2).strip()
        if section is None:
            diags.append(ConfigDiagnostic(lineno, key, "entry before any section"))
            continue
        if section == "?":
            continue
        qual = f"[{section}].{key}"
        if key not in SCHEMA[section]:
            diags.append(ConfigDiagnostic(lineno, qual, "unknown key"))
            continue
        if key in raw[section]:
            first = raw[section][key][0]
            diags.append(ConfigDiagnostic(lineno, qual, f"duplicate key (first set on line {first})"))
            continue
        if not value:
            diags.append(ConfigDiagnostic(lineno, qual, "empty value"))
            continue
        try:
            raw[section][key] = (lineno, SCHEMA[section][key](value))
        except (ValueError, TypeError) as exc:
            diags.append(ConfigDiagnostic(lineno, qual, str(exc)))
    for sec in REQUIRED_SECTIONS:
        if sec not in raw:
            diags.append(ConfigDiagnostic(None, f"[{sec}]", "missing required section"))
    if diags:
        raise ConfigError(diags)
    return _build(raw)


class _Checker:
    def __init__(self, raw):
        self.raw = raw
        self.diags: list[ConfigDiagnostic] = []

    def get(self, sec, key, default=None):
        entry = self.raw.get(sec, {}).get(key)
        return default if entry is None else entry[1]

    def line(self, sec, key):
        entry = self.raw.get(sec, {}).get(key)
        return None if entry is None else entry[0]

    def has(self, sec, key):
        return key in self.raw.get(sec, {})

    def error(self, sec, key, msg):
        self.diags.append(ConfigDiagnostic(self.line(sec, key), f"[{sec}].{key}", msg))

    def require(self, sec, key, ok, msg):
        if self.has(sec, key) and not ok(self.get(sec, key)):
            self.error(sec, key, msg)
            return False
        return True


def _build(raw) -> RunConfig:
    c = _Checker(raw)

    # grid
    grid = None
    n = c.get("grid", "n")
    if n is None:
        c.diags.append(ConfigDiagnostic(None, "[grid].n", "missing required key"))
    elif len(n) not in (1, 3) or min(n) < 2:
        c.error("grid", "n", "expected one or three cell counts, each >= 2")
    else:
        n = n * 3 if len(n) == 1 else n
        lengths = c.get("grid", "lengths", (1.0,))
        if len(lengths) not in (1, 3) or min(lengths) <= 0:
            c.error("grid", "lengths", "expected one or three positive lengths")
        else:
            grid = Grid(n, lengths * 3 if len(lengths) == 1 else lengths)

    # sigma
    sigma = None
    kind = c.get("sigma", "kind")
    allowed = {"constant": {"kind", "sigma0"}, "sigmoid": {"kind", "sigma1", "sigma2", "s0", "width"},
               "table": {"kind", "points"}}
    if kind is None:
        c.diags.append(ConfigDiagnostic(None, "[sigma].kind", "missing required key"))
    else:
        for key in raw.get("sigma", {}):
            if key not in allowed[kind]:
                c.error("sigma", key, f"not used by kind = {kind}")
        pos = lambda v: v > 0  # noqa: E731
        if kind == "constant":
            if not c.has("sigma", "sigma0"):
                c.diags.append(ConfigDiagnostic(c.line("sigma", "kind"), "[sigma].sigma0", "missing required key"))
            elif c.require("sigma", "sigma0", pos, "must be > 0 (sigma bounded below by a positive constant)"):
                sigma = ConductivityModel.constant(c.get("sigma", "sigma0"))
        elif kind == "sigmoid":
            missing = [k for k in ("sigma1", "sigma2") if not c.has("sigma", k)]
            for k in missing:
                c.diags.append(ConfigDiagnostic(c.line("sigma", "kind"), f"[sigma].{k}", "missing required key"))
            ok = not missing
            ok &= c.require("sigma", "sigma1", pos, "must be > 0 (sigma bounded below by a positive constant)")
            ok &= c.require("sigma", "width", pos, "must be > 0")
            if ok and c.get("sigma", "sigma2") < c.get("sigma", "sigma1"):
                c.error("sigma", "sigma2", "must be >= sigma1")
                ok = False
            if ok:
                sigma = ConductivityModel.sigmoid(c.get("sigma", "sigma1"), c.get("sigma", "sigma2"),
                                                  c.get("sigma", "s0", 0.0), c.get("sigma", "width", 1.0))
        else:
            pts = c.get("sigma", "points")
            if pts is None:
                c.diags.append(ConfigDiagnostic(c.line("sigma", "kind"), "[sigma].points", "missing required key"))
            else:
                try:
                    sigma = ConductivityModel.table(pts)
                except ValueError as exc:
                    c.error("sigma", "points", str(exc))

    # boundary
    mode = c.get("boundary", "mode", "electric")
    h0 = [c.get("boundary", k) for k in ("h0x", "h0y", "h0z")]
    if mode == "electric":
        for key in ("g", "h0x", "h0y", "h0z"):
            if c.has("boundary", key):
                c.error("boundary", key, "only valid with mode = tangential")
    else:
        for key in ("psi0", "e"):
            if c.has("boundary", key):
                c.error("boundary", key, "only valid with mode = electric")
        given = [h is not None for h in h0]
        if c.has("boundary", "g") and any(given):
            c.error("boundary", "g", "give either g or h0x/h0y/h0z, not both")
        elif not c.has("boundary", "g") and not any(given):
            c.diags.append(ConfigDiagnostic(c.line("boundary", "mode"), "[boundary].g",
                                            "tangential mode needs g or h0x/h0y/h0z"))
    zero = compile_expression("0")
    boundary = BoundaryData(
        mode=mode,
        u0=c.get("boundary", "u0"),
        psi0=c.get("boundary", "psi0"),
        e=c.get("boundary", "e", (0.0, 0.0, 0.0)),
        g=c.get("boundary", "g"),
        h0=None if all(h is None for h in h0) else tuple(zero if h is None else h for h in h0),
    )

    # picard
    c.require("picard", "tol", lambda v: v > 0, "must be > 0")
    c.require("picard", "maxiter", lambda v: v >= 1, "must be >= 1")
    c.require("picard", "damping", lambda v: 0 < v <= 1, "must lie in (0, 1]")
    c.require("picard", "linear_tol", lambda v: 0 < v < 1, "must lie in (0, 1)")
    c.require("picard", "linear_maxiter", lambda v: v >= 1, "must be >= 1")
    c.require("output", "seed", lambda v: v >= 0, "must be >= 0")

    # study
    c.require("study", "levels", lambda v: len(v) >= 3 and min(v) >= 2
              and all(b == 2 * a for a, b in zip(v, v[1:])), "need >= 3 doubling cube sizes, each >= 2")
    c.require("study", "cases", lambda v: all(k in CATALOG for k in v),
              f"cases must be drawn from {', '.join(sorted(CATALOG))}")
    c.require("study", "scales", lambda v: len(v) >= 1 and min(v) >= 0, "need nonnegative scales")
    c.require("study", "alpha", lambda v: 0 < v <= 1, "must lie in (0, 1]")
    c.require("study", "mu", lambda v: 0 < v <= 5, "must lie in (0, 5]")
    c.require("study", "budget", lambda v: v >= 1, "must be >= 1")
    c.require("study", "pairs", lambda v: v >= 0, "must be >= 0")
    c.require("study", "perturbation", lambda v: v >= 0, "must be >= 0")

    study = StudyOptions(**{k: v for k, (_, v) in raw.get("study", {}).items()})
    if c.diags:
        raise ConfigError(c.diags)

    cfg = RunConfig(
        grid=grid, sigma=sigma, boundary=boundary,
        picard_tol=c.get("picard", "tol", 1e-10),
        picard_maxiter=c.get("picard", "maxiter", 200),
        damping=c.get("picard", "damping", 1.0),
        joule=c.get("picard", "joule", "divergence"),
        linear_tol=c.get("picard", "linear_tol", 1e-10),
        linear_maxiter=c.get("picard", "linear_maxiter"),
        output_dir=c.get("output", "dir", "out"),
        write_fields=c.get("output", "fields", True),
        seed=c.get("output", "seed", 0),
        study=study,
    )
    _check_data(cfg, c)
    return cfg


def _check_data(cfg: RunConfig, c: _Checker):
    """Evaluate boundary data on the grid: finiteness and flux compatibility."""
    g = cfg.grid
    b = cfg.boundary
    for key in ("u0", "psi0"):
        fn = getattr(b, key)
        if fn is not None and not np.all(np.isfinite(fn(*g.node_coords()))):
            c.error("boundary", key, "expression is not finite on every node")
    if b.mode == "tangential":
        if b.h0 is not None:
            for key, fn in zip(("h0x", "h0y", "h0z"), b.h0):
                for d in range(3):
                    if not np.all(np.isfinite(fn(*g.edge_coords(d)))):
                        c.error("boundary", key, "expression is not finite on every edge")
                        break
        if not c.diags:
            flux, _ = tangential_flux(g, b)
            if not all(np.all(np.isfinite(f)) for f in flux):
                c.error("boundary", "g", "expression is not finite on every boundary face")
            else:
                _, total, scale = neumann_rhs(g, flux)
                if abs(total) > 1e-10 * scale:
                    key = "g" if b.g is not None else "h0x"
                    c.error("boundary", key,
                            f"incompatible flux: compatibility sum = {total:.6e} (data scale {scale:.6e}); "
                            "the total boundary flux must vanish")
    if c.diags:
        raise ConfigError(c.diags)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
