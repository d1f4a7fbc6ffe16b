"""Problem configuration files (TOML) with strict validation.

A configuration names a symbol family, either a builtin::

    [problem]
    q = 2
    n = 2
    builtin = "laplacian-dirichlet"

or explicit coefficient tables whose entries are expressions::

    [interior]
    order = 2
    size = 1
    [[interior.terms]]
    alpha = [2, 0]
    matrix = [["1 + exp(-lambda[1]^2)"]]
    at_infinity = [["1"]]

    [[boundary.rows]]
    order = 0
    coefficients = [[1]]      # one row of m entries per power of nu

Every semantic error carries the line and column of the offending key.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import tomlkit

try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli

from .expr import Expr, ExprError, ExprSyntaxError, compile_expr
from .manifolds import QuadratureRule
from .symbols import (
    BoundarySymbol,
    CoefficientField,
    InteriorSymbol,
    SamplingPlan,
    SymbolFamily,
    lambda_from_sphere,
)

__all__ = ["ConfigError", "ProblemConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)

    def to_dict(self) -> dict:
        return {"code": "config-error", "message": self.message, "line": self.line, "column": self.column}


# allowed keys per table; "*" marks free-form tables
SCHEMA: dict[str, Any] = {
    "problem": {"q": int, "n": int, "name": str, "builtin": str, "params": "*", "realified": bool,
                "complex": bool, "m": int, "k": int, "r": int},
    "geometry": {"kind": str, "radius": float, "radii": list},
    "interior": {"order": int, "size": int, "terms": [{"alpha": list, "matrix": list, "at_infinity": list}]},
    "boundary": {"rows": [{"order": int, "coefficients": list, "at_infinity": list}]},
    "alt_boundary": {"rows": [{"order": int, "coefficients": list, "at_infinity": list}]},
    "quadrature": {"kind": str, "nodes": (int, list), "points": int, "batches": int, "seed": int, "threads": int,
                   "budget": int, "chunk": int,
                   "boundary": {"kind": str, "nodes": (int, list), "points": int, "batches": int, "seed": int,
                                "budget": int}},
    "sampling": {"points": int, "seed": int},
    "tolerances": {"residual": float, "sl_cond": float, "ellipticity": float},
    "map": {"builtin": str, "method": str, "params": "*"},
    "verdict": {"mu": int, "q": int},
}


class _Locator:
    """Finds the source position of a key path such as ``("interior", "terms", 0, "matrix")``."""

    _header = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.\s\"]+?)\s*\]\]?")
    _key = re.compile(r"^\s*([A-Za-z0-9_\"]+)\s*=")

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def find(self, path: tuple) -> tuple[int | None, int | None]:
        tables = [p for p in path if isinstance(p, str)]
        key = tables[-1] if tables else None
        want = ".".join(tables[:-1])
        idx = [p for p in path if isinstance(p, int)]
        counts: dict[str, int] = {}
        current, current_idx = "", None
        best = (None, None)
        for ln, line in enumerate(self.lines, 1):
            m = self._header.match(line)
            if m:
                name = re.sub(r"\s", "", m.group(2)).replace('"', "")
                current = name
                if m.group(1) == "[[":
                    counts[name] = counts.get(name, -1) + 1
                    current_idx = counts[name]
                else:
                    current_idx = None
                full = name
                if full == ".".join(tables) and (not idx or current_idx == idx[0]):
                    best = (ln, line.index("[") + 1)
                continue
            km = self._key.match(line)
            if km and km.group(1).strip('"') == key:
                if current == want and (not idx or current_idx == idx[0] or current_idx is None):
                    return ln, km.start(1) + 1
                if want == "" and current == "":
                    return ln, km.start(1) + 1
        if best[0] is None and tables:
            # fall back to the enclosing table header
            parent = tables[:-1]
            for ln, line in enumerate(self.lines, 1):
                m = self._header.match(line)
                if m and re.sub(r"\s", "", m.group(2)) == ".".join(parent):
                    return ln, line.index("[") + 1
        return best

    def find_text(self, text: str, near: tuple) -> tuple[int | None, int | None]:
        line, _ = self.find(near)
        start = (line or 1) - 1
        for ln in range(start, len(self.lines)):
            col = self.lines[ln].find(text)
            if col >= 0:
                return ln + 1, col + 1
        return line, None


def _type_ok(value, expected) -> bool:
    if expected is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(expected, tuple):
        return any(_type_ok(value, s) for s in expected)
    return isinstance(value, expected)


def _validate(data: dict, schema: dict, path: tuple, loc: _Locator):
    for key, value in data.items():
        if key not in schema:
            line, col = loc.find(path + (key,))
            known = ", ".join(sorted(schema))
            where = ".".join(str(p) for p in path) or "top level"
            raise ConfigError(f"unknown key {key!r} in {where} (allowed: {known})", line, col)
        expected = schema[key]
        if expected == "*":
            if not isinstance(value, dict):
                raise ConfigError(f"{key!r} must be a table", *loc.find(path + (key,)))
            continue
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{key!r} must be a table", *loc.find(path + (key,)))
            _validate(value, expected, path + (key,), loc)
        elif isinstance(expected, list):
            if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
                raise ConfigError(f"{key!r} must be an array of tables", *loc.find(path + (key,)))
            for i, item in enumerate(value):
                _validate(item, expected[0], path + (key, i), loc)
        elif not _type_ok(value, expected):
            tname = expected.__name__ if isinstance(expected, type) else " or ".join(s.__name__ for s in expected)
            raise ConfigError(f"{key!r} must be of type {tname}, got {type(value).__name__}", *loc.find(path + (key,)))


@dataclass
class ProblemConfig:
    """Validated configuration; ``data`` is the plain TOML document."""

    data: dict
    source: str = field(default="", compare=False, repr=False)

    # ------------------------------------------------------------------ access
    def section(self, name: str) -> dict:
        return self.data.get(name, {})

    @property
    def q(self) -> int:
        return self.section("problem").get("q", 0)

    @property
    def n(self) -> int:
        return self.section("problem").get("n", 0)

    def to_toml(self) -> str:
        return tomlkit.dumps(self.data)

    def sampling_plan(self, seed: int | None = None) -> SamplingPlan:
        s = self.section("sampling")
        return SamplingPlan(points=s.get("points", 256), seed=s.get("seed", 0) if seed is None else seed)

    def rule(self, which: str = "interior", *, seed: int | None = None, threads: int | None = None) -> QuadratureRule:
        """Quadrature rule; ``which="boundary"`` applies the ``[quadrature.boundary]`` overrides."""
        base = dict(self.section("quadrature"))
        over = base.pop("boundary", {})
        if which == "boundary":
            base.update(over)
        base.pop("budget", None)
        if isinstance(base.get("nodes"), list):
            base["nodes"] = tuple(base["nodes"])
        rule = QuadratureRule(**base)
        if seed is not None:
            rule = replace(rule, seed=seed)
        if threads is not None:
            rule = replace(rule, threads=threads)
        return rule

    def budget(self, which: str = "interior") -> int | None:
        q = self.section("quadrature")
        if which == "boundary" and "budget" in q.get("boundary", {}):
            return q["boundary"]["budget"]
        return q.get("budget")

    # ------------------------------------------------------------------ family
    def build_family(self) -> SymbolFamily:
        return _build_family(self)


def parse_config(text: str) -> ProblemConfig:
    """Parse and validate; dimension errors and malformed expressions raise ``ConfigError``."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"\(at line (\d+), column (\d+)\)", str(exc))
        msg = re.sub(r"\s*\(at line \d+, column \d+\)", "", str(exc))
        if m:
            line, col = (int(g) for g in m.groups())
        else:
            line, col = max(len(text.splitlines()), 1), None
        raise ConfigError(f"syntax error: {msg}", line, col) from None
    loc = _Locator(text)
    _validate(data, SCHEMA, (), loc)
    cfg = ProblemConfig(data, text)
    _check_semantics(cfg, loc)
    return cfg


def load_config(path) -> ProblemConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _check_semantics(cfg: ProblemConfig, loc: _Locator):
    d = cfg.data
    prob = d.get("problem")
    needs_family = any(k in d for k in ("interior", "boundary", "geometry")) or (prob and "builtin" in prob)
    if prob is None:
        if needs_family:
            raise ConfigError("missing [problem] table (q and n are required)", 1, 1)
        return
    for key in ("q", "n"):
        if key not in prob and needs_family:
            raise ConfigError(f"[problem] needs {key!r}", *loc.find(("problem",)))
    if prob.get("q", 1) < 1 or prob.get("n", 2) < 2:
        raise ConfigError("need q >= 1 and n >= 2", *loc.find(("problem", "q")))
    if "builtin" in prob and ("interior" in d or "boundary" in d):
        raise ConfigError("give either problem.builtin or explicit [interior]/[boundary] tables, not both",
                          *loc.find(("problem", "builtin")))
    if "builtin" not in prob and needs_family:
        if "interior" not in d or "boundary" not in d:
            raise ConfigError("explicit families need both [interior] and [boundary]", *loc.find(("problem",)))
        _compile_family_exprs(cfg, loc)
    if needs_family:
        # building the family runs every dimension check (k m = 2 r etc.)
        try:
            fam = _build_family(cfg, loc)
        except ConfigError:
            raise
        except (ExprError, ValueError, TypeError) as exc:
            raise ConfigError(str(exc), *loc.find(("problem",))) from None
        for key, val in (("m", fam.m), ("k", fam.k), ("r", fam.r)):
            if key in prob and prob[key] != val:
                raise ConfigError(f"problem.{key} = {prob[key]} but the symbol has {key} = {val}"
                                  + (" (proper ellipticity needs k m = 2 r)" if key == "r" else ""),
                                  *loc.find(("problem", key)))


# ---------------------------------------------------------------------- families


def _matrix(value, shape, dims, path, loc, what) -> list[list[Expr]]:
    if not isinstance(value, list) or len(value) != shape[0] or not all(
            isinstance(r, list) and len(r) == shape[1] for r in value):
        raise ConfigError(f"{what} must be a {shape[0]}x{shape[1]} array", *loc.find(path))
    out = []
    for row in value:
        cells = []
        for cell in row:
            try:
                cells.append(compile_expr(cell, dims))
            except ExprSyntaxError as exc:
                line, col = loc.find_text(exc.text, path) if isinstance(cell, str) else loc.find(path)
                if col is not None and isinstance(cell, str):
                    col += exc.pos
                raise ConfigError(f"{what}: {exc.message} in {exc.text!r}", line, col) from None
        out.append(cells)
    return out


def _dims(cfg: ProblemConfig, boundary: bool) -> dict[str, int]:
    q, n = cfg.q, cfg.n
    if boundary:
        return {"lambda": q, "x": n, "xi": n - 1, "theta": n - 1}
    return {"lambda": q, "x": n}


def _compile_family_exprs(cfg, loc):
    _interior_terms(cfg, loc)
    _boundary_rows(cfg, "boundary", loc)
    if "alt_boundary" in cfg.data:
        _boundary_rows(cfg, "alt_boundary", loc)


def _interior_terms(cfg, loc):
    it = cfg.section("interior")
    for key in ("order", "size", "terms"):
        if key not in it:
            raise ConfigError(f"[interior] needs {key!r}", *loc.find(("interior",)))
    m, k = it["size"], it["order"]
    dims = _dims(cfg, False)
    terms = []
    for i, t in enumerate(it["terms"]):
        if "alpha" not in t or "matrix" not in t:
            raise ConfigError("each interior term needs 'alpha' and 'matrix'", *loc.find(("interior", "terms", i)))
        alpha = t["alpha"]
        if len(alpha) != cfg.n or not all(isinstance(a, int) and a >= 0 for a in alpha):
            raise ConfigError(f"alpha must list {cfg.n} non-negative integers", *loc.find(("interior", "terms", i, "alpha")))
        if sum(alpha) != k:
            raise ConfigError(f"alpha {alpha} has order {sum(alpha)}; only order-{k} (principal) terms are allowed",
                              *loc.find(("interior", "terms", i, "alpha")))
        mat = _matrix(t["matrix"], (m, m), dims, ("interior", "terms", i, "matrix"), loc, "matrix")
        inf = None
        if "at_infinity" in t:
            inf = _matrix(t["at_infinity"], (m, m), {"x": cfg.n}, ("interior", "terms", i, "at_infinity"), loc,
                          "at_infinity")
        if inf is None and any("lambda" in e.variables for row in mat for e in row):
            raise ConfigError("lambda-dependent coefficient needs 'at_infinity' (its value at the point at infinity)",
                              *loc.find(("interior", "terms", i, "matrix")))
        terms.append((tuple(alpha), mat, inf))
    return terms


def _boundary_rows(cfg, section, loc):
    rows_cfg = cfg.section(section).get("rows")
    if not rows_cfg:
        raise ConfigError(f"[{section}] needs at least one [[{section}.rows]] entry", *loc.find((section,)))
    m = cfg.section("interior").get("size", 1)
    dims = _dims(cfg, True)
    rows = []
    for i, row in enumerate(rows_cfg):
        if "order" not in row or "coefficients" not in row:
            raise ConfigError("each boundary row needs 'order' and 'coefficients'", *loc.find((section, "rows", i)))
        k = row["order"]
        if not isinstance(k, int) or k < 0:
            raise ConfigError("row order must be a non-negative integer", *loc.find((section, "rows", i, "order")))
        coef = _matrix(row["coefficients"], (k + 1, m), dims, (section, "rows", i, "coefficients"), loc,
                       "coefficients")
        inf = None
        if "at_infinity" in row:
            inf = _matrix(row["at_infinity"], (k + 1, m), {**dims, "lambda": 0},
                          (section, "rows", i, "at_infinity"), loc, "at_infinity")
        if inf is None and any("lambda" in e.variables for r in coef for e in r):
            raise ConfigError("lambda-dependent boundary row needs 'at_infinity'",
                              *loc.find((section, "rows", i, "coefficients")))
        rows.append((k, coef, inf))
    return rows


def _eval_matrix(mat, env, N) -> np.ndarray:
    out = np.empty((N, len(mat), len(mat[0])), dtype=complex)
    for a, row in enumerate(mat):
        for b, e in enumerate(row):
            out[:, a, b] = e(env, N)
    return out


def _expr_field(mat, inf, shape, make_env) -> CoefficientField:
    dep = inf is not None or any("lambda" in e.variables for row in mat for e in row)
    inf = inf if inf is not None else mat

    def on_sphere(y, x, xi):
        N = len(x)
        lam, pole = lambda_from_sphere(np.broadcast_to(y, (N, y.shape[-1])))
        out = np.empty((N,) + shape, dtype=complex)
        fin = ~pole
        if np.any(fin):
            out[fin] = _eval_matrix(mat, make_env(lam[fin], x[fin], xi[fin]), int(fin.sum())).reshape((-1,) + shape)
        if np.any(pole):
            out[pole] = _eval_matrix(inf, make_env(lam[pole], x[pole], xi[pole]), int(pole.sum())).reshape((-1,) + shape)
        return out

    return CoefficientField(shape, on_sphere=on_sphere, lambda_dependent=dep)


def _build_family(cfg: ProblemConfig, loc: _Locator | None = None) -> SymbolFamily:
    from .catalog import builtin_family, make_domain

    loc = loc or _Locator(cfg.source)
    prob = cfg.section("problem")
    q, n = prob["q"], prob["n"]
    if "builtin" in prob:
        params = dict(prob.get("params", {}))
        params.setdefault("q", q)
        name = prob["builtin"]
        if name != "clutch-demo":
            params.setdefault("n", n)
        try:
            fam = builtin_family(name, **params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for builtin {name!r}: {exc}", *loc.find(("problem", "params"))) from None
        except ValueError as exc:
            raise ConfigError(str(exc), *loc.find(("problem", "builtin"))) from None
        if fam.q != q or fam.n != n:
            raise ConfigError(f"builtin {name!r} has q={fam.q}, n={fam.n}; the config says q={q}, n={n}",
                              *loc.find(("problem", "q")))
        if "realified" in prob:
            fam.realified = prob["realified"]
        return fam
    geo = cfg.section("geometry")
    kw = {}
    if "radius" in geo:
        kw["radius"] = float(geo["radius"])
    if "radii" in geo:
        kw["radii"] = tuple(geo["radii"])
    try:
        domain = make_domain(geo.get("kind", "ball"), n, **kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), *loc.find(("geometry", "kind"))) from None
    it = cfg.section("interior")
    m = it["size"]
    terms = {}
    for alpha, mat, inf in _interior_terms(cfg, loc):
        terms[alpha] = _expr_field(mat, inf, (m, m), lambda lam, x, xi: {"lambda": lam, "x": x})
    interior = InteriorSymbol(it["order"], m, n, terms)

    def boundary_symbol(section):
        rows = []
        for k, coef, inf in _boundary_rows(cfg, section, loc):
            def env(lam, chart, xi, _k=k):
                return {"lambda": lam, "x": domain.boundary_point(chart), "xi": xi, "theta": chart}
            rows.append((k, _expr_field(coef, inf, (k + 1, m), env)))
        return BoundarySymbol.from_rows(rows, m)

    boundary = boundary_symbol("boundary")
    fam = SymbolFamily(q, n, interior, boundary, domain, name=prob.get("name", "config"),
                       complex_coefficients=prob.get("complex", False), realified=prob.get("realified", False))
    if "alt_boundary" in cfg.data:
        fam.notes.append("two-boundary-family mode")
        fam.alt_boundary = boundary_symbol("alt_boundary")  # type: ignore[attr-defined]
    return fam
