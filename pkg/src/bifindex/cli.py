"""Command line driver: ``bifindex <subcommand> [options]``.

Reports are JSON on stdout (or ``--out``).  Output is deterministic for a
fixed config and seed; wall times are only included with ``--timing``.

Exit codes: 0 ok, 1 internal error, 2 inconclusive, 3 hypothesis failure,
4 configuration or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .config import ConfigError, ProblemConfig, load_config, parse_config
from .degree import (
    RESIDUAL_WARN,
    DegreeResult,
    InconclusiveDegree,
    SingularMapError,
    bott_fedosov_degree,
    brouwer_degree,
    degree_prime,
)
from .expr import ExprRuntimeError
from .halfline import H3Violation, NotNormalError, ProperEllipticityError, ShapiroLopatinskijError
from .jtheory import jgroup_info, verdict
from .manifolds import Product, QuadratureRule, Sphere
from .multiplicity import check_hypotheses, total_multiplicity
from .symbols import SamplingPlan

EXIT_OK, EXIT_INTERNAL, EXIT_INCONCLUSIVE, EXIT_HYPOTHESIS, EXIT_CONFIG = 0, 1, 2, 3, 4

log = logging.getLogger("bifindex")


class UsageError(ValueError):
    """Bad command line input (mapped to exit code 4)."""


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------- helpers


def _config(args) -> ProblemConfig:
    if args.config is None:
        return parse_config("")
    return load_config(args.config)


def _rule(cfg: ProblemConfig, args, manifold, which: str = "interior") -> QuadratureRule:
    rule = cfg.rule(which, seed=args.seed, threads=args.threads)
    budget = args.budget if args.budget is not None else cfg.budget(which)
    if budget is not None:
        rule = rule.with_budget(budget, manifold)
    return rule


def _tolerance(cfg: ProblemConfig, args) -> float:
    if args.tolerance is not None:
        return args.tolerance
    return float(cfg.section("tolerances").get("residual", RESIDUAL_WARN))


def _plan(cfg: ProblemConfig, args) -> SamplingPlan:
    return cfg.sampling_plan(seed=args.seed)


def _inputs(cfg: ProblemConfig, args) -> dict:
    d = {"config": cfg.data, "seed": args.seed if args.seed is not None else cfg.rule().seed}
    if args.budget is not None:
        d["budget"] = args.budget
    if args.tolerance is not None:
        d["tolerance"] = args.tolerance
    return d


def _params(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


# ---------------------------------------------------------------- maps for `degree`

MAP_BUILTINS = ("winding", "clifford", "doubling", "collapse", "sigma", "tau")


def _build_map(name: str, params: dict, cfg: ProblemConfig):
    """Returns ``(kind, map)`` with kind ``"matrix"`` or ``"sphere"``."""
    from .constructor import build_f, clifford_generator, doubling_map, winding_map
    from .halfline import build_tau
    from .symbols import build_sigma

    try:
        if name == "winding":
            return "matrix", winding_map(int(params.get("k", 1)))
        if name == "clifford":
            return "matrix", clifford_generator(int(params.get("v", 2))).as_matrix_map()
        if name == "doubling":
            return "sphere", doubling_map()
        if name == "collapse":
            return "sphere", build_f(int(params.get("q", cfg.q or 4)), int(params.get("n", cfg.n or 3))).as_sphere_map()
    except TypeError as exc:
        raise UsageError(f"bad parameters for map {name!r}: {exc}") from None
    if name in ("sigma", "tau"):
        if "problem" not in cfg.data:
            raise UsageError(f"map {name!r} needs a --config describing a symbol family")
        fam = cfg.build_family()
        if name == "sigma":
            return "matrix", build_sigma(fam)
        alt = getattr(fam, "alt_boundary", None)
        return "matrix", build_tau(fam, alt, method=params.get("method", "sign"))
    raise UsageError(f"unknown map {name!r}; known: {', '.join(MAP_BUILTINS)}")


# ---------------------------------------------------------------- subcommands


def cmd_check(args) -> tuple[dict, int]:
    cfg = _config(args)
    if "problem" not in cfg.data:
        raise UsageError("check needs a --config describing a symbol family")
    fam = cfg.build_family()
    hyps = check_hypotheses(fam, _plan(cfg, args))
    ok = all(h.passed for h in hyps.values())
    report = {
        "command": "check",
        "inputs": _inputs(cfg, args),
        "family": fam.describe(),
        "hypotheses": {k: h.to_dict() for k, h in hyps.items()},
        "passed": ok,
    }
    if fam.notes:
        report["notes"] = list(fam.notes)
    return report, EXIT_OK if ok else EXIT_HYPOTHESIS


def cmd_degree(args) -> tuple[dict, int]:
    cfg = _config(args)
    map_cfg = dict(cfg.section("map"))
    name = args.map or map_cfg.get("builtin")
    if name is None:
        raise UsageError("degree needs --map NAME or a [map] table in the config")
    params = {**map_cfg.get("params", {}), **_params(args.param)}
    method = args.method or map_cfg.get("method", "bott-fedosov")
    kind, phi = _build_map(name, params, cfg)
    rule = _rule(cfg, args, phi.manifold)
    if kind == "sphere" or method == "brouwer":
        if kind != "sphere":
            raise UsageError(f"map {name!r} is matrix valued; use --method bott-fedosov or degree-prime")
        res = brouwer_degree(phi, rule, strict=False)
    elif method == "degree-prime":
        res = degree_prime(phi, rule, strict=False)
    elif method == "bott-fedosov":
        res = bott_fedosov_degree(phi, rule, strict=False)
    else:
        raise UsageError(f"unknown method {method!r} (bott-fedosov, degree-prime, brouwer)")
    tol = _tolerance(cfg, args)
    ok = res.imag_ok and res.residual < tol
    report = {
        "command": "degree",
        "inputs": _inputs(cfg, args),
        "map": {"name": name, "params": params, "manifold": phi.manifold.label()},
        "degree": res.to_dict(args.timing),
        "tolerance": tol,
        "conclusive": ok,
    }
    return report, EXIT_OK if ok else EXIT_INCONCLUSIVE


def cmd_multiplicity(args) -> tuple[dict, int]:
    cfg = _config(args)
    if "problem" not in cfg.data:
        raise UsageError("multiplicity needs a --config describing a symbol family")
    fam = cfg.build_family()
    q, n = fam.q, fam.n
    rule = _rule(cfg, args, Product([Sphere(q), Sphere(2 * n - 1)]))
    brule = _rule(cfg, args, Product([Sphere(q), fam.domain.sphere_bundle]), "boundary")
    rep = total_multiplicity(fam, rule, plan=_plan(cfg, args), boundary_rule=brule)
    report = {"command": "multiplicity", "inputs": _inputs(cfg, args), **rep.to_dict(args.timing)}
    if not rep.hypotheses_ok:
        return report, EXIT_HYPOTHESIS
    tol = _tolerance(cfg, args)
    fine = rep.conclusive and all(r.residual < tol for r in (rep.mu_interior, rep.mu_boundary))
    return report, EXIT_OK if fine else EXIT_INCONCLUSIVE


def cmd_verdict(args) -> tuple[dict, int]:
    cfg = _config(args)
    sec = cfg.section("verdict")
    mu = args.mu if args.mu is not None else sec.get("mu")
    q = args.q if args.q is not None else sec.get("q")
    if mu is None or q is None:
        raise UsageError("verdict needs --mu and --q (or a [verdict] table)")
    v = verdict(mu, q)
    return {"command": "verdict", "jGroup": jgroup_info(q).to_dict(), **v.to_dict()}, EXIT_OK


def cmd_jgroup(args) -> tuple[dict, int]:
    return jgroup_info(args.q).to_dict(), EXIT_OK


def cmd_construct_example(args) -> tuple[dict, int]:
    import tomlkit

    from .constructor import build_example

    params = dict(q=args.q or 4, n=args.n or 3, l=args.l, degree=args.fit_degree, eps=args.eps,
                  seed=args.seed or 0)
    ex = build_example(**params)
    fam = ex.family
    doc = {
        "problem": {"q": fam.q, "n": fam.n, "builtin": "example", "name": fam.name, "realified": True,
                    "params": {k: v for k, v in ex.params.items() if k not in ("q", "n")}},
        "quadrature": {"kind": "qmc", "points": 2**13, "batches": 8, "seed": params["seed"]},
        "sampling": {"points": 256, "seed": params["seed"]},
    }
    text = tomlkit.dumps(doc)
    parse_config(text)  # the emitted file must load
    provenance = {
        "dimensions": {"q": fam.q, "n": fam.n, "m": fam.m, "l": params["l"], "r": fam.r, "k": fam.k,
                       "targetSphere": ex.f.target_dim, "generatorSize": ex.psi.size},
        "fit": {"degree": ex.h.degree, "achievedError": ex.h.achieved_error, "targetError": ex.h.target_error,
                "ok": ex.h.ok, "fitNodes": len(ex.h.nodes), "monomials": len(ex.h.exponents),
                "checkPoints": ex.params["check_points"]},
        "degrees": {"brouwerF": 2, "psi": 1, "phi": 2, "source": "by construction; verify with --verify"},
        "unverifiedHypotheses": [
            "invertibility of the boundary operator at infinity and its zero index (operator level)",
        ],
        "notes": list(fam.notes),
    }
    if args.verify:
        res = brouwer_degree(ex.f.as_sphere_map(), QuadratureRule(kind="qmc", points=args.verify, batches=8,
                                                                  seed=params["seed"]), strict=False)
        provenance["degrees"]["brouwerFCheck"] = res.to_dict(args.timing)
    if args.config_out:
        with open(args.config_out, "w", encoding="utf-8") as fh:
            fh.write(text)
    report = {"command": "construct-example", "config": text, "provenance": provenance}
    return report, EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "degree": cmd_degree,
    "multiplicity": cmd_multiplicity,
    "verdict": cmd_verdict,
    "jgroup": cmd_jgroup,
    "construct-example": cmd_construct_example,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML problem file")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--budget", type=int, metavar="NODES", help="approximate number of quadrature nodes")
    common.add_argument("--tolerance", type=float, metavar="X", help="largest accepted degree residual")
    common.add_argument("--out", metavar="PATH", help="write the JSON report here instead of stdout")
    common.add_argument("--threads", type=int, help="quadrature worker threads")
    common.add_argument("--timing", action="store_true", help="include wall times (breaks byte-identity)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bifindex", description="Bifurcation multiplicities of elliptic BVP families")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="certify H1-H3 on samples")
    d = sub.add_parser("degree", parents=[common], help="degree of a built-in or config-defined map")
    d.add_argument("--map", choices=MAP_BUILTINS)
    d.add_argument("--param", action="append", metavar="KEY=VALUE", help="map parameter (repeatable)")
    d.add_argument("--method", choices=("bott-fedosov", "degree-prime", "brouwer"))
    sub.add_parser("multiplicity", parents=[common], help="mu_i, mu_b, total and verdict")
    v = sub.add_parser("verdict", parents=[common], help="divisibility verdict for a multiplicity")
    v.add_argument("--mu", type=int)
    v.add_argument("--q", type=int)
    j = sub.add_parser("jgroup", parents=[common], help="order of J(S^q)")
    j.add_argument("q", type=int)
    c = sub.add_parser("construct-example", parents=[common], help="assemble the model family")
    c.add_argument("--q", type=int)
    c.add_argument("--n", type=int)
    c.add_argument("--l", type=int, default=1)
    c.add_argument("--fit-degree", type=int, default=4)
    c.add_argument("--eps", type=float, default=0.5)
    c.add_argument("--config-out", metavar="PATH", help="write the family config (TOML) here")
    c.add_argument("--verify", type=int, metavar="POINTS", help="QMC points per batch for a Brouwer check of f")
    return p


def _error(code: str, message: str, line=None, column=None) -> dict:
    return {"error": {"code": code, "message": message, "line": line, "column": column}}


def _dispatch(args) -> tuple[dict, int]:
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return {"error": exc.to_dict()}, EXIT_CONFIG
    except (UsageError, ExprRuntimeError) as exc:
        return _error("invalid-input", str(exc)), EXIT_CONFIG
    except OSError as exc:
        return _error("io-error", str(exc)), EXIT_CONFIG
    except (H3Violation, NotNormalError, ProperEllipticityError, ShapiroLopatinskijError, SingularMapError) as exc:
        return _error("hypothesis-failure", str(exc)), EXIT_HYPOTHESIS
    except InconclusiveDegree as exc:
        return {**_error("inconclusive", str(exc)), "degree": exc.result.to_dict(args.timing)}, EXIT_INCONCLUSIVE
    except ValueError as exc:
        return _error("invalid-input", str(exc)), EXIT_CONFIG


def run(argv=None) -> tuple[dict, int]:
    """Parse ``argv`` and run the subcommand; returns ``(report, exit_code)``."""
    args = build_parser().parse_args(argv)
    return _dispatch(args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        report, code = _dispatch(args)
    except Exception as exc:  # pragma: no cover - last resort
        report, code = _error("internal", f"{type(exc).__name__}: {exc}"), EXIT_INTERNAL
    text = dumps(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
