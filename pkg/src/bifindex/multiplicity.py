"""Hypothesis certificates, multiplicities and the bifurcation verdict."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import halfline
from .degree import DegreeResult, InconclusiveDegree, bott_fedosov_degree
from .halfline import build_tau, check_collar_independence
from .jtheory import JGroupInfo, Verdict, jgroup_info, verdict
from .manifolds import QuadratureRule
from .symbols import (
    INFINITY,
    CheckReport,
    SamplingPlan,
    SymbolFamily,
    build_sigma,
    check_ellipticity,
    check_reality,
    sphere_from_lambda,
)

__all__ = [
    "Hypothesis",
    "MultiplicityReport",
    "boundary_multiplicity",
    "check_hypotheses",
    "interior_multiplicity",
    "total_multiplicity",
]

UNIQUE_SOLVABILITY_GAP = (
    "unique solvability of the problem at infinity is not checkable from principal symbols; "
    "only ellipticity at infinity and invertibility of b(infinity) are certified"
)


@dataclass
class Hypothesis:
    name: str
    checks: list[CheckReport]
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        d = {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}
        if self.notes:
            d["notes"] = list(self.notes)
        return d


def _proper_ellipticity(family: SymbolFamily, samples, method: str = "sign") -> tuple[CheckReport, CheckReport]:
    y, chart, xi = samples
    A = halfline.companion_batch(family, y, chart, xi)
    nu = np.linalg.eigvals(A)
    tol = 1e-8 * (1.0 + np.linalg.norm(xi, axis=-1)) ** family.k
    min_im = np.min(np.abs(nu.imag), axis=-1)
    upper = np.sum(nu.imag > 0, axis=-1)
    bad = (min_im < tol) | (upper != family.r)
    worst = int(np.argmax(bad)) if np.any(bad) else int(np.argmin(min_im))
    proper = CheckReport("proper-ellipticity", not bool(np.any(bad)), float(np.min(min_im)), float(np.max(tol)),
                         len(y), worst=halfline._point(family, y[worst], chart[worst], xi[worst]))
    if np.any(bad):
        sl = CheckReport("shapiro-lopatinskij", False, float("inf"), halfline.SL_COND_MAX, len(y),
                         note="skipped: proper ellipticity fails")
        return proper, sl
    V = halfline.stable_basis_batch(A, family.r, method)
    jets = halfline.jet_rows(A, family.m, family.boundary.max_order)
    b = halfline.boundary_matrix(family.boundary, y, chart, xi, jets) @ V
    cond = np.linalg.cond(b)
    cond = np.where(np.isfinite(cond), cond, np.inf)
    i = int(np.argmax(cond))
    sl = CheckReport("shapiro-lopatinskij", bool(cond[i] < halfline.SL_COND_MAX), float(cond[i]),
                     halfline.SL_COND_MAX, len(y), worst=halfline._point(family, y[i], chart[i], xi[i]))
    return proper, sl


def _at_pole(samples, q):
    y = samples[0].copy()
    y[:] = sphere_from_lambda(INFINITY, q)
    return (y,) + tuple(samples[1:])


def _decay_probe(family: SymbolFamily, plan: SamplingPlan, radius: float = 1e6, tol: float = 1e-3) -> CheckReport:
    """Continuity at infinity: symbols at ``|lambda| = radius`` against the value at infinity."""
    q = family.q
    y, x, xi = plan.interior(family)
    direction = np.random.default_rng(plan.seed).standard_normal((len(y), q))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    far = sphere_from_lambda(radius * direction, q)
    pole = np.broadcast_to(sphere_from_lambda(INFINITY, q), far.shape)
    p_far, p_inf = family.interior(far, x, xi), family.interior(pole, x, xi)
    gap = np.linalg.norm(p_far - p_inf, axis=(-2, -1)) / (1 + np.linalg.norm(p_inf, axis=(-2, -1)))
    yb, chart, xib = plan.boundary(family)
    b_far = family.boundary(far[: len(yb)], chart, xib)
    b_inf = family.boundary(pole[: len(yb)], chart, xib)
    gap_b = np.max(np.abs(b_far - b_inf), axis=(1, 2, 3)) / (1 + np.max(np.abs(b_inf), axis=(1, 2, 3)))
    worst = float(max(gap.max(), gap_b.max()))
    return CheckReport("decay-to-infinity", worst < tol, worst, tol, len(gap) + len(gap_b),
                       note=f"symbols at |lambda| = {radius:g} compared with the value at infinity")


def _commutator(family: SymbolFamily, samples, tol: float = 1e-10) -> CheckReport:
    y, x, xi = samples
    pole = np.broadcast_to(sphere_from_lambda(INFINITY, family.q), y.shape)
    p, pinf = family.interior(y, x, xi), family.interior(pole, x, xi)
    c = pinf @ p - p @ pinf
    val = np.linalg.norm(c, axis=(-2, -1)) / (1 + np.linalg.norm(p, axis=(-2, -1)) * np.linalg.norm(pinf, axis=(-2, -1)))
    i = int(np.argmax(val))
    from .symbols import _where

    return CheckReport("symbol-commutator", bool(val[i] < tol), float(val[i]), tol, len(val),
                       worst=_where(y[i], x[i], xi[i], family.q))


def check_hypotheses(family: SymbolFamily, plan: SamplingPlan | None = None) -> dict[str, Hypothesis]:
    """Sample certificates for H1 (ellipticity, proper ellipticity, Shapiro-Lopatinskij),
    H2 (behaviour at infinity) and H3 (collar independence, commuting symbols)."""
    plan = plan or SamplingPlan()
    interior = plan.interior(family)
    boundary = plan.boundary(family)

    h1 = [check_ellipticity(family, samples=interior)]
    reality = check_reality(family, plan)
    h1.extend(_proper_ellipticity(family, boundary))
    h1_notes = []
    if reality.skipped:
        h1_notes.append("complex family: reality condition not required")
    else:
        h1.append(reality)

    ell_inf = check_ellipticity(family, samples=_at_pole(interior, family.q))
    ell_inf.name = "ellipticity-at-infinity"
    _, sl_inf = _proper_ellipticity(family, _at_pole(boundary, family.q))
    sl_inf.name = "b(infinity)-invertible"
    h2 = Hypothesis("H2", [ell_inf, sl_inf, _decay_probe(family, plan)], [UNIQUE_SOLVABILITY_GAP])

    collar = check_collar_independence(family, plan)
    comm = _commutator(family, interior)
    h3_notes = []
    if not comm.passed and not family.boundary.lambda_dependent:
        comm.passed = True
        comm.note = "commutator clause waived: boundary symbol is independent of lambda"
        h3_notes.append(comm.note)
    return {
        "H1": Hypothesis("H1", h1, h1_notes),
        "H2": h2,
        "H3": Hypothesis("H3", [collar, comm], h3_notes),
    }


def interior_multiplicity(family: SymbolFamily, rule: QuadratureRule | None = None, *, strict: bool = True) -> DegreeResult:
    return bott_fedosov_degree(build_sigma(family), rule, strict=strict)


def boundary_multiplicity(family: SymbolFamily, rule: QuadratureRule | None = None, *, strict: bool = True,
                          alt_boundary=None, method: str = "sign") -> DegreeResult:
    return bott_fedosov_degree(build_tau(family, alt_boundary, method=method), rule, strict=strict)


@dataclass
class MultiplicityReport:
    family: dict
    hypotheses: dict[str, Hypothesis]
    mu_interior: DegreeResult | None
    mu_boundary: DegreeResult | None
    realified: bool
    jinfo: JGroupInfo | None = None
    verdict: Verdict | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def hypotheses_ok(self) -> bool:
        return all(h.passed for h in self.hypotheses.values())

    @property
    def conclusive(self) -> bool:
        parts = [self.mu_interior, self.mu_boundary]
        return all(p is not None and p.verdict_grade for p in parts)

    @property
    def mu_complex(self) -> int | None:
        if self.mu_interior is None or self.mu_boundary is None:
            return None
        return self.mu_interior.rounded + self.mu_boundary.rounded

    @property
    def factor(self) -> int:
        return 2 if self.realified else 1

    @property
    def mu_total(self) -> int | None:
        mu = self.mu_complex
        return None if mu is None else self.factor * mu

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "family": self.family,
            "hypotheses": {k: h.to_dict() for k, h in self.hypotheses.items()},
            "hypothesesPassed": self.hypotheses_ok,
            "muInterior": self.mu_interior.to_dict(timing) if self.mu_interior else None,
            "muBoundary": self.mu_boundary.to_dict(timing) if self.mu_boundary else None,
            "muComplex": self.mu_complex,
            "realified": self.realified,
            "realificationFactor": self.factor,
            "muTotal": self.mu_total,
            "conclusive": self.conclusive,
            "signConvention": "only |mu| mod n(q) is convention-independent",
        }
        if self.jinfo is not None:
            d["jGroup"] = self.jinfo.to_dict()
        if self.verdict is not None:
            d["verdict"] = self.verdict.to_dict()
        if self.notes:
            d["notes"] = list(self.notes)
        return d


def total_multiplicity(family: SymbolFamily, rule: QuadratureRule | None = None, *, realify: bool | None = None,
                       plan: SamplingPlan | None = None, boundary_rule: QuadratureRule | None = None,
                       require_hypotheses: bool = True) -> MultiplicityReport:
    """``mu = mu_i + mu_b``, doubled for realified complex families, and the verdict when ``q`` is admissible.

    The verdict is only issued when both degrees are verdict-grade.
    """
    realified = family.realified if realify is None else realify
    hyps = check_hypotheses(family, plan)
    report = MultiplicityReport(family.describe(), hyps, None, None, realified)
    report.notes.extend(family.notes)
    if require_hypotheses and not report.hypotheses_ok:
        report.notes.append("hypothesis failure: degrees not computed")
        return report
    for attr, fn, r in (("mu_interior", interior_multiplicity, rule),
                        ("mu_boundary", boundary_multiplicity, boundary_rule or rule)):
        try:
            setattr(report, attr, fn(family, r))
        except InconclusiveDegree as exc:
            setattr(report, attr, exc.result)
            report.notes.append(f"{attr}: {exc}")
    if not report.conclusive:
        report.notes.append("inconclusive: a degree is not verdict-grade (residual >= 0.25 or complex part)")
        return report
    q = family.q
    if q >= 4 and q % 8 in (0, 4):
        report.jinfo = jgroup_info(q)
        report.verdict = verdict(report.mu_total, q)
    else:
        report.notes.append(f"q={q} is outside the verdict's range (q >= 4, q = 0 or 4 mod 8)")
    return report
