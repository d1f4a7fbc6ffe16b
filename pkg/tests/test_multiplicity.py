import numpy as np
import pytest

from bifindex.catalog import bump_scaled_laplacian, clutch_demo, laplacian_dirichlet, laplacian_power, twisted_dirichlet
from bifindex.constructor import example_family
from bifindex.halfline import build_tau
from bifindex.manifolds import QuadratureRule
from bifindex.multiplicity import (
    boundary_multiplicity,
    check_hypotheses,
    interior_multiplicity,
    total_multiplicity,
)
from bifindex.symbols import Ball, CoefficientField, InteriorSymbol, SamplingPlan, SymbolFamily, lambda_from_sphere
from bifindex.degree import bott_fedosov_degree

CLUTCH_RULE = QuadratureRule(kind="product", nodes=32)


def test_laplacian_dirichlet_is_trivial():
    rep = total_multiplicity(laplacian_dirichlet(q=4))
    assert rep.hypotheses_ok
    assert rep.mu_interior.exact and rep.mu_boundary.exact
    assert rep.mu_total == 0
    assert rep.verdict.conclusion == "no conclusion"


def test_hypotheses_on_laplacian():
    hyps = check_hypotheses(laplacian_dirichlet())
    assert all(h.passed for h in hyps.values())
    # unique solvability is not certified by sampling
    assert hyps["H2"].notes


def test_lambda_independent_rows_give_exact_zero():
    res = boundary_multiplicity(bump_scaled_laplacian())
    assert res.exact and res.rounded == 0 and res.raw == 0


def test_lambda_independent_interior_gives_exact_zero():
    for fam in (twisted_dirichlet(), clutch_demo(q=2)):
        res = interior_multiplicity(fam)
        assert res.exact and res.raw == 0


def test_bump_placebo_interior_degree_vanishes():
    res = interior_multiplicity(bump_scaled_laplacian(), QuadratureRule(kind="qmc", points=2**10, batches=4))
    assert res.rounded == 0 and res.residual < 1e-8


def test_scalar_twisted_rows_give_zero():
    res = boundary_multiplicity(twisted_dirichlet(), QuadratureRule(kind="product", nodes=16))
    assert res.rounded == 0 and res.residual < 1e-10


SHEAR = np.array([[1.0, 0.0], [0.2, 1.0]], dtype=complex)


def _noncommuting_family(boundary, B=SHEAR):
    """``|xi|^2 A(lambda, x)`` with ``A(infinity) = B`` and ``A = B`` on the collar."""
    N = np.array([[0.0, 0.3], [0.0, 0.0]], dtype=complex)
    bump = bump_scaled_laplacian()

    def on_sphere(y, x, xi):
        lam, pole = lambda_from_sphere(y)
        t = np.where(pole, 0.0, np.exp(-np.sum(lam**2, axis=-1)))
        # reuse the collar-free bump of the scalar family
        b = (bump.interior.terms[(2, 0)](y, x, xi)[:, 0, 0].real - 1.0) / 0.5
        return (np.eye(2) + (t * b)[:, None, None] * N) @ B

    A = CoefficientField((2, 2), on_sphere=on_sphere)
    interior = InteriorSymbol(2, 2, 2, {(2, 0): A, (0, 2): A})
    return SymbolFamily(2, 2, interior, boundary, Ball(2, 0.5))


def test_commutator_waived_for_lambda_independent_rows():
    fam = _noncommuting_family(laplacian_dirichlet(m=2).boundary)
    hyps = check_hypotheses(fam, SamplingPlan(points=400))
    comm = [c for c in hyps["H3"].checks if c.name == "symbol-commutator"][0]
    assert comm.value > 1e-6  # the symbols really do not commute
    assert hyps["H3"].passed and "waived" in hyps["H3"].notes[0]


def test_scalar_value_at_infinity_commutes_with_anything():
    fam = _noncommuting_family(laplacian_dirichlet(m=2).boundary, B=np.eye(2, dtype=complex))
    hyps = check_hypotheses(fam, SamplingPlan(points=400))
    comm = [c for c in hyps["H3"].checks if c.name == "symbol-commutator"][0]
    assert comm.passed and comm.value < 1e-14 and not hyps["H3"].notes


def test_scalar_interior_commutes():
    hyps = check_hypotheses(bump_scaled_laplacian())
    comm = [c for c in hyps["H3"].checks if c.name == "symbol-commutator"][0]
    assert comm.passed and not hyps["H3"].notes


def test_collar_dependence_is_located():
    scale = CoefficientField((), finite=lambda lam, x, xi: 1.0 + 0.5 * np.exp(-np.sum(lam**2, axis=-1)),
                             at_infinity=lambda x, xi: np.ones(len(x)))
    fam = SymbolFamily(2, 2, laplacian_power(2, 1, 1, scale), twisted_dirichlet().boundary, Ball(2))
    rep = total_multiplicity(fam)
    h3 = rep.hypotheses["H3"]
    assert not h3.passed
    bad = [c for c in h3.checks if not c.passed][0]
    assert bad.worst is not None and "lambda" in bad.to_dict()["worst"]
    assert rep.mu_total is None and "hypothesis failure" in rep.notes[-1]


# ---------------------------------------------------------------- non-zero degrees


def test_clutch_boundary_degree():
    rep = total_multiplicity(clutch_demo(q=2), CLUTCH_RULE)
    assert rep.hypotheses_ok and rep.conclusive
    assert rep.mu_boundary.rounded == 1 and rep.mu_boundary.residual < 0.05
    assert rep.mu_complex == 1 and rep.mu_total == 2
    assert rep.verdict is None  # q = 2 is outside the verdict's range


def test_realification_is_additive():
    totals = [total_multiplicity(clutch_demo(q=2, power=p), CLUTCH_RULE).mu_total for p in (1, 2, 3)]
    assert totals == [2, 4, 6]


def test_conjugated_tau_keeps_its_degree():
    tau = build_tau(clutch_demo(q=2, power=2))
    rng = np.random.default_rng(0)
    g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) + 2 * np.eye(2)
    a = bott_fedosov_degree(tau, CLUTCH_RULE)
    b = bott_fedosov_degree(tau.conjugated(g), CLUTCH_RULE)
    assert a.rounded == b.rounded == 2
    assert abs(a.raw - b.raw) < 1e-8


def test_example_interior_multiplicity_vanishes():
    res = interior_multiplicity(example_family(check_points=0))
    assert res.exact and res.rounded == 0


def test_report_is_serializable():
    import json

    d = total_multiplicity(clutch_demo(q=2), CLUTCH_RULE).to_dict()
    assert json.loads(json.dumps(d))["muTotal"] == 2
    assert "wallTime" not in json.dumps(d)


@pytest.mark.slow
def test_degree_48_gives_no_conclusion():
    # 48 turns of the clutching angle; realified mu = 96 = 0 mod n(4)
    fam = clutch_demo(q=4, power=48)
    rule = QuadratureRule(kind="qmc", points=2**13, batches=8)
    rep = total_multiplicity(fam, rule)
    assert rep.conclusive, rep.notes
    assert rep.mu_boundary.rounded == 48
    assert rep.mu_total == 96
    assert rep.verdict.conclusion == "no conclusion" and rep.verdict.residue == 0
