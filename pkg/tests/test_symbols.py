import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bifindex.catalog import bump_scaled_laplacian, dirichlet_rows, laplacian_dirichlet, laplacian_power
from bifindex.constructor import example_family
from bifindex.degree import SingularMapError
from bifindex.symbols import (
    INFINITY,
    Ball,
    CoefficientField,
    InteriorSymbol,
    SamplingPlan,
    SymbolFamily,
    TorusDomain,
    build_sigma,
    check_ellipticity,
    check_reality,
    eval_interior_symbol,
    lambda_from_sphere,
    sphere_from_lambda,
)


def scalar_family(terms, q=1, n=2, complex_coefficients=False):
    interior = InteriorSymbol(2, 1, n, {a: CoefficientField.constant([[c]]) for a, c in terms.items()})
    return SymbolFamily(q, n, interior, dirichlet_rows(1, 1), Ball(n), complex_coefficients=complex_coefficients)


def test_laplacian_value():
    sym = laplacian_power(2)
    assert eval_interior_symbol(sym, [0.3], [0.1, 0.0], [3.0, 4.0])[0, 0] == pytest.approx(25.0)
    assert eval_interior_symbol(sym, INFINITY, [0.1, 0.0], [3.0, 4.0], q=1)[0, 0] == pytest.approx(25.0)


def test_zero_covector_gives_zero():
    sym = laplacian_power(3, m=2, l=2)
    assert np.all(eval_interior_symbol(sym, [1.0, 2.0], [0.0] * 3, [0.0] * 3) == 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 2**31))
def test_homogeneity(t, seed):
    rng = np.random.default_rng(seed)
    fam = bump_scaled_laplacian(q=2, n=2)
    xi = rng.standard_normal((4, 2))
    lam = rng.standard_normal((4, 2))
    x = rng.uniform(-0.2, 0.2, (4, 2))
    a = eval_interior_symbol(fam.interior, lam, x, t * xi)
    b = eval_interior_symbol(fam.interior, lam, x, xi)
    assert np.allclose(a, t**2 * b, rtol=1e-13, atol=0)


def test_stereographic_round_trip():
    lam = np.array([[0.0, 0.0], [1.0, -2.0], [1e3, 5.0]])
    y = sphere_from_lambda(lam, 2)
    back, pole = lambda_from_sphere(y)
    assert np.allclose(back, lam) and not pole.any()
    _, pole = lambda_from_sphere(sphere_from_lambda(INFINITY, 2)[None])
    assert pole.all()


def test_non_principal_terms_rejected():
    with pytest.raises(ValueError, match="only order 2"):
        InteriorSymbol(2, 1, 2, {(1, 0): CoefficientField.constant([[1.0]])})


def test_lambda_dependent_field_needs_value_at_infinity():
    with pytest.raises(ValueError, match="infinity"):
        CoefficientField((1, 1), finite=lambda lam, x, xi: np.ones((len(x), 1, 1)))


def test_km_equals_2r_enforced():
    with pytest.raises(ValueError, match="k\\*m = 2r"):
        SymbolFamily(1, 2, laplacian_power(2), dirichlet_rows(1, 2), Ball(2))


def test_reality_of_laplacian():
    rep = check_reality(laplacian_dirichlet(), SamplingPlan(points=64))
    assert rep.passed and rep.value == 0.0


def test_reality_violation_detected():
    fam = scalar_family({(2, 0): 1.0, (0, 2): 1.0, (1, 1): 0.5j})
    rep = check_reality(fam, SamplingPlan(points=64))
    assert not rep.passed and rep.value > 0.1


def test_reality_skipped_for_complex_family():
    fam = scalar_family({(2, 0): 1.0, (0, 2): 1.0}, complex_coefficients=True)
    rep = check_reality(fam)
    assert rep.skipped and rep.passed and "complex family" in rep.note


def test_ellipticity_of_laplacian():
    rep = check_ellipticity(laplacian_dirichlet(), SamplingPlan(points=64))
    assert rep.passed and rep.value == pytest.approx(1.0)


def test_ellipticity_failure_located():
    fam = scalar_family({(2, 0): 1.0, (0, 2): -1.0})
    s = 1 / math.sqrt(2)
    plan = SamplingPlan(points=16, extra=[([0.0], [0.0, 0.0], [s, s])])
    rep = check_ellipticity(fam, plan)
    assert not rep.passed
    assert rep.worst["xi"] == pytest.approx([s, s])


def test_ellipticity_rejects_zero_covector():
    fam = laplacian_dirichlet()
    with pytest.raises(ValueError):
        check_ellipticity(fam, samples=(np.array([[0.0, 0.0, 1.0]]), np.zeros((1, 2)), np.zeros((1, 2))))


def test_ellipticity_monotone_under_restriction():
    fam = bump_scaled_laplacian(q=2, n=2, amplitude=0.9)
    y, x, xi = SamplingPlan(points=128).interior(fam)
    full = check_ellipticity(fam, samples=(y, x, xi))
    sub = check_ellipticity(fam, samples=(y[::3], x[::3], xi[::3]))
    assert sub.value >= full.value


def test_ellipticity_of_example_interior():
    fam = example_family(check_points=8)
    assert check_ellipticity(fam, SamplingPlan(points=64)).passed


def test_samples_lie_in_domain():
    for dom in (Ball(3), TorusDomain(3)):
        fam = SymbolFamily(1, 3, laplacian_power(3), dirichlet_rows(1, 1), dom)
        _, x, _ = SamplingPlan(points=128).interior(fam)
        assert dom.contains(x).all()


def test_torus_frame_is_orthonormal_and_inward():
    dom = TorusDomain(3)
    chart = np.random.default_rng(0).uniform(0, 2 * math.pi, (20, 2))
    tang, normal = dom.boundary_frame(chart)
    frame = np.concatenate([tang, normal[:, None]], axis=1)
    assert np.allclose(frame @ np.swapaxes(frame, 1, 2), np.eye(3), atol=1e-8)
    pts = dom.boundary_point(chart)
    assert dom.contains(pts + 1e-3 * normal).all()
    assert not dom.contains(pts - 1e-3 * normal).any()


# ---------------------------------------------------------------- sigma


def test_sigma_identity_for_lambda_independent_interior():
    sig = build_sigma(laplacian_dirichlet())
    assert sig.identically_identity
    u = np.random.default_rng(0).uniform(0.1, 3.0, (5, sig.manifold.n_coords))
    assert np.array_equal(sig(u), np.broadcast_to(np.eye(1), (5, 1, 1)))


def test_sigma_at_infinity_and_outside_domain():
    fam = bump_scaled_laplacian(q=2, n=2)
    sig = build_sigma(fam)
    sq, sz = sig.manifold.factors
    rng = np.random.default_rng(1)
    uz = rng.uniform(0.1, 3.0, (40, sz.n_coords))
    # chart point of the north pole of S^2 (lambda = infinity)
    uq = np.tile(sq.chart_from_point(sphere_from_lambda(INFINITY, 2)[None]), (40, 1))
    vals = sig(np.concatenate([uq, uz], axis=1))
    assert np.allclose(vals, 1.0, atol=1e-14)
    z = sz.embed(uz)
    outside = ~fam.domain.contains(z[:, :2])
    uq = rng.uniform(0.1, 3.0, (40, sq.n_coords))
    vals = sig(np.concatenate([uq, uz], axis=1))
    assert outside.any() and np.all(vals[outside] == 1.0)


def test_sigma_singular_at_infinity_rejected():
    bad = CoefficientField((1, 1), finite=lambda lam, x, xi: np.ones((len(x), 1, 1)),
                           at_infinity=lambda x, xi: np.zeros((len(x), 1, 1)))
    interior = InteriorSymbol(2, 1, 2, {(2, 0): bad, (0, 2): bad})
    fam = SymbolFamily(1, 2, interior, dirichlet_rows(1, 1), Ball(2))
    sig = build_sigma(fam)
    u = np.random.default_rng(2).uniform(0.1, 3.0, (200, sig.manifold.n_coords))
    with pytest.raises(SingularMapError):
        sig(u)
