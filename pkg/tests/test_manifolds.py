import math

import numpy as np
import pytest

from bifindex.manifolds import (
    NonFiniteIntegrand,
    Product,
    QuadratureRule,
    Sphere,
    Torus,
    integrate_top_form,
    parse_manifold,
    sample_points,
    sphere_volume,
)


def test_circle_weights():
    _, w, _ = sample_points(Sphere(1), QuadratureRule(kind="product", nodes=100))
    assert abs(w.sum() - 2 * math.pi) < 1e-12


def test_three_sphere_weights():
    _, w, _ = sample_points(Sphere(3), QuadratureRule(kind="product", nodes=32))
    assert abs(w.sum() - 2 * math.pi**2) < 1e-8


def test_torus_weights_exact():
    _, w, _ = sample_points(Torus(2), QuadratureRule(kind="product", nodes=17))
    assert w.sum() == pytest.approx((2 * math.pi) ** 2, abs=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
def test_sphere_volume_closed_form(d):
    expected = 2 * math.pi ** ((d + 1) / 2) / math.gamma((d + 1) / 2)
    assert sphere_volume(d) == pytest.approx(expected, rel=1e-14)
    _, w, _ = sample_points(Sphere(d), QuadratureRule(kind="product", nodes=24))
    assert w.sum() == pytest.approx(expected, rel=1e-10)


def test_qmc_weights_sum_to_volume():
    M = Product([Sphere(2), Torus(1)])
    _, w, _ = sample_points(M, QuadratureRule(kind="qmc", points=2**10, batches=4))
    # polar density is not constant, so only approximately
    assert w.sum() == pytest.approx(M.volume, rel=2e-2)


def _volume_form(M):
    return lambda u: M.volume_density(u) * M.chart_sign(u)


def test_constant_form_on_circle():
    M = Sphere(1)
    res = integrate_top_form(_volume_form(M), M, QuadratureRule(kind="product", nodes=64))
    assert res.value == pytest.approx(2 * math.pi, abs=1e-12)


def test_exact_form_on_circle_vanishes():
    M = Sphere(1)
    # d/dtheta of exp(sin(3 theta))
    form = lambda u: 3 * np.cos(3 * u[:, 0]) * np.exp(np.sin(3 * u[:, 0]))  # noqa: E731
    res = integrate_top_form(form, M, QuadratureRule(kind="product", nodes=64))
    assert abs(res.value) < 1e-12


def test_exact_form_on_torus_vanishes():
    M = Torus(2)
    form = lambda u: np.cos(u[:, 0]) * np.sin(2 * u[:, 1]) + np.sin(u[:, 0] + u[:, 1])  # noqa: E731
    res = integrate_top_form(form, M, QuadratureRule(kind="product", nodes=32))
    assert abs(res.value) < 1e-12


def test_orientation_flip_negates_exactly():
    M = Product([Sphere(2), Torus(1)])
    form = lambda u: np.cos(u[:, 0]) ** 2 * np.sin(u[:, 0]) * (2 + np.cos(u[:, 2]))  # noqa: E731
    rule = QuadratureRule(kind="product", nodes=12)
    a = integrate_top_form(form, M, rule).value
    b = integrate_top_form(form, M.with_orientation(-1), rule).value
    assert a == -b


def test_refinement_within_error_estimate():
    M = Sphere(3)
    form = lambda u: np.exp(np.cos(u[:, 0])) * M.volume_density(u)  # noqa: E731
    rule = QuadratureRule(kind="product", nodes=8)
    coarse, fine = integrate_top_form(form, M, rule), integrate_top_form(form, M, rule.refined())
    assert abs(fine.value - coarse.value) <= coarse.error


def test_thread_count_does_not_change_result():
    M = Product([Sphere(2), Torus(1)])
    form = lambda u: np.sin(u[:, 0]) * np.cos(u[:, 1]) ** 2 + 0.1 * u[:, 2]  # noqa: E731
    base = QuadratureRule(kind="qmc", points=2**12, batches=4, chunk=512)
    a = integrate_top_form(form, M, base).value
    b = integrate_top_form(form, M, QuadratureRule(kind="qmc", points=2**12, batches=4, chunk=512, threads=4)).value
    assert a == b


def test_non_finite_integrand_is_located():
    M = Sphere(1)
    with pytest.raises(NonFiniteIntegrand, match="chart point"), np.errstate(divide="ignore"):
        integrate_top_form(lambda u: 1 / (u[:, 0] - u[0, 0]), M, QuadratureRule(kind="product", nodes=8))


def test_zero_sphere_sums_with_signs():
    M = Product([Sphere(1), Sphere(0)])
    res = integrate_top_form(lambda u: np.ones(len(u)), M, QuadratureRule(kind="product", nodes=16))
    # the two sheets carry opposite chart orientation
    assert abs(res.value) < 1e-12


def test_parse_manifold():
    M = parse_manifold("S4xT2xS1")
    assert M.dim == 7 and M.label() == "S4xT2xS1"
    with pytest.raises(ValueError):
        parse_manifold("K3")


def test_budget_scaling():
    M = Sphere(3)
    rule = QuadratureRule(kind="product").with_budget(4096, M)
    assert rule.nodes == 16
    q = QuadratureRule(kind="qmc", batches=8).with_budget(2**16, Product([Sphere(4), Torus(2), Sphere(1)]))
    assert q.points == 2**13
