"""Built-in symbol families."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .symbols import (
    Ball,
    BoundarySymbol,
    CoefficientField,
    Domain,
    InteriorSymbol,
    SymbolFamily,
    TorusDomain,
    lambda_from_sphere,
)

__all__ = [
    "BUILTINS",
    "builtin_family",
    "dirichlet_rows",
    "laplacian_power",
    "laplacian_dirichlet",
    "make_domain",
    "neumann_row",
]


def laplacian_power(n: int, m: int = 1, l: int = 1, scale: CoefficientField | None = None) -> InteriorSymbol:
    """Principal symbol ``|xi|^{2l} Id_m`` (optionally times a scalar field ``scale``)."""
    terms = {}
    eye = np.eye(m, dtype=complex)
    for combo in _compositions(l, n):
        coef = math.factorial(l) / math.prod(math.factorial(a) for a in combo)
        alpha = tuple(2 * a for a in combo)
        if scale is None:
            terms[alpha] = CoefficientField.constant(coef * eye)
        else:
            terms[alpha] = _scaled(scale, coef * eye)
    return InteriorSymbol(2 * l, m, n, terms)


def _scaled(scale: CoefficientField, mat: np.ndarray) -> CoefficientField:
    def on_sphere(y, x, xi):
        s = np.asarray(scale(y, x, xi)).reshape(len(x))
        return s[:, None, None] * mat

    return CoefficientField(mat.shape, on_sphere=on_sphere, lambda_dependent=scale.lambda_dependent)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for a in range(total, -1, -1):
        for rest in _compositions(total - a, parts - 1):
            yield (a,) + rest


def dirichlet_rows(m: int, l: int) -> BoundarySymbol:
    """``(gamma_0, ..., gamma_{l-1})`` applied componentwise; ``r = m l`` rows of orders ``0..l-1``."""
    rows = []
    for j in range(l):
        for c in range(m):
            mat = np.zeros((j + 1, m), dtype=complex)
            mat[j, c] = 1.0
            rows.append((j, CoefficientField.constant(mat)))
    return BoundarySymbol.from_rows(rows, m)


def neumann_row() -> BoundarySymbol:
    mat = np.zeros((2, 1), dtype=complex)
    mat[1, 0] = 1.0
    return BoundarySymbol.from_rows([(1, CoefficientField.constant(mat))], 1)


def make_domain(kind: str, n: int, **kw) -> Domain:
    if kind == "ball":
        return Ball(n, **kw)
    if kind == "torus":
        return TorusDomain(n, **kw)
    raise ValueError(f"unknown domain kind {kind!r} (expected 'ball' or 'torus')")


def laplacian_dirichlet(q: int = 2, n: int = 2, m: int = 1, l: int = 1, domain: Domain | None = None) -> SymbolFamily:
    """``Delta^l Id_m`` with Dirichlet data; nothing depends on lambda."""
    domain = domain or Ball(n)
    return SymbolFamily(q, n, laplacian_power(n, m, l), dirichlet_rows(m, l), domain,
                        name=f"laplacian-dirichlet(m={m},l={l})")


def bump_scaled_laplacian(q: int = 2, n: int = 2, amplitude: float = 0.5) -> SymbolFamily:
    """``a(lambda, x) |xi|^2`` with ``a = 1`` near the boundary; Dirichlet rows.

    ``a = 1 + amplitude * exp(-|lambda|^2) * b(|x|)`` where ``b`` is a smooth
    bump supported in the inner half of the ball, so the collar is
    untouched while the interior varies with lambda.
    """
    domain = Ball(n, 0.5)

    def bump(x):
        r = np.linalg.norm(x, axis=-1) / (0.5 * domain.radius)
        out = np.zeros_like(r)
        inside = r < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        return out

    def on_sphere(y, x, xi):
        lam, pole = lambda_from_sphere(y)
        g = np.where(pole, 0.0, np.exp(-np.sum(lam**2, axis=-1)))
        return 1.0 + amplitude * g * bump(x)

    scale = CoefficientField((), on_sphere=on_sphere)
    return SymbolFamily(q, n, laplacian_power(n, 1, 1, scale), dirichlet_rows(1, 1), domain,
                        name="bump-scaled-laplacian")


def twisted_dirichlet(q: int = 2, n: int = 2) -> SymbolFamily:
    """Scalar Laplacian with a lambda-dependent scalar Dirichlet row ``g(lambda) gamma_0``.

    The row is scalar and never vanishes, so ``tau`` is 1x1 and its degree
    over an odd manifold of dimension >= 3 vanishes identically.
    """

    def finite(lam, x, xi):
        g = 1.0 + 0.5j * lam[:, 0] * np.exp(-np.sum(lam**2, axis=-1))
        out = np.zeros((len(x), 1, 1, 1), dtype=complex)
        out[:, 0, 0, 0] = g
        return out

    def at_inf(x, xi):
        return np.ones((len(x), 1, 1, 1), dtype=complex)

    field = CoefficientField((1, 1, 1), finite=finite, at_infinity=at_inf)
    return SymbolFamily(q, n, laplacian_power(n), BoundarySymbol((0,), 1, field), Ball(n),
                        name="twisted-dirichlet", complex_coefficients=True)


def clutch_demo(q: int = 2, power: int = 1) -> SymbolFamily:
    """Smallest family with non-zero boundary multiplicity.

    ``Delta Id_m`` on a disc (n = 2, so ``S(Gamma) = S^1 x S^0``) with
    boundary rows ``h(lambda, theta, xi')``: on the ``xi' > 0`` sheet ``h``
    is a Clifford generator composed with the collapse map
    ``S^q x S^1 -> S^{q+1}`` (``power`` turns in theta), on the other sheet
    it is the constant value at infinity.  The complex degree of ``tau`` is
    ``power``.
    """
    from .constructor import CollapseMap, clifford_generator

    if q % 2:
        raise ValueError("q must be even so that S^q x S(Gamma) is odd-dimensional")
    v = (q + 2) // 2
    psi = clifford_generator(v)
    m = psi.size
    # flipped so that the product orientation gives degree +power
    g = CollapseMap((("sphere", q), ("angle", 1)), wrap=power, flip=True)
    top = np.zeros(2 * v)
    top[-1] = 1.0
    h_inf = psi(top)

    def on_sphere(y, chart, xi):
        h = np.broadcast_to(h_inf, (len(chart), m, m)).copy()
        plus = xi[:, 0] > 0
        if np.any(plus):
            h[plus] = psi(g.ambient(y[plus], chart[plus]))
        out = np.zeros((len(chart), m, 1, m), dtype=complex)
        out[:, :, 0, :] = h
        return out

    field = CoefficientField((m, 1, m), on_sphere=on_sphere)
    boundary = BoundarySymbol((0,) * m, m, field)
    return SymbolFamily(q, 2, laplacian_power(2, m, 1), boundary, Ball(2),
                        name=f"clutch-demo(q={q},power={power})", complex_coefficients=True, realified=True)


BUILTINS: dict[str, Callable[..., SymbolFamily]] = {
    "laplacian-dirichlet": laplacian_dirichlet,
    "bump-scaled-laplacian": bump_scaled_laplacian,
    "twisted-dirichlet": twisted_dirichlet,
    "clutch-demo": clutch_demo,
}


def builtin_family(name: str, **params) -> SymbolFamily:
    if name == "example":
        from .constructor import example_family

        return example_family(**params)
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown builtin family {name!r}; known: {sorted(BUILTINS) + ['example']}") from None
    return factory(**params)
