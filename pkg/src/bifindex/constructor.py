"""Ingredients of the model family with non-trivial boundary multiplicity.

Generators of ``pi_{2v-1}(U)`` are realized by Clifford multiplication,
``x -> x_0 Id + i sum_j x_j Gamma_j`` on ``S^{2v-1}``.  The degree-two map
``f`` factors through ``S^q x Gamma x RP^{n-2}`` and collapses the rest to
the point at infinity; composing with a generator and approximating by even
polynomial symbols gives boundary rows for ``(Delta^l + mu) Id_m`` with
Dirichlet data.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .degree import MatrixMap, SphereMap
from .manifolds import Manifold, Product, QuadratureRule, Sphere, Torus, sample_points

__all__ = [
    "CollapseMap",
    "EvenPolySymbol",
    "ExampleBuild",
    "GeneratorMap",
    "assemble_example",
    "build_example",
    "build_f",
    "clifford_gammas",
    "clifford_generator",
    "compose_phi",
    "doubling_map",
    "even_polynomial_fit",
    "example_family",
    "fit_error",
    "generator_for",
    "phi_symbol",
    "winding_map",
]

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def winding_map(k: int) -> MatrixMap:
    """``theta -> e^{i k theta}`` on S^1 as a 1x1 matrix map."""

    def ev(u):
        return np.exp(1j * k * u[:, :1])[:, :, None]

    def diff(u):
        return (1j * k * np.exp(1j * k * u[:, :1]))[:, :, None, None]

    return MatrixMap(Sphere(1), ev, 1, differential=diff, name=f"winding({k})")


def doubling_map() -> SphereMap:
    """``theta -> 2 theta`` on S^1 as a map into the unit circle of R^2."""

    def ev(u):
        return np.stack([np.cos(2 * u[:, 0]), np.sin(2 * u[:, 0])], axis=-1)

    def diff(u):
        return 2 * np.stack([-np.sin(2 * u[:, 0]), np.cos(2 * u[:, 0])], axis=-1)[:, None, :]

    return SphereMap(Sphere(1), ev, 1, differential=diff, name="doubling")


@lru_cache(maxsize=None)
def clifford_gammas(v: int) -> tuple[np.ndarray, ...]:
    """``2v - 1`` Hermitian, pairwise anticommuting involutions of size ``2^(v-1)``."""
    if v < 1:
        raise ValueError("v must be >= 1")
    gammas = [np.ones((1, 1), dtype=complex)]
    for _ in range(v - 1):
        size = gammas[0].shape[0]
        eye = np.eye(size, dtype=complex)
        gammas = [np.kron(g, PAULI[0]) for g in gammas] + [np.kron(eye, PAULI[1]), np.kron(eye, PAULI[2])]
    for a, b in itertools.combinations_with_replacement(range(len(gammas)), 2):
        anti = gammas[a] @ gammas[b] + gammas[b] @ gammas[a]
        target = 2 * np.eye(len(anti)) if a == b else 0
        if not np.array_equal(anti, target * np.ones_like(anti) if a != b else target):
            raise AssertionError(f"Clifford relation fails for pair ({a}, {b})")
    return tuple(gammas)


@dataclass
class GeneratorMap:
    """``psi(x) = x_0 Id + i sum_j x_j Gamma_j`` on S^{2v-1}, unitary and odd."""

    v: int
    basis: np.ndarray = field(init=False, repr=False)  # (2v, size, size)

    def __post_init__(self):
        gammas = clifford_gammas(self.v)
        size = gammas[0].shape[0]
        self.basis = np.stack([np.eye(size, dtype=complex)] + [1j * g for g in gammas])

    @property
    def size(self) -> int:
        return self.basis.shape[-1]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at ambient points ``x`` in R^{2v}, shape (..., 2v)."""
        return np.tensordot(np.asarray(x, dtype=float), self.basis, axes=([-1], [0]))

    def linear(self, dx: np.ndarray) -> np.ndarray:
        """Differential along ambient vectors ``dx`` (the map is linear)."""
        return self(dx)

    def as_matrix_map(self) -> MatrixMap:
        sphere = Sphere(2 * self.v - 1)

        def ev(u):
            return self(sphere.embed(u))

        def diff(u):
            return self(sphere.tangents(u))

        return MatrixMap(sphere, ev, self.size, differential=diff, name=f"clifford({self.v})")


SUPPORTED_GENERATORS = (1, 2, 3, 4)


def clifford_generator(v: int) -> GeneratorMap:
    if v not in SUPPORTED_GENERATORS:
        raise ValueError(f"generators are provided for v in {SUPPORTED_GENERATORS}, got {v}")
    return GeneratorMap(v)


# --------------------------------------------------------------------------
# collapse maps onto spheres

BLOCK_KINDS = ("sphere", "angle", "projective")


@dataclass
class CollapseMap:
    """Smash-type map from a product of factors onto ``S^D``.

    Each factor is sent to ``R^d u {infinity}``: a sphere ``S^q`` by
    stereographic projection from its north pole, an angle by
    ``tan(theta / 2)`` (with ``wrap`` turns), and a sphere ``S^d`` by the
    gnomonic chart ``xi_< / xi_last`` (so antipodal points agree).  The
    coordinates are concatenated and mapped to ``S^D`` by inverse
    stereographic projection; any infinite coordinate lands on the north
    pole.  Each block ``Y_b = a_b / d_b`` is kept as a numerator/denominator
    pair so that the formula is polynomial and finite everywhere except on
    the codimension-two locus where two denominators vanish.
    """

    blocks: tuple[tuple[str, int], ...]
    wrap: int = 1
    flip: bool = False  # reverses orientation via the sign of the first coordinate

    def __post_init__(self):
        for kind, d in self.blocks:
            if kind not in BLOCK_KINDS:
                raise ValueError(f"unknown block kind {kind!r}")
            if d < 1:
                raise ValueError("blocks must have positive dimension")

    @property
    def target_dim(self) -> int:
        return sum(d for _, d in self.blocks)

    @property
    def manifold(self) -> Product:
        factors: list[Manifold] = []
        for kind, d in self.blocks:
            factors.append(Torus(d) if kind == "angle" else Sphere(d))
        return Product(factors)

    def _pairs(self, parts):
        pairs = []
        for (kind, d), x in zip(self.blocks, parts):
            x = np.asarray(x, dtype=float)
            if kind == "sphere":
                pairs.append((x[:, :d], 1.0 - x[:, d]))
            elif kind == "angle":
                for j in range(d):
                    half = 0.5 * self.wrap * x[:, j]
                    pairs.append((np.sin(half)[:, None], np.cos(half)))
            else:
                pairs.append((x[:, :d], x[:, d]))
        return pairs

    def ambient(self, *parts) -> np.ndarray:
        """Evaluate on ambient sphere points and raw angles, one array per block."""
        pairs = self._pairs(parts)
        N = len(pairs[0][0])
        d2 = [d * d for _, d in pairs]
        a2 = [np.sum(a * a, axis=-1) for a, _ in pairs]
        total = np.ones(N)
        for x in d2:
            total = total * x
        others = []
        for b in range(len(pairs)):
            prod = np.ones(N)
            for c, x in enumerate(d2):
                if c != b:
                    prod = prod * x
            others.append(prod)
        num_sq = sum(a2[b] * others[b] for b in range(len(pairs)))
        den = total + num_sq
        corner = den <= 1e-300
        den = np.where(corner, 1.0, den)
        out = np.empty((N, self.target_dim + 1))
        col = 0
        for b, (a, d) in enumerate(pairs):
            w = a.shape[1]
            out[:, col : col + w] = 2 * a * (d * others[b])[:, None] / den[:, None]
            col += w
        out[:, -1] = (num_sq - total) / den
        # two coordinates at infinity at once: measure zero, send to the pole
        out[corner] = 0.0
        out[corner, -1] = 1.0
        if self.flip:
            out[:, 0] = -out[:, 0]
        return out

    def chart_parts(self, u):
        man = self.manifold
        parts = []
        for (kind, _), f, p in zip(self.blocks, man.factors, man.split(u)):
            parts.append(p if kind == "angle" else f.embed(p))
        return parts

    def as_sphere_map(self, fd_step: float = 1e-6) -> SphereMap:
        return SphereMap(self.manifold, lambda u: self.ambient(*self.chart_parts(u)), self.target_dim,
                         fd_step=fd_step, name="collapse")


def build_f(q: int, n: int) -> CollapseMap:
    """Degree-two map ``S^q x (S^1)^{n-1} x S^{n-2} -> S^{q+2n-3}``.

    The last factor enters through ``RP^{n-2}``; the two sheets of
    ``S^{n-2} -> RP^{n-2}`` contribute with the same sign because the
    antipodal map of an odd-dimensional sphere preserves orientation.
    """
    if n < 3 or n % 2 == 0:
        raise ValueError(f"n must be odd and >= 3 (RP^(n-2) is orientable only then), got n={n}")
    if q < 1:
        raise ValueError("q must be >= 1")
    return CollapseMap((("sphere", q), ("angle", n - 1), ("projective", n - 2)))


def compose_phi(psi: GeneratorMap, f: CollapseMap) -> MatrixMap:
    """``psi o f`` as a matrix map; the differential is ``psi`` applied to ``df``."""
    if 2 * psi.v - 1 != f.target_dim:
        raise ValueError(f"generator lives on S^{2 * psi.v - 1} but f maps to S^{f.target_dim}")
    sm = f.as_sphere_map()

    def ev(u):
        return psi(sm.evaluate(u))

    def jet(u):
        val, dval = sm.value_and_partials(u)
        return psi(val), psi(dval)

    return MatrixMap(f.manifold, ev, psi.size, jet=jet, name=f"clifford({psi.v})o f")


# --------------------------------------------------------------------------
# even polynomial symbols


def _monomials(nvars: int, max_degree: int) -> list[tuple[int, ...]]:
    out = []
    for deg in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), deg):
            e = [0] * nvars
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


def _eval_monomials(xi: np.ndarray, exps) -> np.ndarray:
    cols = []
    for e in exps:
        c = np.ones(len(xi))
        for i, p in enumerate(e):
            if p:
                c = c * xi[:, i] ** p
        cols.append(c)
    return np.stack(cols, axis=-1)


def sphere_nodes(d: int, per_dim: int) -> np.ndarray:
    """Antipodally symmetric product nodes on S^d (ambient coordinates)."""
    if per_dim % 2:
        per_dim += 1
    sph = Sphere(d)
    u, _, x = sample_points(sph, QuadratureRule(kind="product", nodes=per_dim, error_estimate=False))
    return x


@dataclass
class EvenPolySymbol:
    """Even homogeneous matrix polynomial ``h = sum_i |xi'|^{2(s-i)} h_{2i}``.

    The coefficients ``h_{2i}(lambda, x')`` are the even-degree part of the
    least-squares fit of ``phi(lambda, x', .)`` on fixed nodes of
    ``S^{n-2}``; they are linear in the node values, hence as smooth in
    ``(lambda, x')`` as ``phi`` itself.
    """

    degree: int
    nvars: int
    exponents: list[tuple[int, ...]]
    operator: np.ndarray  # (n_even_monomials, n_nodes)
    nodes: np.ndarray  # (n_nodes, nvars)
    phi: Callable  # phi(y, chart, xi_unit) -> (N, r, r)
    size: int
    achieved_error: float = math.nan
    target_error: float = math.nan

    @property
    def ok(self) -> bool:
        return bool(self.achieved_error <= self.target_error)

    def coefficients(self, y, chart) -> np.ndarray:
        """Monomial coefficients, shape (N, n_even_monomials, r, r)."""
        y = np.atleast_2d(y)
        chart = np.atleast_2d(chart)
        N, K = len(y), len(self.nodes)
        vals = self.phi(np.repeat(y, K, axis=0), np.repeat(chart, K, axis=0), np.tile(self.nodes, (N, 1)))
        vals = vals.reshape(N, K, self.size, self.size)
        return np.einsum("mk,nkab->nmab", self.operator, vals)

    def __call__(self, y, chart, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        r2 = np.sum(xi * xi, axis=-1)
        s = self.degree // 2
        weights = _eval_monomials(xi, self.exponents)
        for j, e in enumerate(self.exponents):
            weights[:, j] *= r2 ** (s - sum(e) // 2)
        return np.einsum("nm,nmab->nab", weights, self.coefficients(y, chart))

    def even_part(self, y, chart, xi_unit) -> np.ndarray:
        """Even part of the fitted polynomial, unhomogenized."""
        weights = _eval_monomials(np.atleast_2d(xi_unit), self.exponents)
        return np.einsum("nm,nmab->nab", weights, self.coefficients(y, chart))


def even_polynomial_fit(phi: Callable, nvars: int, size: int, degree: int, *, nodes_per_dim: int | None = None,
                        check_points: tuple[np.ndarray, np.ndarray] | None = None, check_xi: int = 64,
                        eps: float = 0.5) -> EvenPolySymbol:
    """Fit ``phi(y, chart, xi')`` by an even homogeneous polynomial of degree ``degree`` in ``xi'``.

    ``check_points = (y, chart)`` lists parameter/base points on which the
    sup error ``max ||h - phi||_2`` is measured over ``check_xi`` directions
    per sphere dimension; the result records it and whether it is below
    ``eps``.
    """
    if degree % 2 or degree < 0:
        raise ValueError("degree must be even and non-negative")
    d = nvars - 1
    if d < 1:
        raise ValueError("need at least two tangential variables")
    exps = _monomials(nvars, degree)
    per = nodes_per_dim or (2 * degree + 4)
    nodes = sphere_nodes(d, per)
    V = _eval_monomials(nodes, exps)
    L = np.linalg.pinv(V, rcond=1e-10)
    even = [i for i, e in enumerate(exps) if sum(e) % 2 == 0]
    sym = EvenPolySymbol(degree, nvars, [exps[i] for i in even], L[even], nodes, phi, size, target_error=eps)
    if check_points is not None:
        sym.achieved_error = fit_error(sym, *check_points, per_dim=check_xi)
    return sym


def fit_error(sym: EvenPolySymbol, y, chart, per_dim: int = 64) -> float:
    test = sphere_nodes(sym.nvars - 1, per_dim)
    # shift off the fit nodes
    rot = np.eye(sym.nvars)
    c, s = math.cos(0.1234), math.sin(0.1234)
    rot[:2, :2] = [[c, -s], [s, c]]
    test = test @ rot.T
    worst = 0.0
    y = np.atleast_2d(y)
    chart = np.atleast_2d(chart)
    K = len(test)
    for start in range(0, len(y), 64):
        yb, cb = y[start : start + 64], chart[start : start + 64]
        N = len(yb)
        Y, C, X = np.repeat(yb, K, axis=0), np.repeat(cb, K, axis=0), np.tile(test, (N, 1))
        gap = sym(Y, C, X) - sym.phi(Y, C, X)
        worst = max(worst, float(np.max(np.linalg.norm(gap, ord=2, axis=(-2, -1)))))
    return worst


# --------------------------------------------------------------------------
# the model family


def generator_for(q: int, n: int) -> GeneratorMap:
    D = q + 2 * n - 3
    if D % 2 == 0:
        raise ValueError(f"q + 2n - 3 = {D} must be odd")
    return clifford_generator((D + 1) // 2)


def phi_symbol(psi: GeneratorMap, f: CollapseMap) -> Callable:
    """``phi(y, chart, xi') = psi(f(y, chart, xi'/|xi'|))`` on ambient inputs."""

    def phi(y, chart, xi):
        xi = np.asarray(xi, dtype=float)
        return psi(f.ambient(y, chart, xi / np.linalg.norm(xi, axis=-1, keepdims=True)))

    return phi


def assemble_example(q: int, n: int, m: int, l: int, mu_shift: float, h: EvenPolySymbol):
    """``(Delta^l + mu) Id_m`` on the solid torus with rows ``H o (gamma_0, ..., gamma_{l-1})``.

    Only principal parts enter: the interior symbol is ``|xi|^{2l} Id_m``
    (``mu_shift`` is recorded, not used) and row ``i`` of the boundary
    symbol is ``sum_j h_{i, (j, c)} nu^j e_c``.  If ``h`` is smaller than
    ``r = m l`` it is stabilized by ``|xi'|^{deg h} Id``.
    """
    from .catalog import laplacian_power
    from .symbols import BoundarySymbol, CoefficientField, SymbolFamily, TorusDomain

    r = m * l
    D = q + 2 * n - 3
    if r < D:
        raise ValueError(f"need m l = r >= q + 2n - 3 = {D}, got r = {r}")
    if h.size > r:
        raise ValueError(f"h has size {h.size} > r = {r}")
    if n % 2 == 0 or n < 3:
        raise ValueError("n must be odd and >= 3")
    hs, s2 = h.size, h.degree

    def on_sphere(y, chart, xi):
        N = len(chart)
        H = np.zeros((N, r, r), dtype=complex)
        H[:, :hs, :hs] = h(y, chart, xi)
        if r > hs:
            pad = np.sum(xi * xi, axis=-1) ** (s2 // 2)
            idx = np.arange(hs, r)
            H[:, idx, idx] = pad[:, None]
        return H.reshape(N, r, l, m)

    field = CoefficientField((r, l, m), on_sphere=on_sphere)
    boundary = BoundarySymbol((l - 1,) * r, m, field)
    fam = SymbolFamily(q, n, laplacian_power(n, m, l), boundary, TorusDomain(n),
                       name=f"example(q={q},n={n},m={m},l={l})", complex_coefficients=True, realified=True)
    fam.notes.extend([
        f"lower-order shift mu = {mu_shift} does not enter principal symbols",
        "invertibility and zero index of the boundary operator at infinity are operator-level and not verified",
    ])
    return fam


@dataclass
class ExampleBuild:
    """Ingredients of the model family, kept for provenance reports."""

    psi: GeneratorMap
    f: CollapseMap
    h: EvenPolySymbol
    family: object
    params: dict


def build_example(q: int = 4, n: int = 3, l: int = 1, degree: int = 4, eps: float = 0.5, mu_shift: float = 1.0,
                  check_points: int = 64, seed: int = 0) -> ExampleBuild:
    """Build ``f``, ``phi = psi o f``, the even fit ``h`` and the assembled family."""
    from scipy.stats import qmc

    psi = generator_for(q, n)
    f = build_f(q, n)
    phi = phi_symbol(psi, f)
    r = psi.size
    if r % l:
        raise ValueError(f"l = {l} must divide r = {r}")
    m = r // l
    check = None
    if check_points:
        u = qmc.Sobol(q + n - 1, scramble=True, seed=np.random.default_rng(seed)).random(check_points)
        uq = u[:, :q] * np.array([math.pi] * (q - 1) + [2 * math.pi])
        check = (Sphere(q).embed(uq), u[:, q:] * 2 * math.pi)
    h = even_polynomial_fit(phi, n - 1, r, degree, check_points=check, eps=eps)
    fam = assemble_example(q, n, m, l, mu_shift, h)
    fam.notes.append(f"fit degree {degree}, achieved error {h.achieved_error:.3g} (target {eps})")
    params = dict(q=q, n=n, l=l, degree=degree, eps=eps, mu_shift=mu_shift, check_points=check_points, seed=seed)
    return ExampleBuild(psi, f, h, fam, params)


def example_family(**params):
    return build_example(**params).family
