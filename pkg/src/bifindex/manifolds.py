"""Integration manifolds, their charts, and quadrature of top-degree forms.

Every manifold carries a single chart covering it up to a null set:
spherical coordinates on ``S^d``, angles on ``T^d``, and ordered products of
those.  ``S^0`` is the two-point sphere; it contributes a discrete coordinate
``s = +-1`` that is summed over and never differentiated.

A top form is passed around as its coefficient against
``du_1 ^ ... ^ du_dim`` in chart coordinates.  Chart orientations are
normalized against the standard orientation (outward normal first for
spheres, ``dtheta_1 ^ ... ^ dtheta_d`` for tori, ordered factors for
products), so integrals are orientation-aware.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import qmc

__all__ = [
    "IntegralResult",
    "Manifold",
    "Product",
    "QuadratureRule",
    "Sphere",
    "Torus",
    "integrate_top_form",
    "parse_manifold",
    "sample_points",
    "sphere_volume",
]

TWO_PI = 2.0 * math.pi


def sphere_volume(d: int) -> float:
    """Riemannian volume of the unit sphere S^d."""
    return float(2.0 * math.exp((d + 1) / 2 * math.log(math.pi) - gammaln((d + 1) / 2)))


class Manifold:
    """Base class.  Subclasses define the chart box and the embedding."""

    dim: int
    n_coords: int
    orientation: int = 1

    # per chart coordinate: "polar" on [0, pi], "periodic" on [0, 2pi),
    # "discrete" for the S^0 label
    kinds: tuple[str, ...] = ()

    @property
    def continuous(self) -> np.ndarray:
        return np.array([k != "discrete" for k in self.kinds], dtype=bool)

    def with_orientation(self, sign: int) -> "Manifold":
        out = self._copy()
        out.orientation = int(np.sign(sign)) * self.orientation
        return out

    def _copy(self) -> "Manifold":
        raise NotImplementedError

    def chart_sign(self, u: np.ndarray) -> np.ndarray:
        """Orientation of the chart at ``u`` relative to the standard one (+-1)."""
        raise NotImplementedError

    def volume_density(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def volume(self) -> float:
        raise NotImplementedError

    def label(self) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label()})"


def _sphere_embed(u: np.ndarray, d: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    x = np.empty(u.shape[:-1] + (d + 1,))
    s = np.ones(u.shape[:-1])
    for i in range(d):
        x[..., i] = s * np.cos(u[..., i])
        s = s * np.sin(u[..., i])
    x[..., d] = s
    return x


def _sphere_tangents(u: np.ndarray, d: int) -> np.ndarray:
    """Partial derivatives of the spherical embedding, shape (..., d, d+1)."""
    u = np.asarray(u, dtype=float)
    c, s = np.cos(u), np.sin(u)
    out = np.zeros(u.shape[:-1] + (d, d + 1))
    for j in range(d):
        # x_i = (prod_{a<i} s_a) * c_i for i < d, x_d = prod_{a<d} s_a
        for i in range(j, d + 1):
            prod = np.ones(u.shape[:-1])
            for a in range(min(i, d)):
                prod = prod * (c[..., a] if a == j else s[..., a])
            if i < d:
                prod = prod * (-s[..., i] if i == j else c[..., i])
            out[..., j, i] = prod
    return out


class Sphere(Manifold):
    """Unit sphere S^d in R^{d+1} with spherical coordinates.

    ``u_1..u_{d-1}`` are polar angles in [0, pi] and ``u_d`` is the azimuth;
    for ``d = 0`` the single coordinate is the point itself (+1 or -1).
    """

    def __init__(self, d: int, orientation: int = 1):
        if d < 0:
            raise ValueError("sphere dimension must be >= 0")
        self.d = d
        self.dim = d
        self.n_coords = max(d, 1)
        self.orientation = orientation
        if d == 0:
            self.kinds = ("discrete",)
        else:
            self.kinds = ("polar",) * (d - 1) + ("periodic",)

    def _copy(self):
        return Sphere(self.d, self.orientation)

    def label(self) -> str:
        return f"S{self.d}"

    def embed(self, u: np.ndarray) -> np.ndarray:
        if self.d == 0:
            return np.asarray(u, dtype=float)[..., :1]
        return _sphere_embed(u, self.d)

    def tangents(self, u: np.ndarray) -> np.ndarray:
        if self.d == 0:
            return np.zeros(np.shape(u)[:-1] + (0, 1))
        return _sphere_tangents(u, self.d)

    @cached_property
    def _chart_orientation(self) -> int:
        if self.d == 0:
            return 1
        u = np.full(self.d, 0.7)
        u[-1] = 1.1
        frame = np.vstack([_sphere_embed(u, self.d), _sphere_tangents(u, self.d)])
        return int(np.sign(np.linalg.det(frame)))

    def chart_sign(self, u):
        u = np.asarray(u, dtype=float)
        if self.d == 0:
            return self.orientation * np.sign(u[..., 0])
        return np.full(u.shape[:-1], float(self.orientation * self._chart_orientation))

    def volume_density(self, u):
        u = np.asarray(u, dtype=float)
        dens = np.ones(u.shape[:-1])
        for j in range(self.d - 1):
            dens = dens * np.sin(u[..., j]) ** (self.d - 1 - j)
        return dens

    @property
    def volume(self) -> float:
        return 2.0 if self.d == 0 else sphere_volume(self.d)

    @staticmethod
    def chart_from_point(x: np.ndarray) -> np.ndarray:
        """Inverse of the spherical embedding (for points off the chart seam)."""
        x = np.asarray(x, dtype=float)
        d = x.shape[-1] - 1
        u = np.empty(x.shape[:-1] + (d,))
        for j in range(d - 1):
            u[..., j] = np.arctan2(np.linalg.norm(x[..., j + 1 :], axis=-1), x[..., j])
        u[..., d - 1] = np.mod(np.arctan2(x[..., d], x[..., d - 1]), TWO_PI)
        return u


class Torus(Manifold):
    """Flat torus (S^1)^d with angle coordinates in [0, 2pi)."""

    def __init__(self, d: int, orientation: int = 1):
        if d < 1:
            raise ValueError("torus dimension must be >= 1")
        self.d = d
        self.dim = d
        self.n_coords = d
        self.orientation = orientation
        self.kinds = ("periodic",) * d

    def _copy(self):
        return Torus(self.d, self.orientation)

    def label(self) -> str:
        return f"T{self.d}"

    def embed(self, u):
        u = np.asarray(u, dtype=float)
        return np.stack([np.cos(u), np.sin(u)], axis=-1).reshape(u.shape[:-1] + (2 * self.d,))

    def chart_sign(self, u):
        return np.full(np.shape(u)[:-1], float(self.orientation))

    def volume_density(self, u):
        return np.ones(np.shape(u)[:-1])

    @property
    def volume(self) -> float:
        return TWO_PI**self.d


class Product(Manifold):
    """Ordered product; chart coordinates are concatenated factor coordinates."""

    def __init__(self, factors: Sequence[Manifold], orientation: int = 1):
        flat: list[Manifold] = []
        for f in factors:
            if isinstance(f, Product):
                if f.orientation != 1:
                    raise ValueError("cannot flatten a reoriented product")
                flat.extend(f.factors)
            else:
                flat.append(f)
        self.factors = tuple(flat)
        self.dim = sum(f.dim for f in self.factors)
        self.n_coords = sum(f.n_coords for f in self.factors)
        self.kinds = tuple(k for f in self.factors for k in f.kinds)
        self.orientation = orientation
        offsets = np.cumsum([0] + [f.n_coords for f in self.factors])
        self._slices = [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]

    def _copy(self):
        return Product(self.factors, self.orientation)

    def label(self) -> str:
        return "x".join(f.label() for f in self.factors)

    def split(self, u: np.ndarray) -> list[np.ndarray]:
        u = np.asarray(u, dtype=float)
        return [u[..., s] for s in self._slices]

    def embed(self, u) -> list[np.ndarray]:
        return [f.embed(p) for f, p in zip(self.factors, self.split(u))]

    def chart_sign(self, u):
        sign = np.full(np.shape(u)[:-1], float(self.orientation))
        for f, p in zip(self.factors, self.split(u)):
            sign = sign * f.chart_sign(p)
        return sign

    def volume_density(self, u):
        dens = np.ones(np.shape(u)[:-1])
        for f, p in zip(self.factors, self.split(u)):
            dens = dens * f.volume_density(p)
        return dens

    @property
    def volume(self) -> float:
        return float(np.prod([f.volume for f in self.factors]))


def parse_manifold(text: str) -> Manifold:
    """Parse labels like ``S3``, ``T2`` or ``S4xT2xS1``."""
    parts = [p.strip() for p in text.strip().split("x") if p.strip()]
    if not parts:
        raise ValueError(f"empty manifold description {text!r}")
    factors: list[Manifold] = []
    for p in parts:
        kind, num = p[:1].upper(), p[1:]
        if kind not in "ST" or not num.isdigit():
            raise ValueError(f"unknown manifold factor {p!r} (expected S<d> or T<d>)")
        factors.append(Sphere(int(num)) if kind == "S" else Torus(int(num)))
    return factors[0] if len(factors) == 1 else Product(factors)


# --------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature selection.

    ``kind`` is ``"product"`` (Gauss-Legendre on polar angles, trapezoid on
    periodic ones), ``"qmc"`` (scrambled Sobol, ``batches`` independent
    scramblings of ``points`` each) or ``"auto"`` (product up to
    ``max_product_dim`` dimensions, QMC above).
    """

    kind: str = "auto"
    nodes: int | tuple[int, ...] = 32
    points: int = 2**14
    batches: int = 8
    seed: int = 0
    max_product_dim: int = 5
    chunk: int = 8192
    threads: int = 1
    error_estimate: bool = True

    def resolve(self, manifold: Manifold) -> "QuadratureRule":
        if self.kind != "auto":
            return self
        kind = "product" if manifold.dim <= self.max_product_dim else "qmc"
        return replace(self, kind=kind)

    def refined(self) -> "QuadratureRule":
        """The same rule with twice the node budget."""
        if self.kind == "qmc":
            return replace(self, points=2 * self.points)
        if isinstance(self.nodes, tuple):
            return replace(self, nodes=tuple(2 * n for n in self.nodes))
        return replace(self, nodes=2 * self.nodes)

    def with_budget(self, total: int, manifold: Manifold) -> "QuadratureRule":
        """Scale the rule so it uses roughly ``total`` integrand evaluations."""
        rule = self.resolve(manifold)
        n_disc = 2 ** sum(k == "discrete" for k in manifold.kinds)
        if rule.kind == "qmc":
            per = max(total // (rule.batches * n_disc), 16)
            return replace(rule, points=int(2 ** math.floor(math.log2(per))))
        d = max(manifold.dim, 1)
        # below 4 nodes per axis product rules can land on degenerate points only
        n = max(int(math.floor((total / n_disc) ** (1.0 / d) + 1e-9)), 4)
        return replace(rule, nodes=n)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "seed": self.seed}
        if self.kind == "qmc":
            d.update(points=self.points, batches=self.batches)
        else:
            d["nodes"] = list(self.nodes) if isinstance(self.nodes, tuple) else self.nodes
        return d


def _one_dim(kind: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    if kind == "polar":
        x, w = np.polynomial.legendre.leggauss(n)
        return (x + 1.0) * (math.pi / 2), w * (math.pi / 2)
    if kind == "periodic":
        return np.arange(n) * (TWO_PI / n), np.full(n, TWO_PI / n)
    return np.array([1.0, -1.0]), np.array([1.0, 1.0])


def _product_nodes(manifold: Manifold, nodes, chunk: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    kinds = manifold.kinds
    if isinstance(nodes, int):
        nodes = tuple(nodes for _ in kinds)
    cont = [k for k in kinds if k != "discrete"]
    if len(nodes) == len(cont) and len(cont) != len(kinds):
        it = iter(nodes)
        nodes = tuple(next(it) if k != "discrete" else 2 for k in kinds)
    if len(nodes) != len(kinds):
        raise ValueError(
            f"rule has {len(nodes)} node counts but {manifold!r} has {len(kinds)} coordinates"
        )
    axes = [_one_dim(k, n if k != "discrete" else 2) for k, n in zip(kinds, nodes)]
    shape = tuple(len(a[0]) for a in axes)
    total = int(np.prod(shape))
    for start in range(0, total, chunk):
        idx = np.unravel_index(np.arange(start, min(start + chunk, total)), shape)
        u = np.stack([axes[j][0][i] for j, i in enumerate(idx)], axis=-1)
        w = np.ones(len(idx[0]))
        for j, i in enumerate(idx):
            w = w * axes[j][1][i]
        yield u, w


def _qmc_batches(manifold: Manifold, rule: QuadratureRule) -> list[Callable[[], Iterator]]:
    kinds = manifold.kinds
    cont = [j for j, k in enumerate(kinds) if k != "discrete"]
    disc = [j for j, k in enumerate(kinds) if k == "discrete"]
    lo = np.zeros(len(cont))
    span = np.array([math.pi if kinds[j] == "polar" else TWO_PI for j in cont])
    box = float(np.prod(span)) if cont else 1.0
    seeds = np.random.SeedSequence(rule.seed).spawn(rule.batches)
    n_disc = 2 ** len(disc)
    labels = np.array(list(itertools.product([1.0, -1.0], repeat=len(disc)))).reshape(n_disc, len(disc))

    def make(seed):
        def gen():
            if cont:
                sob = qmc.Sobol(len(cont), scramble=True, seed=np.random.default_rng(seed))
                pts = sob.random(rule.points)
            else:
                pts = np.zeros((1, 0))
            npts = len(pts)
            w_each = box / npts
            for start in range(0, npts, max(rule.chunk // n_disc, 1)):
                block = pts[start : start + max(rule.chunk // n_disc, 1)]
                u = np.empty((len(block) * n_disc, len(kinds)))
                rep = np.repeat(lo + block * span, n_disc, axis=0)
                if cont:
                    u[:, cont] = rep
                if disc:
                    u[:, disc] = np.tile(labels, (len(block), 1))
                yield u, np.full(len(u), w_each)

        return gen

    return [make(s) for s in seeds]


def sample_points(manifold: Manifold, rule: QuadratureRule):
    """All nodes of ``rule`` on ``manifold`` with Riemannian weights.

    Returns ``(u, weights, ambient)`` where ``ambient`` is the embedding of
    the nodes (a list of per-factor arrays for products).  For QMC rules the
    weights of all batches are divided by the batch count so that they sum
    to the volume.
    """
    rule = rule.resolve(manifold)
    if manifold.n_coords != len(manifold.kinds):
        raise ValueError("inconsistent manifold description")
    us, ws = [], []
    if rule.kind == "product":
        for u, w in _product_nodes(manifold, rule.nodes, rule.chunk):
            us.append(u)
            ws.append(w * manifold.volume_density(u))
    elif rule.kind == "qmc":
        for gen in _qmc_batches(manifold, rule):
            for u, w in gen():
                us.append(u)
                ws.append(w * manifold.volume_density(u) / rule.batches)
    else:
        raise ValueError(f"unknown quadrature kind {rule.kind!r}")
    u = np.concatenate(us)
    return u, np.concatenate(ws), manifold.embed(u)


@dataclass
class IntegralResult:
    value: complex
    error: float
    nodes: int
    rule: QuadratureRule


class NonFiniteIntegrand(FloatingPointError):
    def __init__(self, where: np.ndarray):
        self.where = where
        super().__init__(f"integrand is not finite at chart point {np.array2string(where, precision=6)}")


def _fsum_complex(parts: list[complex]) -> complex:
    return complex(math.fsum(p.real for p in parts), math.fsum(p.imag for p in parts))


def _accumulate(form, chunks, manifold: Manifold, threads: int) -> tuple[complex, int]:
    def one(chunk):
        u, w = chunk
        vals = np.asarray(form(u), dtype=complex)
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise NonFiniteIntegrand(u[bad])
        return complex(np.sum(vals * w * manifold.chart_sign(u))), len(u)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, chunks))
    else:
        results = [one(c) for c in chunks]
    return _fsum_complex([r[0] for r in results]), sum(r[1] for r in results)


def integrate_top_form(form: Callable[[np.ndarray], np.ndarray], manifold: Manifold, rule: QuadratureRule) -> IntegralResult:
    """Integrate a top form given by its chart coefficient.

    Partial sums are taken per fixed-size chunk and combined with
    ``math.fsum`` in chunk order, so the result does not depend on the
    thread count.
    """
    rule = rule.resolve(manifold)
    if rule.kind == "product":
        value, count = _accumulate(form, _product_nodes(manifold, rule.nodes, rule.chunk), manifold, rule.threads)
        error = math.nan
        if rule.error_estimate:
            nodes = rule.nodes
            coarse = tuple(max(n // 2, 1) for n in nodes) if isinstance(nodes, tuple) else max(nodes // 2, 1)
            coarse_value, c2 = _accumulate(form, _product_nodes(manifold, coarse, rule.chunk), manifold, rule.threads)
            error = abs(value - coarse_value)
            count += c2
        return IntegralResult(value, error, count, rule)
    if rule.kind == "qmc":
        estimates, count = [], 0
        for gen in _qmc_batches(manifold, rule):
            v, c = _accumulate(form, gen(), manifold, rule.threads)
            estimates.append(v)
            count += c
        est = np.array(estimates)
        value = _fsum_complex(list(est)) / len(est)
        error = float(np.std(est, ddof=1) / math.sqrt(len(est))) if len(est) > 1 else math.nan
        return IntegralResult(value, error, count, rule)
    raise ValueError(f"unknown quadrature kind {rule.kind!r}")
