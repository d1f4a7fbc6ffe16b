"""Principal symbols of parametrized boundary value problems.

The parameter space is the sphere ``S^q``: ``R^q`` plus a point at
infinity, realized by inverse stereographic projection from the north pole.
Internally every evaluator takes sphere points ``y`` of shape (N, q+1);
coefficient fields written in ``lambda`` coordinates must supply their
value at infinity explicitly.

All evaluation is vectorized over a leading batch axis and stateless.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from .degree import MatrixMap, SingularMapError
from .manifolds import Manifold, Product, Sphere, Torus

__all__ = [
    "INFINITY",
    "Ball",
    "BoundarySymbol",
    "CheckReport",
    "CoefficientField",
    "Domain",
    "InteriorSymbol",
    "SamplingPlan",
    "SymbolFamily",
    "TorusDomain",
    "build_sigma",
    "check_ellipticity",
    "check_reality",
    "eval_interior_symbol",
    "lambda_from_sphere",
    "sphere_from_lambda",
]

INFINITY = "infinity"


def sphere_from_lambda(lam, q: int) -> np.ndarray:
    """Points of S^q for parameters ``lam`` (shape (..., q)) or ``INFINITY``."""
    if isinstance(lam, str):
        if lam != INFINITY:
            raise ValueError(f"unknown parameter point {lam!r}")
        y = np.zeros(q + 1)
        y[q] = 1.0
        return y
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != q:
        raise ValueError(f"parameter has {lam.shape[-1]} components, expected q={q}")
    r2 = np.sum(lam**2, axis=-1, keepdims=True)
    return np.concatenate([2 * lam / (1 + r2), (r2 - 1) / (r2 + 1)], axis=-1)


def lambda_from_sphere(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stereographic chart; returns ``(lam, at_infinity_mask)``.

    ``lam`` is set to 0 where the point is the pole so that callers can
    evaluate finite formulas without overflow and then overwrite.
    """
    y = np.asarray(y, dtype=float)
    q = y.shape[-1] - 1
    denom = 1.0 - y[..., q]
    pole = denom <= 1e-300
    safe = np.where(pole, 1.0, denom)
    lam = y[..., :q] / safe[..., None]
    lam[pole] = 0.0
    return lam, pole


@dataclass
class CoefficientField:
    """A matrix-valued coefficient ``a(lambda, x, xi)``.

    Give either ``finite`` (in lambda coordinates) together with
    ``at_infinity``, or ``on_sphere`` taking the S^q point directly.
    Callables are vectorized: ``finite(lam (N,q), x (N,.), xi (N,.))``,
    ``at_infinity(x, xi)``, ``on_sphere(y (N,q+1), x, xi)``, each returning
    an array of shape (N,) + shape.
    """

    shape: tuple[int, ...]
    finite: Callable | None = None
    at_infinity: Callable | None = None
    on_sphere: Callable | None = None
    lambda_dependent: bool = True

    def __post_init__(self):
        if self.on_sphere is None and self.finite is None:
            raise ValueError("coefficient field needs an evaluator")
        if self.on_sphere is None and self.lambda_dependent and self.at_infinity is None:
            raise ValueError("lambda-dependent coefficient needs an explicit value at infinity")

    @classmethod
    def constant(cls, value) -> "CoefficientField":
        value = np.asarray(value, dtype=complex)

        def fn(x, xi):
            return np.broadcast_to(value, (len(x),) + value.shape).copy()

        return cls(value.shape, finite=lambda lam, x, xi: fn(x, xi), at_infinity=fn, lambda_dependent=False)

    def __call__(self, y: np.ndarray, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        n = len(x)
        if self.on_sphere is not None:
            return np.asarray(self.on_sphere(np.broadcast_to(y, (n, y.shape[-1])), x, xi), dtype=complex)
        lam, pole = lambda_from_sphere(np.broadcast_to(y, (n, y.shape[-1])))
        if not self.lambda_dependent:
            return np.asarray(self.finite(lam, x, xi), dtype=complex)
        out = np.empty((n,) + tuple(self.shape), dtype=complex)
        fin = ~pole
        if np.any(fin):
            out[fin] = self.finite(lam[fin], x[fin], xi[fin])
        if np.any(pole):
            out[pole] = self.at_infinity(x[pole], xi[pole])
        return out


def _monomial(xi: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
    out = np.ones(xi.shape[:-1])
    for i, a in enumerate(alpha):
        if a:
            out = out * xi[..., i] ** a
    return out


@dataclass
class InteriorSymbol:
    """``p(lambda, x, xi) = sum_{|alpha| = k} a_alpha(lambda, x) xi^alpha``."""

    order: int
    size: int
    n: int
    terms: Mapping[tuple[int, ...], CoefficientField]

    def __post_init__(self):
        for alpha, c in self.terms.items():
            if len(alpha) != self.n:
                raise ValueError(f"multi-index {alpha} has length {len(alpha)}, expected n={self.n}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"multi-index {alpha} has negative entries")
            if sum(alpha) != self.order:
                raise ValueError(f"multi-index {alpha} has order {sum(alpha)}; only order {self.order} terms are allowed")
            if tuple(c.shape) != (self.size, self.size):
                raise ValueError(f"coefficient of {alpha} has shape {c.shape}, expected {(self.size, self.size)}")

    @property
    def lambda_dependent(self) -> bool:
        return any(c.lambda_dependent for c in self.terms.values())

    def __call__(self, y, x, xi) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if xi.shape[-1] != self.n or x.shape[-1] != self.n:
            raise ValueError(f"x and xi must have {self.n} components")
        out = np.zeros((len(xi), self.size, self.size), dtype=complex)
        for alpha, c in self.terms.items():
            out += c(y, x, xi) * _monomial(xi, alpha)[:, None, None]
        return out

    def conormal_polynomial(self, y, x, tangential: np.ndarray, conormal: np.ndarray) -> np.ndarray:
        """Coefficients ``P_j`` of ``p(y, x, tangential + nu * conormal) = sum_j P_j nu^j``.

        ``tangential`` and ``conormal`` are covectors in R^n, shape (N, n).
        Returns shape (N, k+1, m, m).
        """
        x = np.atleast_2d(x)
        N = len(tangential)
        out = np.zeros((N, self.order + 1, self.size, self.size), dtype=complex)
        zero_xi = np.zeros((N, self.n))
        for alpha, c in self.terms.items():
            poly = np.zeros((N, self.order + 1))
            poly[:, 0] = 1.0
            deg = 0
            for i, a in enumerate(alpha):
                for _ in range(a):
                    new = poly * tangential[:, i : i + 1]
                    new[:, 1 : deg + 2] += poly[:, : deg + 1] * conormal[:, i : i + 1]
                    poly = new
                    deg += 1
            out += c(y, x, zero_xi)[:, None] * poly[:, :, None, None]
        return out


@dataclass
class BoundarySymbol:
    """Rows ``p_b^i(lambda, x', xi', nu) = sum_{j <= k_i} p_b^{ij}(lambda, x', xi') nu^j``.

    ``coefficients(y, chart, xi')`` returns shape (N, r, K+1, m) with
    ``K = max(orders)``; entries ``j > k_i`` of row ``i`` must vanish.
    ``chart`` holds boundary chart coordinates and ``xi'`` the tangential
    covector in the orthonormal coframe of the boundary.
    """

    orders: tuple[int, ...]
    size: int
    coefficients: CoefficientField

    @property
    def rows(self) -> int:
        return len(self.orders)

    @property
    def max_order(self) -> int:
        return max(self.orders)

    @property
    def lambda_dependent(self) -> bool:
        return self.coefficients.lambda_dependent

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[int, CoefficientField]], size: int) -> "BoundarySymbol":
        """Stack per-row fields of shape (k_i+1, m) into one field."""
        orders = tuple(int(k) for k, _ in rows)
        K = max(orders)
        dep = any(f.lambda_dependent for _, f in rows)

        def stack(y, x, xi):
            out = np.zeros((len(x), len(rows), K + 1, size), dtype=complex)
            for i, (k, f) in enumerate(rows):
                out[:, i, : k + 1, :] = f(y, x, xi)
            return out

        return cls(orders, size, CoefficientField((len(rows), K + 1, size), on_sphere=stack, lambda_dependent=dep))

    def __call__(self, y, chart, xi) -> np.ndarray:
        return self.coefficients(y, np.atleast_2d(chart), np.atleast_2d(xi))


# --------------------------------------------------------------------------
# geometry


class Domain:
    """Bounded region Omega in R^n with an explicit boundary chart."""

    n: int
    kind: str

    @property
    def boundary(self) -> Manifold:
        raise NotImplementedError

    @property
    def bounding_radius(self) -> float:
        raise NotImplementedError

    def contains(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def boundary_point(self, chart: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def boundary_frame(self, chart: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Orthonormal tangential covectors (N, n-1, n) and inner unit conormal (N, n)."""
        raise NotImplementedError

    @property
    def sphere_bundle(self) -> Manifold:
        """Chart of the unit cotangent sphere bundle, ``Gamma x S^{n-2}``."""
        return Product([self.boundary, Sphere(self.n - 2)])

    def to_dict(self) -> dict:
        raise NotImplementedError


def _orthonormal_rows(vectors: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(np.swapaxes(vectors, -1, -2))
    # fix signs so each row points along the original vector
    q = np.swapaxes(q, -1, -2)
    sign = np.sign(np.sum(q * vectors, axis=-1, keepdims=True))
    sign[sign == 0] = 1.0
    return q * sign


@dataclass
class Ball(Domain):
    n: int
    radius: float = 0.5
    kind: str = "ball"

    def __post_init__(self):
        if not 0 < self.radius < 1:
            raise ValueError("ball radius must lie in (0, 1) so that Omega x {0} sits inside the unit ball")

    @property
    def boundary(self):
        return Sphere(self.n - 1)

    @property
    def bounding_radius(self):
        return self.radius

    def contains(self, x):
        return np.linalg.norm(np.asarray(x), axis=-1) < self.radius

    def boundary_point(self, chart):
        return self.radius * self.boundary.embed(chart)

    def boundary_frame(self, chart):
        chart = np.atleast_2d(chart)
        normal = -self.boundary.embed(chart)
        if self.n == 1:
            return np.zeros((len(chart), 0, 1)), normal
        tang = _orthonormal_rows(self.boundary.tangents(chart))
        return tang, normal

    def to_dict(self):
        return {"kind": self.kind, "radius": self.radius}


@dataclass
class TorusDomain(Domain):
    """Iterated tube whose boundary is the torus (S^1)^{n-1}.

    ``radii = (a_1, ..., a_{n-2}, b)``: for n = 3 this is the solid torus
    with core radius a_1 and tube radius b.
    """

    n: int
    radii: tuple[float, ...] = ()
    kind: str = "torus"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("torus domains need n >= 2")
        if not self.radii:
            # geometric ladder with sum below 1
            self.radii = tuple(0.45 * 0.4**j for j in range(self.n - 1))
        self.radii = tuple(float(r) for r in self.radii)
        if len(self.radii) != self.n - 1:
            raise ValueError(f"torus domain in R^{self.n} needs {self.n - 1} radii")
        for j in range(len(self.radii) - 1):
            if self.radii[j] <= sum(self.radii[j + 1 :]):
                raise ValueError("each core radius must exceed the sum of the later radii")
        if sum(self.radii) >= 1:
            raise ValueError("radii must sum to less than 1 (Omega inside the unit ball)")

    @property
    def boundary(self):
        return Torus(self.n - 1)

    @property
    def bounding_radius(self):
        return sum(self.radii)

    def _rho(self, chart):
        th = np.atleast_2d(chart)
        N = len(th)
        rho = [None] * (self.n - 1)
        drho = [None] * (self.n - 1)  # derivative w.r.t. the tube radius b
        rho[-1] = np.full(N, self.radii[-1])
        drho[-1] = np.ones(N)
        for j in range(self.n - 3, -1, -1):
            rho[j] = self.radii[j] + rho[j + 1] * np.cos(th[:, j + 1])
            drho[j] = drho[j + 1] * np.cos(th[:, j + 1])
        return th, rho, drho

    def _embed(self, th, rho):
        N = len(th)
        X = np.empty((N, self.n))
        X[:, 0] = rho[0] * np.cos(th[:, 0])
        X[:, 1] = rho[0] * np.sin(th[:, 0])
        for j in range(1, self.n - 1):
            X[:, j + 1] = rho[j] * np.sin(th[:, j])
        return X

    def boundary_point(self, chart):
        th, rho, _ = self._rho(chart)
        return self._embed(th, rho)

    def boundary_frame(self, chart):
        th, rho, drho = self._rho(chart)
        outward = self._embed(th, drho)
        if self.n == 2:
            outward = np.stack([np.cos(th[:, 0]), np.sin(th[:, 0])], axis=-1)
        outward /= np.linalg.norm(outward, axis=-1, keepdims=True)
        h = 1e-6
        tang = np.empty((len(th), self.n - 1, self.n))
        for a in range(self.n - 1):
            tp, tm = th.copy(), th.copy()
            tp[:, a] += h
            tm[:, a] -= h
            tang[:, a] = (self.boundary_point(tp) - self.boundary_point(tm)) / (2 * h)
        return _orthonormal_rows(tang), -outward

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        rho = np.hypot(x[..., 0], x[..., 1])
        for j in range(self.n - 2):
            rho = np.hypot(rho - self.radii[j], x[..., j + 2])
        return rho < self.radii[-1]

    def to_dict(self):
        return {"kind": self.kind, "radii": list(self.radii)}


# --------------------------------------------------------------------------
# families


@dataclass
class SymbolFamily:
    """Principal symbols of ``(L_lambda, B_lambda)`` over the parameter sphere S^q."""

    q: int
    n: int
    interior: InteriorSymbol
    boundary: BoundarySymbol
    domain: Domain
    name: str = ""
    complex_coefficients: bool = False
    realified: bool = False
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.interior.n != self.n or self.domain.n != self.n:
            raise ValueError("spatial dimensions of symbol, domain and family disagree")
        if self.boundary.size != self.interior.size:
            raise ValueError("boundary rows act on a different number of components than the interior symbol")
        km = self.interior.order * self.interior.size
        if km != 2 * self.boundary.rows:
            raise ValueError(
                f"proper ellipticity needs k*m = 2r: k*m = {km} but there are r = {self.boundary.rows} boundary rows"
            )

    @property
    def m(self) -> int:
        return self.interior.size

    @property
    def k(self) -> int:
        return self.interior.order

    @property
    def r(self) -> int:
        return self.boundary.rows

    def param(self, lam) -> np.ndarray:
        return sphere_from_lambda(lam, self.q)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "q": self.q,
            "n": self.n,
            "m": self.m,
            "k": self.k,
            "r": self.r,
            "boundaryOrders": list(self.boundary.orders),
            "domain": self.domain.to_dict(),
            "complexCoefficients": self.complex_coefficients,
            "realified": self.realified,
            "interiorLambdaDependent": self.interior.lambda_dependent,
            "boundaryLambdaDependent": self.boundary.lambda_dependent,
        }


def _as_param(lam, q):
    if isinstance(lam, str):
        return sphere_from_lambda(lam, q)[None]
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    if lam.shape[-1] == q + 1 and np.allclose(np.linalg.norm(lam, axis=-1), 1.0) and q > 0:
        raise ValueError("ambiguous parameter: pass lambda in R^q, not a sphere point")
    return sphere_from_lambda(lam, q)


def eval_interior_symbol(sym: InteriorSymbol, lam, x, xi, q: int | None = None) -> np.ndarray:
    """``p(lambda, x, xi)`` for a parameter in R^q (or ``INFINITY``).

    Returns (m, m) for a single point or (N, m, m) for batched input.
    """
    xi_arr = np.asarray(xi, dtype=float)
    single = xi_arr.ndim == 1
    if xi_arr.shape[-1] != sym.n:
        raise ValueError(f"xi has {xi_arr.shape[-1]} components, expected n={sym.n}")
    if q is None:
        q = 0 if isinstance(lam, str) else np.asarray(lam).shape[-1]
    y = _as_param(lam, q)
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    xi2 = np.atleast_2d(xi_arr)
    y2 = np.broadcast_to(y, (len(xi2), q + 1))
    out = sym(y2, np.broadcast_to(x2, (len(xi2), sym.n)), xi2)
    return out[0] if single else out


# --------------------------------------------------------------------------
# sample-based certificates


@dataclass
class CheckReport:
    name: str
    passed: bool
    value: float
    threshold: float
    samples: int
    worst: dict | None = None
    note: str = "certificate over the sample set only"
    skipped: bool = False

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "threshold": self.threshold,
            "samples": self.samples,
            "note": self.note,
        }
        if self.worst is not None:
            d["worst"] = self.worst
        if self.skipped:
            d["skipped"] = True
        return d


@dataclass
class SamplingPlan:
    """Quasi-random sample points (scrambled Sobol, seeded) plus optional explicit ones.

    ``extra`` holds explicit ``(lambda, x, xi)`` triples; ``lambda`` may be
    ``INFINITY``.
    """

    points: int = 256
    seed: int = 0
    include_infinity: bool = True
    extra: list = field(default_factory=list)

    def _unit(self, dim: int, salt: int) -> np.ndarray:
        n = max(int(2 ** math.ceil(math.log2(max(self.points, 2)))), 2)
        sob = qmc.Sobol(dim, scramble=True, seed=np.random.default_rng([self.seed, salt]))
        return sob.random(n)[: self.points]

    def params(self, q: int, u: np.ndarray) -> np.ndarray:
        y = _sphere_from_unit(u, q)
        if self.include_infinity:
            y[0] = sphere_from_lambda(INFINITY, q)
        return y

    def interior(self, family: SymbolFamily) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Triples ``(y, x, xi)`` with x in Omega and |xi| = 1."""
        q, n = family.q, family.n
        u = self._unit(q + 2 * n, 1)
        y = self.params(q, u[:, :q])
        R = family.domain.bounding_radius
        x = (2 * u[:, q : q + n] - 1) * R
        inside = family.domain.contains(x)
        # pull rejected points towards the centre of the boundary chart
        if not np.all(inside):
            pts = family.domain.boundary_point(np.zeros((1, max(family.domain.boundary.n_coords, 1))))
            anchor = pts[0] * 0.0 if family.domain.kind == "ball" else _torus_core(family.domain)
            for _ in range(60):
                bad = ~family.domain.contains(x)
                if not np.any(bad):
                    break
                x[bad] = anchor + 0.8 * (x[bad] - anchor)
        xi = _sphere_from_unit(u[:, q + n :], n - 1) if n > 1 else np.sign(u[:, q + n :] - 0.5)
        y, x, xi = self._with_extra(family, y, x, xi)
        return y, x, xi

    def boundary(self, family: SymbolFamily) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Triples ``(y, chart, xi')`` with boundary chart points and |xi'| = 1."""
        q, n = family.q, family.n
        gamma = family.domain.boundary
        u = self._unit(q + gamma.n_coords + max(n - 1, 1), 2)
        y = self.params(q, u[:, :q])
        spans = np.array([math.pi if k == "polar" else 2 * math.pi for k in gamma.kinds])
        chart = u[:, q : q + gamma.n_coords] * spans
        if n == 2:
            xi = np.where(u[:, -1:] < 0.5, -1.0, 1.0)
        else:
            xi = _sphere_from_unit(u[:, q + gamma.n_coords :], n - 2)
        return y, chart, xi

    def _with_extra(self, family, y, x, xi):
        if not self.extra:
            return y, x, xi
        ey = np.stack([sphere_from_lambda(l, family.q) for l, _, _ in self.extra])
        ex = np.array([np.asarray(e[1], dtype=float) for e in self.extra])
        exi = np.array([np.asarray(e[2], dtype=float) for e in self.extra])
        return np.concatenate([y, ey]), np.concatenate([x, ex]), np.concatenate([xi, exi])


def _torus_core(domain) -> np.ndarray:
    return domain.boundary_point(np.zeros((1, domain.n - 1)))[0] - domain.radii[-1] * (-domain.boundary_frame(np.zeros((1, domain.n - 1)))[1][0])


def _sphere_from_unit(u: np.ndarray, d: int) -> np.ndarray:
    """Map points of [0,1)^d to S^d through the inverse Gaussian CDF (area-uniform)."""
    from scipy.special import ndtri

    if d == 0:
        return np.zeros((len(u), 1)) + 1.0
    n = len(u)
    z = ndtri(np.clip(u[:, :d], 1e-12, 1 - 1e-12))
    extra = ndtri(np.clip((u[:, :1] * 0.6180339887498949 + 0.5) % 1.0, 1e-12, 1 - 1e-12))
    g = np.concatenate([z, extra], axis=1) if d + 1 > z.shape[1] else z
    g = g.reshape(n, d + 1)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def check_reality(family: SymbolFamily, plan: SamplingPlan | None = None, tol: float = 1e-10) -> CheckReport:
    """``max ||p(lambda, x, -xi) - conj p(lambda, x, xi)||`` over the sample set."""
    plan = plan or SamplingPlan()
    if family.complex_coefficients:
        return CheckReport("reality", True, float("nan"), tol, 0,
                           note="complex family: reality condition not required", skipped=True)
    y, x, xi = plan.interior(family)
    p_plus = family.interior(y, x, xi)
    p_minus = family.interior(y, x, -xi)
    viol = np.linalg.norm(p_minus - np.conj(p_plus), ord=2, axis=(-2, -1))
    i = int(np.argmax(viol))
    return CheckReport("reality", bool(viol[i] < tol), float(viol[i]), tol, len(viol),
                       worst=_where(y[i], x[i], xi[i], family.q))


def _where(y, x, xi, q):
    lam, pole = lambda_from_sphere(np.atleast_2d(y))
    return {
        "lambda": "infinity" if pole[0] else [float(v) for v in lam[0]],
        "x": [float(v) for v in np.atleast_1d(x)],
        "xi": [float(v) for v in np.atleast_1d(xi)],
    }


def check_ellipticity(family: SymbolFamily, plan: SamplingPlan | None = None, threshold: float = 1e-8,
                      samples: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None) -> CheckReport:
    """Smallest singular value of ``p`` over sampled ``(lambda, x, xi)``, |xi| = 1.

    ``samples`` may be given explicitly as ``(y, x, xi)`` arrays.
    """
    if samples is None:
        samples = (plan or SamplingPlan()).interior(family)
    y, x, xi = samples
    norms = np.linalg.norm(xi, axis=-1)
    if np.any(norms < 1e-14):
        raise ValueError("ellipticity samples must have xi != 0")
    xi = xi / norms[:, None]
    p = family.interior(y, x, xi)
    smin = np.linalg.svd(p, compute_uv=False)[:, -1]
    i = int(np.argmin(smin))
    return CheckReport("ellipticity", bool(smin[i] > threshold), float(smin[i]), threshold, len(smin),
                       worst=_where(y[i], x[i], xi[i], family.q))


def build_sigma(family: SymbolFamily) -> MatrixMap:
    """``sigma = p(lambda) p(infinity)^{-1}`` on S^q x S^{2n-1}, Id for x outside Omega."""
    q, n, m = family.q, family.n, family.m
    if family.domain.bounding_radius >= 1:
        raise ValueError("Omega x {0} must lie inside the unit ball")
    manifold = Product([Sphere(q), Sphere(2 * n - 1)])
    if not family.interior.lambda_dependent:
        eye = np.eye(m, dtype=complex)
        return MatrixMap(manifold, lambda u: np.broadcast_to(eye, (len(u), m, m)).copy(), m,
                         differential=lambda u: np.zeros((len(u), manifold.dim, m, m), dtype=complex),
                         identically_identity=True, name="sigma(Id)")
    sq, sz = manifold.factors
    pole = sphere_from_lambda(INFINITY, q)

    def ev(u):
        uq, uz = manifold.split(u)
        y = sq.embed(uq)
        z = sz.embed(uz)
        x, xi = z[:, :n], z[:, n:]
        out = np.broadcast_to(np.eye(m, dtype=complex), (len(u), m, m)).copy()
        inside = family.domain.contains(x)
        if np.any(inside):
            yi, xin, xii = y[inside], x[inside], xi[inside]
            p = family.interior(yi, xin, xii)
            pinf = family.interior(np.broadcast_to(pole, yi.shape), xin, xii)
            det = np.abs(np.linalg.det(pinf))
            if np.any(det < 1e-300):
                bad = int(np.argmin(det))
                raise SingularMapError(np.concatenate([xin[bad], xii[bad]]), "p(infinity, x, xi)")
            # sigma = p pinf^{-1}  <=>  sigma^T = pinf^{-T} p^T
            out[inside] = np.swapaxes(np.linalg.solve(np.swapaxes(pinf, -1, -2), np.swapaxes(p, -1, -2)), -1, -2)
        return out

    return MatrixMap(manifold, ev, m, name=f"sigma({family.name})")
