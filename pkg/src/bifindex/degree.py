"""Degrees of maps out of closed oriented odd-dimensional manifolds.

``bott_fedosov_degree`` integrates ``tr (phi^{-1} dphi)^{2v-1}`` for a map
into ``GL(l, C)``; ``brouwer_degree`` integrates the pulled-back volume form
of a map into a sphere; ``degree_prime`` is the first-column variant for
``U(v)``-valued maps.

Sign convention: the normalizing constant is
``-(v-1)! / ((-2 pi i)^v (2v-1)!)`` with standard orientations, which gives
``deg(theta -> e^{i theta}) = +1`` and agrees with ``degree_prime`` on the
``U(1)`` and ``SU(2)`` generators.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .manifolds import Manifold, QuadratureRule, integrate_top_form, sphere_volume

__all__ = [
    "DegreeResult",
    "InconclusiveDegree",
    "MatrixMap",
    "SingularMapError",
    "SphereMap",
    "bott_fedosov_constant",
    "bott_fedosov_degree",
    "bott_fedosov_integrand",
    "brouwer_degree",
    "degree_prime",
    "maurer_cartan_coeffs",
    "round_half_away",
    "trace_odd_power",
    "trace_odd_power_permutations",
]

log = logging.getLogger(__name__)

RESIDUAL_WARN = 0.25
RESIDUAL_FAIL = 0.5
IMAG_TOL = 1e-6

# every DegreeResult produced is passed to these callbacks (test-suite audits)
observers: list[Callable[["DegreeResult"], None]] = []


class SingularMapError(np.linalg.LinAlgError):
    def __init__(self, where, what="map"):
        self.where = np.asarray(where)
        super().__init__(f"{what} is singular at chart point {np.array2string(self.where, precision=6)}")


def _partials_fd(evaluate, u: np.ndarray, mask: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
    cont = np.flatnonzero(mask)
    d = len(cont)
    n = len(u)
    stacked = np.repeat(u[None], 1 + 2 * d, axis=0)
    for a, j in enumerate(cont):
        stacked[1 + 2 * a, :, j] += step
        stacked[2 + 2 * a, :, j] -= step
    vals = np.asarray(evaluate(stacked.reshape(-1, u.shape[-1])))
    vals = vals.reshape((1 + 2 * d, n) + vals.shape[1:])
    diffs = (vals[1::2] - vals[2::2]) / (2.0 * step)
    return vals[0], np.moveaxis(diffs, 0, 1)


@dataclass
class MatrixMap:
    """A map from ``manifold`` into invertible ``size x size`` complex matrices.

    ``evaluate`` takes chart points of shape (N, n_coords) and returns
    (N, size, size).  ``differential``, when given, returns the partials
    along the continuous chart coordinates, shape (N, dim, size, size);
    otherwise central differences with step ``fd_step`` are used.  ``jet``
    may supply values and partials together when that is cheaper.
    """

    manifold: Manifold
    evaluate: Callable[[np.ndarray], np.ndarray]
    size: int
    differential: Callable[[np.ndarray], np.ndarray] | None = None
    fd_step: float = 1e-5
    identically_identity: bool = False
    name: str = ""
    jet: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    core: "MatrixMap | None" = None  # set by ``stabilized``: this map is diag(core, Id)

    def __call__(self, u) -> np.ndarray:
        return np.asarray(self.evaluate(np.atleast_2d(np.asarray(u, dtype=float))), dtype=complex)

    def value_and_partials(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if self.jet is not None:
            val, dval = self.jet(u)
            return np.asarray(val, dtype=complex), np.asarray(dval, dtype=complex)
        if self.differential is not None:
            return np.asarray(self.evaluate(u), dtype=complex), np.asarray(self.differential(u), dtype=complex)
        return _partials_fd(self.evaluate, u, self.manifold.continuous, self.fd_step)

    def check_differential(self, u: np.ndarray) -> float:
        """Relative gap between the differential and a step-halved central difference.

        With an analytic differential this measures agreement with finite
        differences; for a finite-difference map it is the Richardson gap
        between steps ``h`` and ``h/2``.
        """
        u = np.atleast_2d(np.asarray(u, dtype=float))
        _, d0 = self.value_and_partials(u)
        _, d1 = _partials_fd(self.evaluate, u, self.manifold.continuous, self.fd_step / 2)
        return float(np.max(np.abs(d0 - d1)) / max(np.max(np.abs(d1)), 1e-300))

    def conjugated(self, g: np.ndarray) -> "MatrixMap":
        g = np.asarray(g, dtype=complex)
        gi = np.linalg.inv(g)
        diff = None
        if self.differential is not None:
            diff = lambda u: g @ self.differential(u) @ gi  # noqa: E731
        jet = None
        if self.jet is not None:
            def jet(u):
                val, dval = self.jet(u)
                return g @ val @ gi, g @ dval @ gi
        return replace(self, evaluate=lambda u: g @ self.evaluate(u) @ gi, differential=diff, jet=jet, core=None,
                       name=f"conj({self.name})")

    def stabilized(self, extra: int) -> "MatrixMap":
        """``diag(phi, Id_extra)``."""
        l = self.size

        def ev(u):
            val = np.asarray(self.evaluate(u), dtype=complex)
            out = np.zeros(val.shape[:-2] + (l + extra, l + extra), dtype=complex)
            out[..., :l, :l] = val
            idx = np.arange(l, l + extra)
            out[..., idx, idx] = 1.0
            return out

        def diff(u):
            val = np.asarray(self.differential(u), dtype=complex)
            out = np.zeros(val.shape[:-2] + (l + extra, l + extra), dtype=complex)
            out[..., :l, :l] = val
            return out

        jet = None
        if self.jet is not None:
            def jet(u):
                val, dval = self.value_and_partials(u)
                out = np.zeros(dval.shape[:-2] + (l + extra, l + extra), dtype=complex)
                out[..., :l, :l] = dval
                return ev_from(val), out

        def ev_from(val):
            out = np.zeros(val.shape[:-2] + (l + extra, l + extra), dtype=complex)
            out[..., :l, :l] = val
            idx = np.arange(l, l + extra)
            out[..., idx, idx] = 1.0
            return out

        return replace(self, evaluate=ev, size=l + extra, jet=jet,
                       differential=diff if self.differential is not None else None,
                       name=f"diag({self.name}, Id{extra})", core=self.core or self)

    def times(self, other: "MatrixMap") -> "MatrixMap":
        """Pointwise product ``phi * psi`` (same manifold and size)."""
        if other.size != self.size:
            raise ValueError("size mismatch")
        diff = None
        if self.differential is not None and other.differential is not None:
            def diff(u):
                a, b = self(u), other(u)
                da, db = self.differential(u), other.differential(u)
                return da @ b[:, None] + a[:, None] @ db
        return MatrixMap(self.manifold, lambda u: self.evaluate(u) @ other.evaluate(u), self.size,
                         differential=diff, fd_step=min(self.fd_step, other.fd_step),
                         name=f"{self.name}*{other.name}")


@dataclass
class SphereMap:
    """A map from ``manifold`` into the unit sphere S^target_dim (ambient R^{target_dim+1})."""

    manifold: Manifold
    evaluate: Callable[[np.ndarray], np.ndarray]
    target_dim: int
    differential: Callable[[np.ndarray], np.ndarray] | None = None
    fd_step: float = 1e-5
    name: str = ""

    def value_and_partials(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if self.differential is not None:
            return np.asarray(self.evaluate(u), dtype=float), np.asarray(self.differential(u), dtype=float)
        return _partials_fd(self.evaluate, u, self.manifold.continuous, self.fd_step)


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass
class DegreeResult:
    raw: complex
    rounded: int
    residual: float
    error_estimate: float
    nodes: int
    wall_time: float
    rule: dict | None = None
    exact: bool = False
    method: str = "bott-fedosov"
    notes: list[str] = field(default_factory=list)

    @classmethod
    def from_raw(cls, raw: complex, error: float, nodes: int, wall: float, rule=None, method="bott-fedosov"):
        raw = complex(raw)
        rounded = round_half_away(raw.real)
        return cls(raw, rounded, abs(raw.real - rounded), float(error), int(nodes), float(wall),
                   rule, False, method)

    @classmethod
    def exact_zero(cls, method: str, why: str) -> "DegreeResult":
        return cls(0j, 0, 0.0, 0.0, 0, 0.0, None, True, method, [why])

    @property
    def imag_ok(self) -> bool:
        return abs(self.raw.imag) < IMAG_TOL * (1.0 + abs(self.raw))

    @property
    def conclusive(self) -> bool:
        return self.residual < RESIDUAL_FAIL and self.imag_ok

    @property
    def verdict_grade(self) -> bool:
        return self.residual < RESIDUAL_WARN and self.imag_ok

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "method": self.method,
            "raw": [self.raw.real, self.raw.imag],
            "rounded": self.rounded,
            "residual": self.residual,
            "errorEstimate": self.error_estimate if math.isfinite(self.error_estimate) else None,
            "nodes": self.nodes,
            "exact": self.exact,
            "conclusive": self.conclusive,
            "verdictGrade": self.verdict_grade,
        }
        if self.rule is not None:
            d["rule"] = self.rule
        if self.notes:
            d["notes"] = list(self.notes)
        if timing:
            d["wallTime"] = self.wall_time
        return d


class InconclusiveDegree(RuntimeError):
    def __init__(self, result: DegreeResult):
        self.result = result
        super().__init__(
            f"inconclusive: increase budget (raw={result.raw:.6g}, residual={result.residual:.3g}, "
            f"nodes={result.nodes})"
        )


def _emit(result: DegreeResult) -> DegreeResult:
    for cb in observers:
        cb(result)
    return result


# --------------------------------------------------------------------------
# exterior algebra


def maurer_cartan_coeffs(phi: MatrixMap, u) -> np.ndarray:
    """``phi^{-1} d_j phi`` for each continuous chart direction, shape (N, dim, l, l)."""
    val, dval = phi.value_and_partials(u)
    return _log_derivative(val, dval, np.atleast_2d(u))


def _log_derivative(val, dval, u) -> np.ndarray:
    try:
        out = np.linalg.solve(val[:, None], dval)
    except np.linalg.LinAlgError:
        bad = int(np.argmin(np.abs(np.linalg.det(val))))
        raise SingularMapError(u[bad]) from None
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(out), axis=(1, 2, 3)))[0])
        raise SingularMapError(u[bad])
    return out


def trace_odd_power(coeffs) -> np.ndarray:
    """Top coefficient of ``tr(omega^d)`` for ``omega = sum_j A_j du_j``, ``d`` odd.

    ``coeffs`` has shape (..., d, l, l).  For odd ``d`` a cyclic shift is an
    even permutation, so the trace is ``d`` times the alternating sum over
    orderings that start with ``A_0``; the remaining factors are multiplied
    in layer by layer, keyed by the set of directions already used.
    """
    A = np.asarray(coeffs)
    d = A.shape[-3]
    if d % 2 == 0:
        raise ValueError(f"need an odd number of one-form coefficients, got {d}")
    if d == 1:
        return np.trace(A[..., 0, :, :], axis1=-2, axis2=-1)
    layer = {0: A[..., 0, :, :]}
    # bit j-1 marks direction j (1 <= j < d)
    for _ in range(d - 2):
        nxt: dict[int, np.ndarray] = {}
        for mask, W in layer.items():
            for j in range(1, d):
                bit = 1 << (j - 1)
                if mask & bit:
                    continue
                term = W @ A[..., j, :, :]
                if bin(mask >> j).count("1") % 2:
                    term = -term
                key = mask | bit
                nxt[key] = nxt[key] + term if key in nxt else term
        layer = nxt
    total = 0
    for mask, W in layer.items():
        j = next(j for j in range(1, d) if not mask & (1 << (j - 1)))
        t = np.einsum("...ab,...ba->...", W, A[..., j, :, :])
        total = total - t if bin(mask >> j).count("1") % 2 else total + t
    return d * total


def trace_odd_power_permutations(coeffs) -> np.ndarray:
    """Reference: explicit sum over all d! orderings."""
    A = np.asarray(coeffs)
    d = A.shape[-3]
    total = 0
    for perm in itertools.permutations(range(d)):
        inv = sum(1 for a in range(d) for b in range(a + 1, d) if perm[a] > perm[b])
        prod = A[..., perm[0], :, :]
        for p in perm[1:]:
            prod = prod @ A[..., p, :, :]
        t = np.trace(prod, axis1=-2, axis2=-1)
        total = total - t if inv % 2 else total + t
    return total


def bott_fedosov_constant(v: int) -> complex:
    return -math.factorial(v - 1) / ((-2j * math.pi) ** v * math.factorial(2 * v - 1))


def bott_fedosov_integrand(phi: MatrixMap) -> Callable[[np.ndarray], np.ndarray]:
    dim = phi.manifold.dim
    if dim % 2 == 0:
        raise ValueError(f"Bott-Fedosov degree needs an odd-dimensional manifold, got dim {dim}")
    c = bott_fedosov_constant((dim + 1) // 2)
    if phi.core is not None:
        # the identity block contributes nothing; integrate the core
        phi = phi.core

    def form(u):
        return c * trace_odd_power(maurer_cartan_coeffs(phi, u))

    return form


COARSE_NODES = 8


def _finish(result: DegreeResult, strict: bool) -> DegreeResult:
    _emit(result)
    if strict and not result.conclusive:
        raise InconclusiveDegree(result)
    return result


def _integrate_degree(form, manifold, rule, scale, method, auto_refine) -> DegreeResult:
    rule = (rule or QuadratureRule()).resolve(manifold)
    t0 = time.perf_counter()
    res = integrate_top_form(form, manifold, rule)
    out = DegreeResult.from_raw(res.value * scale, res.error * abs(scale), res.nodes,
                                time.perf_counter() - t0, rule.to_dict(), method)
    if auto_refine and out.residual >= RESIDUAL_WARN:
        log.warning("%s degree residual %.3g >= %.2g; doubling the budget", method, out.residual, RESIDUAL_WARN)
        rule = rule.refined()
        res = integrate_top_form(form, manifold, rule)
        out = DegreeResult.from_raw(res.value * scale, res.error * abs(scale), out.nodes + res.nodes,
                                    time.perf_counter() - t0, rule.to_dict(), method)
        out.notes.append("budget doubled after residual warning")
    if rule.kind == "product" and min(np.atleast_1d(rule.nodes)) < COARSE_NODES:
        out.notes.append(f"fewer than {COARSE_NODES} nodes per axis: the rounded value is not reliable")
    return out


def bott_fedosov_degree(phi: MatrixMap, rule: QuadratureRule | None = None, *, strict: bool = True,
                        auto_refine: bool = True) -> DegreeResult:
    """``const * integral tr(phi^{-1} dphi)^{2v-1}`` rounded to the nearest integer.

    Raises ``InconclusiveDegree`` (unless ``strict=False``) when the raw
    value is not within 0.5 of an integer or has a non-negligible imaginary
    part.
    """
    if phi.identically_identity:
        return _finish(DegreeResult.exact_zero("bott-fedosov", "map is identically Id; integrand vanishes"), strict)
    out = _integrate_degree(bott_fedosov_integrand(phi), phi.manifold, rule, 1.0, "bott-fedosov", auto_refine)
    return _finish(out, strict)


def brouwer_degree(f: SphereMap, rule: QuadratureRule | None = None, *, strict: bool = True,
                   auto_refine: bool = True) -> DegreeResult:
    """Brouwer degree as ``(1/vol S^d) * integral f^* vol``."""
    d = f.target_dim
    if f.manifold.dim != d:
        raise ValueError(f"source dimension {f.manifold.dim} differs from target dimension {d}")

    def form(u):
        val, dval = f.value_and_partials(u)
        frame = np.concatenate([val[:, None, :], dval], axis=1)
        return np.linalg.det(frame)

    out = _integrate_degree(form, f.manifold, rule, 1.0 / sphere_volume(d), "brouwer", auto_refine)
    return _finish(out, strict)


def _check_unitary(phi: MatrixMap, u, tol=1e-8):
    val = phi(u)
    gap = np.abs(val @ np.conj(np.swapaxes(val, -1, -2)) - np.eye(phi.size)).max(axis=(-1, -2))
    if np.any(gap > tol):
        bad = int(np.argmax(gap))
        raise ValueError(f"map is not U({phi.size})-valued at chart point {u[bad]} (defect {gap[bad]:.3g})")


def degree_prime(phi: MatrixMap, rule: QuadratureRule | None = None, *, strict: bool = True,
                 auto_refine: bool = True) -> DegreeResult:
    """Brouwer degree of the first column divided by ``(v-1)!``.

    Only maps that already take values in ``U(v)``, ``2v - 1 = dim``, are
    accepted; the first column is read in ``C^v = R^{2v}`` as
    ``(Re z_1, Im z_1, Re z_2, ...)``.
    """
    dim = phi.manifold.dim
    if dim % 2 == 0:
        raise ValueError("degree_prime needs an odd-dimensional manifold")
    v = (dim + 1) // 2
    if phi.size != v:
        raise ValueError(f"degree_prime needs U({v})-valued maps, got size {phi.size}")
    rule = (rule or QuadratureRule()).resolve(phi.manifold)

    def column(val):
        c = val[..., :, 0]
        return np.stack([c.real, c.imag], axis=-1).reshape(c.shape[:-1] + (2 * v,))

    checked = []

    def ev(u):
        val = phi(u)
        if not checked:
            _check_unitary(phi, u)
            checked.append(True)
        return column(val)

    diff = None
    if phi.differential is not None:
        diff = lambda u: column(np.asarray(phi.differential(u), dtype=complex))  # noqa: E731
    first = SphereMap(phi.manifold, ev, 2 * v - 1, differential=diff, fd_step=phi.fd_step,
                      name=f"col1({phi.name})")
    b = brouwer_degree(first, rule, strict=strict, auto_refine=auto_refine)
    fact = math.factorial(v - 1)
    if b.conclusive and b.rounded % fact:
        raise ValueError(f"Brouwer degree {b.rounded} of the first column is not divisible by {fact}")
    out = DegreeResult.from_raw(b.raw / fact, b.error_estimate / fact, b.nodes, b.wall_time, b.rule,
                                "degree-prime")
    return _finish(out, strict)
