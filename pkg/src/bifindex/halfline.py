"""Half-line problems at boundary cotangent points.

At ``(lambda, x', xi')`` the interior symbol restricted to the collar gives
the ODE ``p(lambda, x', xi', D_t) v = 0`` with ``D_t = -i d/dt``.  In the jet
``w = (v, D_t v, ..., D_t^{k-1} v)`` it reads ``D_t w = A w``; solutions
``e^{i nu t}`` decay for ``Im nu > 0``, so ``M^+`` is the invariant subspace
of ``A`` for eigenvalues in the upper half-plane.

Two routes to ``M^+`` are provided: ordered complex Schur form (per point)
and the matrix sign function of ``-iA`` (batched Newton iteration).  Both
feed the same basis-independent quantities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .degree import MatrixMap
from .manifolds import Product, Sphere
from .symbols import (
    INFINITY,
    BoundarySymbol,
    CheckReport,
    SamplingPlan,
    SymbolFamily,
    lambda_from_sphere,
    sphere_from_lambda,
)

__all__ = [
    "BoundaryMap",
    "CompanionSystem",
    "H3Violation",
    "NotNormalError",
    "ProperEllipticityError",
    "RootSplit",
    "ShapiroLopatinskijError",
    "StableSubspace",
    "apply_boundary_map",
    "boundary_matrix",
    "build_companion",
    "build_tau",
    "check_collar_independence",
    "check_shapiro_lopatinskij",
    "companion_batch",
    "split_roots",
    "stable_basis_batch",
    "stable_subspace",
]

SL_COND_MAX = 1e8


class NotNormalError(np.linalg.LinAlgError):
    pass


class ProperEllipticityError(ValueError):
    pass


class ShapiroLopatinskijError(ValueError):
    pass


class H3Violation(ValueError):
    pass


def _point(family, y, chart, xi) -> dict:
    lam, pole = lambda_from_sphere(np.atleast_2d(y))
    return {
        "lambda": "infinity" if pole[0] else [float(v) for v in lam[0]],
        "x'": [float(v) for v in np.atleast_1d(chart)],
        "xi'": [float(v) for v in np.atleast_1d(xi)],
    }


def _param(lam, q) -> np.ndarray:
    if not isinstance(lam, str):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
    return np.atleast_2d(sphere_from_lambda(lam, q))


def collar_covectors(family: SymbolFamily, chart: np.ndarray, xi: np.ndarray):
    """Boundary points, tangential covectors ``xi' . T`` and inner conormals."""
    chart = np.atleast_2d(chart)
    xi = np.atleast_2d(xi)
    X = family.domain.boundary_point(chart)
    T, eta = family.domain.boundary_frame(chart)
    return X, np.einsum("na,nai->ni", xi, T), eta


def conormal_coefficients(family: SymbolFamily, y, chart, xi) -> np.ndarray:
    """``P_j`` with ``p(y, x', xi' + nu * eta) = sum_j P_j nu^j``, shape (N, k+1, m, m)."""
    X, tang, eta = collar_covectors(family, chart, xi)
    y = np.broadcast_to(np.atleast_2d(y), (len(X), family.q + 1))
    return family.interior.conormal_polynomial(y, X, tang, eta)


def companion_from_coefficients(P: np.ndarray) -> np.ndarray:
    N, kp1, m, _ = P.shape
    k = kp1 - 1
    lead = P[:, k]
    cond = np.linalg.cond(lead)
    if np.any(~np.isfinite(cond) | (cond > 1e12)):
        raise NotNormalError("not normal with respect to the conormal: leading coefficient is singular")
    low = np.linalg.solve(lead[:, None], P[:, :k])  # (N, k, m, m)
    A = np.zeros((N, k * m, k * m), dtype=complex)
    for j in range(k - 1):
        A[:, j * m : (j + 1) * m, (j + 1) * m : (j + 2) * m] = np.eye(m)
    for j in range(k):
        A[:, (k - 1) * m :, j * m : (j + 1) * m] = -low[:, j]
    return A


def companion_batch(family: SymbolFamily, y, chart, xi) -> np.ndarray:
    return companion_from_coefficients(conormal_coefficients(family, y, chart, xi))


@dataclass
class CompanionSystem:
    A: np.ndarray  # (km, km)
    leading: np.ndarray  # (m, m)
    k: int
    m: int
    xi_norm: float
    where: dict

    @property
    def roots(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)


@dataclass
class RootSplit:
    upper: int
    lower: int
    min_abs_im: float

    @property
    def total(self) -> int:
        return self.upper + self.lower


@dataclass
class StableSubspace:
    basis: np.ndarray  # (km, r), orthonormal columns

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def invariance_residual(self, A: np.ndarray) -> float:
        V = self.basis
        AV = A @ V
        return float(np.linalg.norm(AV - V @ (V.conj().T @ AV), 2))


@dataclass
class BoundaryMap:
    matrix: np.ndarray  # (r, r)

    @property
    def cond(self) -> float:
        return float(np.linalg.cond(self.matrix))


def build_companion(family: SymbolFamily, lam, chart, xi) -> CompanionSystem:
    y = _param(lam, family.q)
    chart = np.atleast_2d(np.asarray(chart, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    P = conormal_coefficients(family, y, chart, xi)
    try:
        A = companion_from_coefficients(P)
    except NotNormalError as exc:
        raise NotNormalError(f"{exc} at {_point(family, y, chart[0], xi[0])}") from None
    return CompanionSystem(A[0], P[0, -1], family.k, family.m, float(np.linalg.norm(xi[0])),
                           _point(family, y, chart[0], xi[0]))


def _axis_tol(tol: float | None, xi_norm: float, k: int) -> float:
    return 1e-8 * (1.0 + xi_norm) ** k if tol is None else tol


def split_roots(cs: CompanionSystem, tol: float | None = None) -> RootSplit:
    nu = cs.roots
    tol = _axis_tol(tol, cs.xi_norm, cs.k)
    min_im = float(np.min(np.abs(nu.imag)))
    if min_im < tol:
        raise ProperEllipticityError(
            f"root on real axis: not properly elliptic (or degenerate sample) at {cs.where}; min |Im nu| = {min_im:.3g}"
        )
    up = int(np.sum(nu.imag > 0))
    return RootSplit(up, len(nu) - up, min_im)


def stable_subspace(cs: CompanionSystem, tol: float | None = None) -> StableSubspace:
    """Orthonormal basis of ``M^+`` from the ordered complex Schur form."""
    split = split_roots(cs, tol)
    r = cs.A.shape[0] // 2
    _, Z, sdim = scipy.linalg.schur(cs.A, output="complex", sort=lambda z: z.imag > 0)
    if sdim != r or split.upper != r:
        raise ProperEllipticityError(f"stable subspace has dimension {sdim}, expected r = {r}, at {cs.where}")
    return StableSubspace(Z[:, :sdim])


def _sign_newton(X: np.ndarray, tol: float = 1e-14, max_iter: int = 100) -> np.ndarray:
    """Newton iteration for the matrix sign function, determinant-scaled while far from converged."""
    n = X.shape[-1]
    delta = np.full(len(X), np.inf)
    for _ in range(max_iter):
        Xi = np.linalg.inv(X)
        _, logdet = np.linalg.slogdet(X)
        c = np.where(delta > 1e-2, np.exp(-logdet / n), 1.0)[:, None, None]
        Xn = 0.5 * (c * X + Xi / c)
        delta = np.linalg.norm(Xn - X, axis=(-2, -1)) / np.linalg.norm(Xn, axis=(-2, -1))
        X = Xn
        if np.all(delta < tol):
            break
    return X


_PROBE_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _probe(km: int, r: int) -> np.ndarray:
    key = (km, r)
    if key not in _PROBE_CACHE:
        rng = np.random.default_rng(20240601 + km * 131 + r)
        Z = rng.standard_normal((km, r)) + 1j * rng.standard_normal((km, r))
        _PROBE_CACHE[key] = np.linalg.qr(Z)[0]
    return _PROBE_CACHE[key]


def stable_basis_batch(A: np.ndarray, r: int, method: str = "sign") -> np.ndarray:
    """Orthonormal bases of ``M^+`` for a stack of companion matrices, shape (N, km, r).

    ``method="sign"`` projects a fixed probe with ``(I + sign(-iA)) / 2``;
    ``method="schur"`` loops over ordered Schur forms.
    """
    N, km, _ = A.shape
    if method == "schur":
        out = np.empty((N, km, r), dtype=complex)
        for i in range(N):
            _, Z, sdim = scipy.linalg.schur(A[i], output="complex", sort=lambda z: z.imag > 0)
            if sdim != r:
                raise ProperEllipticityError(f"stable subspace has dimension {sdim}, expected {r}")
            out[i] = Z[:, :r]
        return out
    if method != "sign":
        raise ValueError(f"unknown method {method!r}")
    S = _sign_newton(-1j * A)
    P = 0.5 * (np.eye(km) + S)
    trace = np.trace(P, axis1=-2, axis2=-1).real
    if np.any(np.abs(trace - r) > 1e-6):
        bad = int(np.argmax(np.abs(trace - r)))
        raise ProperEllipticityError(f"stable subspace has dimension {trace[bad]:.3f}, expected {r}")
    V, R = np.linalg.qr(P @ _probe(km, r))
    diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    if np.any(diag.min(axis=-1) < 1e-8 * diag.max(axis=-1)):
        raise ProperEllipticityError("probe is degenerate for the stable projector")
    return V


def jet_rows(A: np.ndarray, m: int, K: int) -> np.ndarray:
    """``E_0 A^j`` for ``j = 0..K``: the map from Cauchy data to ``D_t^j v(0)``, shape (N, K+1, m, km)."""
    N, km, _ = A.shape
    out = np.empty((N, K + 1, m, km), dtype=complex)
    cur = np.zeros((N, m, km), dtype=complex)
    cur[:, :, :m] = np.eye(m)
    out[:, 0] = cur
    for j in range(1, K + 1):
        cur = cur @ A
        out[:, j] = cur
    return out


def boundary_matrix(boundary: BoundarySymbol, y, chart, xi, jets: np.ndarray) -> np.ndarray:
    """Rows ``sum_j p_b^{ij} E_0 A^j``, shape (N, r, km)."""
    coeff = boundary(np.atleast_2d(y), chart, xi)  # (N, r, K+1, m)
    return np.einsum("nrjc,njck->nrk", coeff, jets)


def apply_boundary_map(family: SymbolFamily, lam, chart, xi, M: StableSubspace,
                       cs: CompanionSystem | None = None) -> BoundaryMap:
    cs = cs or build_companion(family, lam, chart, xi)
    y = _param(lam, family.q)
    jets = jet_rows(cs.A[None], family.m, family.boundary.max_order)
    B = boundary_matrix(family.boundary, y, np.atleast_2d(chart), np.atleast_2d(xi), jets)
    return BoundaryMap(B[0] @ M.basis)


def check_shapiro_lopatinskij(family: SymbolFamily, lam, chart, xi, threshold: float = SL_COND_MAX,
                              raise_on_fail: bool = False) -> CheckReport:
    cs = build_companion(family, lam, chart, xi)
    M = stable_subspace(cs)
    b = apply_boundary_map(family, lam, chart, xi, M, cs)
    cond = b.cond
    ok = bool(np.isfinite(cond) and cond < threshold)
    if raise_on_fail and not ok:
        raise ShapiroLopatinskijError(f"Shapiro-Lopatinskij condition fails at {cs.where} (cond {cond:.3g})")
    return CheckReport("shapiro-lopatinskij", ok, cond, threshold, 1, worst=cs.where)


def sl_condition_batch(family: SymbolFamily, y, chart, xi, method: str = "sign") -> np.ndarray:
    """Condition numbers of ``b`` at many boundary samples."""
    A = companion_batch(family, y, chart, xi)
    V = stable_basis_batch(A, family.r, method)
    jets = jet_rows(A, family.m, family.boundary.max_order)
    b = boundary_matrix(family.boundary, y, chart, xi, jets) @ V
    return np.linalg.cond(b)


def check_collar_independence(family: SymbolFamily, plan: SamplingPlan | None = None, tol: float = 1e-12) -> CheckReport:
    """H3: the conormal polynomial at the boundary does not depend on lambda."""
    if not family.interior.lambda_dependent:
        return CheckReport("collar-independence", True, 0.0, tol, 0, note="interior symbol is lambda-independent")
    y, chart, xi = (plan or SamplingPlan()).boundary(family)
    pole = np.broadcast_to(sphere_from_lambda(INFINITY, family.q), y.shape)
    P = conormal_coefficients(family, y, chart, xi)
    Pinf = conormal_coefficients(family, pole, chart, xi)
    gap = np.max(np.abs(P - Pinf), axis=(1, 2, 3)) / (1.0 + np.max(np.abs(Pinf), axis=(1, 2, 3)))
    i = int(np.argmax(gap))
    return CheckReport("collar-independence", bool(gap[i] < tol), float(gap[i]), tol, len(gap),
                       worst=_point(family, y[i], chart[i], xi[i]))


def build_tau(family: SymbolFamily, alt_boundary: BoundarySymbol | None = None, *, method: str = "sign",
              plan: SamplingPlan | None = None, fd_step: float = 1e-5) -> MatrixMap:
    """``tau = (B(lambda) V)(B(infinity) V)^{-1}`` over ``S^q x S(Gamma)``.

    With ``alt_boundary`` the second factor is ``B_-(lambda) V`` instead.
    Requires the interior symbol to be lambda-independent on the collar,
    so that one stable basis serves every parameter value; the differential
    reuses that basis along the parameter directions.
    """
    h3 = check_collar_independence(family, plan)
    if not h3.passed:
        raise H3Violation(f"interior symbol depends on lambda on the collar (gap {h3.value:.3g} at {h3.worst})")
    q, m, r = family.q, family.m, family.r
    manifold = Product([Sphere(q), family.domain.sphere_bundle])
    if alt_boundary is None and not family.boundary.lambda_dependent:
        eye = np.eye(r, dtype=complex)
        return MatrixMap(manifold, lambda u: np.broadcast_to(eye, (len(u), r, r)).copy(), r,
                         differential=lambda u: np.zeros((len(u), manifold.dim, r, r), dtype=complex),
                         identically_identity=True, name="tau(Id)")
    if alt_boundary is not None and (alt_boundary.rows != r or alt_boundary.size != m):
        raise ValueError("alternative boundary family has the wrong shape")
    sq = Sphere(q)
    pole = sphere_from_lambda(INFINITY, q)
    K = max(family.boundary.max_order, alt_boundary.max_order if alt_boundary else 0)

    def parts(u):
        pieces = manifold.split(u)
        y = sq.embed(pieces[0])
        chart = pieces[1]
        xi = manifold.factors[-1].embed(pieces[-1])
        return y, chart, xi

    def frame(chart, xi):
        A = companion_batch(family, np.broadcast_to(pole, (len(chart), q + 1)), chart, xi)
        V = stable_basis_batch(A, r, method)
        return jet_rows(A, m, K) @ V[:, None]  # (N, K+1, m, r)

    def denominator(y, chart, xi, JV):
        if alt_boundary is None:
            yy = np.broadcast_to(pole, y.shape)
            return np.einsum("nrjc,njcs->nrs", family.boundary(yy, chart, xi), JV)
        return np.einsum("nrjc,njcs->nrs", alt_boundary(y, chart, xi), JV)

    def tau_from(y, chart, xi, JV, den=None):
        num = np.einsum("nrjc,njcs->nrs", family.boundary(y, chart, xi), JV)
        den = denominator(y, chart, xi, JV) if den is None else den
        # tau = num den^{-1}  <=>  tau^T = den^{-T} num^T
        return np.swapaxes(np.linalg.solve(np.swapaxes(den, -1, -2), np.swapaxes(num, -1, -2)), -1, -2)

    def ev(u):
        y, chart, xi = parts(u)
        return tau_from(y, chart, xi, frame(chart, xi))

    nq = sq.n_coords
    cont = manifold.continuous

    def jet(u):
        u = np.atleast_2d(u)
        N = len(u)
        y, chart, xi = parts(u)
        JV = frame(chart, xi)
        den = denominator(y, chart, xi, JV) if alt_boundary is None else None
        val = tau_from(y, chart, xi, JV, den)
        dirs = np.flatnonzero(cont)
        dval = np.empty((N, len(dirs), r, r), dtype=complex)
        other = []
        for a, j in enumerate(dirs):
            if j < nq:
                up, dn = u.copy(), u.copy()
                up[:, j] += fd_step
                dn[:, j] -= fd_step
                yp, ym = sq.embed(up[:, :nq]), sq.embed(dn[:, :nq])
                dval[:, a] = (tau_from(yp, chart, xi, JV, den) - tau_from(ym, chart, xi, JV, den)) / (2 * fd_step)
            else:
                other.append((a, j))
        if other:
            stacked = np.repeat(u[None], 2 * len(other), axis=0)
            for b, (_, j) in enumerate(other):
                stacked[2 * b, :, j] += fd_step
                stacked[2 * b + 1, :, j] -= fd_step
            vals = ev(stacked.reshape(-1, u.shape[-1])).reshape(2 * len(other), N, r, r)
            for b, (a, _) in enumerate(other):
                dval[:, a] = (vals[2 * b] - vals[2 * b + 1]) / (2 * fd_step)
        return val, dval

    return MatrixMap(manifold, ev, r, fd_step=fd_step, jet=jet, name=f"tau({family.name})")
