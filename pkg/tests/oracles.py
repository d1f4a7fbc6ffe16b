"""Independent reference computations used by the tests.

Nothing here imports the package's numerical code.  Frozen tables at the
bottom were produced by these functions and are checked against them in
``test_oracles.py``.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


# ---------------------------------------------------------------- number theory


def bernoulli(N: int) -> list[Fraction]:
    """B_0..B_N from the standard recurrence (B_1 = -1/2)."""
    B = [Fraction(1)]
    for n in range(1, N + 1):
        B.append(-sum(math.comb(n + 1, k) * B[k] for k in range(n)) / (n + 1))
    return B


def m_from_bernoulli(s: int) -> int:
    """m(s) = 2 for odd s, denominator of B_s / (2s) for even s."""
    if s % 2:
        return 2
    return (bernoulli(s)[s] / (2 * s)).denominator


def m_brute_force(s: int, prime_bound: int = 200) -> int:
    """The prime-by-prime definition, looping over every prime below ``prime_bound``."""
    primes = [p for p in range(2, prime_bound) if all(p % d for d in range(2, int(p**0.5) + 1))]

    def nu(p, n):
        e = 0
        while n % p == 0:
            n //= p
            e += 1
        return e

    out = 1
    for p in primes:
        if p == 2:
            e = 2 + nu(2, s) if s % 2 == 0 else 1
        else:
            e = 1 + nu(p, s) if s % (p - 1) == 0 else 0
        out *= p**e
    return out


# ---------------------------------------------------------------- degrees


def winding_by_argument(values: np.ndarray) -> int:
    """Winding number of a closed sampled loop in C minus 0 by unwrapping its argument."""
    ang = np.unwrap(np.angle(np.append(values, values[:1])))
    return int(round((ang[-1] - ang[0]) / (2 * math.pi)))


def permutation_trace(A: np.ndarray) -> complex:
    """sum over orderings sign(perm) tr(A_perm0 ... A_perm(d-1)), for one point (d, l, l)."""
    d = A.shape[0]
    total = 0j
    for perm in itertools.permutations(range(d)):
        sign = 1
        for i in range(d):
            for j in range(i + 1, d):
                if perm[i] > perm[j]:
                    sign = -sign
        prod = np.eye(A.shape[1], dtype=complex)
        for p in perm:
            prod = prod @ A[p]
        total += sign * np.trace(prod)
    return total


def su2_linear_degree() -> int:
    """Degree of x -> x0 + i x.sigma, read as a linear map R^4 -> R^4.

    An element [[a, -conj(b)], [b, conj(a)]] of SU(2) is identified with
    (Re a, Im a, Re b, Im b); a linear isometry of S^3 has degree det = +-1.
    """
    sig = [np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.array([[1, 0], [0, -1]])]
    cols = []
    for e in np.eye(4):
        U = e[0] * np.eye(2) + 1j * sum(e[j + 1] * sig[j] for j in range(3))
        a, b = U[0, 0], U[1, 0]
        cols.append([a.real, a.imag, b.real, b.imag])
    return int(round(np.linalg.det(np.array(cols).T)))


# ---------------------------------------------------------------- polynomials


def laplacian_power_charpoly(xi_norm: float, m: int, l: int) -> np.ndarray:
    """Coefficients of (nu^2 + |xi'|^2)^{lm}, highest power first."""
    poly = np.array([1.0])
    for _ in range(l * m):
        poly = np.polymul(poly, [1.0, 0.0, xi_norm**2])
    return poly


def det_poly_roots(P: np.ndarray) -> np.ndarray:
    """Roots of det(sum_j P_j nu^j) via sampling and a Vandermonde solve.

    ``P`` has shape (k+1, m, m); the determinant has degree km.
    """
    k, m = P.shape[0] - 1, P.shape[1]
    deg = k * m
    nodes = np.exp(2j * math.pi * np.arange(deg + 1) / (deg + 1)) * 1.3
    vals = np.array([np.linalg.det(sum(P[j] * z**j for j in range(k + 1))) for z in nodes])
    coeffs = np.linalg.solve(np.vander(nodes, deg + 1), vals)
    return np.roots(coeffs)


# ---------------------------------------------------------------- expressions

#: exp(-lambda1^2) * sin(x1), hand-evaluated at five points (lambda1, x1)
EXPR_TABLE = [
    ((0.0, 0.0), 0.0),
    ((0.0, math.pi / 2), 1.0),
    ((1.0, math.pi / 2), math.exp(-1.0)),
    ((2.0, math.pi / 6), 0.5 * math.exp(-4.0)),
    ((-0.5, -math.pi / 2), -math.exp(-0.25)),
]


# ---------------------------------------------------------------- frozen tables

#: m(s), s = 1..12 (frozen from ``m_from_bernoulli``)
ADAMS_M = [2, 24, 2, 240, 2, 504, 2, 480, 2, 264, 2, 65520]
#: n(q) for q = 4, 8, 12 (twice m(q/2) when q = 4 mod 8)
N_OF_Q = {4: 48, 8: 240, 12: 1008}
#: orders of J(S^q) for q = 4s: m(2s)
J_ORDER = {4: 24, 8: 240, 12: 504}
