"""Orders of the stable J-groups and the divisibility test for bifurcation.

Only the orders enter the criterion: for ``q = 4s`` the group ``J(S^q)`` is
cyclic of order ``m(2s)`` where ``m`` is Adams' number-theoretic function.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

__all__ = [
    "JGroupInfo",
    "Verdict",
    "adams_m",
    "is_prime",
    "jgroup_info",
    "n_of_q",
    "nu_p",
    "verdict",
]


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    d = 3
    while d * d <= p:
        if p % d == 0:
            return False
        d += 2
    return True


def nu_p(p: int, n: int) -> int:
    """Exponent of the prime ``p`` in ``n``."""
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    e = 0
    while n % p == 0:
        n //= p
        e += 1
    return e


def adams_m(s: int) -> int:
    """Adams' function m(s).

    The 2-adic exponent is ``2 + nu_2(s)`` for even ``s`` and 1 otherwise; an
    odd prime ``p`` appears with exponent ``1 + nu_p(s)`` exactly when
    ``(p - 1) | s``, so only primes ``p <= s + 1`` contribute.
    """
    if s < 1:
        raise ValueError(f"m(s) is defined for s >= 1, got {s}")
    result = 2 ** (2 + nu_p(2, s)) if s % 2 == 0 else 2
    for p in range(3, s + 2, 2):
        if s % (p - 1) == 0 and is_prime(p):
            result *= p ** (1 + nu_p(p, s))
    return result


def _check_q(q: int) -> None:
    if q < 4 or q % 8 not in (0, 4):
        raise ValueError(
            f"q={q} is not admissible: the bifurcation criterion needs q >= 4 "
            "with q = 0 or 4 mod 8"
        )


def n_of_q(q: int) -> int:
    _check_q(q)
    m = adams_m(q // 2)
    return m if q % 8 == 0 else 2 * m


@dataclass(frozen=True)
class JGroupInfo:
    q: int
    s: int
    m: int  # m(q/2)
    n: int  # n(q)
    j_order: int  # |J(S^q)| = m(2s)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["jOrder"] = d.pop("j_order")
        return d


def jgroup_info(q: int) -> JGroupInfo:
    _check_q(q)
    s = q // 4
    m = adams_m(q // 2)
    return JGroupInfo(q=q, s=s, m=m, n=n_of_q(q), j_order=adams_m(2 * s))


@dataclass(frozen=True)
class Verdict:
    bifurcates: bool
    mu: int
    q: int
    n: int
    residue: int

    @property
    def conclusion(self) -> str:
        # divisibility gives no information either way
        return "bifurcates" if self.bifurcates else "no conclusion"

    def to_dict(self) -> dict:
        return {
            "bifurcates": self.bifurcates,
            "conclusion": self.conclusion,
            "witness": {"mu": self.mu, "n": self.n, "mu_mod_n": self.residue},
            "q": self.q,
        }


def verdict(mu: int, q: int) -> Verdict:
    n = n_of_q(q)
    residue = int(mu) % n
    return Verdict(bifurcates=residue != 0, mu=int(mu), q=q, n=n, residue=residue)
