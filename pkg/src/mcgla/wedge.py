"""The rank-16 exterior algebra on theta_0..theta_3.

Basis monomials are bitmasks: bit a set means theta_a is a factor, and the
factors are always listed in increasing index order.
"""
from __future__ import annotations

from itertools import combinations

from .scalar import Q, RingError

ETA = (-1, 1, 1, 1)
ALL = 0b1111


def bits(mask: int) -> tuple:
    return tuple(a for a in range(4) if mask >> a & 1)


def mask_of(idx) -> int:
    m = 0
    for a in idx:
        m |= 1 << a
    return m


def degree(mask: int) -> int:
    return bin(mask).count("1")


def basis(m: int | None = None) -> list[int]:
    """Masks of the given degree (all 16 if None), ordered by degree then lexicographically."""
    degs = range(5) if m is None else [m]
    out = []
    for d in degs:
        out.extend(mask_of(c) for c in combinations(range(4), d))
    return out


def mono_sign(a: int, b: int) -> int:
    """Sign of theta_a theta_b relative to the sorted monomial; 0 if they share a factor."""
    if a & b:
        return 0
    s = 0
    for x in bits(b):
        s += degree(a >> (x + 1))
    return -1 if s & 1 else 1


def sorted_sign(idx) -> tuple[int, int]:
    """(sign, mask) of the ordered product theta_{i1}...theta_{ik}."""
    idx = list(idx)
    if len(set(idx)) < len(idx):
        return 0, 0
    sign = 1
    for i in range(len(idx)):
        for j in range(i + 1, len(idx)):
            if idx[i] > idx[j]:
                sign = -sign
    return sign, mask_of(idx)


def mono_str(mask: int) -> str:
    if not mask:
        return "1"
    return "".join(f"θ{a}" for a in bits(mask))


class WedgeElement:
    """Element of the exterior algebra with coefficients in a scalar backend."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: dict | None = None):
        self.coeffs = {m: c for m, c in (coeffs or {}).items() if not _is_zero(c)}

    @classmethod
    def theta(cls, a: int, coef=1) -> "WedgeElement":
        return cls({1 << a: coef})

    @classmethod
    def mono(cls, idx, coef=1) -> "WedgeElement":
        s, m = sorted_sign(idx)
        return cls({m: coef * s} if s else {})

    def __add__(self, o: "WedgeElement") -> "WedgeElement":
        out = dict(self.coeffs)
        for m, c in o.coeffs.items():
            out[m] = out[m] + c if m in out else c
        return WedgeElement(out)

    def __neg__(self) -> "WedgeElement":
        return WedgeElement({m: -c for m, c in self.coeffs.items()})

    def __sub__(self, o: "WedgeElement") -> "WedgeElement":
        return self + (-o)

    def scale(self, c) -> "WedgeElement":
        return WedgeElement({m: v * c for m, v in self.coeffs.items()})

    def __eq__(self, o) -> bool:
        return isinstance(o, WedgeElement) and (self - o).coeffs == {}

    def degrees(self) -> set:
        return {degree(m) for m in self.coeffs}

    def is_zero(self) -> bool:
        return not self.coeffs

    def __repr__(self) -> str:
        if not self.coeffs:
            return "0"
        return " + ".join(f"({c})*{mono_str(m)}" for m, c in sorted(self.coeffs.items(), key=lambda t: (degree(t[0]), t[0])))


def _is_zero(c) -> bool:
    if hasattr(c, "is_zero"):
        return c.is_zero()
    return c == 0


def _check_backend(a: WedgeElement, b: WedgeElement) -> None:
    ra = {getattr(c, "ring", None) for c in a.coeffs.values()} - {None}
    rb = {getattr(c, "ring", None) for c in b.coeffs.values()} - {None}
    if len(ra | rb) > 1:
        raise RingError("backend mismatch")


def wedge(a: WedgeElement, b: WedgeElement) -> WedgeElement:
    """Exterior product."""
    _check_backend(a, b)
    out: dict = {}
    for ma, ca in a.coeffs.items():
        for mb, cb in b.coeffs.items():
            s = mono_sign(ma, mb)
            if not s:
                continue
            v = ca * cb if s > 0 else -(ca * cb)
            m = ma | mb
            out[m] = out[m] + v if m in out else v
    return WedgeElement(out)


# basis Hodge dual: theta_0 -> theta_1 theta_2 theta_3, theta_1 -> theta_0 theta_2 theta_3,
# theta_2 -> theta_0 theta_3 theta_1, theta_3 -> theta_0 theta_1 theta_2
HODGE_WORDS = {0: (1, 2, 3), 1: (0, 2, 3), 2: (0, 3, 1), 3: (0, 1, 2)}
HODGE = {a: sorted_sign(w) for a, w in HODGE_WORDS.items()}  # a -> (sign, mask)


def hodge_dual(w: WedgeElement) -> WedgeElement:
    if w.degrees() - {1}:
        raise ValueError("hodge_dual needs a degree-1 element")
    out = WedgeElement()
    for m, c in w.coeffs.items():
        a = bits(m)[0]
        s, mm = HODGE[a]
        out = out + WedgeElement({mm: c if s > 0 else -c})
    return out


def sigma_matrix(a: int, b: int | None = None) -> list[list[int]]:
    """Matrix M with sigma(theta_c) = sum_r M[r][c] theta_r.

    ``sigma_matrix(0)`` is sigma_0 (the identity); ``sigma_matrix(a, b)`` is
    sigma_ab with sigma_ab theta_c = eta_bc theta_a - eta_ac theta_b.
    """
    M = [[0] * 4 for _ in range(4)]
    if b is None:
        for r in range(4):
            M[r][r] = 1
        return M
    for c in range(4):
        if b == c:
            M[a][c] += ETA[b]
        if a == c:
            M[b][c] -= ETA[a]
    return M


def act_linear(M, mask: int) -> dict:
    """Extend theta_c -> sum_r M[r][c] theta_r as a degree-0 derivation on a monomial.

    Returns {mask: integer coefficient}.
    """
    out: dict = {}
    idx = bits(mask)
    for pos, c in enumerate(idx):
        for r in range(4):
            v = M[r][c]
            if not v:
                continue
            word = idx[:pos] + (r,) + idx[pos + 1:]
            s, m = sorted_sign(word)
            if s:
                out[m] = out.get(m, 0) + s * v
    return {m: v for m, v in out.items() if v}


def inner(u, v) -> Q:
    """Conformal inner product eta on coefficient vectors (a^0..a^3)."""
    return sum(Q(ETA[i]) * u[i] * v[i] for i in range(4))


def in_future_cone(a) -> bool:
    """Constant-coefficient W_+ test: a^0 > 0 and eta(a, a) < 0."""
    a = [_as_rational(x) for x in a]
    return a[0] > 0 and inner(a, a) < 0


def _as_rational(x):
    if hasattr(x, "constant_value"):
        return x.constant_value()
    return Q(x)


def der_rank(i: int) -> int:
    """Rank of degree-i derivations of the exterior algebra over the scalars."""
    from math import comb

    return 4 * comb(4, i + 1) + 4 * comb(4, i)
