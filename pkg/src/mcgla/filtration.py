"""The N^3 grading of E_Phi, its filtration, the Rees algebra and the associated graded.

A :class:`FilteredSeries` stores ``alpha -> x_alpha`` and stands for the formal
sum of ``x_alpha s^alpha``.  The stored coefficients never contain the ``s_i``
atoms themselves; for the ``"pp"`` flag they do contain the damping factors,
so that ``x_alpha`` is ``exp(-alpha.p tau)`` times a polynomial in ``tau``
with spatial coefficients.
"""
from __future__ import annotations

from itertools import product

from .gla import GlaElement, bracket, from_json as gla_from_json, get_algebra, to_json as gla_to_json
from .scalar import DAMP, SPAR, Expr, _svec

REES, GRADED, PP = "rees", "graded", "pp"
FLAGS = (REES, GRADED, PP)


class FiltrationError(ValueError):
    """A series violates its flag, or flags do not match."""


# -- multi-indices ----------------------------------------------------------


def leq(a, b) -> bool:
    return all(x <= y for x, y in zip(a, b))


def madd(a, b) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


def msub(a, b) -> tuple:
    return tuple(x - y for x, y in zip(a, b))


def total(a) -> int:
    return sum(a)


def multi_indices(D: int):
    """All alpha in N^3 with |alpha| <= D, ordered by (|alpha|, alpha)."""
    out = [a for a in product(range(D + 1), repeat=3) if sum(a) <= D]
    return sorted(out, key=lambda a: (sum(a), a))


def grade_of(basis_id: int) -> tuple:
    alg = get_algebra()
    if not isinstance(basis_id, int) or not 0 <= basis_id < alg.n:
        raise KeyError(f"unknown basis id {basis_id!r}")
    return alg.grade[basis_id]


def grades() -> list[tuple]:
    """The distinct grades (Table 2 rows) in basis order."""
    out = []
    for g in get_algebra().grade:
        if g not in out:
            out.append(g)
    return out


def in_filtration(x: GlaElement, alpha) -> bool:
    """x in F_alpha E_Phi."""
    alg = get_algebra()
    return all(leq(alg.grade[b], alpha) for b in x.coeffs)


def graded_part(x: GlaElement, alpha) -> GlaElement:
    """Component in G_alpha."""
    alg = get_algebra()
    alpha = tuple(alpha)
    return GlaElement({b: c for b, c in x.coeffs.items() if alg.grade[b] == alpha})


# -- the affine gauge subspace ------------------------------------------------

ASPEC_TABLE = [
    ((0, 0, 0), ["t0*s0+t1*s1", "t0*s0+t2*s2", "t0*s0+t3*s3"], ["t0"]),
    ((2, 0, 0), ["-t1*s23+t2*s31+t3*s12"], []),
    ((0, 2, 0), ["+t1*s23-t2*s31+t3*s12"], []),
    ((0, 0, 2), ["+t1*s23+t2*s31-t3*s12"], []),
    ((0, 1, 1), ["t1*L1", "t1*L2", "t1*L3", "t0*s1+t1*s0", "t3*s31", "t2*s12"], ["t1"]),
    ((1, 0, 1), ["t2*L1", "t2*L2", "t2*L3", "t0*s2+t2*s0", "t1*s12", "t3*s23"], ["t2"]),
    ((1, 1, 0), ["t3*L1", "t3*L2", "t3*L3", "t0*s3+t3*s0", "t2*s23", "t1*s31"], ["t3"]),
]


def aspec_basis() -> list[tuple[tuple, int]]:
    """(grade, basis id) of the 28 spanning elements of the affine gauge subspace.

    Each spanning element is, up to sign, a single distinguished basis element;
    that is checked here rather than assumed.
    """
    alg = get_algebra()
    out = []
    for alpha, etexts, ptexts in ASPEC_TABLE:
        vecs = [alg.element(t) for t in etexts] + [alg.element(t[1:], kind="P") for t in ptexts]
        for v in vecs:
            if len(v.coeffs) != 1:
                raise AssertionError("affine gauge element is not a single basis element")
            (b, c), = v.coeffs.items()
            if alg.grade[b] != alpha or abs(c) != 1:
                raise AssertionError("affine gauge table inconsistent with the grading")
            out.append((alpha, b))
    return out


def aspec_ids() -> frozenset:
    return frozenset(b for _, b in aspec_basis())


def gb_ids(degree: int | None = None) -> list[int]:
    """Plain basis elements (no theta_0 multiples), optionally of one degree."""
    alg = get_algebra()
    return [b.index for b in alg.basis if b.plain and (degree is None or b.degree == degree)]


def rank_audit() -> dict:
    alg = get_algebra()
    return {
        "E_Phi^1": len(alg.by_degree[1]),
        "A^1_GB": len(gb_ids(1)),
        "A^0": len(alg.by_degree[0]),
        "A_spec": len(aspec_basis()),
    }


def partition_audit() -> dict:
    """Every basis element sits in exactly one Table 2 row; counts per row."""
    alg = get_algebra()
    rows: dict = {}
    for b in alg.basis:
        rows.setdefault(b.grade, []).append(b.index)
    ids = sorted(i for v in rows.values() for i in v)
    if ids != list(range(alg.n)):
        raise AssertionError("grading does not partition the basis")
    return {g: len(v) for g, v in rows.items()}


def compatibility_defects() -> list[tuple]:
    """Basis pairs whose bracket leaves F_{grade a + grade b}.

    Covers the constant part, the anchor terms (either side) and the terms
    produced by a nonabelian spatial frame.  Returns offending (a, b, c).
    """
    alg = get_algebra()
    bad = []

    def check(a, b, vec):
        top = madd(alg.grade[a], alg.grade[b])
        for c in vec:
            if not leq(alg.grade[c], top):
                bad.append((a, b, c))

    for (a, b), vec in alg.bconst.items():
        check(a, b, vec)
    for (a, b), terms in alg.frame_terms.items():
        for vec in terms.values():
            check(a, b, vec)
    for a in range(alg.n):
        for mask, _mu, _r in alg.anchor[a]:
            for b in range(alg.n):
                vec = alg.module.get((mask, b))
                if vec:
                    check(a, b, vec)
                    check(b, a, vec)
    return sorted(set(bad))


# -- series -----------------------------------------------------------------


def _is_polynomial_in_tau(c) -> bool:
    if not isinstance(c, Expr):
        return True
    return not any(x[0] in (SPAR, DAMP) for x in c.atoms())


class FilteredSeries:
    """Truncated N^3-indexed series ``sum_alpha x_alpha s^alpha``."""

    __slots__ = ("terms", "order", "flag")

    def __init__(self, terms: dict | None = None, order: int = 4, flag: str = REES, check: bool = True):
        if flag not in FLAGS:
            raise FiltrationError(f"unknown flag {flag!r}")
        self.order = order
        self.flag = flag
        self.terms = {}
        for a, x in (terms or {}).items():
            a = tuple(int(v) for v in a)
            if total(a) <= order and not x.is_zero():
                self.terms[a] = x
        if check:
            self.validate()

    # -- construction ---------------------------------------------------
    @classmethod
    def from_element(cls, x: GlaElement, order: int = 4, flag: str = REES, check: bool = True):
        """Split an element whose coefficients carry explicit s_i atoms."""
        out: dict = {}
        for b, c in x.coeffs.items():
            if not isinstance(c, Expr):
                out.setdefault((0, 0, 0), {})[b] = c
                continue
            ring = c.ring
            for alpha, part in c.coeff_split(_svec).items():
                stripped = Expr(ring, {_strip_s(m): v for m, v in part.num.items()}, part.den, _raw=True)._canon()
                out.setdefault(alpha, {})[b] = stripped
        return cls({a: GlaElement(v) for a, v in out.items()}, order, flag, check)

    def to_element(self, ring) -> GlaElement:
        """Reassemble with explicit s_i atoms."""
        out = GlaElement()
        for a, x in self.terms.items():
            out = out + x.scale(ring.s_pow(a))
        return out

    # -- validation -----------------------------------------------------
    def defects(self) -> list[tuple]:
        """(alpha, basis id, reason) for every term violating the flag."""
        alg = get_algebra()
        bad = []
        for a, x in self.terms.items():
            for b, c in x.coeffs.items():
                g = alg.grade[b]
                if self.flag == GRADED:
                    if g != a:
                        bad.append((a, b, "grade differs from index"))
                elif not leq(g, a):
                    bad.append((a, b, "not in F_alpha"))
                if self.flag == PP and not _pp_ok(c, a):
                    bad.append((a, b, "coefficient not damping^alpha times a tau polynomial"))
        return bad

    def validate(self) -> None:
        bad = self.defects()
        if bad:
            a, b, why = bad[0]
            raise FiltrationError(f"{self.flag} series: term alpha={a} basis {b}: {why}")

    # -- arithmetic -----------------------------------------------------
    def _like(self, terms, order=None, flag=None, check=False):
        return FilteredSeries(terms, self.order if order is None else order, flag or self.flag, check)

    def __add__(self, o: "FilteredSeries") -> "FilteredSeries":
        _same_flag(self, o)
        out = dict(self.terms)
        for a, x in o.terms.items():
            out[a] = out[a] + x if a in out else x
        return self._like(out, min(self.order, o.order))

    def __neg__(self) -> "FilteredSeries":
        return self._like({a: -x for a, x in self.terms.items()})

    def __sub__(self, o: "FilteredSeries") -> "FilteredSeries":
        return self + (-o)

    def scale(self, c) -> "FilteredSeries":
        return self._like({a: x.scale(c) for a, x in self.terms.items()})

    def truncate(self, D: int) -> "FilteredSeries":
        return self._like({a: x for a, x in self.terms.items() if total(a) <= D}, min(D, self.order))

    def component(self, alpha) -> GlaElement:
        return self.terms.get(tuple(alpha), GlaElement())

    def graded(self) -> "FilteredSeries":
        """Image in the associated graded: keep terms whose grade equals their index."""
        return FilteredSeries({a: graded_part(x, a) for a, x in self.terms.items()}, self.order, GRADED)

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, o) -> bool:
        return isinstance(o, FilteredSeries) and (self - o).is_zero()

    def support(self) -> list[tuple]:
        return sorted(self.terms, key=lambda a: (sum(a), a))

    def __repr__(self) -> str:
        body = ", ".join(f"{a}: {self.terms[a]!r}" for a in self.support())
        return f"FilteredSeries[{self.flag}, D={self.order}]({{{body}}})"

    # -- serialization ----------------------------------------------------
    def to_json(self) -> list:
        return [{"alpha": list(a), "element": gla_to_json(self.terms[a])} for a in self.support()]

    @classmethod
    def from_json(cls, ring, data: list, order: int = 4, flag: str = REES) -> "FilteredSeries":
        return cls({tuple(t["alpha"]): gla_from_json(ring, t["element"]) for t in data}, order, flag)


def _strip_s(m: tuple) -> tuple:
    return tuple((x, e) for x, e in m if x[0] != SPAR)


def _pp_ok(c, alpha) -> bool:
    if not isinstance(c, Expr):
        return not any(alpha)
    ring = c.ring
    undamped = c
    for i, k in enumerate(alpha, start=1):
        if k:
            undamped = undamped * ring.damping(i, -k)
    return _is_polynomial_in_tau(undamped)


def _same_flag(x: FilteredSeries, y: FilteredSeries) -> None:
    if x.flag != y.flag:
        raise FiltrationError(f"flag mismatch: {x.flag} vs {y.flag}")


def rees_bracket(x: FilteredSeries, y: FilteredSeries, D: int | None = None, derive=None) -> FilteredSeries:
    """Bracket in the Rees algebra (or in P_p), truncated at total degree D.

    Terms landing in G_gamma with gamma < alpha + beta are kept at index
    alpha + beta, which is the s^(alpha+beta-gamma) bookkeeping.
    """
    _same_flag(x, y)
    if x.flag == GRADED:
        raise FiltrationError("use assoc_graded_bracket for graded series")
    D = min(x.order, y.order) if D is None else D
    out: dict = {}
    for a, xa in x.terms.items():
        for b, yb in y.terms.items():
            g = madd(a, b)
            if total(g) > D:
                continue
            z = bracket(xa, yb, derive=derive)
            if not z.is_zero():
                out[g] = out[g] + z if g in out else z
    return FilteredSeries(out, D, x.flag, check=False)


def assoc_graded_bracket(x: FilteredSeries, y: FilteredSeries, D: int | None = None, derive=None) -> FilteredSeries:
    """Bracket in the associated graded: the degree-preserving part of the Rees bracket."""
    _same_flag(x, y)
    if x.flag != GRADED:
        raise FiltrationError("assoc_graded_bracket needs graded series")
    D = min(x.order, y.order) if D is None else D
    out: dict = {}
    for a, xa in x.terms.items():
        for b, yb in y.terms.items():
            g = madd(a, b)
            if total(g) > D:
                continue
            z = graded_part(bracket(xa, yb, derive=derive), g)
            if not z.is_zero():
                out[g] = out[g] + z if g in out else z
    return FilteredSeries(out, D, GRADED, check=False)


__all__ = [
    "FLAGS", "GRADED", "PP", "REES", "ASPEC_TABLE", "FilteredSeries", "FiltrationError",
    "aspec_basis", "aspec_ids", "assoc_graded_bracket", "compatibility_defects", "gb_ids",
    "grade_of", "graded_part", "grades", "in_filtration", "leq", "madd", "msub",
    "multi_indices", "partition_audit", "rank_audit", "rees_bracket", "total",
]
