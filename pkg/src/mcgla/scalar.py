"""Coefficient algebras.

Three backends live here:

* :class:`Expr` over a :class:`Ring`: exact polynomials with rational
  coefficients in generators (spatial functions with formal derivatives,
  symbolic constants, coordinates, the time ``tau``, the formal parameters
  ``s_i`` and damping factors ``exp(-p_i tau)``), plus inverses of the linear
  forms ``A_n = n1 p1 + n2 p2 + n3 p3``.  Values are always kept in canonical
  form, so equality is syntactic.
* :class:`FourierField`: truncated Fourier series on the torus.
* :func:`evaluate`: numeric evaluation of exact expressions on sample arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

try:  # gmpy2 rationals are several times faster than Fraction
    from gmpy2 import mpq as Q
except ImportError:  # pragma: no cover
    from fractions import Fraction as Q

# atom kinds; atoms are tuples whose first entry is the kind
CONST, COORD, TAU, SPAR, DAMP, FUNC = 0, 1, 2, 3, 4, 5

# derivation labels: 0 is the time derivative, 1..3 the spatial frame L_i
DT, L1, L2, L3 = 0, 1, 2, 3


class RingError(ValueError):
    """Raised for operations the exact backend does not support."""


def q(x) -> Q:
    """Coerce to the exact rational type."""
    if isinstance(x, str):
        return Q(x)
    return Q(x)


# --------------------------------------------------------------------------
# raw polynomial helpers: a polynomial is a dict monomial -> rational, a
# monomial a sorted tuple of (atom, exponent) pairs


def _mmul(a: tuple, b: tuple) -> tuple:
    if not a:
        return b
    if not b:
        return a
    out = []
    i = j = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        xa, ea = a[i]
        xb, eb = b[j]
        if xa == xb:
            e = ea + eb
            if e:
                out.append((xa, e))
            i += 1
            j += 1
        elif xa < xb:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    if i < na:
        out.extend(a[i:])
    if j < nb:
        out.extend(b[j:])
    return tuple(out)


def _padd_into(out: dict, b: dict, scale=1) -> None:
    for m, c in b.items():
        v = out.get(m)
        v = c * scale if v is None else v + c * scale
        if v:
            out[m] = v
        else:
            out.pop(m, None)


def _pmul_raw(a: dict, b: dict) -> dict:
    out: dict = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = _mmul(ma, mb)
            v = out.get(m)
            v = ca * cb if v is None else v + ca * cb
            if v:
                out[m] = v
            else:
                del out[m]
    return out


def _pscale(a: dict, c) -> dict:
    if not c:
        return {}
    return {m: v * c for m, v in a.items()}


def _degree_in(m: tuple, atom) -> int:
    for x, e in m:
        if x == atom:
            return e
    return 0


def _drop_atom(m: tuple, atom, k: int) -> tuple:
    out = []
    for x, e in m:
        if x == atom:
            if e - k:
                out.append((x, e - k))
        else:
            out.append((x, e))
    return tuple(out)


@dataclass(frozen=True)
class GenInfo:
    kind: int
    deps: tuple = ()
    square: object = None  # raw polynomial for constants with a square rule


class Ring:
    """A differential coefficient ring.

    ``structure`` holds constant structure constants of the spatial frame,
    ``[L_i, L_j] = sum_k c[i, j][k] L_k``; the default frame is abelian.
    """

    def __init__(self, name: str = "ring"):
        self.name = name
        self._gens: dict[str, GenInfo] = {}
        self._structure: dict[tuple, dict] = {}
        self._p: list | None = None
        self._p_atoms: list | None = None
        self._dcache: dict = {}
        self._has_sq = False

    # -- generators -----------------------------------------------------
    def _register(self, name: str, info: GenInfo) -> None:
        old = self._gens.get(name)
        if old is not None and old != info:
            raise RingError(f"generator {name!r} already declared differently")
        self._gens[name] = info

    def function(self, name: str, deps: Iterable[int] = (1, 2, 3)) -> "Expr":
        """A generator depending on the listed derivation directions."""
        deps = tuple(sorted(set(deps)))
        if self._structure and set(deps) & {1, 2, 3} and not {1, 2, 3} <= set(deps):
            raise RingError("with a nonabelian frame spatial functions must depend on all of L1..L3 or none")
        self._register(name, GenInfo(FUNC, deps))
        return self._atom((FUNC, name, 0, ()))

    def constant(self, name: str, square=None) -> "Expr":
        """A symbolic constant; ``square`` optionally rewrites its square."""
        sq = None
        if square is not None:
            sq = self.coerce(square)
            if sq.den:
                raise RingError("square rule must be a polynomial")
            sq = sq.num
            self._has_sq = True
        self._register(name, GenInfo(CONST, (), sq))
        return self._atom((CONST, name))

    def coord(self, i: int) -> "Expr":
        if self._structure:
            raise RingError("coordinates need an abelian frame")
        return self._atom((COORD, i))

    def tau(self) -> "Expr":
        return self._atom((TAU,))

    def s(self, i: int) -> "Expr":
        """Formal filtration parameter s_i (time independent)."""
        return self._atom((SPAR, i))

    def damping(self, i: int, k: int = 1) -> "Expr":
        """exp(-k p_i tau)."""
        if k == 0:
            return self.one()
        return Expr(self, {(((DAMP, i), k),): Q(1)})

    def sbar(self, i: int) -> "Expr":
        """The damped parameter s_i exp(-p_i tau)."""
        return self.s(i) * self.damping(i)

    def sbar_pow(self, alpha) -> "Expr":
        out = self.one()
        for i, a in enumerate(alpha, start=1):
            if a:
                out = out * self.s(i) ** a * self.damping(i, a)
        return out

    def s_pow(self, alpha) -> "Expr":
        out = self.one()
        for i, a in enumerate(alpha, start=1):
            if a:
                out = out * self.s(i) ** a
        return out

    def _atom(self, atom) -> "Expr":
        return Expr(self, {((atom, 1),): Q(1)})

    def one(self) -> "Expr":
        return Expr(self, {(): Q(1)})

    def zero(self) -> "Expr":
        return Expr(self, {})

    def coerce(self, x) -> "Expr":
        if isinstance(x, Expr):
            if x.ring is not self:
                raise RingError("backend mismatch: expressions from different rings")
            return x
        c = q(x)
        return Expr(self, {(): c} if c else {})

    # -- frame structure ------------------------------------------------
    def set_structure(self, c: Mapping) -> None:
        """Install constant structure constants ``c[(i, j)] = {k: value}``."""
        table = {}
        for (i, j), row in c.items():
            for k, v in row.items():
                v = self.coerce(v)
                for d in (DT, L1, L2, L3):
                    if not self.derive(v, d).is_zero():
                        raise RingError("structure constants must be constants")
                if v.is_zero():
                    continue
                table.setdefault((i, j), {})[k] = v
                table.setdefault((j, i), {})[k] = -v
        if table and any(g.kind == FUNC and set(g.deps) & {1, 2, 3} not in (set(), {1, 2, 3})
                         for g in self._gens.values()):
            raise RingError("functions with partial spatial dependence conflict with a nonabelian frame")
        self._structure = table
        self._dcache.clear()

    def structure_constant(self, i: int, j: int, k: int) -> "Expr":
        v = self._structure.get((i, j), {}).get(k)
        return v if v is not None else self.zero()

    @property
    def abelian(self) -> bool:
        return not self._structure

    # -- bound exponents --------------------------------------------------
    def bind_p(self, p: Iterable) -> None:
        """Bind p_1, p_2, p_3 (used by the damping factors and A_n)."""
        p = [self.coerce(x) for x in p]
        if len(p) != 3:
            raise RingError("need three exponents")
        for x in p:
            if x.den:
                raise RingError("p must be polynomial")
            if not self.derive(x, DT).is_zero():
                raise RingError("p must be time independent")
        self._p = p
        atoms = []
        for x in p:
            if len(x.num) == 1:
                (m, c), = x.num.items()
                if c == 1 and len(m) == 1 and m[0][1] == 1 and m[0][0][0] in (FUNC, CONST):
                    atoms.append(m[0][0])
                    continue
            atoms.append(None)
        self._p_atoms = atoms
        self._dcache.clear()

    @property
    def p(self) -> list:
        if self._p is None:
            raise RingError("exponents p not bound on this ring")
        return self._p

    def A(self, n) -> "Expr":
        """A_n = n1 p1 + n2 p2 + n3 p3."""
        out = self.zero()
        for ni, pi in zip(n, self.p):
            if ni:
                out = out + pi * ni
        return out

    def Ainv(self, n) -> "Expr":
        """The inverse of A_n, the only admissible denominator."""
        n = tuple(int(x) for x in n)
        if not any(n):
            raise RingError("A_0 is not invertible")
        a = self.A(n)
        if a.is_constant():
            c = a.constant_value()
            if not c:
                raise RingError(f"A_{n} vanishes")
            return self.coerce(1 / c)
        g = math.gcd(*n)
        prim = tuple(x // g for x in n)
        if any(x < 0 for x in prim):
            prim = tuple(-x for x in prim)
            g = -g
        for k, nk in enumerate(prim):
            if nk and self._p_atoms[k] is None:
                raise RingError("A_n inverse needs p_i that are single generators")
        return Expr(self, {(): Q(1, g)}, ((prim, 1),))

    def _A_raw(self, prim) -> dict:
        return self.A(prim).num

    # -- derivations ----------------------------------------------------
    def derive(self, e: "Expr", d: int) -> "Expr":
        e = self.coerce(e)
        num = self._dpoly(e.num, d)
        if not e.den:
            return Expr(self, num)
        out = Expr(self, num, e.den, _raw=True)._canon()
        for prim, k in e.den:
            da = self._dpoly(self._A_raw(prim), d)
            if da:
                term = Expr(self, _pmul_raw(e.num, da), _merge_den(e.den, ((prim, 1),)), _raw=True)._canon()
                out = out - term * k
        return out

    def _dpoly(self, a: dict, d: int) -> dict:
        out: dict = {}
        for m, c in a.items():
            for idx, (atom, e) in enumerate(m):
                da = self._datom(atom, d)
                if not da:
                    continue
                rest = m[:idx] + (((atom, e - 1),) if e > 1 else ()) + m[idx + 1:]
                for mm, cc in da.items():
                    mon = _mmul(rest, mm)
                    v = out.get(mon, 0) + c * e * cc
                    if v:
                        out[mon] = v
                    else:
                        out.pop(mon, None)
        if self._has_sq and out:
            out = self._reduce_sq(out)
        return out

    def _datom(self, atom, d: int) -> dict:
        key = (atom, d)
        hit = self._dcache.get(key)
        if hit is not None:
            return hit
        kind = atom[0]
        res: dict = {}
        if kind == COORD:
            res = {(): Q(1)} if d == atom[1] else {}
        elif kind == TAU:
            res = {(): Q(1)} if d == DT else {}
        elif kind == DAMP:
            i = atom[1]
            me = ((atom, 1),)
            if d == DT:
                res = _pscale(_pmul_raw(self.p[i - 1].num, {me: Q(1)}), -1)
            else:
                dp = self._dpoly(self.p[i - 1].num, d)
                res = _pscale(_pmul_raw(dp, {(((TAU,), 1),) + me: Q(1)}), -1)
        elif kind == FUNC:
            name, nz, word = atom[1], atom[2], atom[3]
            deps = self._gens[name].deps
            if d not in deps:
                res = {}
            elif d == DT:
                res = {(((FUNC, name, nz + 1, word), 1),): Q(1)}
            else:
                res = self._insert(d, name, nz, word)
        self._dcache[key] = res
        return res

    def _insert(self, j: int, name: str, nz: int, word: tuple) -> dict:
        if not word or j <= word[0]:
            return {(((FUNC, name, nz, (j,) + word), 1),): Q(1)}
        if not self._structure:
            w = tuple(sorted(word + (j,)))
            return {(((FUNC, name, nz, w), 1),): Q(1)}
        w1, rest = word[0], word[1:]
        inner = self._insert(j, name, nz, rest)
        out = self._dpoly(inner, w1)
        for k, ck in self._structure.get((j, w1), {}).items():
            _padd_into(out, _pmul_raw(ck.num, self._insert(k, name, nz, rest)))
        return out

    def _reduce_sq(self, a: dict) -> dict:
        out: dict = {}
        stack = list(a.items())
        while stack:
            m, c = stack.pop()
            hit = None
            for x, e in m:
                if e >= 2 and x[0] == CONST:
                    info = self._gens[x[1]]
                    if info.square is not None:
                        hit = (x, e)
                        break
            if hit is None:
                v = out.get(m, 0) + c
                if v:
                    out[m] = v
                else:
                    out.pop(m, None)
                continue
            x, e = hit
            rest = _drop_atom(m, x, 2)
            for mm, cc in self._gens[x[1]].square.items():
                stack.append((_mmul(rest, mm), c * cc))
        return out

    def gen_info(self, name: str) -> GenInfo:
        return self._gens[name]


def _merge_den(a: tuple, b: tuple) -> tuple:
    d = dict(a)
    for n, e in b:
        d[n] = d.get(n, 0) + e
    return tuple(sorted((n, e) for n, e in d.items() if e))


class Expr:
    """Canonical exact element of a :class:`Ring`."""

    __slots__ = ("ring", "num", "den")

    def __init__(self, ring: Ring, num: dict, den: tuple = (), _raw: bool = False):
        self.ring = ring
        self.num = num
        self.den = den

    # canonicalization: cancel A_n factors that divide the numerator
    def _canon(self) -> "Expr":
        if not self.den:
            return self
        if not self.num:
            self.den = ()
            return self
        den = []
        num = self.num
        for prim, e in self.den:
            while e:
                qt = self._div_linear(num, prim)
                if qt is None:
                    break
                num = qt
                e -= 1
            if e:
                den.append((prim, e))
        self.num = num
        self.den = tuple(den)
        return self

    def _div_linear(self, num: dict, prim) -> dict | None:
        ring = self.ring
        k = max(i for i, x in enumerate(prim) if x)
        v = ring._p_atoms[k]
        a = ring._A_raw(prim)
        nk = Q(prim[k])
        r = dict(num)
        qt: dict = {}
        while r:
            top = max(_degree_in(m, v) for m in r)
            if top == 0:
                return None
            lead = {_drop_atom(m, v, 1): c / nk for m, c in r.items() if _degree_in(m, v) == top}
            _padd_into(qt, lead)
            _padd_into(r, _pmul_raw(lead, a), -1)
        return qt

    # -- arithmetic -------------------------------------------------------
    def _other(self, o) -> "Expr":
        if isinstance(o, Expr):
            if o.ring is not self.ring:
                raise RingError("backend mismatch: expressions from different rings")
            return o
        return self.ring.coerce(o)

    def __add__(self, o) -> "Expr":
        o = self._other(o)
        if not o.num:
            return self
        if not self.num:
            return o
        if self.den == o.den:
            out = dict(self.num)
            _padd_into(out, o.num)
            return Expr(self.ring, out, self.den, _raw=True)._canon()
        common = dict(self.den)
        for n, e in o.den:
            common[n] = max(common.get(n, 0), e)
        common_t = tuple(sorted(common.items()))
        out = self._lift(common)
        _padd_into(out, o._lift(common))
        return Expr(self.ring, out, common_t, _raw=True)._canon()

    def _lift(self, common: dict) -> dict:
        num = self.num
        mine = dict(self.den)
        for n, e in common.items():
            for _ in range(e - mine.get(n, 0)):
                num = _pmul_raw(num, self.ring._A_raw(n))
        if self.ring._has_sq:
            num = self.ring._reduce_sq(num)
        return dict(num)

    __radd__ = __add__

    def __neg__(self) -> "Expr":
        return Expr(self.ring, {m: -c for m, c in self.num.items()}, self.den)

    def __sub__(self, o) -> "Expr":
        return self + (-self._other(o))

    def __rsub__(self, o) -> "Expr":
        return self._other(o) - self

    def __mul__(self, o) -> "Expr":
        if not isinstance(o, Expr):
            c = q(o)
            if not c:
                return self.ring.zero()
            return Expr(self.ring, {m: v * c for m, v in self.num.items()}, self.den)
        o = self._other(o)
        if not self.num or not o.num:
            return self.ring.zero()
        num = _pmul_raw(self.num, o.num)
        if self.ring._has_sq:
            num = self.ring._reduce_sq(num)
        if not self.den and not o.den:
            return Expr(self.ring, num)
        return Expr(self.ring, num, _merge_den(self.den, o.den), _raw=True)._canon()

    __rmul__ = __mul__

    def __truediv__(self, o) -> "Expr":
        if isinstance(o, Expr):
            if o.is_constant():
                return self * (1 / o.constant_value())
            if not o.den and len(o.num) >= 1:
                raise RingError("division by a non-constant expression is not supported; use Ring.Ainv")
            raise RingError("unsupported division")
        return self * (1 / q(o))

    def __pow__(self, k: int) -> "Expr":
        if k < 0:
            raise RingError("negative powers unsupported")
        out = self.ring.one()
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, o) -> bool:
        if not isinstance(o, Expr):
            try:
                o = self.ring.coerce(o)
            except (TypeError, ValueError):
                return NotImplemented
        return self.ring is o.ring and self.den == o.den and self.num == o.num

    def __hash__(self) -> int:
        return hash((frozenset(self.num.items()), self.den))

    # -- queries ----------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.num

    def is_constant(self) -> bool:
        return not self.den and all(not m for m in self.num)

    def constant_value(self) -> Q:
        if not self.is_constant():
            raise RingError("not a rational constant")
        return self.num.get((), Q(0))

    def atoms(self) -> set:
        out = set()
        for m in self.num:
            for x, _ in m:
                out.add(x)
        return out

    def s_degrees(self) -> set:
        """Exponent vectors of the s-parameters over all monomials."""
        out = set()
        for m in self.num:
            out.add(_svec(m))
        return out

    def coeff_split(self, key: Callable[[tuple], object]) -> dict:
        """Group monomials by ``key(monomial)``; returns key -> Expr."""
        groups: dict = {}
        for m, c in self.num.items():
            groups.setdefault(key(m), {})[m] = c
        return {k: Expr(self.ring, v, self.den, _raw=True)._canon() for k, v in groups.items()}

    def __repr__(self) -> str:
        return f"Expr({self})"

    def __str__(self) -> str:
        if not self.num:
            return "0"
        parts = []
        for m in sorted(self.num, key=_mono_sort_key):
            c = self.num[m]
            body = "*".join(_atom_str(x) + (f"^{e}" if e != 1 else "") for x, e in m)
            if not body:
                parts.append(str(c))
            elif c == 1:
                parts.append(body)
            elif c == -1:
                parts.append("-" + body)
            else:
                parts.append(f"{c}*{body}")
        s = " + ".join(parts).replace("+ -", "- ")
        if self.den:
            dens = "*".join(f"A{list(n)}" + (f"^{e}" if e != 1 else "") for n, e in self.den)
            s = f"({s})/({dens})"
        return s


def _svec(m: tuple) -> tuple:
    v = [0, 0, 0]
    for x, e in m:
        if x[0] == SPAR:
            v[x[1] - 1] += e
    return tuple(v)


def _mono_sort_key(m: tuple):
    return (sum(e for _, e in m), m)


def _atom_str(x) -> str:
    kind = x[0]
    if kind == CONST:
        return x[1]
    if kind == COORD:
        return f"x{x[1]}"
    if kind == TAU:
        return "tau"
    if kind == SPAR:
        return f"s{x[1]}"
    if kind == DAMP:
        return f"exp(-p{x[1]}*tau)"
    name, nz, word = x[1], x[2], x[3]
    ops = "".join(f"L{w}" for w in word) + "".join("d0" for _ in range(nz))
    return f"{ops}({name})" if ops else name


# --------------------------------------------------------------------------
# public operations


def normalize(e: Expr) -> Expr:
    """Return the canonical form (rebuilds the monomial table from scratch)."""
    ring = e.ring
    num: dict = {}
    for m, c in e.num.items():
        mm = tuple(sorted((x, k) for x, k in m if k))
        merged: dict = {}
        for x, k in mm:
            merged[x] = merged.get(x, 0) + k
        mm = tuple(sorted((x, k) for x, k in merged.items() if k))
        v = num.get(mm, 0) + c
        if v:
            num[mm] = v
        else:
            num.pop(mm, None)
    if ring._has_sq:
        num = ring._reduce_sq(num)
    den = _merge_den((), e.den)
    return Expr(ring, num, den, _raw=True)._canon()


def derive(e, d) -> Expr | "FourierField":
    """Apply a derivation: an int label (0 = d/dtau, 1..3 = L_i) or a VectorField."""
    if isinstance(e, FourierField):
        if isinstance(d, int) and d in (1, 2, 3):
            return e.derive(d)
        raise RingError("the Fourier backend supports only L1, L2, L3")
    if isinstance(d, VectorField):
        return d(e)
    return e.ring.derive(e, d)


class VectorField:
    """A spatial derivation sum_j comps[j] L_j with expression coefficients."""

    def __init__(self, ring: Ring, comps):
        self.ring = ring
        self.comps = [ring.coerce(c) for c in comps]
        if len(self.comps) != 3:
            raise RingError("vector fields have three components")

    def __call__(self, e: Expr) -> Expr:
        e = self.ring.coerce(e)
        out = self.ring.zero()
        for j, c in enumerate(self.comps, start=1):
            if not c.is_zero():
                out = out + c * self.ring.derive(e, j)
        return out

    def bracket(self, other: "VectorField") -> "VectorField":
        """Commutator, including the frame's own structure constants."""
        ring = self.ring
        comps = [ring.zero() for _ in range(3)]
        for k in range(3):
            comps[k] = self(other.comps[k]) - other(self.comps[k])
        if not ring.abelian:
            for i in range(1, 4):
                for j in range(1, 4):
                    a = self.comps[i - 1] * other.comps[j - 1]
                    if a.is_zero():
                        continue
                    for k in range(1, 4):
                        c = ring.structure_constant(i, j, k)
                        if not c.is_zero():
                            comps[k - 1] = comps[k - 1] + a * c
        return VectorField(ring, comps)


def structure_functions(frame: list[VectorField]) -> dict:
    """c[(i, j)][k] with [D_i, D_j] = sum_k c_ij^k D_k (1-based indices).

    The frame matrix must have a polynomial inverse, which is checked by
    requiring its determinant to be a nonzero rational constant.
    """
    ring = frame[0].ring
    m = [[frame[i].comps[j] for j in range(3)] for i in range(3)]
    det = _det3(m)
    if not det.is_constant() or det.constant_value() == 0:
        raise RingError("frame determinant must be a nonzero constant to invert exactly")
    inv_det = 1 / det.constant_value()
    # inverse: (m^{-1})[j][k] so that comps = sum_k coef_k m[k][.]
    adj = [[_cofactor(m, j, i) for j in range(3)] for i in range(3)]  # adj[i][j] = C_ji
    inv = [[adj[i][j] * inv_det for j in range(3)] for i in range(3)]
    out: dict = {}
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            br = frame[i].bracket(frame[j])
            for k in range(3):
                v = ring.zero()
                for l in range(3):
                    v = v + br.comps[l] * inv[l][k]
                out.setdefault((i + 1, j + 1), {})[k + 1] = v
    return out


def _cofactor(m, i, j) -> Expr:
    rows = [r for r in range(3) if r != i]
    cols = [c for c in range(3) if c != j]
    val = m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]]
    return val if (i + j) % 2 == 0 else -val


def _det3(m) -> Expr:
    return (m[0][0] * _cofactor(m, 0, 0) + m[0][1] * _cofactor(m, 0, 1) + m[0][2] * _cofactor(m, 0, 2))


# --------------------------------------------------------------------------
# JSON expression trees


def _atom_json(x):
    kind = x[0]
    if kind == CONST:
        return {"const": x[1]}
    if kind == COORD:
        return {"coord": x[1]}
    if kind == TAU:
        return {"tau": True}
    if kind == SPAR:
        return {"s": x[1]}
    if kind == DAMP:
        return {"damp": x[1]}
    return {"fn": x[1], "dt": x[2], "L": list(x[3])}


def _atom_from_json(ring: Ring, d: dict):
    if "const" in d:
        if d["const"] not in ring._gens:
            ring.constant(d["const"])
        return (CONST, d["const"])
    if "coord" in d:
        return (COORD, int(d["coord"]))
    if "tau" in d:
        return (TAU,)
    if "s" in d:
        return (SPAR, int(d["s"]))
    if "damp" in d:
        return (DAMP, int(d["damp"]))
    if d["fn"] not in ring._gens:
        ring.function(d["fn"])
    return (FUNC, d["fn"], int(d["dt"]), tuple(d["L"]))


def to_json(e: Expr) -> dict:
    """Expression tree: {"add": [{"mul": [{"rat": "3/2"}, {"pow": [atom, k]}, ...]}], "inv": [...]}."""
    terms = []
    for m in sorted(e.num, key=_mono_sort_key):
        factors = [{"rat": str(e.num[m])}]
        for x, k in m:
            factors.append({"pow": [_atom_json(x), k]})
        terms.append({"mul": factors})
    out: dict = {"add": terms}
    if e.den:
        out["inv"] = [{"A": list(n), "pow": k} for n, k in e.den]
    return out


def from_json(ring: Ring, d: dict) -> Expr:
    out = ring.zero()
    for t in d.get("add", []):
        term = ring.one()
        for f in t["mul"]:
            if "rat" in f:
                term = term * q(f["rat"])
            else:
                atom_d, k = f["pow"]
                atom = _atom_from_json(ring, atom_d)
                term = term * Expr(ring, {((atom, int(k)),): Q(1)})
        out = out + term
    for inv in d.get("inv", []):
        for _ in range(int(inv["pow"])):
            out = out * ring.Ainv(inv["A"])
    return out


# --------------------------------------------------------------------------
# numeric evaluation


def evaluate(e: Expr, env: Mapping) -> np.ndarray | float:
    """Evaluate with numpy broadcasting.

    ``env`` keys: ``tau``, ``s`` (three values), ``x`` (three coordinate
    arrays), ``constants`` {name: value}, ``functions`` {name: callable(dt, word)
    returning an array}.  Damping factors use the ring's bound p.
    """
    if e.den:
        num = evaluate(Expr(e.ring, e.num), env)
        den = 1.0
        for n, k in e.den:
            den = den * evaluate(e.ring.A(n), env) ** k
        return num / den
    cache: dict = {}
    total = 0.0
    for m, c in e.num.items():
        term = float(c)
        for x, k in m:
            v = cache.get(x)
            if v is None:
                v = _eval_atom(e.ring, x, env)
                cache[x] = v
            term = term * v ** k
        total = total + term
    return total


def _eval_atom(ring: Ring, x, env):
    kind = x[0]
    if kind == CONST:
        return env["constants"][x[1]]
    if kind == COORD:
        return env["x"][x[1] - 1]
    if kind == TAU:
        return env["tau"]
    if kind == SPAR:
        return env["s"][x[1] - 1]
    if kind == DAMP:
        p = evaluate(ring.p[x[1] - 1], env)
        return np.exp(-p * env["tau"])
    return env["functions"][x[1]](x[2], x[3])


# --------------------------------------------------------------------------
# truncated Fourier backend


class FourierField:
    """Real field on the 3-torus as amplitudes for |k|_inf <= K.

    ``data[k1 + K, k2 + K, k3 + K]`` is the amplitude of exp(i k.x).
    """

    __slots__ = ("K", "data")

    def __init__(self, K: int, data: np.ndarray | None = None):
        self.K = int(K)
        n = 2 * self.K + 1
        self.data = np.zeros((n, n, n), complex) if data is None else np.asarray(data, complex)
        if self.data.shape != (n, n, n):
            raise RingError("amplitude array has the wrong shape")

    @classmethod
    def constant(cls, K: int, c: float) -> "FourierField":
        f = cls(K)
        f.data[K, K, K] = c
        return f

    @classmethod
    def mode(cls, K: int, k, amp: complex = 1.0) -> "FourierField":
        """amp exp(i k.x) + conj(amp) exp(-i k.x); real by construction."""
        f = cls(K)
        k = tuple(int(x) for x in k)
        f.data[tuple(K + x for x in k)] += amp
        f.data[tuple(K - x for x in k)] += np.conj(amp)
        return f

    def copy(self) -> "FourierField":
        return FourierField(self.K, self.data.copy())

    def __add__(self, o: "FourierField") -> "FourierField":
        self._check(o)
        return FourierField(self.K, self.data + o.data)

    def __sub__(self, o: "FourierField") -> "FourierField":
        self._check(o)
        return FourierField(self.K, self.data - o.data)

    def __neg__(self) -> "FourierField":
        return FourierField(self.K, -self.data)

    def scale(self, c: float) -> "FourierField":
        return FourierField(self.K, self.data * c)

    def _check(self, o) -> None:
        if not isinstance(o, FourierField):
            raise RingError("backend mismatch")
        if o.K != self.K:
            raise RingError("truncation mismatch")

    def wavenumbers(self) -> list[np.ndarray]:
        r = np.arange(-self.K, self.K + 1)
        return list(np.meshgrid(r, r, r, indexing="ij"))

    def derive(self, j: int) -> "FourierField":
        k = self.wavenumbers()[j - 1]
        return FourierField(self.K, 1j * k * self.data)

    def reality_defect(self) -> float:
        flipped = np.conj(self.data[::-1, ::-1, ::-1])
        return float(np.max(np.abs(self.data - flipped))) if self.data.size else 0.0

    def to_grid(self, n: int) -> np.ndarray:
        """Sample on an n^3 grid (n >= 2K+1)."""
        if n < 2 * self.K + 1:
            raise RingError("grid too coarse for the band limit")
        hat = np.zeros((n, n, n), complex)
        r = np.arange(-self.K, self.K + 1) % n
        hat[np.ix_(r, r, r)] = self.data
        return np.real(np.fft.ifftn(hat) * n ** 3)

    @classmethod
    def from_grid(cls, grid: np.ndarray, K: int) -> "FourierField":
        n = grid.shape[0]
        hat = np.fft.fftn(grid) / n ** 3
        r = np.arange(-K, K + 1) % n
        return cls(K, hat[np.ix_(r, r, r)])

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.data)))

    def to_triples(self) -> list:
        out = []
        K = self.K
        for idx in zip(*np.nonzero(self.data)):
            k = [int(i) - K for i in idx]
            v = self.data[idx]
            out.append([k, float(v.real), float(v.imag)])
        return out

    @classmethod
    def from_triples(cls, K: int, triples) -> "FourierField":
        f = cls(K)
        for k, re, im in triples:
            f.data[tuple(K + int(x) for x in k)] = complex(re, im)
        return f


def fourier_mul(f: FourierField, g: FourierField, K_max: int | None = None) -> FourierField:
    """Truncated product: full convolution then a hard cutoff at |k|_inf <= K_max."""
    if not isinstance(f, FourierField) or not isinstance(g, FourierField):
        raise RingError("backend mismatch: fourier_mul needs Fourier fields")
    K_max = f.K if K_max is None else int(K_max)
    Kin = max(f.K, g.K)
    n = 2 * (f.K + g.K) + 1  # large enough that no aliasing occurs
    n = max(n, 2 * Kin + 1)
    prod = f.to_grid(n) * g.to_grid(n)
    full = FourierField.from_grid(prod, f.K + g.K)
    out = FourierField(K_max)
    K = min(K_max, f.K + g.K)
    src = slice(f.K + g.K - K, f.K + g.K + K + 1)
    dst = slice(K_max - K, K_max + K + 1)
    out.data[dst, dst, dst] = full.data[src, src, src]
    return out
