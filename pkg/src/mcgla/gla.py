"""The graded Lie algebras L = ∧W ⊗ CDer(W), its quotient E = L/I and the
scalar-field extension E_Phi = E ⊕ Phi.

Everything is built once from exact rational data: representatives of the
distinguished basis, reduction matrices along the ideal, and the structure
tensors (constant bracket, anchor, module multiplication).  Elements with
arbitrary scalar coefficients are bracketed by

    [f x, g y] = f g [x, y] + f rho_x(g) y - (-1)^{|x||y|} g rho_y(f) x,

where rho_x(g) is a form (the anchor) acting by module multiplication.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

from . import wedge as wg
from .linalg import independent_rows, inverse, rref, to_q
from .scalar import Q, Expr, RingError

CDER = ("s0", "s1", "s2", "s3", "s23", "s31", "s12", "d0", "L1", "L2", "L3")
CDER_LABEL = ("σ0", "σ1", "σ2", "σ3", "σ23", "σ31", "σ12", "∂0", "L1", "L2", "L3")
CDER_INDEX = {n: i for i, n in enumerate(CDER)}
N_CDER = 11
N_SIGMA = 7
DER0 = 7  # CDer index of ∂0; L_i sits at DER0 + i
SIGMA_PAIRS = {0: None, 1: (0, 1), 2: (0, 2), 3: (0, 3), 4: (2, 3), 5: (3, 1), 6: (1, 2)}
SIGMA_MATRICES = [wg.sigma_matrix(*((0,) if p is None else p)) for p in SIGMA_PAIRS.values()]
VOL2 = 16  # Phi key of the top-form summand inside Phi^2
FULL = 0b1111


def is_derivation(d: int) -> bool:
    return d >= DER0


def sigma_ab(a: int, b: int) -> tuple[int, int]:
    """(sign, CDer index) of sigma_ab for 0 <= a, b <= 3; sign 0 if a == b."""
    if a == b:
        return 0, -1
    for idx, pair in SIGMA_PAIRS.items():
        if pair == (a, b):
            return 1, idx
        if pair == (b, a):
            return -1, idx
    raise AssertionError


def _sigma_bracket_table() -> dict:
    """[sigma_x, sigma_y] in the sigma basis, from matrix commutators."""
    flat = [[M[r][c] for r in range(4) for c in range(4)] for M in SIGMA_MATRICES]
    cols = [list(x) for x in zip(*flat)]  # 16 x 7
    table = {}
    for x in range(N_SIGMA):
        for y in range(N_SIGMA):
            A, B = SIGMA_MATRICES[x], SIGMA_MATRICES[y]
            C = [[sum(A[r][k] * B[k][c] - B[r][k] * A[k][c] for k in range(4)) for c in range(4)] for r in range(4)]
            rhs = [C[r][c] for r in range(4) for c in range(4)]
            aug = [cols[i] + [rhs[i]] for i in range(16)]
            R, piv = rref(to_q(aug), N_SIGMA)
            if N_SIGMA in piv:
                raise AssertionError("sigma span not closed")
            sol = {}
            for row, pc in zip(R, piv):
                if row[-1]:
                    sol[pc] = row[-1]
            table[(x, y)] = sol
    return table


SIGMA_BR = _sigma_bracket_table()


# --------------------------------------------------------------------------
# L elements: dicts (mask, cder) -> coefficient

_TERM = re.compile(r"([+-]?)(\d*)((?:t\d)*)\*?(s23|s31|s12|s0|s1|s2|s3|d0|L1|L2|L3)")


def parse_l(text: str) -> dict:
    """Parse e.g. ``"t0t2*s12 + t1t2*s2"`` or ``"-2t1t2*s31"`` into an L vector."""
    out: dict = {}
    s = text.replace(" ", "")
    pos = 0
    for m in _TERM.finditer(s):
        if m.start() != pos:
            raise ValueError(f"cannot parse {text!r}")
        pos = m.end()
        sign = -1 if m.group(1) == "-" else 1
        coef = int(m.group(2)) if m.group(2) else 1
        word = [int(c) for c in m.group(3)[1::2]]
        sg, mask = wg.sorted_sign(word)
        if not sg:
            continue
        key = (mask, CDER_INDEX[m.group(4)])
        out[key] = out.get(key, 0) + Q(sign * coef * sg)
    if pos != len(s):
        raise ValueError(f"cannot parse {text!r}")
    return {k: v for k, v in out.items() if v}


def l_str(v: dict) -> str:
    parts = []
    for (mask, d), c in sorted(v.items(), key=lambda t: (wg.degree(t[0][0]), t[0])):
        mono = wg.mono_str(mask) if mask else ""
        body = mono + CDER_LABEL[d]
        if c == 1:
            parts.append(body)
        elif c == -1:
            parts.append("-" + body)
        else:
            parts.append(f"{c}{body}")
    return " + ".join(parts).replace("+ -", "- ") or "0"


def l_degree(v: dict) -> int:
    degs = {wg.degree(m) for m, _ in v}
    if len(degs) > 1:
        raise ValueError("inhomogeneous L element")
    return degs.pop() if degs else 0


def _vadd(out: dict, key, val) -> None:
    v = out.get(key)
    v = val if v is None else v + val
    if _iszero(v):
        out.pop(key, None)
    else:
        out[key] = v


def _iszero(c) -> bool:
    return c.is_zero() if hasattr(c, "is_zero") else c == 0


def l_bracket_const(u: dict, v: dict) -> dict:
    """Bracket of constant-coefficient L elements with an abelian frame."""
    out: dict = {}
    for (m1, d1), c1 in u.items():
        for (m2, d2), c2 in v.items():
            cc = c1 * c2
            # omega omega' [delta, delta']
            if d1 < N_SIGMA and d2 < N_SIGMA:
                s = wg.mono_sign(m1, m2)
                if s:
                    for d3, k in SIGMA_BR[(d1, d2)].items():
                        _vadd(out, (m1 | m2, d3), cc * s * k)
            # omega delta(omega') delta'
            if d1 < N_SIGMA and m2:
                for mm, k in wg.act_linear(SIGMA_MATRICES[d1], m2).items():
                    s = wg.mono_sign(m1, mm)
                    if s:
                        _vadd(out, (m1 | mm, d2), cc * s * k)
            # - delta'(omega) omega' delta
            if d2 < N_SIGMA and m1:
                for mm, k in wg.act_linear(SIGMA_MATRICES[d2], m1).items():
                    s = wg.mono_sign(mm, m2)
                    if s:
                        _vadd(out, (mm | m2, d1), -cc * s * k)
    return out


def _zero_derive(c, mu):
    if isinstance(c, Expr):
        return c.ring.derive(c, mu)
    return 0


def l_bracket(x: dict, y: dict, ring=None, derive=_zero_derive) -> dict:
    """Bracket of L elements with scalar coefficients (Expr or rationals).

    With a nonabelian frame on ``ring`` the structure constants enter via
    [L_i, L_j] = c_ij^k L_k.
    """
    out: dict = {}
    for (m1, d1), f in x.items():
        for (m2, d2), g in y.items():
            X, Y = {(m1, d1): Q(1)}, {(m2, d2): Q(1)}
            fg = f * g
            for key, c in l_bracket_const(X, Y).items():
                _vadd(out, key, fg * c)
            s = wg.mono_sign(m1, m2)
            if ring is not None and not ring.abelian and d1 > DER0 and d2 > DER0 and s:
                for k in (1, 2, 3):
                    ck = ring.structure_constant(d1 - DER0, d2 - DER0, k)
                    if not ck.is_zero():
                        _vadd(out, (m1 | m2, DER0 + k), fg * ck * s)
            if d1 >= DER0 and s:
                dg = derive(g, d1 - DER0)
                if not _iszero(dg):
                    _vadd(out, (m1 | m2, d2), f * dg * s)
            if d2 >= DER0 and s:
                df = derive(f, d2 - DER0)
                if not _iszero(df):
                    sign = -1 if (wg.degree(m1) * wg.degree(m2)) % 2 else 1
                    # rho_y(f) x = theta_{m2} theta_{m1} d(f) delta1
                    s2 = wg.mono_sign(m2, m1)
                    _vadd(out, (m1 | m2, d1), -sign * s2 * g * df)
    return out


def l_wedge(mask: int, v: dict, coef=1) -> dict:
    """Module multiplication theta_mask * v on L."""
    out: dict = {}
    for (m, d), c in v.items():
        s = wg.mono_sign(mask, m)
        if s:
            _vadd(out, (mask | m, d), c * s * coef)
    return out


# --------------------------------------------------------------------------
# the ideal


def ideal_generators() -> list[dict]:
    """Ten real generators of I^2: real parts of v^T S w over a basis of traceless symmetric S."""
    sym = []
    for i in range(3):
        for j in range(i, 3):
            S = [[0] * 3 for _ in range(3)]
            S[i][j] = S[j][i] = 1
            sym.append(S)
    # traceless: off-diagonals, and diag(1,-1,0), diag(0,1,-1)
    basis = [S for S in sym if not any(S[k][k] for k in range(3))]
    basis.append([[1, 0, 0], [0, -1, 0], [0, 0, 0]])
    basis.append([[0, 0, 0], [0, 1, 0], [0, 0, -1]])
    # v_k = a_k + i b_k, w_l = c_l + i d_l
    cyc = {1: (2, 3), 2: (3, 1), 3: (1, 2)}
    gens = []
    for S in basis:
        for imag in (False, True):
            v: dict = {}
            for k in range(3):
                for l in range(3):
                    s = S[k][l]
                    if not s:
                        continue
                    kk, ll = k + 1, l + 1
                    j1, j2 = cyc[kk]
                    m1, m2 = cyc[ll]
                    ak = f"t0t{kk}"
                    bk = f"t{j1}t{j2}"
                    cl = f"s{ll}"
                    dl = f"s{m1}{m2}"
                    if not imag:
                        # Re[(a + i b)(c + i d)] = ac - bd
                        terms = [(s, ak, cl), (-s, bk, dl)]
                    else:
                        # Re[i (a + i b)(c + i d)] = -(ad + bc)
                        terms = [(-s, ak, dl), (-s, bk, cl)]
                    for coef, w, dname in terms:
                        for key, c in parse_l(f"{w}*{dname}").items():
                            _vadd(v, key, c * coef)
            gens.append(v)
    return gens


# --------------------------------------------------------------------------
# the scalar-field summand Phi; vectors are dicts key -> coefficient where a
# key is a monomial mask (Phi^k = ∧^k W for k = 1, 3, 4 and the ∧^2 part of
# Phi^2) or VOL2 for the top-form summand of Phi^2


def phi_degree(key: int) -> int:
    return 2 if key == VOL2 else wg.degree(key)


def phi_theta(a: int, key: int) -> dict:
    """theta_a * (basis key) in Phi."""
    if key == VOL2:
        return {}
    deg = wg.degree(key)
    t = 1 << a
    if deg == 1:
        out = {}
        s = wg.mono_sign(t, key)
        if s:
            out[t | key] = s
        b = wg.bits(key)[0]
        hs, hm = wg.HODGE[b]
        s2 = wg.mono_sign(t, hm)
        if s2:
            out[VOL2] = out.get(VOL2, 0) + hs * s2
        return out
    s = wg.mono_sign(t, key)
    return {t | key: s} if s else {}


def phi_mul(mask: int, v: dict) -> dict:
    """theta_mask * v for a Phi vector v."""
    out = dict(v)
    for a in reversed(wg.bits(mask)):
        nxt: dict = {}
        for key, c in out.items():
            for k2, s in phi_theta(a, key).items():
                _vadd(nxt, k2, c * s)
        out = nxt
    return out


def phi_act(d: int, v: dict) -> dict:
    """Action of the CDer basis element d on a Phi vector (derivations act by zero)."""
    if d >= N_SIGMA:
        return {}
    out: dict = {}
    for key, c in v.items():
        if key == VOL2:
            if d == 0:
                _vadd(out, VOL2, c * 2)
            continue
        for mm, k in wg.act_linear(SIGMA_MATRICES[d], key).items():
            _vadd(out, mm, c * k)
    return out


def phi_pair(r: int, s: int) -> dict:
    """[theta_r, theta_s] for underlined degree-one basis elements, as an L vector."""
    out: dict = {}
    for p in range(4):
        for qq in range(4):
            coef = Q(-3) * ((p == r and qq == s) + (p == s and qq == r))
            if r == s and p == qq:
                coef += wg.ETA[r] * wg.ETA[p]
            if not coef:
                continue
            for i in range(4):
                sg, idx = sigma_ab(i, qq)
                if not sg:
                    continue
                ts, tm = wg.sorted_sign((i, p))
                if not ts:
                    continue
                _vadd(out, (tm, idx), coef * wg.ETA[i] * sg * ts)
    return out


def _phi_rep(key: int) -> tuple[int, int, int]:
    """Write a Phi basis key as sign * theta_mask * underline(theta_a)."""
    if key == VOL2:
        return 1, 1, 0  # theta_0 * underline(theta_0)
    idx = wg.bits(key)
    return 1, wg.mask_of(idx[:-1]), idx[-1]


# --------------------------------------------------------------------------
# distinguished basis


TABLE = [
    ((0, 0, 0),
     ["d0", "L1", "L2", "L3", "s0", "t0*s0+t1*s1", "t0*s0+t2*s2", "t0*s0+t3*s3",
      "t2t3*s23+t3t1*s31+t1t2*s12+2t0t1*s1+2t0t2*s2+2t0t3*s3"],
     ["t0"]),
    ((2, 0, 0), ["-t1*s23+t2*s31+t3*s12"], []),
    ((0, 2, 0), ["+t1*s23-t2*s31+t3*s12"], []),
    ((0, 0, 2), ["+t1*s23+t2*s31-t3*s12"], []),
    ((0, 1, 1),
     ["s1", "s23", "t1*d0", "t1*L1", "t1*L2", "t1*L3", "t0*s1+t1*s0", "t2*s3+t3*s2",
      "t3*s31", "t2*s12", "t0t2*s12+t1t2*s2"],
     ["t1"]),
    ((1, 0, 1),
     ["s2", "s31", "t2*d0", "t2*L1", "t2*L2", "t2*L3", "t0*s2+t2*s0", "t3*s1+t1*s3",
      "t1*s12", "t3*s23", "t0t3*s23+t2t3*s3"],
     ["t2"]),
    ((1, 1, 0),
     ["s3", "s12", "t3*d0", "t3*L1", "t3*L2", "t3*L3", "t0*s3+t3*s0", "t1*s2+t2*s1",
      "t2*s23", "t1*s31", "t0t1*s31+t3t1*s1"],
     ["t3"]),
    ((2, 1, 1),
     ["t2*s3-t3*s2", "t2t3*d0", "t2t3*L1", "t2t3*L2", "t2t3*L3",
      "t0t2*s3-t0t3*s2-2t2t3*s0", "t0t2*s3+t0t3*s2-2t1t2*s31"],
     ["t2t3"]),
    ((1, 2, 1),
     ["t3*s1-t1*s3", "t3t1*d0", "t3t1*L1", "t3t1*L2", "t3t1*L3",
      "t0t3*s1-t0t1*s3-2t3t1*s0", "t0t3*s1+t0t1*s3-2t2t3*s12"],
     ["t3t1"]),
    ((1, 1, 2),
     ["t1*s2-t2*s1", "t1t2*d0", "t1t2*L1", "t1t2*L2", "t1t2*L3",
      "t0t1*s2-t0t2*s1-2t1t2*s0", "t0t1*s2+t0t2*s1-2t3t1*s23"],
     ["t1t2"]),
    ((2, 2, 2),
     ["t0t1*s23+t0t2*s31+t0t3*s12-2t2t3*s1-2t3t1*s2-2t1t2*s3",
      "t1t2t3*d0", "t1t2t3*L1", "t1t2t3*L2", "t1t2t3*L3",
      "t0t2t3*s1+t0t3t1*s2+t0t1t2*s3+3t1t2t3*s0"],
     ["t1t2t3"]),
]


def _theta_label(text: str) -> str:
    return text.replace("t", "θ")


def _l_label(text: str) -> str:
    s = text.lstrip("+")
    s = re.sub(r"t(\d)", r"θ\1", s)
    for src, dst in (("s23", "σ23"), ("s31", "σ31"), ("s12", "σ12"), ("s0", "σ0"), ("s1", "σ1"),
                     ("s2", "σ2"), ("s3", "σ3"), ("d0", "∂0")):
        s = s.replace(src, dst)
    return s.replace("*", "")


@dataclass
class BasisElement:
    index: int
    kind: str  # "E" or "P"
    degree: int
    grade: tuple
    plain: bool  # False for theta_0 multiples
    label: str
    lvec: dict = field(default_factory=dict)  # E representative in L
    pvec: dict = field(default_factory=dict)  # Phi vector


class Algebra:
    """Exact structure data of E_Phi with the distinguished basis."""

    def __init__(self):
        self.basis: list[BasisElement] = []
        self._build_basis()
        self.n = len(self.basis)
        self.E = [b.index for b in self.basis if b.kind == "E"]
        self.P = [b.index for b in self.basis if b.kind == "P"]
        self.deg = [b.degree for b in self.basis]
        self.grade = [b.grade for b in self.basis]
        self.by_degree = {i: [b.index for b in self.basis if b.degree == i] for i in range(5)}
        self._build_ideal()
        self._build_reduction()
        self._phi_index = {}
        for b in self.basis:
            if b.kind == "P":
                (key, sgn), = b.pvec.items()
                self._phi_index[key] = (b.index, sgn)
        self._build_tables()

    # -- basis --------------------------------------------------------------
    def _build_basis(self) -> None:
        def add(kind, deg, grade, plain, label, lvec=None, pvec=None):
            self.basis.append(BasisElement(len(self.basis), kind, deg, grade, plain, label,
                                           lvec or {}, pvec or {}))

        for grade, elist, plist in TABLE:
            for text in elist:
                v = parse_l(text)
                d = l_degree(v)
                add("E", d, grade, True, _l_label(text), lvec=v)
                add("E", d + 1, grade, False, "θ0(" + _l_label(text) + ")", lvec=l_wedge(1, v))
            for text in plist:
                word = [int(c) for c in text[1::2]]
                s, mask = wg.sorted_sign(word)
                pv = {mask: Q(s)}
                lab = "_" + _theta_label(text)
                add("P", len(word), grade, True, lab, pvec=pv)
                add("P", len(word) + 1, grade, False, "θ0" + lab, pvec=phi_mul(1, pv))

    # -- ideal and reduction --------------------------------------------------
    def _l_index(self, m: int) -> list:
        return [(mask, d) for mask in wg.basis(m) for d in range(N_CDER)]

    def _build_ideal(self) -> None:
        gens = ideal_generators()
        self.ideal_gens = gens
        self.ideal_basis = {}
        for m in range(2, 5):
            idx = self._l_index(m)
            pos = {k: i for i, k in enumerate(idx)}
            rows = []
            for mask in wg.basis(m - 2):
                for g in gens:
                    w = l_wedge(mask, g)
                    row = [Q(0)] * len(idx)
                    for k, c in w.items():
                        row[pos[k]] = c
                    rows.append(row)
            keep = independent_rows(rows)
            self.ideal_basis[m] = [rows[i] for i in keep]

    def _build_reduction(self) -> None:
        self.reduce_rows = {}
        for m in range(5):
            idx = self._l_index(m)
            pos = {k: i for i, k in enumerate(idx)}
            ebas = [b for b in self.basis if b.kind == "E" and b.degree == m]
            rows = []
            for b in ebas:
                row = [Q(0)] * len(idx)
                for k, c in b.lvec.items():
                    row[pos[k]] = c
                rows.append(row)
            rows += self.ideal_basis.get(m, [])
            if len(rows) != len(idx):
                raise AssertionError(f"degree {m}: complement plus ideal has {len(rows)} rows, L has {len(idx)}")
            inv = inverse(rows)
            table = {}
            for li, key in enumerate(idx):
                r = {}
                for j, b in enumerate(ebas):
                    c = inv[li][j]
                    if c:
                        r[b.index] = c
                table[key] = r
            self.reduce_rows[m] = table

    def ideal_reduce(self, x: dict) -> dict:
        """Project an L vector along the ideal onto the distinguished basis."""
        out: dict = {}
        for (mask, d), c in x.items():
            for b, k in self.reduce_rows[wg.degree(mask)][(mask, d)].items():
                _vadd(out, b, c * k)
        return out

    def phi_coords(self, v: dict) -> dict:
        out: dict = {}
        for key, c in v.items():
            b, s = self._phi_index[key]
            _vadd(out, b, c * s)
        return out

    # -- structure tables -----------------------------------------------------
    def _rep_phi(self, b: int) -> tuple[int, int, int]:
        (key, sgn), = self.basis[b].pvec.items()
        s, mask, a = _phi_rep(key)
        return int(sgn) * s, mask, a

    def _pp_bracket(self, a: int, b: int) -> dict:
        sa, ma, ra = self._rep_phi(a)
        sb, mb, rb = self._rep_phi(b)
        # [w u_r, w' u_s] = (-1)^{|w'|} w w' [u_r, u_s]
        s = wg.mono_sign(ma, mb)
        if not s:
            return {}
        sign = sa * sb * s * (-1 if wg.degree(mb) % 2 else 1)
        v = l_wedge(ma | mb, phi_pair(ra, rb), sign)
        return self.ideal_reduce(v)

    def _ep_bracket(self, a: int, b: int) -> dict:
        out: dict = {}
        pv = self.basis[b].pvec
        for (mask, d), c in self.basis[a].lvec.items():
            for key, k in phi_mul(mask, phi_act(d, pv)).items():
                _vadd(out, key, c * k)
        return self.phi_coords(out)

    def _build_tables(self) -> None:
        n = self.n
        self.bconst: dict = {}
        self.frame_terms: dict = {}
        for a in range(n):
            for b in range(n):
                if self.deg[a] + self.deg[b] > 4:
                    continue
                ka, kb = self.basis[a].kind, self.basis[b].kind
                if ka == "E" and kb == "E":
                    v = self.ideal_reduce(l_bracket_const(self.basis[a].lvec, self.basis[b].lvec))
                    ft = self._frame_pair(a, b)
                    if ft:
                        self.frame_terms[(a, b)] = ft
                elif ka == "E":
                    v = self._ep_bracket(a, b)
                elif kb == "E":
                    sign = -1 if (self.deg[a] * self.deg[b]) % 2 else 1
                    v = {k: -sign * c for k, c in self._ep_bracket(b, a).items()}
                else:
                    v = self._pp_bracket(a, b)
                if v:
                    self.bconst[(a, b)] = v
        self.anchor = []
        for b in self.basis:
            items = []
            for (mask, d), c in sorted(b.lvec.items()):
                if d >= DER0:
                    items.append((mask, d - DER0, c))
            self.anchor.append(tuple(items))
        self.module = {}
        for mask in range(16):
            for b in range(n):
                if self.deg[b] + wg.degree(mask) > 4:
                    continue
                be = self.basis[b]
                if be.kind == "E":
                    v = self.ideal_reduce(l_wedge(mask, be.lvec))
                else:
                    v = self.phi_coords(phi_mul(mask, be.pvec))
                if v:
                    self.module[(mask, b)] = v

    def _frame_pair(self, a: int, b: int) -> dict:
        out: dict = {}
        for (m1, d1), c1 in self.basis[a].lvec.items():
            if d1 <= DER0:
                continue
            for (m2, d2), c2 in self.basis[b].lvec.items():
                if d2 <= DER0 or d1 == d2:
                    continue
                s = wg.mono_sign(m1, m2)
                if not s:
                    continue
                for k in (1, 2, 3):
                    key = (d1 - DER0, d2 - DER0, k)
                    vec = self.ideal_reduce({(m1 | m2, DER0 + k): c1 * c2 * s})
                    cur = out.setdefault(key, {})
                    for t, c in vec.items():
                        _vadd(cur, t, c)
        return {k: v for k, v in out.items() if v}

    # -- lookups ----------------------------------------------------------------
    def find(self, label: str) -> int:
        for b in self.basis:
            if b.label == label:
                return b.index
        raise KeyError(label)

    def element(self, text: str, coef=1, kind: str = "E") -> "GlaElement":
        """Element from an L expression (reduced along the ideal) or a Phi monomial."""
        if kind == "P":
            word = [int(c) for c in text.replace("t", "")]
            s, mask = wg.sorted_sign(word)
            return GlaElement({k: c * coef for k, c in self.phi_coords({mask: Q(s)}).items()})
        return GlaElement({k: c * coef for k, c in self.ideal_reduce(parse_l(text)).items()})


@lru_cache(maxsize=1)
def get_algebra() -> Algebra:
    return Algebra()


# --------------------------------------------------------------------------
# elements with scalar coefficients


class GlaElement:
    """Coefficient vector over the distinguished basis of E_Phi (sparse)."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: dict | None = None):
        self.coeffs = {}
        for k, v in (coeffs or {}).items():
            if not _iszero(v):
                self.coeffs[k] = v

    def __add__(self, o: "GlaElement") -> "GlaElement":
        out = dict(self.coeffs)
        for k, v in o.coeffs.items():
            _vadd(out, k, v)
        return GlaElement(out)

    def __neg__(self) -> "GlaElement":
        return GlaElement({k: -v for k, v in self.coeffs.items()})

    def __sub__(self, o: "GlaElement") -> "GlaElement":
        return self + (-o)

    def scale(self, c) -> "GlaElement":
        return GlaElement({k: v * c for k, v in self.coeffs.items()})

    def __rmul__(self, c) -> "GlaElement":
        return self.scale(c)

    def __mul__(self, c) -> "GlaElement":
        return self.scale(c)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __eq__(self, o) -> bool:
        return isinstance(o, GlaElement) and (self - o).is_zero()

    def degrees(self) -> set:
        alg = get_algebra()
        return {alg.deg[k] for k in self.coeffs}

    @property
    def degree(self) -> int:
        d = self.degrees()
        if len(d) != 1:
            raise ValueError("element is not homogeneous")
        return d.pop()

    def algebra_tag(self) -> str:
        alg = get_algebra()
        kinds = {alg.basis[k].kind for k in self.coeffs}
        if kinds == {"P"}:
            return "Phi"
        if kinds == {"E"} or not kinds:
            return "E"
        return "E_Phi"

    def e_part(self) -> "GlaElement":
        alg = get_algebra()
        return GlaElement({k: v for k, v in self.coeffs.items() if alg.basis[k].kind == "E"})

    def phi_part(self) -> "GlaElement":
        alg = get_algebra()
        return GlaElement({k: v for k, v in self.coeffs.items() if alg.basis[k].kind == "P"})

    def map(self, fn) -> "GlaElement":
        return GlaElement({k: fn(v) for k, v in self.coeffs.items()})

    def __repr__(self) -> str:
        alg = get_algebra()
        if not self.coeffs:
            return "0"
        return " + ".join(f"({v})*[{alg.basis[k].label}]" for k, v in sorted(self.coeffs.items()))


def _mul_vec(out: dict, vec: dict, coef) -> None:
    for k, c in vec.items():
        _vadd(out, k, coef * c)


def bracket(x: GlaElement, y: GlaElement, ring=None, derive=None, keep=None) -> GlaElement:
    """Bracket in E_Phi with scalar coefficients.

    ``derive(c, mu)`` differentiates a coefficient (mu = 0 for the time
    derivative, 1..3 for the spatial frame); the default handles exact
    expressions and treats plain numbers as constants.  ``keep(a, b, c, f)``
    may veto output terms (used by the associated-graded bracket).
    """
    alg = get_algebra()
    derive = derive or _zero_derive
    if ring is None:
        for v in list(x.coeffs.values()) + list(y.coeffs.values()):
            if isinstance(v, Expr):
                ring = v.ring
                break
    out: dict = {}
    deg = alg.deg
    bconst, anchor, module, frame_terms = alg.bconst, alg.anchor, alg.module, alg.frame_terms
    nonab = ring is not None and not ring.abelian
    dcache: dict = {}

    def d_of(c, mu, key):
        k = (key, mu)
        v = dcache.get(k)
        if v is None:
            v = derive(c, mu)
            dcache[k] = v
        return v

    for a, f in x.coeffs.items():
        for b, g in y.coeffs.items():
            if deg[a] + deg[b] > 4:
                continue
            vec = bconst.get((a, b))
            if vec or (nonab and (a, b) in frame_terms):
                fg = f * g
                if vec:
                    _mul_vec(out, vec, fg)
                if nonab:
                    for (i, j, k), v2 in frame_terms.get((a, b), {}).items():
                        ck = ring.structure_constant(i, j, k)
                        if not ck.is_zero():
                            _mul_vec(out, v2, fg * ck)
            for mask, mu, r in anchor[a]:
                dg = d_of(g, mu, ("y", b))
                if _iszero(dg):
                    continue
                vec2 = module.get((mask, b))
                if vec2:
                    _mul_vec(out, vec2, f * dg * r)
            if anchor[b]:
                sign = -1 if (deg[a] * deg[b]) % 2 else 1
                for mask, mu, r in anchor[b]:
                    df = d_of(f, mu, ("x", a))
                    if _iszero(df):
                        continue
                    vec2 = module.get((mask, a))
                    if vec2:
                        _mul_vec(out, vec2, -sign * g * df * r)
    return GlaElement(out)


def phi_bracket(phi: GlaElement, psi: GlaElement) -> GlaElement:
    """[Phi^1, Phi^1] -> E^2 (bilinear over the scalars)."""
    alg = get_algebra()
    for v in (phi, psi):
        if any(alg.basis[k].kind != "P" or alg.deg[k] != 1 for k in v.coeffs):
            raise ValueError("phi_bracket needs degree-one Phi elements")
    return bracket(phi, psi)


def module_mul(mask: int, x: GlaElement, coef=1) -> GlaElement:
    """theta_mask * x."""
    alg = get_algebra()
    out: dict = {}
    for b, c in x.coeffs.items():
        vec = alg.module.get((mask, b))
        if vec:
            _mul_vec(out, vec, c * coef)
    return GlaElement(out)


def from_l(x: dict) -> GlaElement:
    """Reduce an L vector (with arbitrary coefficients) into E coordinates."""
    return GlaElement(get_algebra().ideal_reduce(x))


def frame_of(x: GlaElement) -> list[list]:
    """4x4 frame: F[r][mu] is the coefficient of theta_r d_mu in the anchor of x."""
    alg = get_algebra()
    F = [[0] * 4 for _ in range(4)]
    for b, c in x.coeffs.items():
        if alg.deg[b] != 1:
            raise ValueError("frame_of needs a degree-one element")
        for mask, mu, r in alg.anchor[b]:
            a = wg.bits(mask)[0]
            F[a][mu] = F[a][mu] + c * r
    return F


def sigma0_vector(x: GlaElement) -> list:
    """w in the decomposition x = w sigma_0 + (terms without sigma_0)."""
    alg = get_algebra()
    w = [0] * 4
    for b, c in x.coeffs.items():
        be = alg.basis[b]
        if be.kind != "E":
            continue
        for (mask, d), k in be.lvec.items():
            if d == 0 and wg.degree(mask) == 1:
                a = wg.bits(mask)[0]
                w[a] = w[a] + c * k
    return w


def phi1_vector(x: GlaElement) -> list:
    alg = get_algebra()
    v = [0] * 4
    for b, c in x.coeffs.items():
        be = alg.basis[b]
        if be.kind == "P" and be.degree == 1:
            (key, s), = be.pvec.items()
            a = wg.bits(key)[0]
            v[a] = v[a] + c * s
    return v


def _adjugate4(F):
    """Adjugate and determinant of a 4x4 matrix over a commutative ring."""
    def minor(M, i, j):
        return [[M[r][c] for c in range(len(M)) if c != j] for r in range(len(M)) if r != i]

    def det(M):
        n = len(M)
        if n == 1:
            return M[0][0]
        tot = 0
        for j in range(n):
            if _iszero(M[0][j]):
                continue
            t = M[0][j] * det(minor(M, 0, j))
            tot = tot + t if j % 2 == 0 else tot - t
        return tot

    adj = [[None] * 4 for _ in range(4)]
    for i in range(4):
        for j in range(4):
            m = det(minor(F, j, i))
            adj[i][j] = m if (i + j) % 2 == 0 else -m
    return adj, det(F)


def frame_determinant(F) -> object:
    return _adjugate4(F)[1]


def one_forms(x: GlaElement, invert=None):
    """(alpha, beta): one-form components (d tau, dx1, dx2, dx3) of the sigma_0 and Phi^1 parts.

    ``invert(m)`` inverts the frame determinant; the default handles
    constant and exponential determinants exactly (a single damping
    monomial) and plain numbers.
    """
    F = frame_of(x)
    adj, m = _adjugate4(F)
    if _iszero(m):
        raise ValueError("degenerate frame")
    minv = (invert or _invert_default)(m)
    w = sigma0_vector(x)
    v = phi1_vector(x)

    # alpha_mu F[r][mu] = w_r  =>  alpha = F^{-1} w with F^{-1} = adj / m
    def solve(rhs):
        out = []
        for mu in range(4):
            acc = 0
            for r in range(4):
                if not _iszero(rhs[r]) and not _iszero(adj[mu][r]):
                    acc = acc + adj[mu][r] * rhs[r]
            out.append(acc * minv if not _iszero(acc) else 0)
        return out

    return solve(w), solve(v)


def _invert_default(m):
    if isinstance(m, Expr):
        if m.is_constant():
            return m.ring.coerce(1 / m.constant_value())
        if len(m.num) == 1 and not m.den:
            (mono, c), = m.num.items()
            from .scalar import DAMP
            if all(atom[0] == DAMP for atom, _ in mono):
                inv = m.ring.one() * (1 / c)
                for atom, e in mono:
                    inv = inv * m.ring.damping(atom[1], -e)
                return inv
        raise RingError("frame determinant is not invertible in the exact backend")
    return 1 / m


def to_json(x: GlaElement, serialize=None) -> dict:
    from .scalar import to_json as expr_json

    ser = serialize or (lambda c: expr_json(c) if isinstance(c, Expr) else {"add": [{"mul": [{"rat": str(Q(c))}]}]})
    degs = x.degrees()
    return {
        "algebra": x.algebra_tag(),
        "degree": degs.pop() if len(degs) == 1 else sorted(degs),
        "coeffs": [{"basis_id": k, "scalar_expr": ser(v)} for k, v in sorted(x.coeffs.items())],
    }


def from_json(ring, d: dict) -> GlaElement:
    from .scalar import from_json as expr_from

    return GlaElement({int(t["basis_id"]): expr_from(ring, t["scalar_expr"]) for t in d["coeffs"]})


def basis_table_markdown() -> str:
    alg = get_algebra()
    lines = ["| id | kind | degree | grade | element |", "|---|---|---|---|---|"]
    for b in alg.basis:
        g = "".join(map(str, b.grade))
        lines.append(f"| {b.index} | {b.kind} | {b.degree} | {g} | {b.label} |")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# dense structure tensors


@dataclass
class StructureArrays:
    """Integer structure tensors sliced by homological degree.

    ``B[(i, j)][p, q, r]`` and ``N[(i, j)][p, mu, q, r]`` are the constant
    bracket and the anchor-times-module tensor
    (rho_p(f) e_q = sum_mu d_mu f N[p, mu, q, :]) scaled by ``scale``.
    Indices are positions inside ``slices[i]``.
    """

    scale: int
    slices: dict
    B: dict
    N: dict
    Bf: dict = field(default_factory=dict)
    Nf: dict = field(default_factory=dict)
    Nany: dict = field(default_factory=dict)


@lru_cache(maxsize=1)
def structure_arrays() -> StructureArrays:
    import math

    import numpy as np

    alg = get_algebra()
    dens = [1]
    for v in alg.bconst.values():
        dens.extend(int(Q(c).denominator) for c in v.values())
    for v in alg.module.values():
        dens.extend(int(Q(c).denominator) for c in v.values())
    for items in alg.anchor:
        dens.extend(int(Q(r).denominator) for _, _, r in items)
    L = 1
    for d in dens:
        L = L * d // math.gcd(L, d)
    # anchor and module combine multiplicatively; the scale must clear both
    slices = {i: alg.by_degree[i] for i in range(5)}
    pos = {i: {b: k for k, b in enumerate(slices[i])} for i in range(5)}
    B, N = {}, {}
    for i in range(5):
        for j in range(5):
            if i + j > 4:
                continue
            o = i + j
            Bt = np.zeros((len(slices[i]), len(slices[j]), len(slices[o])), dtype=np.int64)
            Nt = np.zeros((len(slices[i]), 4, len(slices[j]), len(slices[o])), dtype=np.int64)
            for pi, p in enumerate(slices[i]):
                for qi, qq in enumerate(slices[j]):
                    for r, c in alg.bconst.get((p, qq), {}).items():
                        Bt[pi, qi, pos[o][r]] = int(Q(c) * L)
                    for mask, mu, rr in alg.anchor[p]:
                        for r, c in alg.module.get((mask, qq), {}).items():
                            val = Q(rr) * Q(c) * L
                            if val.denominator != 1:
                                raise AssertionError("scale does not clear denominators")
                            Nt[pi, mu, qi, pos[o][r]] += int(val)
            B[(i, j)] = Bt
            N[(i, j)] = Nt
    Bf = {k: v.astype(np.float64) for k, v in B.items()}
    Nf = {k: v.astype(np.float64) for k, v in N.items()}
    Nany = {k: [bool(v[:, mu].any()) for mu in range(4)] for k, v in N.items()}
    return StructureArrays(L, slices, B, N, Bf, Nf, Nany)


def _jet_merge(a: tuple, b: tuple) -> tuple:
    return tuple(sorted(a + b))


def _jet_d(jet: tuple, nu: int) -> list:
    out = []
    for k, (fn, ds) in enumerate(jet):
        nj = jet[:k] + ((fn, tuple(sorted(ds + (nu,)))),) + jet[k + 1:]
        out.append(nj)
    return out


def _jet_bracket(X: dict, Y: dict, da: int, db: int, S: StructureArrays) -> dict:
    """Bracket of jet-valued families: X[jet] has shape (batch_x, n_da)."""
    import numpy as np

    Bt, Nt = S.Bf[(da, db)], S.Nf[(da, db)]
    Nr = S.Nf[(db, da)]  # anchor of the right factor acting on the left one
    na, nb, no = Bt.shape
    sign = -1 if (da * db) % 2 else 1
    out: dict = {}

    def acc(jet, arr):
        cur = out.get(jet)
        out[jet] = arr if cur is None else cur + arr

    def is_eye(M, n):
        return M.shape == (n, n) and np.array_equal(M, np.eye(n))

    def left(Xa, T, Ya):
        # sum_pq X[x,p] T[p,q,r] Y[y,q]
        XT = T if is_eye(Xa, na) else (Xa @ T.reshape(na, nb * no)).reshape(-1, nb, no)
        if is_eye(Ya, nb):
            return XT.reshape(-1, no)
        return np.matmul(Ya[None], XT).reshape(-1, no)

    def right(Xa, T, Ya):
        # sum_pq X[x,p] T[q,p,r] Y[y,q]
        YT = T if is_eye(Ya, nb) else (Ya @ T.reshape(nb, na * no)).reshape(-1, na, no)
        if is_eye(Xa, na):
            return YT.transpose(1, 0, 2).reshape(-1, no)
        return (Xa @ YT.transpose(1, 0, 2).reshape(na, -1)).reshape(-1, no)

    for jx, Xa in X.items():
        for jy, Ya in Y.items():
            acc(_jet_merge(jx, jy), left(Xa, Bt, Ya))
            for nu in range(4):
                if S.Nany[(da, db)][nu]:
                    t = left(Xa, Nt[:, nu], Ya)
                    for j2 in _jet_d(jy, nu):
                        acc(_jet_merge(jx, j2), t)
                if S.Nany[(db, da)][nu]:
                    t = right(Xa, Nr[:, nu], Ya)
                    for j1 in _jet_d(jx, nu):
                        acc(_jet_merge(j1, jy), -sign * t)
    return out


def jacobi_defects(S: StructureArrays | None = None, blocks=None) -> dict:
    """Graded Jacobi for f e_a, g e_b, h e_c with generic functions f, g, h.

    Runs over every ordered basis triple of E_Phi (degree sum <= 4) with an
    abelian frame and returns {(da, db, dc): number of nonzero defect
    entries}; the identity holds exactly iff every count is zero.  The
    computation expands each Jacobiator over jets of f, g, h and compares
    integer tensors scaled by the square of the common denominator.  The
    arithmetic runs in float64 on integers far below 2**53, which is exact;
    a magnitude guard enforces that.
    """
    import numpy as np

    S = S or structure_arrays()
    # every entry is a sum of at most 4 * 63 * 63 products of two table
    # entries per jet (a crude count), far below 2**53
    big = max(max(abs(int(v.min())), int(v.max())) for T in (S.B, S.N) for v in T.values() if v.size)
    if big * big * 4 * 64 * 64 * 100 >= 2 ** 53:
        raise OverflowError("table entries too large for exact float arithmetic")
    out = {}
    for da in range(5):
        for db in range(5 - da):
            for dc in range(5 - da - db):
                if blocks is not None and (da, db, dc) not in blocks:
                    continue
                na, nb, nc = (len(S.slices[d]) for d in (da, db, dc))
                no = len(S.slices[da + db + dc])
                s_ab = -1 if (da * db) % 2 else 1
                X = {((0, ()),): np.eye(na)}
                Y = {((1, ()),): np.eye(nb)}
                # chunk the third factor to bound memory
                step = max(1, int(2e6 // max(1, na * nb * no)))
                bad = 0
                for c0 in range(0, nc, step):
                    Z = {((2, ()),): np.eye(nc)[c0:c0 + step]}
                    m = Z[((2, ()),)].shape[0]
                    T1 = _jet_bracket(X, _jet_bracket(Y, Z, db, dc, S), da, db + dc, S)
                    T2 = _jet_bracket(_jet_bracket(X, Y, da, db, S), Z, da + db, dc, S)
                    T3 = _jet_bracket(Y, _jet_bracket(X, Z, da, dc, S), db, da + dc, S)
                    zero = np.zeros((na * nb * m, no))
                    for jet in set(T1) | set(T2) | set(T3):
                        t1 = T1.get(jet, zero).reshape(na, nb, m, no)
                        t2 = T2.get(jet, zero).reshape(na, nb, m, no)
                        t3 = T3.get(jet, zero).reshape(nb, na, m, no)
                        d = t1 - t2 - s_ab * t3.transpose(1, 0, 2, 3)
                        bad += int(np.count_nonzero(d))
                out[(da, db, dc)] = bad
    return out


def antisymmetry_defects() -> int:
    """Number of basis pairs violating [x, y] = -(-1)^{|x||y|}[y, x] (constant and anchor parts)."""
    alg = get_algebra()
    S = structure_arrays()
    bad = 0
    for (a, b), v in alg.bconst.items():
        s = -1 if (alg.deg[a] * alg.deg[b]) % 2 else 1
        w = alg.bconst.get((b, a), {})
        if any(v.get(k, 0) + s * w.get(k, 0) for k in set(v) | set(w)):
            bad += 1
    for (a, b), v in alg.bconst.items():
        if (b, a) not in alg.bconst:
            bad += 1
    return bad
