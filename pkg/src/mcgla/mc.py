"""Maurer-Cartan elements: residuals, gauge action, leading terms and the affine gauge.

Cyclic triples (i, j, k) run over (1,2,3), (2,3,1), (3,1,2).  The damped
parameters are ``sbar_i = s_i exp(-p_i tau)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from . import filtration as fl
from .filtration import FilteredSeries
from .gla import GlaElement, bracket, frame_determinant, frame_of, get_algebra
from .scalar import CONST, DAMP, Expr, Q, Ring, RingError, VectorField, from_json as expr_from_json, structure_functions, to_json as expr_to_json

CYCLIC = ((1, 2, 3), (2, 3, 1), (3, 1, 2))
_PAIR = {1: "s23", 2: "s31", 3: "s12"}  # sigma_{jk} for cyclic (i, j, k)
_SIG = {(2, 3): "s23", (3, 1): "s31", (1, 2): "s12"}


class GaugeError(ValueError):
    """Gauging failed; ``pair`` names the offending exponents when isotropy is the cause."""

    def __init__(self, msg: str, pair: tuple | None = None):
        super().__init__(msg)
        self.pair = pair


def _sig(a: int, b: int) -> tuple[str, int]:
    """Name and sign of sigma_ab in terms of the stored sigma_23, sigma_31, sigma_12."""
    if (a, b) in _SIG:
        return _SIG[(a, b)], 1
    return _SIG[(b, a)], -1


def _el(text: str, coef=1, kind: str = "E") -> GlaElement:
    return get_algebra().element(text, coef, kind)


# -- data ----------------------------------------------------------------------


@dataclass
class DataTuple:
    """Asymptotic data (D_1, D_2, D_3, p_1, p_2, p_3, p_0, zeta, chi) on M^3.

    ``D`` holds three :class:`VectorField` over the coordinate frame L_1..L_3.
    The structure functions are computed from D unless given explicitly.
    """

    ring: Ring
    D: list
    p: list
    p0: object
    zeta: object = 0
    chi: object = 0
    c: dict = field(default=None)

    def __post_init__(self):
        R = self.ring
        self.D = [d if isinstance(d, VectorField) else VectorField(R, d) for d in self.D]
        self.p = [R.coerce(x) for x in self.p]
        self.p0, self.zeta, self.chi = (R.coerce(x) for x in (self.p0, self.zeta, self.chi))
        try:
            bound = R.p
        except RingError:
            bound = None
        if bound is None or any(a != b for a, b in zip(bound, self.p)):
            R.bind_p(self.p)
        if self.c is None:
            self.c = structure_functions(self.D)
        if frame_determinant_3(self.D).is_zero():
            raise GaugeError("D_1, D_2, D_3 do not form a frame")

    def cf(self, i: int, j: int, k: int) -> Expr:
        """Structure function c_ij^k."""
        if i == j:
            return self.ring.zero()
        return self.ring.coerce(self.c.get((i, j), {}).get(k, 0))

    def rational_p(self) -> list | None:
        return [x.constant_value() for x in self.p] if all(x.is_constant() for x in self.p) else None

    @property
    def anisotropic(self) -> bool | None:
        """Pairwise distinct exponents; None when not decidable (symbolic p)."""
        r = self.rational_p()
        if r is None:
            return None
        return len(set(r)) == 3

    @property
    def positive(self) -> bool | None:
        r = self.rational_p()
        if r is None:
            return None
        return all(x > 0 for x in r)

    def to_json(self) -> dict:
        return {
            "D": [[expr_to_json(c) for c in d.comps] for d in self.D],
            "p": [expr_to_json(x) for x in self.p],
            "p0": expr_to_json(self.p0),
            "zeta": expr_to_json(self.zeta),
            "chi": expr_to_json(self.chi),
        }

    @classmethod
    def from_json(cls, ring: Ring, d: dict) -> "DataTuple":
        def rd(x):
            return expr_from_json(ring, x)

        return cls(ring, [[rd(c) for c in row] for row in d["D"]], [rd(x) for x in d["p"]],
                   rd(d["p0"]), rd(d.get("zeta", 0) or {"add": []}), rd(d.get("chi", 0) or {"add": []}))


def frame_determinant_3(D: list) -> Expr:
    m = [d.comps for d in D]
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def homogeneous_tuple(ring: Ring, p, p0, c=(0, 0, 0)) -> DataTuple:
    """Constant exponents, D_i = L_i with [L_j, L_k] = c_i L_i installed on the ring."""
    ring.set_structure({(2, 3): {1: c[0]}, (3, 1): {2: c[1]}, (1, 2): {3: c[2]}})
    unit = [[1 if a == b else 0 for b in range(3)] for a in range(3)]
    return DataTuple(ring, unit, list(p), p0)


def kasner_element(ring: Ring, p, p0) -> GlaElement:
    """theta_0 d_0 + sum_i (p_i (theta_0 sigma_0 + theta_i sigma_i) + e^{-(p_j+p_k) tau} theta_i L_i) + p0 _theta_0."""
    x = _el("t0*d0")
    for i, j, k in CYCLIC:
        x = x + _el(f"t{i}*L{i}", ring.damping(j) * ring.damping(k))
        x = x + _el(f"t0*s0+t{i}*s{i}", p[i - 1])
    return x + _el("t0", p0, kind="P")


def naive_leading_term(ring: Ring, p, p0) -> GlaElement:
    """theta_0 d_0 + p0 _theta_0 + sum_i p_i (theta_0 sigma_0 + theta_i sigma_i)."""
    x = _el("t0*d0") + _el("t0", p0, kind="P")
    for i in (1, 2, 3):
        x = x + _el(f"t0*s0+t{i}*s{i}", p[i - 1])
    return x


def leading_element(t: DataTuple) -> GlaElement:
    """The explicit leading term as an element with s_i atoms in its coefficients."""
    R = t.ring
    p, tau = t.p, R.tau()
    sb = [None] + [R.sbar(i) for i in (1, 2, 3)]
    psum = p[0] + p[1] + p[2]
    x = naive_leading_term(R, p, t.p0)
    for i, j, k in CYCLIC:
        Di = t.D[i - 1]
        sjk = sb[j] * sb[k]
        x = x + _el(f"t{i}*{_PAIR[i]}-t{j}*{_PAIR[j]}-t{k}*{_PAIR[k]}", sb[i] * sb[i] * t.cf(j, k, i) * Q(1, 2))
        for mu in (1, 2, 3):
            x = x + _el(f"t{i}*L{mu}", sjk * Di.comps[mu - 1])
        dz = Di(t.zeta)
        x = x - _el(f"t0*s{i}+t{i}*s0", sjk * (dz - tau * Di(psum)))
        name, sg = _sig(k, i)
        x = x + _el(f"t{k}*{name}", sjk * (dz + t.cf(k, i, k) - tau * Di(p[k - 1])) * sg)
        name, sg = _sig(i, j)
        x = x - _el(f"t{j}*{name}", sjk * (dz - t.cf(i, j, j) - tau * Di(p[j - 1])) * sg)
        x = x + _el(f"t{i}", sjk * (Di(t.chi) + tau * Di(t.p0)), kind="P")
    return x


def build_leading_term(t: DataTuple, order: int = 6) -> FilteredSeries:
    """The leading term as an associated-graded series."""
    m = frame_determinant_3(t.D)
    if m.is_zero():
        raise GaugeError("degenerate frame")
    return FilteredSeries.from_element(leading_element(t), order, fl.GRADED)


def check_constraints(t: DataTuple) -> list:
    """[A, B_1, B_2, B_3]; all vanish exactly when the leading term is MC."""
    p, p0 = t.p, t.p0
    out = [p0 * p0 * 3 - p[1] * p[2] - p[2] * p[0] - p[0] * p[1]]
    for i, j, k in CYCLIC:
        Di = t.D[i - 1]
        pi, pj, pk = p[i - 1], p[j - 1], p[k - 1]
        b = (-Di(pj + pk) * Q(1, 2)
             - t.cf(i, j, j) * (pi - pj) * Q(1, 2)
             + t.cf(k, i, k) * (pi - pk) * Q(1, 2)
             + pi * Di(t.zeta)
             + p0 * Di(t.chi) * 3)
        out.append(b)
    return out


def is_nondegenerate(series: FilteredSeries, ring: Ring) -> bool:
    """Frame invertibility after setting s_1 = s_2 = s_3 = 1."""
    x = GlaElement()
    for a, xa in series.terms.items():
        x = x + xa
    m = frame_determinant(frame_of(x))
    return not (m.is_zero() if isinstance(m, Expr) else m == 0)


# -- residual and gauge action ---------------------------------------------------


def mc_residual(x, D: int | None = None):
    """[x, x] in the algebra the argument lives in."""
    if isinstance(x, FilteredSeries):
        if x.flag == fl.GRADED:
            return fl.assoc_graded_bracket(x, x, D)
        return fl.rees_bracket(x, x, D)
    return bracket(x, x)


def truncate_param(e, name: str, n: int):
    """Drop monomials whose power of the constant ``name`` exceeds n."""
    if not isinstance(e, Expr):
        return e
    atom = (CONST, name)
    num = {m: c for m, c in e.num.items() if dict(m).get(atom, 0) <= n}
    return Expr(e.ring, num, e.den, _raw=True)._canon()


def _param_trunc(x, param):
    if param is None:
        return x
    name, n = param
    if isinstance(x, FilteredSeries):
        return x._like({a: _param_trunc(v, param) for a, v in x.terms.items()})
    return x.map(lambda c: truncate_param(c, name, n))


def gauge_act(a, x, D: int | None = None, param: tuple | None = None, max_terms: int = 64):
    """exp(ad_a) x, summed until the truncation kills further terms.

    ``a`` has homological degree zero.  Nilpotency comes from positive
    filtration degree and total-degree truncation D, or from a formal
    parameter ``param = (name, n)`` whose powers above n are dropped.
    """
    alg = get_algebra()
    if isinstance(a, FilteredSeries):
        if any(alg.deg[b] != 0 for v in a.terms.values() for b in v.coeffs):
            raise GaugeError("gauge generators have degree zero")
        if a.is_zero():
            return x
        D = min(a.order, x.order) if D is None else D

        def ad(y):
            return _param_trunc(fl.rees_bracket(a, y, D) if a.flag != fl.GRADED else fl.assoc_graded_bracket(a, y, D), param)
    else:
        if any(alg.deg[b] != 0 for b in a.coeffs):
            raise GaugeError("gauge generators have degree zero")
        if a.is_zero():
            return x

        def ad(y):
            return _param_trunc(bracket(a, y), param)

    out, term = x, x
    for n in range(1, max_terms + 1):
        term = ad(term).scale(Q(1, n))  # ad_a^n x / n!
        if term.is_zero():
            return out
        out = out + term
    raise GaugeError("gauge generator is not nilpotent at this truncation")


# -- affine gauge ------------------------------------------------------------------


def _damping_part(e: Expr) -> tuple[Expr, Expr]:
    """Split off the largest common damping monomial: e = d * rest."""
    R = e.ring
    common = None
    for m in e.num:
        damp = {x: k for x, k in m if x[0] == DAMP}
        common = damp if common is None else {x: min(k, damp.get(x, 0)) for x, k in common.items()}
    d = R.one()
    inv = R.one()
    for x, k in (common or {}).items():
        if k:
            d = d * R.damping(x[1], k)
            inv = inv * R.damping(x[1], -k)
    return d, e * inv


def invert_simple(e: Expr, pair=None) -> Expr:
    """Inverse of (damping monomial) * (rational multiple of some A_n)."""
    R = e.ring
    if e.is_zero():
        raise GaugeError("division by zero", pair)
    d, rest = _damping_part(e)
    dinv = R.one()
    for m in d.num:
        for x, k in m:
            dinv = dinv * R.damping(x[1], -k)
    if rest.is_constant():
        return dinv * (1 / rest.constant_value())
    atoms = R._p_atoms or [None] * 3
    n = []
    for atom in atoms:
        n.append(rest.num.get(((atom, 1),), Q(0)) if atom is not None else Q(0))
    scale = 1
    for c in n:
        scale = scale * Q(c).denominator // _gcd(scale, Q(c).denominator)
    ni = [int(c * scale) for c in n]
    if not any(ni) or R.A(ni) * Q(1, scale) != rest:
        raise GaugeError(f"cannot invert {rest}", pair)
    try:
        return dinv * R.Ainv(ni) * scale
    except RingError as err:
        raise GaugeError(str(err), pair) from err


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def _param_coeff(e, param, m: int):
    """Coefficient of t^m (or e itself when there is no parameter)."""
    if param is None or not isinstance(e, Expr):
        return e if m == 0 else 0
    atom = (CONST, param[0])
    num = {}
    for mono, c in e.num.items():
        dm = dict(mono)
        if dm.get(atom, 0) == m:
            num[tuple((x, k) for x, k in mono if x != atom)] = c
    return Expr(e.ring, num, e.den, _raw=True)._canon()


def _is_zero(c) -> bool:
    return c.is_zero() if isinstance(c, Expr) else c == 0


def gauge_targets() -> dict:
    """Per sector e_j + e_k: the two non-affine targets and the two residual gauge directions."""
    alg = get_algebra()
    out = {}
    for i, j, k in CYCLIC:
        alpha = tuple(int(a in (j, k)) for a in (1, 2, 3))
        name, sg = _sig(j, k)
        out[alpha] = {
            "ijk": (i, j, k),
            "targets": (alg.element(f"t{j}*s{k}+t{k}*s{j}"), alg.element(f"t{i}*d0")),
            "directions": (alg.element(name, sg), alg.element(f"s{i}")),
        }
    return out


def _single(x: GlaElement) -> tuple[int, object]:
    (b, c), = x.coeffs.items()
    return b, c


def gauge_to_affine(x: FilteredSeries, param: tuple | None = None):
    """Gauge an MC element of the associated graded into the affine gauge subspace.

    ``x`` must lie in theta_0 d_0 + A^1_GB (no other theta_0 multiples) with an
    anisotropic naive leading term.  ``param = (name, n)`` treats the ring
    constant ``name`` as a formal parameter t truncated above t^n; orders are
    gauged one at a time, order m using only t^m A^0.  Returns the list of
    gauge generators applied (in order) and the gauged series.
    """
    alg = get_algebra()
    if x.flag != fl.GRADED:
        raise GaugeError("gauge_to_affine works in the associated graded")
    d0 = alg.find("θ0(∂0)")
    for a, xa in x.terms.items():
        for b, c in xa.coeffs.items():
            if alg.basis[b].plain:
                continue
            if b == d0 and a == (0, 0, 0) and c == 1:
                continue
            raise GaugeError(f"component {alg.basis[b].label} at {a} lies outside theta_0 d_0 + A^1_GB")
    base = x.component((0, 0, 0)).map(lambda c: _param_coeff(c, param, 0))
    R = next((c.ring for v in x.terms.values() for c in v.coeffs.values() if isinstance(c, Expr)), None)
    if R is None:
        return [], x
    base = GlaElement({b: R.coerce(c) for b, c in base.coeffs.items()})
    orders = range(param[1] + 1) if param else range(1)
    gauges = []
    table = gauge_targets()
    for m in orders:
        terms = {}
        for alpha, info in table.items():
            i, j, k = info["ijk"]
            xa = x.component(alpha)
            (t1, _), (t2, _) = (_single(v) for v in info["targets"])
            f = _param_coeff(xa.coeffs.get(t1, 0), param, m)
            g = _param_coeff(xa.coeffs.get(t2, 0), param, m)
            if _is_zero(f) and _is_zero(g):
                continue
            u1 = info["directions"][0].scale(R.one())
            u2 = info["directions"][1].scale(R.damping(j) * R.damping(k))
            du1 = fl.graded_part(bracket(base, u1), alpha).coeffs
            du2 = fl.graded_part(bracket(base, u2), alpha).coeffs
            if not _is_zero(du1.get(t2, 0)) or not _is_zero(du2.get(t1, 0)):
                raise GaugeError("residual gauge system is not triangular")
            a = GlaElement()
            if not _is_zero(f):
                F = R.coerce(f) * invert_simple(R.coerce(du1.get(t1, 0)), (j, k))
                a = a + u1.scale(F)
            if not _is_zero(g):
                G = R.coerce(g) * invert_simple(R.coerce(du2.get(t2, 0)))
                a = a + u2.scale(G)
            for c in a.coeffs.values():
                if not R.derive(c * _undamp(c), 0).is_zero():
                    raise GaugeError("gauge coefficient depends on tau; input is not MC")
            if param is not None and m:
                a = a.scale(R.constant(param[0]) ** m)
            terms[alpha] = a
        if not terms:
            continue
        gen = FilteredSeries(terms, x.order, fl.GRADED, check=False)
        x = gauge_act(gen, x, param=param)
        gauges.append(gen)
    left = affine_defects(x, param)
    if left:
        raise GaugeError(f"terms outside the affine gauge remain: {left[:3]}")
    return gauges, x


def _undamp(c: Expr) -> Expr:
    d, _ = _damping_part(c)
    inv = c.ring.one()
    for mono in d.num:
        for atom, k in mono:
            inv = inv * c.ring.damping(atom[1], -k)
    return inv


def affine_defects(x: FilteredSeries, param: tuple | None = None) -> list:
    """(alpha, label) of components outside theta_0 d_0 + A_spec."""
    alg = get_algebra()
    allowed = fl.aspec_ids()
    d0 = alg.find("θ0(∂0)")
    bad = []
    for a, xa in x.terms.items():
        for b, c in xa.coeffs.items():
            if b == d0 and a == (0, 0, 0) and c == 1:
                continue
            if b in allowed and alg.grade[b] == a:
                continue
            bad.append((a, alg.basis[b].label))
    return sorted(bad)
