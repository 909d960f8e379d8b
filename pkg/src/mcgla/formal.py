"""Formal Maurer-Cartan solutions in P_p, built sector by sector.

A sector P_{n beta} holds the terms of index alpha = n + beta whose basis
element has grade beta.  On it the linear part d = [gamma_0, -] of the
equation is a square block w^i : K^i -> theta_0 K^i in every degree i, where
K is spanned by the plain basis elements of G_beta.  Each w^i is invertible
with only A_n type denominators, so the homotopy h = w^{-1} o (projection
onto theta_0 K) solves d z = e for closed e.  Sectors are visited in an
order that refines nbeta < n'beta', so the residual of the partial solution
at the current sector is always closed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import filtration as fl
from .filtration import FilteredSeries, grades, madd, total
from .gla import GlaElement, bracket, get_algebra
from .mc import DataTuple, GaugeError, check_constraints, invert_simple, leading_element, naive_leading_term
from .scalar import DAMP, SPAR, TAU, Expr, Q, Ring, RingError, evaluate


class FormalError(ValueError):
    """The recursion cannot proceed (bad data, non-closed residual, bad pivot)."""


# -- helpers on exact coefficients ----------------------------------------------


def damping_pow(R: Ring, alpha, sign: int = 1) -> Expr:
    out = R.one()
    for i, k in enumerate(alpha, start=1):
        if k:
            out = out * R.damping(i, sign * k)
    return out


def tau_coefficients(e) -> dict:
    """m -> coefficient of tau^m; the input must be free of damping and s atoms."""
    if not isinstance(e, Expr):
        return {0: e} if e else {}
    if any(x[0] in (DAMP, SPAR) for x in e.atoms()):
        raise FormalError(f"coefficient is not a tau polynomial: {e}")
    tau = (TAU,)
    parts = e.coeff_split(lambda m: dict(m).get(tau, 0))
    out = {}
    for m, part in parts.items():
        if m:
            part = Expr(e.ring, {tuple((x, k) for x, k in mono if x != tau): c for mono, c in part.num.items()},
                        part.den, _raw=True)._canon()
        if not part.is_zero():
            out[m] = part
    return out


def _invert(e):
    """Inverse of a unit of the coefficient ring (rational times A_n powers), or None."""
    if not isinstance(e, Expr):
        return 1 / Q(e) if e else None
    if e.is_zero():
        return None
    R = e.ring
    try:
        inv = invert_simple(Expr(R, e.num))
    except (GaugeError, RingError):
        return None
    for prim, k in e.den:
        inv = inv * R.A(prim) ** k
    return inv


# -- sector complexes --------------------------------------------------------------


def sector_order(J: int) -> list[tuple]:
    """(n, beta) with n != 0 and |n + beta| <= J, lexicographic in (|n|, n, beta)."""
    out = []
    for beta in grades():
        for n in fl.multi_indices(J - total(beta)) if total(beta) <= J else []:
            if any(n):
                out.append((n, beta))
    return sorted(out, key=lambda nb: (total(nb[0]), nb[0], nb[1]))


def sector_ids(beta) -> dict:
    """degree -> (plain ids K^i, their theta_0 multiples)."""
    alg = get_algebra()
    beta = tuple(beta)
    out = {}
    for i in range(4):
        K = [b for b in range(alg.n) if alg.grade[b] == beta and alg.basis[b].plain and alg.deg[b] == i]
        if not K:
            continue
        C = [b + 1 for b in K]
        for c in C:
            info = alg.basis[c]
            if info.plain or info.grade != beta or info.degree != i + 1:
                raise AssertionError("basis is not ordered as plain element then theta_0 multiple")
        out[i] = (K, C)
    return out


@dataclass
class SectorComplex:
    """The blocks of d on one sector, in every degree.

    ``w[i][r][c]`` is the theta_0 K^i component ``r`` of d applied to the
    ``c``-th element of K^i (with unit coefficient and the sector's damping
    factored out).  ``N[i]`` is the same for the tau-lowering part, so that
    d(tau^m k) projects to tau^m w k + m tau^(m-1) N k.
    """

    ring: Ring
    n: tuple
    beta: tuple
    gamma0: GlaElement
    ids: dict
    w: dict
    N: dict
    _inv: dict = field(default_factory=dict, repr=False)

    @property
    def alpha(self) -> tuple:
        return madd(self.n, self.beta)

    def det(self, i: int):
        return determinant(self.w[i], self.ring)

    def winv(self, i: int) -> list:
        if i not in self._inv:
            self._inv[i] = inverse(self.w[i], self.ring)
        return self._inv[i]

    def d(self, x: GlaElement) -> GlaElement:
        """d_{n beta} x: the grade-beta part of [gamma_0, x]."""
        return fl.graded_part(bracket(self.gamma0, x), self.beta)

    def is_tau_triangular(self) -> bool:
        """w is tau-free and the tau-lowering part only maps tau^m to tau^(m-1)."""
        for i in self.w:
            for M in (self.w[i], self.N[i]):
                for row in M:
                    for c in row:
                        if isinstance(c, Expr) and (TAU,) in c.atoms():
                            return False
        return True


def sector_matrix(n, beta, t) -> SectorComplex:
    """Blocks of d_{n beta} = [gamma_0, -] for the leading term of ``t``.

    ``t`` is a :class:`DataTuple` or directly the degree-zero part gamma_0.
    """
    gamma0 = t if isinstance(t, GlaElement) else _gamma0(t)
    R = _ring_of(gamma0)
    n, beta = tuple(n), tuple(beta)
    if not any(n):
        raise FormalError("sectors need n != 0")
    if any(x.is_constant() and x.constant_value() <= 0 for x in R.p):
        raise FormalError("all exponents p_i must be positive")
    alpha = madd(n, beta)
    damp, undamp, tau = damping_pow(R, alpha), damping_pow(R, alpha, -1), R.tau()
    ids = sector_ids(beta)
    w, N = {}, {}
    for i, (K, C) in ids.items():
        W = [[R.zero()] * len(K) for _ in C]
        M = [[R.zero()] * len(K) for _ in C]
        for col, b in enumerate(K):
            v = fl.graded_part(bracket(gamma0, GlaElement({b: damp})), beta)
            vt = fl.graded_part(bracket(gamma0, GlaElement({b: damp * tau})), beta)
            for row, c in enumerate(C):
                a = v.coeffs.get(c, R.zero())
                W[row][col] = a * undamp
                M[row][col] = (vt.coeffs.get(c, R.zero()) - tau * a) * undamp
        w[i], N[i] = W, M
    return SectorComplex(R, n, beta, gamma0, ids, w, N)


def _gamma0(t: DataTuple) -> GlaElement:
    return fl.graded_part(leading_element(t), (0, 0, 0))


def _ring_of(x: GlaElement) -> Ring:
    for c in x.coeffs.values():
        if isinstance(c, Expr):
            return c.ring
    raise FormalError("leading term has no exact coefficients")


# -- exact linear algebra over the coefficient ring --------------------------------


def determinant(M: list, R: Ring):
    """Laplace expansion memoized on column subsets (blocks are at most 9 x 9)."""
    n = len(M)
    if n == 0:
        return R.one()

    @lru_cache(maxsize=None)
    def minor(r: int, cols: int):
        if r == n:
            return R.one()
        out = R.zero()
        sign = 1
        for c in range(n):
            if not cols >> c & 1:
                continue
            a = M[r][c]
            if not (a.is_zero() if isinstance(a, Expr) else a == 0):
                term = a * minor(r + 1, cols & ~(1 << c))
                out = out + term if sign > 0 else out - term
            sign = -sign
        return out

    return minor(0, (1 << n) - 1)


def inverse(M: list, R: Ring) -> list:
    """Gauss-Jordan with pivots restricted to units (rational times A_n powers)."""
    n = len(M)
    A = [list(row) + [R.one() if i == j else R.zero() for j in range(n)] for i, row in enumerate(M)]
    for col in range(n):
        piv = None
        for r in range(col, n):
            inv = _invert(A[r][col])
            if inv is not None:
                piv = (r, inv)
                break
        if piv is None:
            raise FormalError(f"no unit pivot in column {col}; a non A_n denominator would be needed")
        r, inv = piv
        A[col], A[r] = A[r], A[col]
        A[col] = [x * inv for x in A[col]]
        for k in range(n):
            f = A[k][col]
            if k != col and not f.is_zero():
                A[k] = [a - f * b for a, b in zip(A[k], A[col])]
    return [row[n:] for row in A]


def _matvec(M: list, v: list, R: Ring) -> list:
    out = []
    for row in M:
        acc = R.zero()
        for a, x in zip(row, v):
            if not a.is_zero() and not x.is_zero():
                acc = acc + a * x
        out.append(acc)
    return out


# -- the homotopy -------------------------------------------------------------------


def homotopy_solve(sector: SectorComplex, e: GlaElement, degree: int | None = None,
                   tau_cap: int | None = None, check: bool = True) -> GlaElement:
    """h(e): the unique z in K[tau] (damped by the sector factor) with pi d z = pi e.

    ``e`` holds sector coefficients: damping^alpha times tau polynomials, on
    basis elements of grade beta.  When ``e`` is closed, d z = e exactly.
    """
    R = sector.ring
    alg = get_algebra()
    alpha = sector.alpha
    if check and not sector.d(e).is_zero():
        raise FormalError(f"closedness check failed at sector n={sector.n}, beta={sector.beta}")
    undamp, damp = damping_pow(R, alpha, -1), damping_pow(R, alpha)
    if degree is None:
        degs = {alg.deg[b] for b in e.coeffs}
        degree = max(degs) - 1 if degs else 1
    if degree not in sector.ids:
        if any(alg.deg[b] == degree + 1 and not alg.basis[b].plain for b in e.coeffs):
            raise FormalError("component outside the sector complex")
        return GlaElement()
    K, C = sector.ids[degree]
    # E[m][row]: tau^m coefficient on the theta_0 K row
    E: dict = {}
    for row, c in enumerate(C):
        coef = e.coeffs.get(c)
        if coef is None:
            continue
        for m, v in tau_coefficients(coef * undamp).items():
            E.setdefault(m, [R.zero()] * len(C))[row] = v
    if not E:
        return GlaElement()
    top = max(E)
    if tau_cap is not None and top > tau_cap:
        raise FormalError(f"tau degree {top} exceeds the cap {tau_cap} at sector {sector.n, sector.beta}")
    winv, N = sector.winv(degree), sector.N[degree]
    Z: dict = {}
    for m in range(top, -1, -1):
        rhs = list(E.get(m, [R.zero()] * len(C)))
        if m + 1 in Z:
            corr = _matvec(N, Z[m + 1], R)
            rhs = [a - b * (m + 1) for a, b in zip(rhs, corr)]
        Z[m] = _matvec(winv, rhs, R)
    tau = R.tau()
    out = {}
    for col, b in enumerate(K):
        acc = R.zero()
        for m, vec in Z.items():
            if not vec[col].is_zero():
                acc = acc + vec[col] * tau ** m
        if not acc.is_zero():
            out[b] = acc * damp
    return GlaElement(out)


def sector_component(x: FilteredSeries, n, beta) -> GlaElement:
    return fl.graded_part(x.component(madd(n, beta)), beta)


# -- the recursion -------------------------------------------------------------------


@dataclass
class SolveRecord:
    n: tuple
    beta: tuple
    tau_degree: int
    nonzero: bool


def _check_data(t: DataTuple) -> None:
    bad = [c for c in check_constraints(t) if not c.is_zero()]
    if bad:
        raise FormalError("constraints do not vanish; the leading term is not Maurer-Cartan")
    pos = t.positive
    if pos is False:
        raise FormalError("all exponents p_i must be positive")


def default_order_key(nb: tuple) -> tuple:
    n, beta = nb
    return (total(n), n, beta)


def formal_solve(t: DataTuple, J: int, log: list | None = None, tau_cap: int | None = None,
                 order_key=default_order_key) -> FilteredSeries:
    """Formal solution gamma in P_p through total degree J.

    Starts from the leading term of ``t`` and clears the residual sector by
    sector.  ``order_key`` sorts the sectors; it must refine the partial
    order (n < n', or n = n' and beta < beta').  Every cleared sector is
    checked to be exactly zero afterwards.
    """
    _check_data(t)
    R = t.ring
    lead = fl.FilteredSeries.from_element(leading_element(t), J, fl.PP)
    gamma0 = lead.component((0, 0, 0))
    y = lead
    res = fl.rees_bracket(y, y, J)
    order = sorted(sector_order(J), key=order_key)
    _check_admissible(order)
    cache: dict = {}
    for n, beta in order:
        alpha = madd(n, beta)
        e = sector_component(res, n, beta).scale(Q(-1, 2))
        if e.is_zero():
            if log is not None:
                log.append(SolveRecord(n, beta, -1, False))
            continue
        sec = cache.get((alpha, beta))
        if sec is None:
            sec = cache[(alpha, beta)] = sector_matrix(n, beta, gamma0)
        cap = 4 * total(alpha) if tau_cap is None else tau_cap
        z = homotopy_solve(sec, e, degree=1, tau_cap=cap)
        zs = FilteredSeries({alpha: z}, J, fl.PP, check=False)
        res = res + fl.rees_bracket(y, zs, J).scale(2) + fl.rees_bracket(zs, zs, J)
        y = y + zs
        if not sector_component(res, n, beta).is_zero():
            raise FormalError(f"residual not closed at sector n={n}, beta={beta}")
        if log is not None:
            undamp = damping_pow(R, alpha, -1)
            deg = max(max(tau_coefficients(c * undamp), default=0) for c in z.coeffs.values())
            log.append(SolveRecord(n, beta, deg, True))
    if not res.is_zero():
        raise FormalError(f"residual survives at {res.support()[0]}")
    return y


def _below(a: tuple, b: tuple) -> bool:
    """(n, beta) < (n', beta') in the well-founded sector order."""
    (n, beta), (m, gamma) = a, b
    if n != m:
        return fl.leq(n, m)
    return beta != gamma and fl.leq(beta, gamma)


def _check_admissible(order: list) -> None:
    for i, later in enumerate(order):
        for earlier in order[i + 1:]:
            if _below(earlier, later):
                raise FormalError(f"enumeration visits {later} before {earlier}")


# -- structural audits ------------------------------------------------------------


DETERMINANT_TABLE = {
    # beta -> degree -> (power of A_n, power of A_{n+beta})
    (0, 0, 0): {0: (5, 0), 1: (4, 0), 2: (1, 0)},
    (2, 0, 0): {1: (1, 0)},
    (0, 1, 1): {0: (1, 1), 1: (8, 1), 2: (1, 0)},
    (2, 1, 1): {1: (1, 0), 2: (7, 0)},
    (2, 2, 2): {2: (1, 0), 3: (6, 0)},
}


def table_row(beta) -> dict:
    """The row for beta, found through the permutation of components that maps it to a listed row."""
    for rep, row in DETERMINANT_TABLE.items():
        if sorted(rep) == sorted(beta):
            return row
    raise KeyError(beta)


def determinant_audit(ns=((1, 2, 0), (1, 0, 0), (2, 1, 3)), betas=None) -> list[tuple]:
    """Compare det w^i with the table on generic exponents in an abelian frame.

    Returns (beta, degree, n, constant) rows; raises if a determinant is not
    a nonzero rational multiple of the tabulated powers.
    """
    R = Ring()
    R.bind_p([R.function(f"p{i}") for i in (1, 2, 3)])
    gamma0 = naive_leading_term(R, R.p, R.function("p0"))
    rows = []
    for beta in betas or grades():
        row = table_row(beta)
        for n in ns:
            sec = sector_matrix(n, beta, gamma0)
            if set(sec.w) != set(row):
                raise FormalError(f"sector {beta} has degrees {sorted(sec.w)}")
            for i, (a, b) in row.items():
                det = sec.det(i)
                ratio = det * R.Ainv(n) ** a
                if b:
                    ratio = ratio * R.Ainv(madd(n, beta)) ** b
                if not ratio.is_constant() or ratio.is_zero():
                    raise FormalError(f"det w^{i} at beta={beta}, n={n} is {det}")
                rows.append((tuple(beta), i, tuple(n), ratio.constant_value()))
    return rows


def odd_defects(gamma: FilteredSeries) -> list[tuple]:
    """Indices of odd total degree carrying a nonzero term."""
    return [a for a in gamma.support() if total(a) % 2]


def gb_defects(gamma: FilteredSeries) -> list[tuple]:
    """(alpha, basis id) with alpha != 0 and a theta_0 multiple."""
    alg = get_algebra()
    return [(a, b) for a, x in gamma.terms.items() if any(a) for b in x.coeffs if not alg.basis[b].plain]


def denominator_defects(gamma: FilteredSeries) -> list[tuple]:
    """Coefficients that are not damping^alpha times tau polynomials with A_n denominators."""
    out = []
    for a, x in gamma.terms.items():
        for b, c in x.coeffs.items():
            if not fl._pp_ok(c, a):
                out.append((a, b))
    return out


# -- numeric truncation ------------------------------------------------------------


def truncate_psi(gamma: FilteredSeries, J: int, lam: float, env: dict) -> GlaElement:
    """psi = sum_{|alpha| <= J} gamma_alpha lambda^|alpha|, evaluated numerically.

    ``env`` is as for :func:`mcgla.scalar.evaluate` (its ``s`` entry is
    ignored).  Coefficients of the result are numpy arrays.
    """
    if lam <= 0:
        raise FormalError("lambda must be positive")
    if J > gamma.order:
        raise FormalError(f"series solved only through order {gamma.order}")
    env = dict(env, s=(1.0, 1.0, 1.0))
    out: dict = {}
    for a, x in gamma.terms.items():
        if total(a) > J:
            continue
        w = lam ** total(a)
        for b, c in x.coeffs.items():
            v = evaluate(c, env) if isinstance(c, Expr) else float(c)
            out[b] = out.get(b, 0.0) + w * np.asarray(v, dtype=float)
    return GlaElement({b: v for b, v in out.items() if np.any(v)})


def psi_series(gamma: FilteredSeries, J: int, lam) -> FilteredSeries:
    """The exact truncation, lambda^|alpha| folded into the coefficients."""
    if J > gamma.order:
        raise FormalError(f"series solved only through order {gamma.order}")
    terms = {a: x.scale(Q(lam) ** total(a)) for a, x in gamma.terms.items() if total(a) <= J}
    return FilteredSeries(terms, 2 * J, fl.PP, check=False)


def psi_residual(gamma: FilteredSeries, J: int, lam) -> GlaElement:
    """[psi, psi] exactly, summed over all indices (at most 2J)."""
    p = psi_series(gamma, J, lam)
    out = GlaElement()
    for x in fl.rees_bracket(p, p, 2 * J).terms.values():
        out = out + x
    return out


def residual_sup_norms(gamma: FilteredSeries, J: int, lam, env: dict, taus) -> np.ndarray:
    """sup over components and grid points of |[psi, psi]| at each tau."""
    r = psi_residual(gamma, J, lam)
    out = []
    for tau in taus:
        e = dict(env, tau=float(tau), s=(1.0, 1.0, 1.0))
        m = 0.0
        for c in r.coeffs.values():
            v = evaluate(c, e) if isinstance(c, Expr) else float(c)
            m = max(m, float(np.max(np.abs(v))))
        out.append(m)
    return np.array(out)


def decay_rate(taus, norms) -> float:
    """Least-squares exponential rate: norms ~ C exp(-rate tau)."""
    taus, norms = np.asarray(taus, float), np.asarray(norms, float)
    if np.any(norms <= 0):
        raise FormalError("residual vanishes at a sample; no rate to fit")
    slope, _ = np.polyfit(taus, np.log(norms), 1)
    return float(-slope)


__all__ = [
    "DETERMINANT_TABLE", "FormalError", "SectorComplex", "SolveRecord", "decay_rate", "default_order_key",
    "denominator_defects", "determinant", "determinant_audit", "formal_solve", "gb_defects",
    "homotopy_solve", "inverse", "odd_defects", "psi_residual", "psi_series", "residual_sup_norms",
    "sector_component", "sector_ids", "sector_matrix", "sector_order", "table_row", "tau_coefficients",
    "truncate_psi",
]
