"""Spatially homogeneous dynamics read off from the Maurer-Cartan equation.

The ansatz is the shape of the homogeneous leading-term element with a free
function of tau in every slot:

    theta_0 d_0 + phi _theta_0 + sum_i ( a_i (theta_0 sigma_0 + theta_i sigma_i)
                                        + b_i (theta_i sigma_jk - theta_j sigma_ki - theta_k sigma_ij)
                                        + e_i theta_i L_i )

over a frame with [L_j, L_k] = c_i L_i.  The residual [x, x] is computed by
the bracket engine and split mechanically: a component containing d_0 of
exactly one unknown is that unknown's evolution equation, a component without
d_0 is a constraint.

The physical picture uses the conformal factor A = exp(-int alpha), where
alpha = w_0 dtau comes from the theta_0 sigma_0 coefficient w_0.  Scale
factors are A / e_i and proper time has dt/dtau = A.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp
from scipy.optimize import minimize_scalar

from .gla import GlaElement, bracket, get_algebra
from .linalg import rref
from .scalar import FUNC, Expr, Q, Ring

CYCLIC = ((1, 2, 3), (2, 3, 1), (3, 1, 2))
_SIG = {(2, 3): "s23", (3, 1): "s31", (1, 2): "s12"}


class HomogeneousError(ValueError):
    """Ansatz too small, constraint violation, or an integration that broke down."""


def default_slots() -> list[tuple[str, str, str]]:
    """(unknown, basis text, kind) for every slot of the homogeneous element."""
    out = []
    for i, j, k in CYCLIC:
        out.append((f"e{i}", f"t{i}*L{i}", "E"))
    for i, j, k in CYCLIC:
        out.append((f"a{i}", f"t0*s0+t{i}*s{i}", "E"))
    for i, j, k in CYCLIC:
        out.append((f"b{i}", _b_text(i, j, k), "E"))
    out.append(("phi", "t0", "P"))
    return out


def _b_text(i: int, j: int, k: int) -> str:
    # theta_i sigma_jk - theta_j sigma_ki - theta_k sigma_ij, each sigma in stored orientation
    def term(a, b, c, sign):
        if (b, c) in _SIG:
            s, name = sign, _SIG[(b, c)]
        else:
            s, name = -sign, _SIG[(c, b)]
        return ("+" if s > 0 else "-") + f"t{a}*{name}"

    text = term(i, j, k, 1) + term(j, k, i, -1) + term(k, i, j, -1)
    return text.lstrip("+")


# -- polynomial tables ------------------------------------------------------------------


@dataclass
class PolyTable:
    """A polynomial in named variables as coefficient and exponent arrays."""

    coef: np.ndarray
    exps: np.ndarray  # (terms, variables)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, float)
        if not len(self.coef):
            return np.zeros(y.shape[1:]) if y.ndim > 1 else 0.0
        if y.ndim == 1:
            return float(self.coef @ np.prod(y[None, :] ** self.exps, axis=1))
        mons = np.prod(y[None, :, :] ** self.exps[:, :, None], axis=1)
        return self.coef @ mons


def _atom_index(atom, names: list[str]) -> int:
    if atom[0] != FUNC or atom[3]:
        raise HomogeneousError(f"unexpected generator {atom!r} in a homogeneous residual")
    name, nz = atom[1], atom[2]
    if nz > 1:
        raise HomogeneousError(f"second time derivative of {name} in the residual")
    return names.index(name) + nz * len(names)


def compile_poly(e: Expr, names: list[str], with_dots: bool = False) -> PolyTable:
    """Variables are ``names`` (and their d_0 when ``with_dots``)."""
    if e.den:
        raise HomogeneousError("rational residual components are not supported")
    nv = len(names) * (2 if with_dots else 1)
    coef, exps = [], []
    for mono, c in e.num.items():
        row = np.zeros(nv, int)
        for atom, k in mono:
            idx = _atom_index(atom, names)
            if idx >= nv:
                raise HomogeneousError("time derivative in an expression compiled without derivatives")
            row[idx] += k
        coef.append(float(c))
        exps.append(row)
    return PolyTable(np.array(coef, float), np.array(exps, int).reshape(len(exps), nv))


# -- the ansatz ---------------------------------------------------------------------------


def _dot_atoms(e: Expr) -> set:
    return {a for a in e.atoms() if a[0] == FUNC and a[2] > 0}


def _linear_part(e: Expr, atom) -> tuple[Expr, Expr]:
    """e = alpha * atom + rest with alpha, rest free of atom."""
    alpha, rest = {}, {}
    for mono, c in e.num.items():
        k = dict(mono).get(atom, 0)
        if k > 1:
            raise HomogeneousError("residual is nonlinear in a time derivative")
        if k == 1:
            alpha[tuple(m for m in mono if m[0] != atom)] = c
        else:
            rest[mono] = c
    return Expr(e.ring, alpha), Expr(e.ring, rest)


@dataclass
class HomAnsatz:
    c: tuple
    names: list[str]
    ring: Ring = field(repr=False)
    element: GlaElement = field(repr=False)
    residual: dict = field(repr=False)  # basis index -> Expr
    evolution: dict = field(repr=False)  # unknown -> (basis index, rhs Expr)
    constraints: dict = field(repr=False)  # basis index -> Expr
    rhs_table: list = field(repr=False)
    constraint_table: dict = field(repr=False)
    residual_table: dict = field(repr=False)
    w0_table: PolyTable = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def rhs(self, y: np.ndarray) -> np.ndarray:
        return np.array([f(y) for f in self.rhs_table])

    def w0(self, y: np.ndarray):
        """Coefficient of theta_0 sigma_0, the dtau component of the one-form alpha."""
        return self.w0_table(y)

    def constraint_values(self, y: np.ndarray) -> np.ndarray:
        return np.array([f(y) for f in self.constraint_table.values()])

    def mc_residual(self, y: np.ndarray) -> np.ndarray:
        """Every component of [x, x] with d_0 of the unknowns taken from the flow."""
        y = np.asarray(y, float)
        full = np.concatenate([y, self.rhs(y)])
        return np.array([f(full) for f in self.residual_table.values()])

    def state(self, values: dict) -> np.ndarray:
        return np.array([float(values[n]) for n in self.names])

    def as_dict(self, y: np.ndarray) -> dict:
        return {n: float(v) for n, v in zip(self.names, y)}


def extract_odes(c1=0, c2=0, c3=0, slots=None) -> HomAnsatz:
    """Evolution equations and constraints of the homogeneous ansatz over structure constants c."""
    alg = get_algebra()
    c = tuple(Q(x) for x in (c1, c2, c3))
    R = Ring("homogeneous")
    R.set_structure({(2, 3): {1: c[0]}, (3, 1): {2: c[1]}, (1, 2): {3: c[2]}})
    slots = default_slots() if slots is None else slots
    names = [s[0] for s in slots]
    x = alg.element("t0*d0")
    for name, text, kind in slots:
        x = x + alg.element(text, R.function(name, deps=(0,)), kind)
    residual = {k: v for k, v in bracket(x, x).coeffs.items() if not v.is_zero()}

    evolution, constraints = {}, {}
    for k in sorted(residual):
        r = residual[k]
        dots = _dot_atoms(r)
        if len(dots) > 1:
            raise HomogeneousError(
                f"component {alg.basis[k].label} couples d_0 of {sorted(a[1] for a in dots)}; enlarge the slot list")
        if not dots:
            constraints[k] = r
            continue
        (atom,) = dots
        alpha, rest = _linear_part(r, atom)
        if not alpha.is_constant():
            raise HomogeneousError(f"d_0 {atom[1]} enters {alg.basis[k].label} with a non-constant factor")
        rhs = -rest * (1 / alpha.constant_value())
        if atom[1] in evolution:
            # a second equation for the same unknown is a constraint in disguise
            extra = rest + alpha * evolution[atom[1]][1]
            if not extra.is_zero():
                constraints[k] = extra
            continue
        evolution[atom[1]] = (k, rhs)
    missing = [n for n in names if n not in evolution]
    if missing:
        raise HomogeneousError(f"no evolution equation for {missing}; enlarge the slot list")

    # the dtau part of alpha: sum of theta_0 sigma_0 coefficients in the L representation
    w0 = R.zero()
    for b, f in x.coeffs.items():
        w0 = w0 + f * alg.basis[b].lvec.get((1, 0), 0)
    return HomAnsatz(
        c=c, names=names, ring=R, element=x, residual=residual,
        evolution={n: evolution[n] for n in names}, constraints=constraints,
        rhs_table=[compile_poly(evolution[n][1], names) for n in names],
        constraint_table={k: compile_poly(v, names) for k, v in constraints.items()},
        residual_table={k: compile_poly(v, names, with_dots=True) for k, v in residual.items()},
        w0_table=compile_poly(R.coerce(w0), names),
    )


# -- constraint propagation ------------------------------------------------------------------


def substitute(e: Expr, values: dict) -> Expr:
    """Replace generator atoms by expressions (polynomial substitution)."""
    R = e.ring
    out = R.zero()
    for mono, c in e.num.items():
        term = R.coerce(c)
        for atom, k in mono:
            v = values.get(atom)
            term = term * ((Expr(R, {((atom, 1),): Q(1)}) if v is None else v) ** k)
        out = out + term
    return out


def flow_derivative(ans: HomAnsatz, e: Expr) -> Expr:
    """d_0 of an expression in the unknowns, with d_0 of each unknown replaced by its right-hand side."""
    d = ans.ring.derive(e, 0)
    sub = {(FUNC, n, 1, ()): ans.evolution[n][1] for n in ans.names}
    return substitute(d, sub)


def _monomials(names_atoms: list, degree: int) -> list[tuple]:
    out = [()]
    for _ in range(degree):
        nxt = set(out)
        for m in out:
            for a in names_atoms:
                d = dict(m)
                d[a] = d.get(a, 0) + 1
                nxt.add(tuple(sorted(d.items())))
        out = sorted(nxt)
    return out


def ideal_multipliers(target: Expr, gens: list[Expr], atoms: list, degree: int) -> list[Expr] | None:
    """Polynomial multipliers lam_k of degree <= ``degree`` with target = sum lam_k gens_k, or None."""
    R = target.ring
    mons = _monomials(atoms, degree)
    cols = []
    for g in gens:
        for m in mons:
            cols.append(g * Expr(R, {m: Q(1)}))
    keys = sorted({k for col in cols for k in col.num} | set(target.num), key=repr)
    pos = {k: i for i, k in enumerate(keys)}
    rows = [[Q(0)] * (len(cols) + 1) for _ in keys]
    for j, col in enumerate(cols):
        for k, v in col.num.items():
            rows[pos[k]][j] = v
    for k, v in target.num.items():
        rows[pos[k]][-1] = v
    red, piv = rref(rows, len(cols))
    if any(all(x == 0 for x in r[:-1]) and r[-1] != 0 for r in red):
        return None
    sol = [Q(0)] * len(cols)
    for r, p in enumerate(piv):
        sol[p] = red[r][-1]
    out = []
    for gi in range(len(gens)):
        lam = R.zero()
        for mi, m in enumerate(mons):
            v = sol[gi * len(mons) + mi]
            if v:
                lam = lam + Expr(R, {m: v})
        out.append(lam)
    return out


@dataclass
class Propagation:
    basis_index: int
    label: str
    derivative: Expr
    multipliers: list | None

    @property
    def closed(self) -> bool:
        return self.multipliers is not None


def constraint_propagation(ans: HomAnsatz, degree: int = 1) -> list[Propagation]:
    """For each constraint C, write d_0 C along the flow as a combination of the constraints.

    A constraint whose derivative lies in that span is a first integral of the reduced system.
    """
    alg = get_algebra()
    gens = list(ans.constraints.values())
    atoms = [(FUNC, n, 0, ()) for n in ans.names]
    out = []
    for k, C in ans.constraints.items():
        d = flow_derivative(ans, C)
        lam = ideal_multipliers(d, gens, atoms, degree)
        out.append(Propagation(k, alg.basis[k].label, d, lam))
    return out


# -- initial data --------------------------------------------------------------------------------


def complete_state(ans: HomAnsatz, given: dict, solve_for=("b1", "b2", "b3", "phi"), sign: float = 1.0) -> np.ndarray:
    """Fill the unknowns in ``solve_for`` from the constraints.

    Each constraint must be at most quadratic in one still-open unknown; the
    root with the requested sign is taken for quadratics.
    """
    values = {n: Q(str(v)) if isinstance(v, float) else Q(v) for n, v in given.items()}
    open_ = [n for n in solve_for if n not in values]
    pending = dict(ans.constraints)
    while open_:
        progress = False
        for k, C in list(pending.items()):
            sub = {(FUNC, n, 0, ()): ans.ring.coerce(v) for n, v in values.items()}
            e = substitute(C, sub)
            left = [n for n in open_ if (FUNC, n, 0, ()) in e.atoms()]
            if len(left) != 1 or any(a[1] not in open_ for a in e.atoms()):
                continue
            n = left[0]
            atom = (FUNC, n, 0, ())
            coeffs = {}
            for mono, c in e.num.items():
                coeffs[dict(mono).get(atom, 0)] = coeffs.get(dict(mono).get(atom, 0), 0) + c
            if max(coeffs) == 1:
                values[n] = -coeffs.get(0, 0) / coeffs[1]
            elif max(coeffs) == 2 and 1 not in coeffs:
                r = -float(coeffs.get(0, 0)) / float(coeffs[2])
                if r < 0:
                    raise HomogeneousError(f"constraint forces {n}^2 = {r:.6g} < 0")
                values[n] = sign * np.sqrt(r)
            else:
                continue
            open_.remove(n)
            del pending[k]
            progress = True
        if not progress:
            raise HomogeneousError(f"cannot solve the constraints for {open_}")
    return ans.state(values)


# -- integration -----------------------------------------------------------------------------------


@dataclass
class Trajectory:
    names: list
    tau: np.ndarray
    y: np.ndarray  # (unknowns, samples)
    log_A: np.ndarray
    t: np.ndarray
    constraint_norm: np.ndarray
    mc_norm: np.ndarray
    status: int
    message: str
    sol: object = field(default=None, repr=False)

    def column(self, name: str) -> np.ndarray:
        return self.y[self.names.index(name)]

    def scale_factors(self) -> np.ndarray:
        """A / e_i, shape (3, samples)."""
        return np.exp(self.log_A)[None, :] / np.array([self.column(f"e{i}") for i in (1, 2, 3)])


def _augmented(ans: HomAnsatz):
    n = ans.dim

    def f(_, z):
        y = z[:n]
        dy = ans.rhs(y)
        A = np.exp(z[n])
        return np.concatenate([dy, [-ans.w0(y), A]])

    return f


def _augmented_proper(ans: HomAnsatz):
    n = ans.dim

    def f(_, z):
        y = z[:n]
        inv_A = np.exp(-z[n])
        dy = ans.rhs(y) * inv_A
        return np.concatenate([dy, [-ans.w0(y) * inv_A, inv_A]])

    return f


def initial_log_A(ans: HomAnsatz, y0: np.ndarray) -> float:
    """Normalization with A^2 = e_1 e_2 e_3, so that dt/dtau = product of the scale factors."""
    m = np.prod([y0[ans.index(f"e{i}")] for i in (1, 2, 3)])
    if m <= 0:
        raise HomogeneousError("degenerate or negatively oriented frame")
    return 0.5 * float(np.log(m))


def default_atol(ans: HomAnsatz, atol: float = 1e-14) -> np.ndarray:
    """Absolute tolerances for the unknowns plus the two quadrature channels.

    Frame scales e_i and the b_i decay exponentially in the tails, so they are
    controlled by the relative tolerance alone (a tiny absolute floor).
    """
    floor = [1e-290 if n[0] in "eb" else atol for n in ans.names]
    return np.array(floor + [atol, atol])


def integrate(ans: HomAnsatz, y0, tau_span, samples: int = 401, rtol: float = 1e-10, atol: float = 1e-14,
              max_step: float = np.inf, constraint_tol: float = 1e-10, check: bool = True) -> Trajectory:
    """DOP853 in BKL time starting at tau_span[0]; proper time and log A are carried as quadrature channels."""
    y0 = ans.state(y0) if isinstance(y0, dict) else np.asarray(y0, float)
    if check:
        bad = np.max(np.abs(ans.constraint_values(y0)), initial=0.0)
        if bad > constraint_tol:
            raise HomogeneousError(f"initial state violates the constraints by {bad:.3g}")
    z0 = np.concatenate([y0, [initial_log_A(ans, y0), 0.0]])
    taus = np.linspace(tau_span[0], tau_span[1], samples)
    sol = solve_ivp(_augmented(ans), tau_span, z0, method="DOP853", t_eval=taus, rtol=rtol,
                    atol=default_atol(ans, atol), max_step=max_step, dense_output=True)
    if sol.status < 0:
        raise HomogeneousError(f"integration stopped at tau = {sol.t[-1]:.6g}: {sol.message}")
    n = ans.dim
    Y = sol.y[:n]
    cnorm = np.max(np.abs(np.array([f(Y) for f in ans.constraint_table.values()])), axis=0) \
        if ans.constraint_table else np.zeros(len(sol.t))
    mc = np.array([np.max(np.abs(ans.mc_residual(Y[:, j]))) for j in range(Y.shape[1])])
    return Trajectory(ans.names, sol.t, Y, sol.y[n], sol.y[n + 1], cnorm, mc, sol.status, sol.message, sol)


def integrate_proper(ans: HomAnsatz, y0, t_values, rtol: float = 1e-10, atol: float = 1e-14) -> np.ndarray:
    """The same system with proper time t as the independent variable; returns (unknowns + log A + tau, len(t))."""
    y0 = ans.state(y0) if isinstance(y0, dict) else np.asarray(y0, float)
    z0 = np.concatenate([y0, [initial_log_A(ans, y0), 0.0]])
    t_values = np.asarray(t_values, float)
    sol = solve_ivp(_augmented_proper(ans), (0.0, t_values[-1]), z0, method="DOP853", t_eval=t_values,
                    rtol=rtol, atol=default_atol(ans, atol))
    if sol.status < 0:
        raise HomogeneousError(f"integration stopped at t = {sol.t[-1]:.6g}: {sol.message}")
    return sol.y


# -- diagnostics --------------------------------------------------------------------------------------


def _scale_rate(ans: HomAnsatz, y: np.ndarray) -> np.ndarray:
    """d log(A / e_i) / dtau for i = 1, 2, 3."""
    dy = ans.rhs(y)
    w0 = ans.w0(y)
    return np.array([-w0 - dy[ans.index(f"e{i}")] / y[ans.index(f"e{i}")] for i in (1, 2, 3)])


def proper_time_derivatives(ans: HomAnsatz, y: np.ndarray, log_A: float, h: float = 1e-5):
    """(a_i, da_i/dt, d^2 a_i/dt^2) of the scale factors a_i = A / e_i at one state.

    da_i/dt = (rate_i / e_i) depends on y only; the second derivative is its
    derivative along the flow (central difference) divided by A.
    """
    y = np.asarray(y, float)
    e = np.array([y[ans.index(f"e{i}")] for i in (1, 2, 3)])
    A = np.exp(log_A)

    def first(yy):
        ee = np.array([yy[ans.index(f"e{i}")] for i in (1, 2, 3)])
        return _scale_rate(ans, yy) / ee

    F = ans.rhs(y)
    step = h / max(np.max(np.abs(F / np.where(y == 0, 1, y))), 1e-300)
    d1 = first(y)
    d2 = (first(y + step * F) - first(y - step * F)) / (2 * step) / A
    return A / e, d1, d2


def flrw_invariant(ans: HomAnsatz, traj: Trajectory, direction: int = 1) -> np.ndarray:
    """a a'' + 2 (a')^2 in proper time along the trajectory."""
    out = []
    for j in range(len(traj.tau)):
        a, d1, d2 = proper_time_derivatives(ans, traj.y[:, j], traj.log_A[j])
        i = direction - 1
        out.append(a[i] * d2[i] + 2 * d1[i] ** 2)
    return np.array(out)


def determinant_law_defect(ans: HomAnsatz, traj: Trajectory) -> float:
    """max |d_0 m - (-3 a_0 + a_1 + a_2 + a_3) m| along the trajectory, relative to |m|.

    a_0 and a_i are the theta_0 sigma_0 and theta_i sigma_i coefficients of the element.
    """
    worst = 0.0
    for j in range(len(traj.tau)):
        y = traj.y[:, j]
        e = np.array([y[ans.index(f"e{i}")] for i in (1, 2, 3)])
        de = ans.rhs(y)[[ans.index(f"e{i}") for i in (1, 2, 3)]]
        m = np.prod(e)
        dm = de[0] * e[1] * e[2] + e[0] * de[1] * e[2] + e[0] * e[1] * de[2]
        a = [y[ans.index(f"a{i}")] for i in (1, 2, 3)]
        a0 = ans.w0(y)
        worst = max(worst, abs(dm - (-3 * a0 + sum(a)) * m) / abs(m))
    return worst


def oscillation_count(traj: Trajectory) -> list[int]:
    """Number of turning points of each scale factor in the sampled trajectory."""
    out = []
    for s in np.log(traj.scale_factors()):
        d = np.sign(np.diff(s))
        d = d[d != 0]
        out.append(int(np.sum(d[1:] != d[:-1])))
    return out


@dataclass
class KasnerFit:
    exponents: np.ndarray
    residuals: np.ndarray
    t_end: float

    @property
    def total(self) -> float:
        return float(np.sum(self.exponents))

    @property
    def quadratic(self) -> float:
        P = self.exponents
        return float(P[1] * P[2] + P[2] * P[0] + P[0] * P[1])


def kasner_exponents(ans: HomAnsatz, traj: Trajectory, window: float = 0.25, points: int = 2001,
                     tail_tol: float = 1e-6) -> KasnerFit:
    """Log-log regression of a_i against |t - t_end| over the last ``window`` of the run.

    The singular time t_end (t_+ for a forward run, t_- for a backward one) is a fit parameter.
    """
    tau1 = traj.tau[-1]
    direction = 1.0 if tau1 > traj.tau[0] else -1.0
    tau0 = tau1 - window * (tau1 - traj.tau[0])
    taus = np.linspace(tau0, tau1, points)
    Z = traj.sol.sol(taus)
    n = ans.dim
    Y, logA = Z[:n], Z[n]
    rates = np.array([_scale_rate(ans, Y[:, j]) for j in range(points)])
    spread = np.max(np.abs(rates - rates[-1]), axis=0) / np.max(np.abs(rates[-1]))
    if np.max(spread) > tail_tol:
        raise HomogeneousError(f"tail not reached: exponent drift {np.max(spread):.3g} in the window")
    lam = direction * ans.w0(Y[:, -1])
    if lam <= 0:
        raise HomogeneousError("proper time does not converge in the tail")
    # proper time still to go, relative to A at the window end; summed from the end so it stays accurate
    A = np.exp(logA - logA[-1])
    dist = np.abs(taus - tau1)
    back = cumulative_simpson(A[::-1], x=dist[::-1], initial=0.0)[::-1]
    scales = np.log(np.exp(logA)[None, :] / np.array([Y[ans.index(f"e{i}")] for i in (1, 2, 3)]))

    def fit(delta):
        x = np.log(back + delta) + logA[-1]
        return [np.polyfit(x, s, 1, full=True) for s in scales]

    def cost(log_delta):
        return sum(float(c[1][0]) if len(c[1]) else 0.0 for c in fit(np.exp(log_delta)))

    d0 = 1.0 / lam  # exact for a pure Kasner tail
    best = minimize_scalar(cost, bounds=(np.log(d0) - 5, np.log(d0) + 5), method="bounded",
                           options={"xatol": 1e-12})
    delta = float(np.exp(best.x))
    coeffs = fit(delta)
    P = np.array([c[0][0] for c in coeffs])
    res = np.array([float(c[1][0]) if len(c[1]) else 0.0 for c in coeffs])
    t_end = float(traj.sol.sol(tau1)[n + 1] + direction * delta * np.exp(logA[-1]))
    return KasnerFit(P, res, t_end)


def kasner_state(ans: HomAnsatz, p, tau: float = 0.0) -> np.ndarray:
    """The Kasner element (c = 0) as a state at BKL time tau."""
    p = [float(x) for x in p]
    vals = {f"a{i}": p[i - 1] for i in (1, 2, 3)}
    for i, j, k in CYCLIC:
        vals[f"e{i}"] = np.exp(-(p[j - 1] + p[k - 1]) * tau)
        vals[f"b{i}"] = 0.0
    vals["phi"] = np.sqrt((p[1] * p[2] + p[2] * p[0] + p[0] * p[1]) / 3)
    return ans.state(vals)


__all__ = [
    "HomAnsatz", "HomogeneousError", "KasnerFit", "PolyTable", "Propagation", "Trajectory",
    "complete_state", "compile_poly", "constraint_propagation", "default_atol", "default_slots", "determinant_law_defect",
    "extract_odes", "flow_derivative", "flrw_invariant", "ideal_multipliers", "initial_log_A", "integrate",
    "integrate_proper", "kasner_exponents", "kasner_state", "oscillation_count", "proper_time_derivatives",
    "substitute",
]
