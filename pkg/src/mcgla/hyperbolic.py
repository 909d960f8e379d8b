"""Quasilinear symmetric hyperbolic systems on [0, T] x T^N and their MC wrapper.

The square system is

    (a^mu(xi) + A^mu(u)) d_mu u + L(xi) u + B(u, u) / 2 + F(xi) = 0

with a^0 + A^0(u) positive definite.  It is integrated by the method of
lines: Fourier-spectral (2/3 de-aliased) or fourth-order centred spatial
derivatives, classical RK4 in tau.  Running backward in tau from zero data
after the support of F is the construction used for semiglobal solutions;
forward runs serve manufactured-solution and propagation tests.

The non-square MC system [psi + R_1 u, psi + R_1 u] = 0 is reduced with a
symmetric hyperbolic gauge (R_i, S_i).  Gauges are checked exactly over the
rationals (verify_gauge) and can be searched for (search_gauge).  The
evolution of an MC correction is implemented for the scalar-field sector on
a fixed degree-one background, where the reduced system is linear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np

from . import linalg as la
from .gla import GlaElement, get_algebra, structure_arrays
from .scalar import DAMP, TAU, Expr, Q, evaluate


class HyperbolicError(Exception):
    pass


class PreconditionError(HyperbolicError):
    """Hypotheses, gauge axioms or source support fail before a run starts."""


class NumericalFailure(HyperbolicError):
    """A run left the positivity window, broke the CFL bound or produced NaN."""


# --------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class Constants:
    """The five constants 1 < q < Q, 0 < Q z < Z, b > 0, plus an optional delta."""

    q: float
    Q: float
    z: float
    Z: float
    b: float = 1.0
    delta: float | None = None

    def __post_init__(self):
        bad = []
        if not 1 < self.q < self.Q:
            bad.append(f"need 1 < q < Q, got q = {self.q}, Q = {self.Q}")
        if not 0 < self.Q * self.z < self.Z:
            bad.append(f"need 0 < Q z < Z, got Q z = {self.Q * self.z}, Z = {self.Z}")
        if not self.b > 0:
            bad.append(f"need b > 0, got {self.b}")
        if self.delta is not None and not self.delta > 0:
            bad.append(f"need delta > 0, got {self.delta}")
        if bad:
            raise HyperbolicError("; ".join(bad))


# --------------------------------------------------------------------------
# periodic grids


CFL_LIMIT = {"spectral": 0.9, "fd4": 2.0}


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, 2 pi)^N; fields carry the grid as trailing axes."""

    points: tuple
    method: str = "spectral"
    dealias: bool = True

    def __post_init__(self):
        pts = (self.points,) if isinstance(self.points, int) else tuple(self.points)
        object.__setattr__(self, "points", pts)
        if not pts or any(m < 4 for m in pts):
            raise HyperbolicError("each grid axis needs at least 4 points")
        if self.method not in CFL_LIMIT:
            raise HyperbolicError(f"unknown spatial method {self.method!r}")

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def dx(self) -> tuple:
        return tuple(2 * np.pi / m for m in self.points)

    @property
    def cell(self) -> float:
        return float(np.prod(self.dx))

    def coords(self) -> list:
        axes = [2 * np.pi * np.arange(m) / m for m in self.points]
        return list(np.meshgrid(*axes, indexing="ij"))

    def _axis(self, k: int) -> int:
        return -self.N + k

    def diff(self, f: np.ndarray, k: int, method: str | None = None) -> np.ndarray:
        """d/dx^(k+1) along grid axis k (0-based)."""
        method = method or self.method
        ax = self._axis(k)
        m = self.points[k]
        if method == "fd4":
            h = self.dx[k]
            return (8 * (np.roll(f, -1, ax) - np.roll(f, 1, ax)) - (np.roll(f, -2, ax) - np.roll(f, 2, ax))) / (12 * h)
        kk = np.fft.fftfreq(m, 1.0 / m)
        if m % 2 == 0:
            kk[m // 2] = 0.0
        shape = [1] * f.ndim
        shape[ax] = m
        return np.real(np.fft.ifft(1j * kk.reshape(shape) * np.fft.fft(f, axis=ax), axis=ax))

    def smooth(self, f: np.ndarray) -> np.ndarray:
        """2/3-rule filter (identity for finite differences or with de-aliasing off)."""
        if self.method != "spectral" or not self.dealias:
            return f
        axes = tuple(range(-self.N, 0))
        fh = np.fft.rfftn(f, axes=axes)
        mask = np.ones(fh.shape[-self.N:], bool)
        for k, m in enumerate(self.points):
            n = fh.shape[-self.N + k]
            kk = np.abs(np.fft.fftfreq(m, 1.0 / m)) if k < self.N - 1 else np.arange(n)
            sh = [1] * self.N
            sh[k] = n
            mask = mask & (kk <= m / 3).reshape(sh)
        return np.fft.irfftn(fh * mask, s=self.points, axes=axes)

    def sup(self, f: np.ndarray) -> float:
        return float(np.max(np.abs(f))) if np.size(f) else 0.0


@dataclass(frozen=True)
class GridState:
    grid: Grid
    u: np.ndarray
    tau: float

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        u.flags.writeable = False
        object.__setattr__(self, "u", u)


def cutoff(t):
    """Smooth step: 1 for t <= -1, 0 for t >= 1."""
    t = np.asarray(t, dtype=float)

    def g(s):
        return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    a, b = g(1 - t), g(1 + t)
    return a / (a + b)


# --------------------------------------------------------------------------
# the square system


def _field(fld, tau, X, shape_hint=None):
    if fld is None:
        return None
    v = fld(tau, X) if callable(fld) else fld
    return np.asarray(v, dtype=float)


def _grid_last(M: np.ndarray, lead: int, grid: Grid) -> np.ndarray:
    """Broadcast an array with ``lead`` leading axes over the grid axes."""
    extra = M.ndim - lead
    if extra == 0:
        M = M.reshape(M.shape + (1,) * grid.N)
    return np.broadcast_to(M, M.shape[:lead] + grid.points)


def _mats(M: np.ndarray) -> np.ndarray:
    """(n, n, *grid) -> (*grid, n, n)."""
    return np.moveaxis(np.moveaxis(M, 0, -1), 0, -1)


@dataclass
class HypothesisReport:
    violations: list
    measured: dict

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class SquareSystem:
    """(a^mu + A^mu(u)) d_mu u + L u + B(u, u)/2 + F = 0 on [0, T] x T^N.

    ``a``, ``L`` and ``F`` are arrays or callables ``(tau, X) -> array`` with
    X the list of grid coordinate arrays; shapes ``(1+N, n, n[, *grid])``,
    ``(n, n[, *grid])`` and ``(n[, *grid])``.  ``A[mu, k]`` is the symmetric
    matrix multiplying u_k in A^mu(u); ``B[i, j]`` is the vector B(e_i, e_j).
    """

    n: int
    a: object
    constants: Constants
    L: object = None
    F: object = None
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    N: int = 1

    def __post_init__(self):
        if self.A is not None:
            self.A = np.asarray(self.A, float)
            if self.A.shape != (1 + self.N, self.n, self.n, self.n):
                raise HyperbolicError(f"A must have shape {(1 + self.N, self.n, self.n, self.n)}")
        if self.B is not None:
            self.B = np.asarray(self.B, float)
            if self.B.shape != (self.n,) * 3:
                raise HyperbolicError(f"B must have shape {(self.n,) * 3}")

    # -- coefficient fields on a grid ------------------------------------------
    def a_at(self, tau, grid: Grid, X=None) -> np.ndarray:
        a = _field(self.a, tau, X if X is not None else grid.coords())
        if a.shape[:3] != (1 + self.N, self.n, self.n):
            raise HyperbolicError(f"a has shape {a.shape[:3]}, expected {(1 + self.N, self.n, self.n)}")
        return _grid_last(a, 3, grid)

    def L_at(self, tau, grid: Grid, X=None):
        L = _field(self.L, tau, X if X is not None else grid.coords())
        return None if L is None else _grid_last(L, 2, grid)

    def F_at(self, tau, grid: Grid, X=None):
        F = _field(self.F, tau, X if X is not None else grid.coords())
        return None if F is None else _grid_last(F, 1, grid)

    def A_of(self, u: np.ndarray) -> np.ndarray | None:
        if self.A is None or not np.any(self.A):
            return None
        return np.einsum("mkij,k...->mij...", self.A, u)

    def B_of(self, u: np.ndarray, v: np.ndarray | None = None) -> np.ndarray | None:
        if self.B is None or not np.any(self.B):
            return None
        return np.einsum("ijk,i...,j...->k...", self.B, u, u if v is None else v)

    def principal(self, tau, u, grid: Grid, X=None) -> np.ndarray:
        w = np.array(self.a_at(tau, grid, X))
        Au = self.A_of(u)
        return w if Au is None else w + Au

    # -- hypotheses on samples ---------------------------------------------------
    def check_hypotheses(self, grid: Grid, taus, u=None) -> HypothesisReport:
        c = self.constants
        X = grid.coords()
        bad, meas = [], {"a0_min": np.inf, "a0_max": -np.inf, "L_norm": 0.0, "F_ratio": 0.0}
        if self.A is not None and not np.allclose(self.A, np.swapaxes(self.A, -1, -2)):
            bad.append("A^mu(u) is not symmetric")
        if self.B is not None and not np.allclose(self.B, np.swapaxes(self.B, 0, 1)):
            bad.append("B is not symmetric")
        for tau in taus:
            w = self.a_at(tau, grid, X) if u is None else self.principal(tau, u, grid, X)
            if not np.all(np.isfinite(w)):
                bad.append(f"non-finite coefficients at tau = {tau:g}")
                continue
            if not np.allclose(w, np.swapaxes(w, 1, 2), atol=1e-12):
                bad.append(f"a^mu not symmetric at tau = {tau:g}")
            ev = np.linalg.eigvalsh(_mats(w[0]))
            meas["a0_min"] = min(meas["a0_min"], float(ev.min()))
            meas["a0_max"] = max(meas["a0_max"], float(ev.max()))
            L = self.L_at(tau, grid, X)
            if L is not None:
                meas["L_norm"] = max(meas["L_norm"], float(np.max(np.linalg.norm(_mats(L), 2, axis=(-2, -1)))))
            F = self.F_at(tau, grid, X)
            if F is not None and c.delta is not None:
                meas["F_ratio"] = max(meas["F_ratio"], grid.sup(F) / (c.delta * math.exp(-c.Z * tau)))
        if meas["a0_min"] < 1 / c.q or meas["a0_max"] > c.q:
            bad.append(f"a^0 spectrum [{meas['a0_min']:.4g}, {meas['a0_max']:.4g}] leaves [1/q, q] with q = {c.q}")
        if meas["L_norm"] > c.z * (1 + 1e-12):
            bad.append(f"|L| = {meas['L_norm']:.4g} exceeds z = {c.z}")
        if c.delta is not None and meas["F_ratio"] > 1 + 1e-12:
            bad.append(f"|F| exceeds delta exp(-Z tau) by a factor {meas['F_ratio']:.4g}")
        return HypothesisReport(bad, meas)

    def rhs(self, tau, u, grid: Grid, X=None, cache=None) -> np.ndarray:
        """d_0 u solved from the system (before de-aliasing)."""
        key = float(tau)
        if cache is not None and key in cache:
            a, L, F = cache[key]
        else:
            X = X if X is not None else grid.coords()
            a, L, F = self.a_at(tau, grid, X), self.L_at(tau, grid, X), self.F_at(tau, grid, X)
            if cache is not None:
                if len(cache) > 8:
                    cache.clear()
                cache[key] = (a, L, F)
        Au = self.A_of(u)
        w = a if Au is None else a + Au
        acc = np.zeros_like(u)
        for k in range(grid.N):
            acc += np.einsum("ij...,j...->i...", w[1 + k], grid.diff(u, k))
        if L is not None:
            acc += np.einsum("ij...,j...->i...", L, u)
        Bu = self.B_of(u)
        if Bu is not None:
            acc += 0.5 * Bu
        if F is not None:
            acc += F
        w0 = _mats(w[0])
        sol = np.linalg.solve(w0, np.moveaxis(-acc, 0, -1)[..., None])[..., 0]
        return np.moveaxis(sol, -1, 0)


def with_cutoff(sys: SquareSystem, s: float) -> SquareSystem:
    """Same system with F replaced by chi(tau - s) F (so F vanishes for tau >= s + 1)."""
    F = sys.F
    if F is None:
        return sys

    def Fc(tau, X):
        chi = float(cutoff(tau - s))
        if chi == 0.0:
            return np.zeros(np.shape(_field(F, tau, X)))
        return chi * _field(F, tau, X)

    return replace(sys, F=Fc)


# --------------------------------------------------------------------------
# time stepping


@dataclass
class History:
    states: list
    dt: float
    steps: int
    energies: dict = field(default_factory=dict)
    a0_range: tuple = (np.inf, -np.inf)
    cfl_max: float = 0.0

    @property
    def taus(self) -> np.ndarray:
        return np.array([s.tau for s in self.states])

    def sup_norms(self) -> np.ndarray:
        return np.array([s.grid.sup(s.u) for s in self.states])

    @property
    def final(self) -> GridState:
        return self.states[-1]


def _speeds(w: np.ndarray, grid: Grid) -> float:
    """sum_k max |eig(w0^-1 w^k)| / dx_k, the CFL rate of the principal part."""
    w0 = _mats(w[0])
    ev, V = np.linalg.eigh(w0)
    if np.any(ev <= 0):
        return np.inf
    isq = V @ (1 / np.sqrt(ev)[..., None] * np.swapaxes(V, -1, -2))
    tot = 0.0
    for k in range(grid.N):
        M = isq @ _mats(w[1 + k]) @ isq
        tot += float(np.max(np.abs(np.linalg.eigvalsh(M)))) / grid.dx[k]
    return tot


def _stiffness(sys: SquareSystem, tau, grid: Grid, X) -> float:
    L = sys.L_at(tau, grid, X)
    if L is None:
        return 0.0
    a0 = _mats(sys.a_at(tau, grid, X)[0])
    M = np.linalg.solve(a0, _mats(L))
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def energy(u: np.ndarray, grid: Grid, w0: np.ndarray | None = None, order: int = 0) -> dict:
    """E_alpha = int dx (d^alpha u)^T w0 (d^alpha u) for spatial |alpha| <= order.

    Derivatives are spectral; with w0 = None the weight is the identity and
    E_0 is the squared grid L2 norm.
    """
    from itertools import product

    out = {}
    for alpha in product(range(order + 1), repeat=grid.N):
        if sum(alpha) > order:
            continue
        v = u
        for k, a in enumerate(alpha):
            for _ in range(a):
                v = grid.diff(v, k, "spectral")
        if w0 is None:
            dens = np.sum(v * v, axis=0)
        else:
            W = _grid_last(np.asarray(w0, float), 2, grid)
            dens = np.einsum("i...,ij...,j...->...", v, W, v)
        out[alpha] = float(np.sum(dens) * grid.cell)
    return out


def evolve_square(sys: SquareSystem, grid: Grid, tau_span, u0=None, dt=None, cfl: float = 0.5,
                  dt_max: float | None = None, save_every: int = 1, energy_order: int | None = None,
                  check: bool = True, check_every: int = 1) -> History:
    """RK4 method of lines from tau_span[0] to tau_span[1] (either direction).

    With ``u0 = None`` the run starts from zero data; backward runs then
    require F to vanish at the start (apply :func:`with_cutoff`).  The
    positivity window Q^-1 <= a^0 + A^0(u) <= Q, the CFL number and
    finiteness are monitored every ``check_every`` steps.
    """
    if grid.N != sys.N:
        raise HyperbolicError(f"grid has N = {grid.N}, system has N = {sys.N}")
    t0, t1 = map(float, tau_span)
    if t0 == t1:
        raise HyperbolicError("empty tau interval")
    direction = 1.0 if t1 > t0 else -1.0
    X = grid.coords()
    c = sys.constants
    shape = (sys.n,) + grid.points
    if u0 is None:
        u = np.zeros(shape)
        F0 = sys.F_at(t0, grid, X)
        if direction < 0 and F0 is not None and np.any(F0):
            raise PreconditionError("trivial data at the start of a backward run need F to vanish there; use with_cutoff")
    else:
        v = np.asarray(u0, float)
        if v.ndim == 1:
            v = v.reshape(v.shape + (1,) * grid.N)
        u = np.array(np.broadcast_to(v, shape))
    samples = np.linspace(t0, t1, 5)
    if check:
        rep = sys.check_hypotheses(grid, samples)
        if not rep.ok:
            raise PreconditionError("hypotheses fail on samples: " + "; ".join(rep.violations))
    if dt is None:
        rate = max(_speeds(sys.principal(t, u, grid, X), grid) for t in samples)
        stiff = max(_stiffness(sys, t, grid, X) for t in samples)
        dt = cfl / rate if rate > 0 else abs(t1 - t0)
        if stiff > 0:
            dt = min(dt, 1.0 / stiff)
        if dt_max is not None:
            dt = min(dt, dt_max)
    nsteps = max(1, int(math.ceil(abs(t1 - t0) / dt - 1e-9)))
    h = direction * abs(t1 - t0) / nsteps
    limit = CFL_LIMIT[grid.method]
    cache: dict = {}

    def f(t, v):
        return grid.smooth(sys.rhs(t, v, grid, X, cache))

    hist = History([GridState(grid, u, t0)], abs(h), nsteps)
    lo, hi, cmax = np.inf, -np.inf, 0.0

    def record(t, v):
        if energy_order is not None:
            w0 = sys.principal(t, v, grid, X)[0]
            for k, val in energy(v, grid, w0, energy_order).items():
                hist.energies.setdefault(k, []).append(val)

    record(t0, u)
    for step in range(1, nsteps + 1):
        t = t0 + (step - 1) * h
        k1 = f(t, u)
        k2 = f(t + h / 2, u + h / 2 * k1)
        k3 = f(t + h / 2, u + h / 2 * k2)
        k4 = f(t + h, u + h * k3)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        tn = t0 + step * h
        if not np.all(np.isfinite(u)):
            raise NumericalFailure(f"non-finite state at tau = {tn:.6g}")
        if check and (step % check_every == 0 or step == nsteps):
            w = sys.principal(tn, u, grid, X)
            ev = np.linalg.eigvalsh(_mats(w[0]))
            lo, hi = min(lo, float(ev.min())), max(hi, float(ev.max()))
            if lo < 1 / c.Q or hi > c.Q:
                raise NumericalFailure(f"positivity window exhausted at tau = {tn:.6g}: a^0 + A^0(u) spectrum "
                                      f"[{lo:.4g}, {hi:.4g}] leaves [1/Q, Q]")
            num = abs(h) * _speeds(w, grid)
            cmax = max(cmax, num)
            if num > limit:
                raise NumericalFailure(f"CFL number {num:.3g} exceeds {limit} at tau = {tn:.6g}")
        if step % save_every == 0 or step == nsteps:
            hist.states.append(GridState(grid, u, tn))
            record(tn, u)
    hist.a0_range, hist.cfl_max = (lo, hi), cmax
    hist.energies = {k: np.array(v) for k, v in hist.energies.items()}
    return hist


# --------------------------------------------------------------------------
# energy diagnostics for linear runs


@dataclass
class EnergyAudit:
    taus: np.ndarray
    E: np.ndarray
    J_norm: np.ndarray  # sup_x |J| (operator norm) at each tau
    identity_defect: float  # max |dE/dtau - int U^T J U| / max |dE/dtau|
    gronwall_ratio: np.ndarray  # E(tau_i) / (E(tau_j) exp(int Q |J|)) over consecutive pairs, tau_i < tau_j


def energy_audit(sys: SquareSystem, hist: History, h_tau: float = 1e-5) -> EnergyAudit:
    """Energy identity and Gronwall bound for a linear homogeneous run.

    With w^mu = a^mu, l = -L and J = d_mu w^mu + l + l^T, the current
    j^mu = U^T w^mu U has d_mu j^mu = U^T J U, so dE/dtau = int U^T J U dx
    and E(tau_0) <= E(tau_1) exp(int_{tau_0}^{tau_1} Q |J|).
    """
    if sys.A is not None and np.any(sys.A) or sys.B is not None and np.any(sys.B) or sys.F is not None:
        raise HyperbolicError("the energy audit is for linear homogeneous systems")
    grid = hist.states[0].grid
    X = grid.coords()
    taus, E, Jn, JU = [], [], [], []
    for st in hist.states:
        t, U = st.tau, st.u
        a = sys.a_at(t, grid, X)
        da0 = (sys.a_at(t + h_tau, grid, X)[0] - sys.a_at(t - h_tau, grid, X)[0]) / (2 * h_tau)
        div = np.array(da0)
        for k in range(grid.N):
            div = div + grid.diff(np.array(a[1 + k]), k, "spectral")
        L = sys.L_at(t, grid, X)
        J = div if L is None else div - L - np.swapaxes(L, 0, 1)
        taus.append(t)
        E.append(energy(U, grid, a[0])[(0,) * grid.N])
        Jn.append(float(np.max(np.linalg.norm(_mats(J), 2, axis=(-2, -1)))))
        JU.append(float(np.sum(np.einsum("i...,ij...,j...->...", U, J, U)) * grid.cell))
    taus, E, Jn, JU = map(np.array, (taus, E, Jn, JU))
    order = np.argsort(taus)
    taus, E, Jn, JU = taus[order], E[order], Jn[order], JU[order]
    dE = np.gradient(E, taus, edge_order=2)
    scale = max(float(np.max(np.abs(dE))), 1e-300)
    defect = float(np.max(np.abs(dE - JU)[2:-2])) / scale if len(taus) > 4 else float("nan")
    Q = sys.constants.Q
    integ = np.concatenate([[0.0], np.cumsum(0.5 * (Jn[1:] + Jn[:-1]) * np.diff(taus))])
    ratio = E[:-1] / (E[1:] * np.exp(Q * (integ[1:] - integ[:-1])))
    return EnergyAudit(taus, E, Jn, defect, ratio)


def fit_rate(taus, norms) -> tuple[float, float]:
    """(rate, C) with norms ~ C exp(-rate tau) in the least-squares log sense."""
    taus, norms = np.asarray(taus, float), np.asarray(norms, float)
    if np.any(norms <= 0):
        raise HyperbolicError("cannot fit a rate through zero norms")
    slope, icpt = np.polyfit(taus, np.log(norms), 1)
    return float(-slope), float(np.exp(icpt))


def convergence_orders(resolutions, errors) -> np.ndarray:
    """Observed orders log(e_k / e_{k+1}) / log(h_k / h_{k+1}) between successive grids."""
    h = 1.0 / np.asarray(resolutions, float)
    e = np.asarray(errors, float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


# --------------------------------------------------------------------------
# sectors and symmetric hyperbolic gauges


@dataclass(frozen=True)
class Sector:
    """A graded summand closed under module multiplication by W (basis ids per degree 0..4)."""

    name: str
    ids: tuple

    def n(self, i: int) -> int:
        return len(self.ids[i]) if 0 <= i <= 4 else 0

    def mod(self, w, i: int) -> list:
        """Matrix of multiplication by w = sum_c w[c] theta_c, degree i -> i + 1 (exact)."""
        alg = get_algebra()
        rows = {b: r for r, b in enumerate(self.ids[i + 1])} if i < 4 else {}
        M = [[Q(0)] * self.n(i) for _ in range(self.n(i + 1))]
        for c, wc in enumerate(w):
            if not wc:
                continue
            for col, b in enumerate(self.ids[i]):
                for tgt, v in alg.module.get((1 << c, b), {}).items():
                    if tgt not in rows:
                        raise HyperbolicError(f"{self.name} sector is not closed under module multiplication")
                    M[rows[tgt]][col] += Q(wc) * v
        return M


def _sector(kind: str | None, name: str) -> Sector:
    alg = get_algebra()
    ids = tuple(tuple(b for b in alg.by_degree[i] if kind is None or alg.basis[b].kind == kind) for i in range(5))
    return Sector(name, ids)


def phi_sector() -> Sector:
    return _sector("P", "phi")


def e_sector() -> Sector:
    return _sector("E", "E")


THETA = [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)]


def _mm(A, B):
    if not A or not B:
        cols = len(B[0]) if B else 0
        return [[Q(0)] * cols for _ in range(len(A))]
    Bt = list(zip(*B))
    return [[sum((a * b for a, b in zip(row, col) if a and b), Q(0)) for col in Bt] for row in A]


def _eye(n):
    return [[Q(int(i == j)) for j in range(n)] for i in range(n)]


def _cols(M, ncols=None):
    """Columns of M as lists (M given as rows)."""
    if not M:
        return []
    return [list(c) for c in zip(*M)]


def _from_cols(cols, nrows):
    return [[c[r] for c in cols] for r in range(nrows)]


@dataclass
class GaugeData:
    """Injections R_i (n_i x m_i) and surjections S_i (m_i x n_{i+1}), rational, i = 0..4.

    S_i is the bilinear form b^i read as a map from degree i + 1 to the dual
    of the gauge subspace: b^i(g, x) = g^T S_i x in gauge coordinates.
    """

    sector: Sector
    R: dict
    S: dict

    def m(self, i: int) -> int:
        R = self.R.get(i) if 0 <= i <= 4 else None
        return len(R[0]) if R else 0

    def induced(self, i: int, w) -> list:
        """S_i (w .) R_i, the m_i x m_i matrix A_i(w)."""
        return _mm(self.S[i], _mm(self.sector.mod(w, i), self.R[i]))

    def form(self, i: int, g, x):
        """b^i(g, x) for gauge coordinates g and a degree i + 1 vector x."""
        Sx = [sum((a * b for a, b in zip(row, x)), Q(0)) for row in self.S[i]]
        return sum((a * b for a, b in zip(g, Sx)), Q(0))

    def as_float(self):
        R = {i: np.array(self.R[i], float).reshape(self.sector.n(i), self.m(i)) for i in range(5)}
        S = {i: np.array(self.S[i], float).reshape(self.m(i), self.sector.n(i + 1)) for i in range(5)}
        return R, S


def phi_gauge() -> GaugeData:
    """Gauge of the scalar-field sector.

    Phi_G^1 = Phi^1, Phi_G^2 = span(_t2t3, _t3t1, _t1t2), Phi_G^3 = span(_t1t2t3),
    Phi_G^4 = 0.  The forms b^i(g, x) read the coefficient of theta_0 g in x,
    so b^i(-, w -) is w^0 times the identity plus the boost part, positive on W_+.
    """
    sec = phi_sector()
    alg = get_algebra()
    gauge_ids = {0: [], 1: list(sec.ids[1]), 2: [alg.find(s) for s in ("_θ2θ3", "_θ3θ1", "_θ1θ2")],
                 3: [alg.find("_θ1θ2θ3")], 4: []}
    R, S = {}, {}
    for i in range(5):
        pos = {b: r for r, b in enumerate(sec.ids[i])}
        cols = []
        for b in gauge_ids[i]:
            v = [Q(0)] * sec.n(i)
            v[pos[b]] = Q(1)
            cols.append(v)
        R[i] = _from_cols(cols, sec.n(i)) if cols else [[] for _ in range(sec.n(i))]
    for i in range(5):
        rows = []
        for g in _cols(R[i]):
            img = [sum((gv * mc for gv, mc in zip(g, row)), Q(0)) for row in sec.mod(THETA[0], i)]
            nz = [k for k, v in enumerate(img) if v]
            if len(nz) != 1:
                raise HyperbolicError("theta_0 image of a gauge vector is not a single basis element")
            r = [Q(0)] * sec.n(i + 1)
            r[nz[0]] = 1 / img[nz[0]]
            rows.append(r)
        S[i] = rows
    return GaugeData(sec, R, S)


@dataclass
class GaugeReport:
    checks: dict
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def _exact(x) -> bool:
    return isinstance(x, (int, Fraction)) or type(x).__name__ == "mpq"


def _posdef(M) -> bool:
    """Exact positive definiteness of a symmetric rational matrix (pivots of LDL^T)."""
    A = [[Q(x) for x in row] for row in M]
    n = len(A)
    for k in range(n):
        if A[k][k] <= 0:
            return False
        for i in range(k + 1, n):
            f = A[i][k] / A[k][k]
            if f:
                for j in range(k, n):
                    A[i][j] -= f * A[k][j]
    return True


def timelike_samples(count: int, seed: int = 0) -> list:
    """Rational future timelike vectors: the axes at speed 99/100 plus random points of the unit ball."""
    out = [THETA[0]]
    for k in (1, 2, 3):
        for s in (1, -1):
            w = [Q(1), Q(0), Q(0), Q(0)]
            w[k] = Q(99 * s, 100)
            out.append(tuple(w))
    rng = np.random.default_rng(seed)
    while len(out) < 7 + count:
        v = rng.uniform(-1, 1, 3)
        if v @ v >= 0.999:
            continue
        out.append((Q(1),) + tuple(Q(Fraction(float(x)).limit_denominator(97)) for x in v))
    return [w for w in out if sum(x * x for x in w[1:]) < w[0] ** 2]


def verify_gauge(g: GaugeData, samples: int = 12, seed: int = 0) -> GaugeReport:
    """Check the gauge axioms exactly; the report lists every violated axiom."""
    sec = g.sector
    checks: dict = {}
    bad: list = []

    def note(name, ok, msg):
        checks[name] = checks.get(name, True) and ok
        if not ok:
            bad.append(msg)

    ws = timelike_samples(samples, seed)
    m = {}
    for i in range(5):
        R = g.R.get(i)
        if R is None or len(R) != sec.n(i) or any(len(r) != len(R[0]) for r in R):
            note("shapes", False, f"R_{i} must have {sec.n(i)} rows of equal length")
            return GaugeReport(checks, bad)
        m[i] = len(R[0]) if R else 0
    for i in range(5):
        S = g.S.get(i, [])
        if len(S) != m[i] or any(len(r) != sec.n(i + 1) for r in S):
            note("shapes", False, f"S_{i} must be {m[i]} x {sec.n(i + 1)}")
            return GaugeReport(checks, bad)
    checks.setdefault("shapes", True)
    entries = [x for i in range(5) for M in (g.R[i], g.S[i]) for r in M for x in r]
    note("constant coefficients", all(_exact(x) for x in entries), "R_i, S_i must have exact rational entries")
    for i in range(-1, 5):
        mi = m.get(i, 0)
        note("dimensions", sec.n(i + 1) == mi + m.get(i + 1, 0),
             f"n_{i + 1} = {sec.n(i + 1)} != m_{i} + m_{i + 1} = {mi} + {m.get(i + 1, 0)}")
    for i in range(5):
        S, Rn = g.S[i], g.R.get(i + 1, [])
        if m[i] and Rn and m.get(i + 1, 0):
            P = _mm(S, Rn)
            note("exactness", all(not x for r in P for x in r), f"S_{i} R_{i + 1} != 0")
        if m.get(i + 1, 0):
            note("exactness", la.rank(Rn) == m[i + 1], f"R_{i + 1} is not injective")
        if m[i]:
            note("exactness", la.rank(S) == m[i], f"S_{i} is not surjective")
        nullity = sec.n(i + 1) - (la.rank(S) if m[i] else 0)
        note("kernel", nullity == m.get(i + 1, 0),
             f"ker b^{i}(G^{i}, -) has dimension {nullity}, gauge subspace G^{i + 1} has {m.get(i + 1, 0)}")
        if not m[i]:
            continue
        for c in range(4):
            M = g.induced(i, THETA[c])
            sym = all(M[a][b] == M[b][a] for a in range(m[i]) for b in range(a))
            note("symmetry", sym, f"b^{i}(-, theta_{c} -) is not symmetric on G^{i}")
        for w in ws:
            M = g.induced(i, w)
            sym = all(M[a][b] == M[b][a] for a in range(m[i]) for b in range(a))
            note("positivity", sym and _posdef(M),
                 f"b^{i}(-, w -) is not positive definite for w = {tuple(map(str, w))}")
        if sec.n(i + 1):
            note("injectivity", la.rank(_mm(sec.mod(THETA[0], i), g.R[i])) == m[i],
                 f"multiplication by theta_0 is not injective on G^{i}")
    for i in range(5):
        if not sec.n(i):
            continue
        for w in ws[:4]:
            low = _mm(sec.mod(w, i - 1), g.R[i - 1]) if i >= 1 and m[i - 1] else [[] for _ in range(sec.n(i))]
            blocks = [list(a) + list(b) for a, b in zip(g.R[i] if m[i] else [[] for _ in range(sec.n(i))], low)]
            ok = len(blocks[0]) == sec.n(i) and la.rank(blocks) == sec.n(i)
            note("decomposition", ok, f"degree {i} is not G^{i} + w G^{i - 1} for w = {tuple(map(str, w))}")
    for name in ("dimensions", "exactness", "kernel", "symmetry", "positivity", "injectivity", "decomposition"):
        checks.setdefault(name, True)
    seen, uniq = set(), []
    for v in bad:
        if v not in seen:
            seen.add(v)
            uniq.append(v)
    return GaugeReport(checks, uniq)


@dataclass
class GaugeSearch:
    gauge: GaugeData | None
    message: str
    tried: int
    space_dims: dict

    @property
    def found(self) -> bool:
        return self.gauge is not None


def _rational(x: float, den: int) -> Fraction:
    return Q(Fraction(float(x)).limit_denominator(den))


def search_gauge(sector: Sector, budget: int = 64, seed: int = 0, support: dict | None = None,
                 denominator: int = 10 ** 4, samples: int = 12) -> GaugeSearch:
    """Degree-by-degree search for constant rational (R_i, S_i).

    G^0 is all of degree 0.  Given R_i, the candidates for S_i solve the
    linear conditions "S_i (theta_c .) R_i symmetric" with a normalization of
    b^i(-, theta_0 -); the first candidates are least-norm solutions (the
    structured part), the rest add seeded random nullspace directions.  Each
    candidate is rounded to rationals and checked exactly for symmetry, rank
    and positivity on W_+ samples; G^{i+1} is its kernel.  ``support`` may
    restrict, per degree i, the degree i + 1 basis ids that S_i may read.
    Failure (budget exhausted, empty candidate space, final check) is a
    result, not an exception.
    """
    rng = np.random.default_rng(seed)
    ws = timelike_samples(samples, seed)
    R = {0: _eye(sector.n(0))}
    S: dict = {}
    tried = 0
    dims: dict = {}
    for i in range(5):
        m = len(R[i][0]) if R[i] and R[i][0] else 0
        n1 = sector.n(i + 1)
        if m == 0:
            S[i] = []
            if i < 4:
                R[i + 1] = _eye(n1)
            continue
        allowed = list(range(n1))
        if support is not None and i in support:
            pos = {b: r for r, b in enumerate(sector.ids[i + 1])} if i < 4 else {}
            allowed = [pos[b] for b in support[i] if b in pos]
        k = len(allowed)
        dims[i] = m * k
        if k < m:
            return GaugeSearch(None, f"degree {i}: candidate space for S_{i} has dimension {m * k}, "
                                     f"too small for a surjection onto {m} dimensions", tried, dims)
        Mc = [np.array(_mm(sector.mod(THETA[c], i), R[i]), float)[allowed] for c in range(4)]
        nvar = m * k
        # symmetry rows: (S M_c)[a, b] - (S M_c)[b, a] = 0 with S[a, j] = s[a * k + j]
        rows = []
        for M in Mc:
            for a in range(m):
                for b in range(a + 1, m):
                    r = np.zeros(nvar)
                    r[a * k:(a + 1) * k] += M[:, b]
                    r[b * k:(b + 1) * k] -= M[:, a]
                    rows.append(r)
        sym = np.array(rows) if rows else np.zeros((0, nvar))
        norm_rows = []
        for a in range(m):
            for b in range(m):
                r = np.zeros(nvar)
                r[a * k:(a + 1) * k] = Mc[0][:, b]
                norm_rows.append(r)
        N0 = np.array(norm_rows)
        targets = [(Mc[0].T @ Mc[0]).ravel(), np.eye(m).ravel()]
        Asys = np.vstack([sym, N0])
        _, sv, Vt = np.linalg.svd(Asys)
        tol = max(Asys.shape) * (sv[0] if sv.size else 1.0) * 1e-12
        null = Vt[int(np.sum(sv > tol)):]
        found = None

        def candidates():
            parts = []
            for tgt in targets:
                rhs = np.concatenate([np.zeros(sym.shape[0]), tgt])
                x, *_ = np.linalg.lstsq(Asys, rhs, rcond=None)
                if np.allclose(Asys @ x, rhs, atol=1e-9):
                    parts.append(x)
                    yield x
            if parts:
                while null.size:
                    yield parts[0] + null.T @ rng.normal(0, 1, null.shape[0])
                return
            # no normalization fits: random points of the symmetric solution space
            _, sv2, Vt2 = np.linalg.svd(sym) if sym.size else (None, np.zeros(0), np.eye(nvar))
            free = Vt2[int(np.sum(sv2 > tol)):]
            while free.size:
                yield free.T @ rng.normal(0, 1, free.shape[0])

        for x in candidates():
            if tried >= budget:
                break
            tried += 1
            Sfull = [[Q(0)] * n1 for _ in range(m)]
            for a in range(m):
                for j, col in enumerate(allowed):
                    Sfull[a][col] = _rational(x[a * k + j], denominator)
            cand = GaugeData(sector, {i: R[i]}, {i: Sfull})
            if la.rank(Sfull) != m:
                continue
            ok = True
            for w in list(THETA) + ws:
                M = cand.induced(i, w)
                if any(M[a][b] != M[b][a] for a in range(m) for b in range(a)):
                    ok = False
                    break
                if w[1:] != (0, 0, 0) and w[0] == 0:
                    continue
                if sum(v * v for v in w[1:]) < w[0] ** 2 and not _posdef(M):
                    ok = False
                    break
            if ok:
                found = Sfull
                break
        if found is None:
            why = "budget exhausted" if tried >= budget else "no admissible candidate"
            return GaugeSearch(None, f"degree {i}: {why} after {tried} candidates", tried, dims)
        S[i] = found
        if i < 4:
            ker = la.nullspace(found, n1)
            R[i + 1] = _from_cols(ker, n1) if ker else [[] for _ in range(n1)]
    for i in range(5):
        R.setdefault(i, [[] for _ in range(sector.n(i))])
        if R[i] and not R[i][0]:
            R[i] = [[] for _ in range(sector.n(i))]
    g = GaugeData(sector, R, S)
    rep = verify_gauge(g, samples, seed)
    if not rep.ok:
        return GaugeSearch(None, "candidate fails verification: " + "; ".join(rep.violations[:3]), tried, dims)
    return GaugeSearch(g, "found", tried, dims)


def same_gauge(g: GaugeData, h: GaugeData) -> bool:
    """Equal gauge subspaces and equal kernels of the forms, degree by degree."""
    for i in range(5):
        a, b = g.R[i], h.R[i]
        ma = len(a[0]) if a and a[0] else 0
        mb = len(b[0]) if b and b[0] else 0
        if ma != mb:
            return False
        if ma and la.rank([list(x) + list(y) for x, y in zip(a, b)]) != ma:
            return False
        sa, sb = g.S[i], h.S[i]
        if sa and la.rank(sa + sb) != len(sa):
            return False
    return True


# --------------------------------------------------------------------------
# fixed backgrounds for the scalar-field sector


class TauSeries:
    """c(tau, x) = sum_j g_j(x) tau^a_j exp(-r_j tau) with the x-parts frozen on a grid.

    Compiled from an exact coefficient by splitting each monomial into its
    tau and damping atoms and evaluating the rest once.
    """

    def __init__(self, e, env: dict):
        self.terms: list = []
        if not isinstance(e, Expr):
            self.terms.append((np.asarray(float(e)), 0, 0.0))
            return
        R = e.ring
        den = 1.0
        for n, k in e.den:
            den = den * evaluate(R.A(n), dict(env, tau=0.0)) ** k
        groups: dict = {}
        for mono, c in e.num.items():
            a, rate, rest = 0, 0.0, []
            for atom, k in mono:
                if atom[0] == TAU:
                    a += k
                elif atom[0] == DAMP:
                    rate = rate + k * evaluate(R.p[atom[1] - 1], env)
                else:
                    rest.append((atom, k))
            g = evaluate(Expr(R, {tuple(rest): c}), env) / den
            if np.ndim(rate) == 0:
                key = (a, float(rate))
                groups[key] = groups.get(key, 0.0) + g
            else:
                self.terms.append((np.asarray(g), a, np.asarray(rate)))
        self.terms.extend((np.asarray(g), a, r) for (a, r), g in groups.items())

    def __call__(self, tau: float):
        out = 0.0
        for g, a, r in self.terms:
            out = out + g * (tau ** a if a else 1.0) * np.exp(-r * tau)
        return out


@dataclass
class FixedBackground:
    """Degree-one E coefficients psi_E(tau) on a grid and the Phi^2 part of [psi, psi] / 2."""

    grid: Grid
    coeffs: Callable  # tau -> {basis id: array}
    residual: Callable | None = None  # tau -> {Phi^2 basis id: array}
    label: str = ""


def _env_for(grid: Grid, env: dict | None) -> dict:
    X = grid.coords()
    xs = [X[k] if k < grid.N else np.zeros(grid.points) for k in range(3)]
    base = {"constants": {}, "functions": {}, "tau": 0.0, "s": (1.0, 1.0, 1.0)}
    base.update(env or {})
    base["x"] = xs
    return base


def _cached(fn):
    store: dict = {}

    def call(tau):
        key = float(tau)
        if key not in store:
            if len(store) > 16:
                store.clear()
            store[key] = fn(key)
        return store[key]

    return call


def kasner_background(p, grid: Grid, shear: Callable | None = None) -> FixedBackground:
    """theta_0 d_0 + e_i theta_i L_i + (sum p) theta_0 sigma_0 + p_i theta_i sigma_i, exact MC in E.

    e_i = exp(-(p_j + p_k) tau).  ``shear(x1) -> (h', )`` pushes the frame
    forward along x2 -> x2 + h(x1), giving D_1 = e_1 (L_1 + h'(x1) L_2); the
    result is still MC and has x-dependent coefficients (needs N >= 2).
    """
    alg = get_algebra()
    p = [float(v) for v in p]
    texts = {"d0": "t0*d0", "e1": "t1*L1", "e2": "t2*L2", "e3": "t3*L3", "s12": "t1*L2",
             "c1": "t0*s0+t1*s1", "c2": "t0*s0+t2*s2", "c3": "t0*s0+t3*s3"}
    ids, scale = {}, {}
    for n, t in texts.items():
        (b, v), = alg.element(t).coeffs.items()
        ids[n], scale[n] = b, float(v)
    X = grid.coords()
    one = np.ones(grid.points)
    hp = None
    if shear is not None:
        if grid.N < 2:
            raise HyperbolicError("a sheared background needs N >= 2")
        hp = np.asarray(shear(X[0]), float) * one

    def coeffs(tau):
        e = [math.exp(-(p[1] + p[2]) * tau), math.exp(-(p[0] + p[2]) * tau), math.exp(-(p[0] + p[1]) * tau)]
        out = {ids["d0"]: one / scale["d0"]}
        for k in range(3):
            out[ids[f"e{k + 1}"]] = e[k] * one / scale[f"e{k + 1}"]
            out[ids[f"c{k + 1}"]] = p[k] * one / scale[f"c{k + 1}"]
        if hp is not None:
            out[ids["s12"]] = e[0] * hp / scale["s12"]
        return out

    return FixedBackground(grid, _cached(coeffs), None, f"Kasner p = {tuple(p)}")


def formal_background(gamma, J: int, lam: float, grid: Grid, env: dict | None = None) -> FixedBackground:
    """psi = sum_{|alpha| <= J} gamma_alpha lam^|alpha| from a formal series, on a grid.

    ``env`` supplies constants and data functions as for
    :func:`mcgla.scalar.evaluate`; the x entry is set from the grid (axes
    beyond N are zero).  The residual is the exact [psi, psi] / 2.
    """
    from . import formal as fm

    if lam <= 0:
        raise HyperbolicError("lambda must be positive")
    alg = get_algebra()
    ev = _env_for(grid, env)
    lam_q = Q(Fraction(repr(float(lam)))) if isinstance(lam, float) else Q(lam)
    series = fm.psi_series(gamma, J, lam_q)
    coef: dict = {}
    for a, x in series.terms.items():
        for b, c in x.coeffs.items():
            if alg.basis[b].kind == "E" and alg.deg[b] == 1:
                coef[b] = coef[b] + c if b in coef else c
    compiled = {b: TauSeries(c, ev) for b, c in coef.items()}
    res = fm.psi_residual(gamma, J, lam_q)
    phi2 = {b: TauSeries(c * Q(1, 2), ev) for b, c in res.coeffs.items()
            if alg.basis[b].kind == "P" and alg.deg[b] == 2}
    one = np.ones(grid.points)

    def coeffs(tau):
        return {b: f(tau) * one for b, f in compiled.items()}

    def residual(tau):
        return {b: f(tau) * one for b, f in phi2.items()}

    return FixedBackground(grid, _cached(coeffs), _cached(residual), f"formal psi, J = {J}, lambda = {lam}")


def background_operator(coeffs: dict, sector: Sector, i: int, grid: Grid):
    """[psi_E, y] = sum_mu A^mu d_mu y + Bm y for y of degree i in the sector.

    Returns (A, Bm) with A of shape (4, n_{i+1}, n_i, *grid) and Bm of shape
    (n_{i+1}, n_i, *grid).  Valid for sectors with vanishing anchor (Phi).
    """
    S = structure_arrays()
    alg = get_algebra()
    sl1 = {b: k for k, b in enumerate(S.slices[1])}
    sli = {b: k for k, b in enumerate(S.slices[i])}
    slo = {b: k for k, b in enumerate(S.slices[i + 1])}
    q = [sli[b] for b in sector.ids[i]]
    r = [slo[b] for b in sector.ids[i + 1]]
    Nt, Bt = S.Nf[(1, i)], S.Bf[(1, i)]
    A = np.zeros((4, len(r), len(q)) + grid.points)
    Bm = np.zeros((len(r), len(q)) + grid.points)
    for b, c in coeffs.items():
        if alg.basis[b].kind != "E" or alg.deg[b] != 1:
            raise HyperbolicError("background coefficients must be degree-one E elements")
        pidx = sl1[b]
        blk = Bt[pidx][np.ix_(q, r)].T / S.scale
        if np.any(blk):
            Bm += blk.reshape(blk.shape + (1,) * grid.N) * np.asarray(c)
        for mu in range(4):
            nb = Nt[pidx, mu][np.ix_(q, r)].T / S.scale
            if np.any(nb):
                A[mu] += nb.reshape(nb.shape + (1,) * grid.N) * np.asarray(c)
    return A, Bm


def _vec_from(d: dict, ids, grid: Grid) -> np.ndarray:
    out = np.zeros((len(ids),) + grid.points)
    pos = {b: k for k, b in enumerate(ids)}
    for b, v in d.items():
        if b in pos:
            out[pos[b]] += v
    return out


def phi_square_system(bg: FixedBackground, gauge: GaugeData, constants: Constants) -> SquareSystem:
    """S_1 [psi_E, psi_Phi + R_1 u] = 0 as a linear square system for u."""
    if gauge.sector.name != "phi":
        raise HyperbolicError("only scalar-field gauges on a fixed background are evolved here")
    grid = bg.grid
    R, S = gauge.as_float()
    R1, S1 = R[1], S[1]
    sec = gauge.sector

    @_cached
    def ops(tau):
        A, Bm = background_operator(bg.coeffs(tau), sec, 1, grid)
        a = np.einsum("ar,mrq...,qb->mab...", S1, A[:1 + grid.N], R1)
        L = np.einsum("ar,rq...,qb->ab...", S1, Bm, R1)
        return a, L

    F = None
    if bg.residual is not None:
        def F(tau, X):
            res = _vec_from(bg.residual(tau), sec.ids[2], grid)
            return np.einsum("ar,r...->a...", S1, res)

    return SquareSystem(R1.shape[1], lambda tau, X: ops(tau)[0], constants, L=lambda tau, X: ops(tau)[1],
                        F=F, N=grid.N)


def constraint_projector(gauge: GaugeData) -> np.ndarray:
    """P with P R_2 = 1 and P (theta_0 R_1) = 0: reads u' off a degree-two vector."""
    R, _ = gauge.as_float()
    M0 = np.array(gauge.sector.mod(THETA[0], 1), float) @ R[1]
    blocks = np.hstack([R[2], M0])
    if blocks.shape[0] != blocks.shape[1]:
        raise HyperbolicError("degree two is not R_2 plus theta_0 R_1")
    return np.linalg.inv(blocks)[: R[2].shape[1]]


@dataclass
class MCCorrection:
    history: History
    taus: np.ndarray
    u_norm: np.ndarray  # sup_x |u|
    du_norm: np.ndarray  # sup_x sup_{|alpha| <= 1} |d^alpha u|
    uprime_norm: np.ndarray  # sup_x |u'| with [psi + R_1 u, psi + R_1 u] / 2 = R_2 u' + (S_1-part)
    equation_norm: np.ndarray  # sup_x |S_1 [psi + R_1 u, psi + R_1 u] / 2| with the evolved d_0 u


def evolve_mc_correction(bg: FixedBackground, gauge: GaugeData, tau_span, constants: Constants, u0=None,
                         cutoff_at: float | None = None, check_gauge: bool = True, **kw) -> MCCorrection:
    """Solve S_1 [psi + R_1 u, psi + R_1 u] = 0 and monitor the constraint part u'.

    The scalar-field components of the MC equation on the fixed background
    psi_E are linear in u.  ``cutoff_at`` multiplies the source by
    chi(tau - s) so a backward run can start from zero data; remaining
    keywords go to :func:`evolve_square`.  u' is evaluated with spectral
    derivatives whatever the evolution scheme.
    """
    if check_gauge:
        rep = verify_gauge(gauge)
        if not rep.ok:
            raise PreconditionError("gauge fails verification: " + "; ".join(rep.violations))
    grid = bg.grid
    sys = phi_square_system(bg, gauge, constants)
    evo = with_cutoff(sys, cutoff_at) if cutoff_at is not None else sys
    hist = evolve_square(evo, grid, tau_span, u0=u0, **kw)
    R, S = gauge.as_float()
    P = constraint_projector(gauge)
    X = grid.coords()
    taus, un, dun, upn, eqn = [], [], [], [], []
    for st in hist.states:
        t, u = st.tau, st.u
        du0 = grid.smooth(evo.rhs(t, u, grid, X))
        A, Bm = background_operator(bg.coeffs(t), gauge.sector, 1, grid)
        y = np.einsum("qb,b...->q...", R[1], u)
        dy = [np.einsum("qb,b...->q...", R[1], du0)] + [grid.diff(y, k, "spectral") for k in range(grid.N)]
        full = np.einsum("rq...,q...->r...", Bm, y)
        for mu in range(1 + grid.N):
            full = full + np.einsum("rq...,q...->r...", A[mu], dy[mu])
        if bg.residual is not None:
            full = full + _vec_from(bg.residual(t), gauge.sector.ids[2], grid)
        taus.append(t)
        un.append(grid.sup(u))
        dun.append(max(grid.sup(u), grid.sup(du0), *(grid.sup(grid.diff(u, k, "spectral")) for k in range(grid.N))))
        upn.append(grid.sup(np.einsum("ar,r...->a...", P, full)))
        eqn.append(grid.sup(np.einsum("ar,r...->a...", S[1], full)))
    return MCCorrection(hist, *map(np.array, (taus, un, dun, upn, eqn)))


__all__ = [
    "CFL_LIMIT", "Constants", "EnergyAudit", "FixedBackground", "GaugeData", "GaugeReport", "GaugeSearch", "Grid",
    "GridState", "History", "HyperbolicError", "HypothesisReport", "MCCorrection", "NumericalFailure",
    "PreconditionError", "Sector", "SquareSystem",
    "TauSeries", "background_operator", "constraint_projector", "convergence_orders", "cutoff", "e_sector",
    "energy", "energy_audit", "evolve_mc_correction", "evolve_square", "fit_rate", "formal_background",
    "kasner_background", "phi_gauge", "phi_sector", "phi_square_system", "same_gauge", "search_gauge",
    "timelike_samples", "verify_gauge", "with_cutoff",
]
