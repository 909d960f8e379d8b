"""Constraint equations near a homogeneous anisotropic point of the torus.

The unknowns are fourteen real functions x = (D_i^j, p_1, p_2, p_3, zeta, chi)
with D_i = sum_j D_i^j d_j, component D_i^j stored at index 3(i-1) + (j-1).
The constraint A = 0 is eliminated by p_0 = sqrt((p_2 p_3 + p_3 p_1 + p_1 p_2) / 3)
and the remaining map x -> (B_1, B_2, B_3) is quasilinear of first order.

Everything nonlinear is evaluated pseudo-spectrally on a grid and truncated
back to |k|_inf <= K_max.  The same pointwise code runs on second-order jets,
which gives the quadratic part of the constraint map without finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .linalg import rank as exact_rank
from .scalar import FourierField, Q

NCOMP = 14
IP, IZETA, ICHI = 9, 12, 13  # p_1 at 9, p_2 at 10, p_3 at 11
CYCLIC = ((1, 2, 3), (2, 3, 1), (3, 1, 2))
# sup of |u| amplitudes accepted by solve_graph; calibrated at p = (1, 2, 3), K = 4,
# where random U' data stop converging near 2.5e-2 (see contraction_radius)
SMALLNESS = 1e-2


class ConstraintError(ValueError):
    """Degenerate frame, non-positive exponents, or a failed fixed point."""


def frame_index(i: int, j: int) -> int:
    """Position of D_i^j (1-based i, j) in the fourteen components."""
    return 3 * (i - 1) + (j - 1)


# -- principal symbol ----------------------------------------------------------------


def p00_of(p) -> float:
    p1, p2, p3 = (float(x) for x in p)
    return float(np.sqrt((p2 * p3 + p3 * p1 + p1 * p2) / 3))


def symbol_matrix(k, p, p00=None) -> list[list]:
    """sigma(k) = A^i(x_0) k_i as a 3 x 14 matrix.

    With rational k and p the first thirteen columns are exact rationals; the
    last column carries 3 p_00 k_i and is returned as a float unless ``p00``
    is supplied.
    """
    k = [Q(x) for x in k]
    p = [Q(x) for x in p]
    p00 = p00_of(p) if p00 is None else p00

    def delta(i, j):
        return (p[i - 1] - p[j - 1]) / 2

    S = [[Q(0)] * NCOMP for _ in range(3)]
    for i, j, kk in CYCLIC:
        row = S[i - 1]
        # -1/2 c_ij^j (p_i - p_j) with c_ij^j linearized to d_i D_j^j - d_j D_i^j
        row[frame_index(j, j)] += delta(j, i) * k[i - 1]
        row[frame_index(i, j)] += delta(i, j) * k[j - 1]
        # +1/2 c_ki^k (p_i - p_k) with c_ki^k linearized to d_k D_i^k - d_i D_k^k
        row[frame_index(i, kk)] += delta(i, kk) * k[kk - 1]
        row[frame_index(kk, kk)] += delta(kk, i) * k[i - 1]
        row[IP + j - 1] += -k[i - 1] / 2
        row[IP + kk - 1] += -k[i - 1] / 2
        row[IZETA] += p[i - 1] * k[i - 1]
        row[ICHI] = 3 * p00 * k[i - 1]
    return S


@dataclass
class SymbolRank:
    k: tuple
    rank: int
    kernel: np.ndarray  # orthonormal columns spanning U_k


def symbol_rank(k, p) -> SymbolRank:
    """Exact rank of sigma(k) and an orthonormal kernel basis.

    The rational block (columns 1..13) is ranked exactly; only when it falls
    short of three is the irrational last column brought in (numerically).
    """
    S = symbol_matrix(k, p)
    r = exact_rank([row[:ICHI] for row in S])
    M = np.array([[float(x) for x in row] for row in S])
    if r < 3:
        r = int(np.linalg.matrix_rank(M, tol=1e-12))
    return SymbolRank(tuple(k), r, _kernel(M))


def _kernel(M: np.ndarray) -> np.ndarray:
    if not np.any(M):
        return np.eye(NCOMP)
    _, s, vt = np.linalg.svd(M)
    r = int(np.sum(s > 1e-12 * s[0]))
    return vt[r:].T


# -- second-order jets ---------------------------------------------------------------


class Jet:
    """a + b t + c t^2 with array coefficients, truncated at t^2."""

    __slots__ = ("a", "b", "c")

    def __init__(self, a, b=0.0, c=0.0):
        self.a, self.b, self.c = a, b, c

    def _o(self, o):
        return o if isinstance(o, Jet) else Jet(o)

    def __add__(self, o):
        o = self._o(o)
        return Jet(self.a + o.a, self.b + o.b, self.c + o.c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.a, -self.b, -self.c)

    def __sub__(self, o):
        return self + (-self._o(o))

    def __rsub__(self, o):
        return self._o(o) - self

    def __mul__(self, o):
        o = self._o(o)
        return Jet(self.a * o.a, self.a * o.b + self.b * o.a, self.a * o.c + self.b * o.b + self.c * o.a)

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = self._o(o)
        inv_a = 1.0 / o.a
        ib = -o.b * inv_a ** 2
        ic = (o.b ** 2 * inv_a - o.c) * inv_a ** 2
        return self * Jet(inv_a, ib, ic)

    def __rtruediv__(self, o):
        return self._o(o) / self


def _sqrt(x):
    if isinstance(x, Jet):
        r = np.sqrt(x.a)
        b = x.b / (2 * r)
        c = (x.c - b * b) / (2 * r)
        return Jet(r, b, c)
    return np.sqrt(x)


def _base(x):
    return x.a if isinstance(x, Jet) else x


# -- pointwise constraint evaluation ---------------------------------------------------


def pointwise_constraints(val: list, grad: list, check: bool = True) -> list:
    """(B_1, B_2, B_3) from values val[a] and gradients grad[a][m] (m = 0, 1, 2 for d_1..d_3).

    Works for numpy arrays and for :class:`Jet` values alike.
    """
    E = [[val[frame_index(i, j)] for j in (1, 2, 3)] for i in (1, 2, 3)]
    dE = [[grad[frame_index(i, j)] for j in (1, 2, 3)] for i in (1, 2, 3)]
    cof = [[E[(j + 1) % 3][(l + 1) % 3] * E[(j + 2) % 3][(l + 2) % 3]
            - E[(j + 1) % 3][(l + 2) % 3] * E[(j + 2) % 3][(l + 1) % 3] for l in range(3)] for j in range(3)]
    det = E[0][0] * cof[0][0] + E[0][1] * cof[0][1] + E[0][2] * cof[0][2]
    if check:
        d = np.asarray(_base(det))
        if np.any(np.abs(d) < 1e-8) or (np.min(d) < 0 < np.max(d)):
            raise ConstraintError("degenerate frame sample")
    # inv[l][k] = (E^{-1})_{lk}; E^{-1} = cof^T / det
    inv = [[cof[k][l] / det for k in range(3)] for l in range(3)]
    p = [val[IP + i] for i in range(3)]
    if check and any(np.any(np.asarray(_base(x)) <= 0) for x in p):
        raise ConstraintError("exponents must stay positive")
    p0 = _sqrt((p[1] * p[2] + p[2] * p[0] + p[0] * p[1]) * (1.0 / 3.0))

    def D(i, g):  # D_i applied to a function with gradient g
        return E[i][0] * g[0] + E[i][1] * g[1] + E[i][2] * g[2]

    def c(i, j, k):  # structure function c_ij^k, 0-based
        br = [D(i, dE[j][l]) - D(j, dE[i][l]) for l in range(3)]
        return br[0] * inv[0][k] + br[1] * inv[1][k] + br[2] * inv[2][k]

    out = []
    for i, j, k in CYCLIC:
        i0, j0, k0 = i - 1, j - 1, k - 1
        dp = [grad[IP + j0][m] + grad[IP + k0][m] for m in range(3)]
        b = (D(i0, dp) * (-0.5)
             - c(i0, j0, j0) * (p[i0] - p[j0]) * 0.5
             + c(k0, i0, k0) * (p[i0] - p[k0]) * 0.5
             + p[i0] * D(i0, grad[IZETA])
             + p0 * D(i0, grad[ICHI]) * 3.0)
        out.append(b)
    return out


# -- Fourier fields on the grid --------------------------------------------------------


def default_grid(K: int) -> int:
    return max(4 * K + 4, 8)


def _to_grids(amps: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Values and gradients on an n^3 grid of a stack of amplitude arrays (leading axis = component)."""
    K = (amps.shape[-1] - 1) // 2
    r = np.arange(-K, K + 1)
    kk = np.meshgrid(r, r, r, indexing="ij")
    idx = r % n
    hat = np.zeros(amps.shape[:-3] + (n, n, n), complex)
    hat[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]] = amps
    vals = np.real(np.fft.ifftn(hat, axes=(-3, -2, -1)) * n ** 3)
    grads = []
    for m in range(3):
        ds = np.zeros_like(hat)
        ds[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]] = 1j * kk[m] * amps
        grads.append(np.real(np.fft.ifftn(ds, axes=(-3, -2, -1)) * n ** 3))
    return vals, np.stack(grads, axis=-4)


def _from_grid(grid: np.ndarray, K: int) -> np.ndarray:
    n = grid.shape[-1]
    hat = np.fft.fftn(grid, axes=(-3, -2, -1)) / n ** 3
    r = np.arange(-K, K + 1) % n
    return hat[..., r[:, None, None], r[None, :, None], r[None, None, :]]


def background(p, K: int) -> np.ndarray:
    """Amplitudes of x_0 = (identity frame, p, 0, 0)."""
    x = np.zeros((NCOMP,) + (2 * K + 1,) * 3, complex)
    for i in (1, 2, 3):
        x[frame_index(i, i)][K, K, K] = 1.0
    for i in range(3):
        x[IP + i][K, K, K] = float(p[i])
    return x


def fields_to_amps(x: list[FourierField], K: int | None = None) -> np.ndarray:
    K = max(f.K for f in x) if K is None else K
    out = np.zeros((len(x),) + (2 * K + 1,) * 3, complex)
    for a, f in enumerate(x):
        m = min(K, f.K)
        out[a][K - m:K + m + 1, K - m:K + m + 1, K - m:K + m + 1] = \
            f.data[f.K - m:f.K + m + 1, f.K - m:f.K + m + 1, f.K - m:f.K + m + 1]
    return out


def amps_to_fields(a: np.ndarray) -> list[FourierField]:
    K = (a.shape[-1] - 1) // 2
    return [FourierField(K, a[i].copy()) for i in range(a.shape[0])]


def constraint_grid(amps: np.ndarray, n: int | None = None) -> np.ndarray:
    """(B_1, B_2, B_3) sampled on the grid."""
    K = (amps.shape[-1] - 1) // 2
    n = default_grid(K) if n is None else n
    vals, grads = _to_grids(amps, n)
    out = pointwise_constraints(list(vals), [list(grads[a]) for a in range(NCOMP)])
    return np.stack(out)


def constraint_amps(amps: np.ndarray, K_max: int | None = None, n: int | None = None) -> np.ndarray:
    K = (amps.shape[-1] - 1) // 2
    K_max = K if K_max is None else K_max
    n = max(default_grid(max(K, K_max)), 2 * K_max + 1) if n is None else n
    return _from_grid(constraint_grid(amps, n), K_max)


def constraint_map(x: list[FourierField], K_max: int | None = None) -> list[FourierField]:
    """The map x -> (B_1, B_2, B_3) with truncated products."""
    if len(x) != NCOMP:
        raise ConstraintError("need fourteen component fields")
    return amps_to_fields(constraint_amps(fields_to_amps(x), K_max))


def quadratic_part(u: np.ndarray, p, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Linear and quadratic t-coefficients of the zero modes of C'(x_0 + t u).

    ``u`` may carry extra leading batch axes; the results then do too.
    """
    K = (u.shape[-1] - 1) // 2
    n = default_grid(K) if n is None else n
    v0, g0 = _to_grids(background(p, K), n)
    v1, g1 = _to_grids(u, n)
    ax = u.ndim - 4  # position of the component axis
    take = lambda arr, a: np.take(arr, a, axis=ax)
    vals = [Jet(v0[a], take(v1, a), 0.0) for a in range(NCOMP)]
    grads = [[Jet(g0[a][m], take(take(g1, a), m), 0.0) for m in range(3)] for a in range(NCOMP)]
    out = pointwise_constraints(vals, grads)
    lin = np.stack([np.mean(b.b, axis=(-3, -2, -1)) for b in out], axis=-1)
    quad = np.stack([np.mean(b.c, axis=(-3, -2, -1)) for b in out], axis=-1)
    return lin, quad


# -- the U' / V' splitting ------------------------------------------------------------


@dataclass
class Splitting:
    """Per-mode kernels and pseudo-inverses of sigma(k) for |k|_inf <= K."""

    p: tuple
    K: int
    sigma: np.ndarray = field(repr=False)  # (2K+1)^3 x 3 x 14
    pinv: np.ndarray = field(repr=False)  # (2K+1)^3 x 14 x 3
    proj_u: np.ndarray = field(repr=False)  # (2K+1)^3 x 14 x 14

    @classmethod
    def build(cls, p, K: int) -> "Splitting":
        p00 = p00_of(p)
        size = 2 * K + 1
        sig = np.zeros((size, size, size, 3, NCOMP))
        pinv = np.zeros((size, size, size, NCOMP, 3))
        proj = np.zeros((size, size, size, NCOMP, NCOMP))
        for k in product(range(-K, K + 1), repeat=3):
            idx = tuple(x + K for x in k)
            S = np.array([[float(v) for v in row] for row in symbol_matrix(k, p, p00)])
            sig[idx] = S
            if any(k):
                pinv[idx] = np.linalg.pinv(S)
                proj[idx] = np.eye(NCOMP) - pinv[idx] @ S
            else:
                proj[idx] = np.eye(NCOMP)
        return cls(tuple(float(x) for x in p), K, sig, pinv, proj)

    def project_u(self, a: np.ndarray) -> np.ndarray:
        return np.einsum("xyzab,bxyz->axyz", self.proj_u, a)

    def project_v(self, a: np.ndarray) -> np.ndarray:
        return a - self.project_u(a)

    def apply_symbol(self, v: np.ndarray) -> np.ndarray:
        """A(x_0) d v in Fourier space: i sigma(k) v(k)."""
        return 1j * np.einsum("xyzab,bxyz->axyz", self.sigma, v)

    def solve_symbol(self, f: np.ndarray) -> np.ndarray:
        """v in V' with i sigma(k) v(k) = f(k) for k != 0 (mode 0 of v is zero)."""
        v = -1j * np.einsum("xyzab,bxyz->axyz", self.pinv, f)
        K = self.K
        v[:, K, K, K] = 0
        return v


def random_u(split: Splitting, eps: float, seed: int = 0, modes: int | None = None) -> np.ndarray:
    """A random real element of U' with sup-amplitude eps, supported on |k|_inf <= modes."""
    K = split.K
    modes = K if modes is None else modes
    rng = np.random.default_rng(seed)
    size = 2 * K + 1
    grid = rng.standard_normal((NCOMP, size, size, size)) + 1j * rng.standard_normal((NCOMP, size, size, size))
    r = np.arange(-K, K + 1)
    mask = (np.abs(r)[:, None, None] <= modes) & (np.abs(r)[None, :, None] <= modes) & (np.abs(r)[None, None, :] <= modes)
    grid = grid * mask
    grid = 0.5 * (grid + np.conj(grid[:, ::-1, ::-1, ::-1]))  # real fields
    grid[:, K, K, K] = 0  # keep the background's averages
    u = split.project_u(grid)
    return u * (eps / np.max(np.abs(u)))


# -- the graph solve ---------------------------------------------------------------------


@dataclass
class GraphSolution:
    v: np.ndarray
    iterations: int
    history: list
    residual: float
    contraction: float


def _zero_mode(a: np.ndarray) -> np.ndarray:
    K = (a.shape[-1] - 1) // 2
    return a[..., K, K, K]


def graph_residual(split: Splitting, u: np.ndarray, v: np.ndarray) -> float:
    """max over k != 0 of |A(x_0) d v - (1 - Pi) f_u(v)|."""
    x = background(split.p, split.K) + u + v
    C = constraint_amps(x, split.K)
    # A(x_0) d v - f_u(v) = C'(x) for k != 0
    C[:, split.K, split.K, split.K] = 0
    return float(np.max(np.abs(C)))


def solve_graph(u: np.ndarray, split: Splitting, tol: float = 1e-12, max_iter: int = 200,
                smallness: float | None = SMALLNESS) -> GraphSolution:
    """v = phi(u) by the fixed point v <- (A(x_0) d)^{-1} (1 - Pi) f_u(v) on V'.

    ``smallness=None`` skips the size check on u.
    """
    if smallness is not None and np.max(np.abs(u)) > smallness:
        raise ConstraintError(f"|u| = {np.max(np.abs(u)):.3g} exceeds the smallness threshold {smallness:.3g}")
    x0 = background(split.p, split.K)
    v = np.zeros_like(u)
    history, steps = [], []
    if not np.any(u):
        return GraphSolution(v, 0, [0.0], 0.0, 0.0)
    for it in range(1, max_iter + 1):
        C = constraint_amps(x0 + u + v, split.K)
        f = split.apply_symbol(v) - C  # f_u(v) = A(x_0) d v - C'(x)
        v_new = split.solve_symbol(f)
        step = float(np.max(np.abs(v_new - v)))
        v = v_new
        steps.append(step)
        res = graph_residual(split, u, v)
        history.append(res)
        if res < tol:
            break
    else:
        rate = steps[-1] / steps[-2] if len(steps) > 1 and steps[-2] else float("inf")
        raise ConstraintError(f"fixed point did not converge in {max_iter} iterations; contraction estimate {rate:.3g}")
    rate = max((b / a for a, b in zip(steps, steps[1:]) if a), default=0.0)
    return GraphSolution(v, it, history, history[-1], rate)


def quadric_map(u: np.ndarray, split: Splitting, tol: float = 1e-12) -> np.ndarray:
    """B(u) = Pi f_u(phi(u)) in R^3."""
    sol = solve_graph(u, split, tol)
    C = constraint_amps(background(split.p, split.K) + u + sol.v, split.K)
    return -np.real(_zero_mode(C))


# -- the good intersection ------------------------------------------------------------


def embed(a: np.ndarray, K: int) -> np.ndarray:
    """Pad amplitudes to truncation K (or cut them down to it)."""
    k0 = (a.shape[-1] - 1) // 2
    out = np.zeros(a.shape[:-3] + (2 * K + 1,) * 3, complex)
    m = min(k0, K)
    src = slice(k0 - m, k0 + m + 1)
    dst = slice(K - m, K + m + 1)
    out[..., dst, dst, dst] = a[..., src, src, src]
    return out


def mode_basis(split: Splitting, i: int, components=None) -> list[np.ndarray]:
    """Real basis of U_i: fields with modes k = +-e_i only, values in U_k (dimension 22).

    ``components`` restricts to kernel vectors supported on the given indices.
    """
    K = split.K
    e = [0, 0, 0]
    e[i - 1] = 1
    idx = tuple(x + K for x in e)
    nidx = tuple(K - x for x in e)
    S = split.sigma[idx]
    if components is None:
        ker = _kernel(S)
    else:
        comps = list(components)
        sub = _kernel(S[:, comps])
        ker = np.zeros((NCOMP, sub.shape[1]))
        ker[comps] = sub
    out = []
    for col in ker.T:
        for phase in (1.0, 1j):  # cos and sin type real fields
            a = np.zeros((NCOMP,) + (2 * K + 1,) * 3, complex)
            a[(slice(None),) + idx] = phase * col / 2
            a[(slice(None),) + nidx] = np.conj(phase) * col / 2
            out.append(a)
    return out


def hessian(split: Splitting, basis: list[np.ndarray], chunk: int = 128) -> np.ndarray:
    """H[l, a, b] = beta^l(e_a, e_b), the polarized quadratic part of B at 0."""
    n = len(basis)
    pairs = [(a, a) for a in range(n)] + [(a, b) for a in range(n) for b in range(a + 1, n)]
    vals = {}
    for c in range(0, len(pairs), chunk):
        batch = pairs[c:c + chunk]
        u = np.stack([basis[a] + basis[b] if a != b else basis[a] for a, b in batch])
        q = -quadratic_part(u, split.p)[1]
        for (a, b), row in zip(batch, q):
            vals[(a, b)] = row
    H = np.zeros((3, n, n))
    for a in range(n):
        H[:, a, a] = vals[(a, a)]
        for b in range(a + 1, n):
            H[:, a, b] = H[:, b, a] = (vals[(a, b)] - vals[(a, a)] - vals[(b, b)]) / 2
    return H


@dataclass
class Signature:
    blocks: dict  # (l, i, j) -> matrix
    cross_max: float
    eigenvalues: dict  # i -> eigenvalues of beta^i on U_i
    indefinite: dict  # i -> bool
    dims: dict  # i -> real dimension of U_i


def quadric_signature(split: Splitting, components=None) -> Signature:
    """Hessian blocks of B at 0 over U_1 + U_2 + U_3 and the good-intersection diagnostics.

    Only the modes +-e_i enter, so the work is done with K = 1.
    """
    if split.K != 1:
        split = Splitting.build(split.p, 1)
    bases = {i: mode_basis(split, i, components) for i in (1, 2, 3)}
    flat = [b for i in (1, 2, 3) for b in bases[i]]
    H = hessian(split, flat)
    offs, pos = {}, 0
    for i in (1, 2, 3):
        offs[i] = (pos, pos + len(bases[i]))
        pos += len(bases[i])
    blocks, cross, eig, indef = {}, 0.0, {}, {}
    for l in (1, 2, 3):
        for i in (1, 2, 3):
            for j in (1, 2, 3):
                a0, a1 = offs[i]
                b0, b1 = offs[j]
                blk = H[l - 1, a0:a1, b0:b1]
                blocks[(l, i, j)] = blk
                if not (l == i == j):
                    cross = max(cross, float(np.max(np.abs(blk))) if blk.size else 0.0)
    for i in (1, 2, 3):
        w = np.linalg.eigvalsh(blocks[(i, i, i)])
        eig[i] = w
        scale = max(np.max(np.abs(w)), 1e-300)
        indef[i] = bool(np.min(w) < -1e-9 * scale and np.max(w) > 1e-9 * scale)
    return Signature(blocks, cross, eig, indef, {i: len(bases[i]) for i in (1, 2, 3)})


def linear_part_norm(split: Splitting, samples: int = 4, seed: int = 0) -> float:
    """max |DB(0) u| over random unit u in U' (the zero mode of the linearization)."""
    out = 0.0
    for s in range(samples):
        u = random_u(split, 1.0, seed + s)
        out = max(out, float(np.max(np.abs(quadratic_part(u, split.p)[0]))))
    return out


# -- points on the zero set -----------------------------------------------------------


@dataclass
class ZeroSetSample:
    u: np.ndarray
    v: np.ndarray
    B: np.ndarray
    newton_steps: int


def _null_direction(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """A null vector of an indefinite form and a partner w with H(n, w) != 0."""
    w, V = np.linalg.eigh(H)
    a, b = V[:, np.argmax(w)], V[:, np.argmin(w)]
    lam_p, lam_m = w.max(), w.min()
    n = np.sqrt(-lam_m) * a + np.sqrt(lam_p) * b
    n = n / np.linalg.norm(n)
    part = np.sqrt(-lam_m) * a - np.sqrt(lam_p) * b
    return n, part / np.linalg.norm(part)


def sample_zero_set(split: Splitting, eps: float, tol: float = 1e-12, max_newton: int = 30,
                    signature: Signature | None = None) -> ZeroSetSample:
    """u on B(u) = 0: null directions of beta^i on each U_i, corrected by Newton along partners."""
    sig = quadric_signature(split) if signature is None else signature
    dirs, partners = [], []
    for i in (1, 2, 3):
        basis = [embed(b, split.K) for b in mode_basis(Splitting.build(split.p, 1), i)]
        n, w = _null_direction(sig.blocks[(i, i, i)])
        dirs.append(sum(c * b for c, b in zip(n, basis)))
        partners.append(sum(c * b for c, b in zip(w, basis)))
    base = eps * sum(dirs)
    t = np.zeros(3)

    def u_of(t):
        return base + sum(ti * eps * w for ti, w in zip(t, partners))

    B = quadric_map(u_of(t), split, tol)
    steps = 0
    for steps in range(1, max_newton + 1):
        if np.max(np.abs(B)) < tol:
            break
        J = np.zeros((3, 3))
        h = 1e-4
        for c in range(3):
            dt = np.zeros(3)
            dt[c] = h
            J[:, c] = (quadric_map(u_of(t + dt), split, tol) - quadric_map(u_of(t - dt), split, tol)) / (2 * h)
        t = t - np.linalg.solve(J, B)
        B = quadric_map(u_of(t), split, tol)
    else:
        raise ConstraintError(f"Newton on the quadric did not converge (|B| = {np.max(np.abs(B)):.3g})")
    u = u_of(t)
    return ZeroSetSample(u, solve_graph(u, split, tol).v, B, steps)


def full_residual(split: Splitting, u: np.ndarray, v: np.ndarray) -> float:
    """max over all modes |k|_inf <= K of |C'(x_0 + u + v)|."""
    return float(np.max(np.abs(constraint_amps(background(split.p, split.K) + u + v, split.K))))


def contraction_radius(split: Splitting, eps_grid=(1e-3, 1e-2, 3e-2, 1e-1, 3e-1), seed: int = 0,
                       tol: float = 1e-12, max_iter: int = 200) -> dict:
    """Empirical smallness: eps -> (converged, iterations, contraction estimate)."""
    out = {}
    for eps in eps_grid:
        u = random_u(split, eps, seed)
        try:
            sol = solve_graph(u, split, tol, max_iter, smallness=None)
            out[eps] = (True, sol.iterations, sol.contraction)
        except (ConstraintError, FloatingPointError):
            out[eps] = (False, max_iter, float("nan"))
    return out


__all__ = [
    "SMALLNESS", "ConstraintError", "GraphSolution", "Jet", "Signature", "Splitting", "SymbolRank", "ZeroSetSample",
    "amps_to_fields", "background", "embed", "constraint_amps", "constraint_grid", "constraint_map",
    "contraction_radius", "fields_to_amps", "frame_index", "full_residual", "graph_residual", "hessian",
    "linear_part_norm", "mode_basis", "p00_of", "pointwise_constraints", "quadratic_part", "quadric_map",
    "quadric_signature", "random_u", "sample_zero_set", "solve_graph", "symbol_matrix", "symbol_rank",
]
