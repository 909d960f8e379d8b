"""Small exact linear algebra over the rationals (dense, row-major lists)."""
from __future__ import annotations

from .scalar import Q


def to_q(M) -> list[list]:
    return [[Q(x) for x in row] for row in M]


def rref(M, ncols: int | None = None) -> tuple[list[list], list[int]]:
    """Reduced row echelon form; pivots are searched only in the first ``ncols`` columns."""
    A = [list(r) for r in M]
    if not A:
        return A, []
    n = len(A[0]) if ncols is None else ncols
    piv = []
    r = 0
    for c in range(n):
        p = next((i for i in range(r, len(A)) if A[i][c]), None)
        if p is None:
            continue
        A[r], A[p] = A[p], A[r]
        inv = 1 / A[r][c]
        A[r] = [x * inv for x in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c]:
                f = A[i][c]
                Ai, Ar = A[i], A[r]
                A[i] = [a - f * b for a, b in zip(Ai, Ar)]
        piv.append(c)
        r += 1
        if r == len(A):
            break
    return A, piv


def rank(M) -> int:
    return len(rref(to_q(M))[1])


def inverse(M) -> list[list]:
    n = len(M)
    aug = [list(map(Q, row)) + [Q(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    R, piv = rref(aug, n)
    if len(piv) != n:
        raise ZeroDivisionError("singular matrix")
    return [row[n:] for row in R]


def nullspace(M, ncols: int) -> list[list]:
    """Basis of {v : M v = 0}."""
    if not M:
        return [[Q(int(i == j)) for i in range(ncols)] for j in range(ncols)]
    R, piv = rref(to_q(M))
    free = [c for c in range(ncols) if c not in piv]
    out = []
    for f in free:
        v = [Q(0)] * ncols
        v[f] = Q(1)
        for r, pc in enumerate(piv):
            v[pc] = -R[r][f]
        out.append(v)
    return out


def independent_rows(rows) -> list[int]:
    """Indices of a maximal linearly independent subset, greedily in order."""
    basis: list[tuple[int, list]] = []  # (pivot column, reduced row)
    keep = []
    for idx, row in enumerate(rows):
        v = [Q(x) for x in row]
        for pc, b in basis:
            if v[pc]:
                f = v[pc]
                v = [a - f * c for a, c in zip(v, b)]
        pc = next((i for i, x in enumerate(v) if x), None)
        if pc is None:
            continue
        inv = 1 / v[pc]
        v = [x * inv for x in v]
        basis.append((pc, v))
        keep.append(idx)
    return keep
