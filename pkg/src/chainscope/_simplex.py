"""Two-phase tableau simplex over Fractions with Bland's rule.

Solves ``max c.x  s.t.  A x = b, x >= 0`` exactly. Small problems only.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence


class Infeasible(ValueError):
    pass


class Unbounded(ValueError):
    pass


def _pivot(tab: list[list[Fraction]], basis: list[int], r: int, c: int) -> None:
    row = tab[r]
    pv = row[c]
    if pv != 1:
        tab[r] = row = [v / pv for v in row]
    for i, other in enumerate(tab):
        if i != r:
            fac = other[c]
            if fac:
                tab[i] = [a - fac * b for a, b in zip(other, row)]
    basis[r] = c


def _run(tab, basis, ncols: int, allowed: int) -> None:
    """Iterate on the objective in the last row (reduced costs, minimisation form)."""
    obj = tab[-1]
    while True:
        obj = tab[-1]
        enter = next((j for j in range(allowed) if obj[j] < 0), None)
        if enter is None:
            return
        best, leave = None, None
        for i in range(len(tab) - 1):
            a = tab[i][enter]
            if a > 0:
                ratio = tab[i][ncols] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            raise Unbounded("objective unbounded")
        _pivot(tab, basis, leave, enter)


def solve(c: Sequence, A: Sequence[Sequence], b: Sequence) -> tuple[Fraction, list[Fraction]]:
    """Return (optimal value, x)."""
    m, n = len(A), len(c)
    rows = []
    for i in range(m):
        r = [Fraction(v) for v in A[i]]
        bi = Fraction(b[i])
        if bi < 0:
            r, bi = [-v for v in r], -bi
        rows.append(r + [bi])
    # columns: x (n), artificials (m), rhs
    width = n + m
    tab = []
    for i, r in enumerate(rows):
        tab.append(r[:n] + [Fraction(int(i == k)) for k in range(m)] + [r[n]])
    basis = [n + i for i in range(m)]
    phase1 = [Fraction(0)] * (width + 1)
    for r in tab:
        for j in range(n):
            phase1[j] -= r[j]
        phase1[width] -= r[width]
    tab.append(phase1)
    _run(tab, basis, width, n)
    if tab[-1][width] != 0:
        raise Infeasible("no feasible point")
    # drive remaining artificials out of the basis, dropping redundant rows
    i = 0
    while i < len(basis):
        if basis[i] >= n:
            piv = next((j for j in range(n) if tab[i][j] != 0), None)
            if piv is None:
                del tab[i]
                del basis[i]
                continue
            _pivot(tab, basis, i, piv)
        i += 1
    tab = [r[:n] + [r[width]] for r in tab[:-1]]
    obj = [-Fraction(v) for v in c] + [Fraction(0)]
    for i, bj in enumerate(basis):
        if obj[bj]:
            fac = obj[bj]
            obj = [a - fac * v for a, v in zip(obj, tab[i])]
    tab.append(obj)
    _run(tab, basis, n, n)
    x = [Fraction(0)] * n
    for i, bj in enumerate(basis):
        x[bj] = tab[i][n]
    return sum((Fraction(ci) * xi for ci, xi in zip(c, x)), Fraction(0)), x
