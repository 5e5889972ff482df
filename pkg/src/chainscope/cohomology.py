"""Cohomology classes (pairings against homology displacements) and small exact linear algebra."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class CohomologyClass:
    """A class in H^1(T^d, R) = R^d.

    In exact mode every entry is a Fraction; otherwise entries are floats.
    """

    values: tuple
    exact: bool

    @classmethod
    def of(cls, values: Iterable, exact: bool | None = None) -> "CohomologyClass":
        vals = list(values)
        if exact is None:
            exact = all(isinstance(v, (int, Fraction)) for v in vals)
        if exact:
            return cls(tuple(Fraction(v) for v in vals), True)
        out = tuple(float(v) for v in vals)
        if not all(math.isfinite(v) for v in out):
            raise ValueError("cohomology class entries must be finite")
        return cls(out, False)

    @classmethod
    def parse(cls, text: str, exact: bool = False) -> "CohomologyClass":
        """Comma-separated decimals or fractions.

        Fractions, or entries that are all integers, give an exact class. With
        ``exact=True`` decimals are read as exact decimal rationals.
        """
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise ValueError(f"empty class {text!r}")
        integral = all(p.lstrip("+-").isdigit() for p in parts)
        if exact or integral or any("/" in p for p in parts):
            try:
                return cls(tuple(Fraction(p) for p in parts), True)
            except (ValueError, ZeroDivisionError):
                raise ValueError(f"cannot parse class {text!r}") from None
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ValueError(f"cannot parse class {text!r}") from None
        return cls.of(vals, exact=False)

    @property
    def dimension(self) -> int:
        return len(self.values)

    def as_float(self) -> np.ndarray:
        return np.array([float(v) for v in self.values])

    def integer_form(self) -> tuple[np.ndarray, int]:
        """(a, L) with integer vector a and L > 0 such that alpha = a / L."""
        if not self.exact:
            raise ValueError("integer form needs an exact class")
        scale = 1
        for v in self.values:
            scale = math.lcm(scale, v.denominator)
        return np.array([int(v * scale) for v in self.values], dtype=object), scale

    def pair(self, h) -> Fraction | float:
        """alpha . h for an integer displacement vector h."""
        return sum((v * int(x) for v, x in zip(self.values, h)), Fraction(0) if self.exact else 0.0)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_float()))

    def __add__(self, other: "CohomologyClass") -> "CohomologyClass":
        return CohomologyClass.of([a + b for a, b in zip(self.values, other.values)],
                                  exact=self.exact and other.exact)

    def scaled(self, t) -> "CohomologyClass":
        exact = self.exact and isinstance(t, (int, Fraction))
        return CohomologyClass.of([v * t for v in self.values], exact=exact)

    def to_json(self) -> list:
        return [str(v) if self.exact else v for v in self.values]

    def __str__(self) -> str:
        return ",".join(str(v) for v in self.values)


def as_class(alpha, exact: bool | None = None) -> CohomologyClass:
    if isinstance(alpha, CohomologyClass):
        return alpha
    if isinstance(alpha, str):
        return CohomologyClass.parse(alpha)
    return CohomologyClass.of(alpha, exact=exact)


def rationalize(x: float, max_denominator: int = 10**6) -> Fraction:
    return Fraction(x).limit_denominator(max_denominator)


def rref(rows: Sequence[Sequence[Fraction]]) -> tuple[list[list[Fraction]], list[int]]:
    m = [[Fraction(v) for v in r] for r in rows]
    pivots: list[int] = []
    if not m:
        return m, pivots
    ncols = len(m[0])
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        pv = m[r][c]
        m[r] = [v / pv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                fac = m[i][c]
                m[i] = [a - fac * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


def nullspace(rows: Sequence[Sequence[Fraction]], ncols: int) -> list[list[Fraction]]:
    """Exact basis of {x : row . x = 0 for every row}."""
    if not rows:
        return [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    red, pivots = rref(rows)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * ncols
        vec[fc] = Fraction(1)
        for row, pc in zip(red, pivots):
            vec[pc] = -row[fc]
        basis.append(vec)
    return basis


def rank(rows: Sequence[Sequence[Fraction]]) -> int:
    return len(rref(rows)[1]) if rows else 0
