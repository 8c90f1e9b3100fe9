"""Exact dimensions of section spaces and the jet-count lower bound."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import ModelSpace


def exact_dimension(space: ModelSpace, degrees) -> int:
    """``d + 1`` on CP1, ``(a + 1)(b + 1)`` on CP1 x CP1."""
    degs = (degrees,) if np.isscalar(degrees) else tuple(degrees)
    if len(degs) != space.n:
        raise ValueError(f"{space} needs {space.n} degree(s), got {degs}")
    if any(int(d) != d or d < 0 for d in degs):
        raise ValueError(f"degrees must be nonnegative integers, got {degs}")
    return int(np.prod([int(d) + 1 for d in degs]))


def jet_lower_bound(A: float, b: float, n: int) -> int:
    """``binom([b A], n) - 1``: the jet-space count from the growth argument."""
    if n < 1:
        raise ValueError("manifold dimension must be at least 1")
    if not b > 0:
        raise ValueError("b must be positive")
    m = math.floor(b * A)
    if m < n:
        warnings.warn(f"[bA] = {m} < n = {n}; the jet bound is vacuous", stacklevel=2)
        return 0
    return math.comb(m, n) - 1


@dataclass
class GrowthRow:
    p: int
    A: float
    dimension: int
    jet_bound: int

    def ratio(self, n: int) -> float:
        return self.dimension / self.A ** n


@dataclass
class GrowthResult:
    rows: list[GrowthRow]
    n: int
    b: float
    C3: float
    ratios: np.ndarray
    cauchy_spread: float  # relative spread of the last three ratios

    @property
    def bound_holds(self) -> bool:
        return all(r.jet_bound <= r.dimension for r in self.rows)


def verify_growth(records, n: int, b: float = 0.5) -> GrowthResult:
    """C3 estimate ``min dim / A^n`` and the convergence of the ratios.

    ``records`` is a sequence of (p, A_p, exact dimension).
    """
    records = list(records)
    if not records:
        raise ValueError("no growth records")
    if len(records) < 3:
        raise ValueError("verify_growth needs at least three entries")
    A = np.array([r[1] for r in records], dtype=float)
    if np.any(np.diff(A) <= 0):
        raise ValueError("A_p must be strictly increasing")
    rows = [GrowthRow(int(p), float(a), int(dim), jet_lower_bound(a, b, n)) for p, a, dim in records]
    ratios = np.array([r.ratio(n) for r in rows])
    last = ratios[-3:]
    spread = float((last.max() - last.min()) / last.min())
    return GrowthResult(rows, n, b, float(ratios.min()), ratios, spread)


def growth_records(seq, p_list, k: int = 0):
    """(p, A_kp, exact dimension of H^0(L_kp)) for a bundle sequence."""
    out = []
    for p in p_list:
        w = seq.weight(k, p)
        out.append((int(p), seq.A(k, p), exact_dimension(seq.space, w.section_degrees)))
    return out
