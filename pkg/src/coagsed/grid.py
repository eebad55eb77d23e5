"""Geometric size grids and fixed-pivot pair targets.

Cells are indexed from 0.  Cell ``i`` is the half-open interval
``(edges[i], edges[i+1]]`` with pivot at its midpoint.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

__all__ = ["SizeGrid", "PairTarget", "OUT_OF_RANGE", "make_geometric_grid",
           "grid_from_edges", "locate", "pair_target", "pair_targets"]

#: returned by :func:`locate` for sizes outside ``(p_min, n]``
OUT_OF_RANGE = -1


@dataclass(frozen=True, eq=False)
class SizeGrid:
    p_min: float
    n: float
    ratio: float
    edges: np.ndarray

    def __post_init__(self):
        e = np.array(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 3:
            raise ValueError("a grid needs at least two cells")
        if np.any(np.diff(e) <= 0):
            raise ValueError("grid edges must be strictly increasing")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)
        piv = 0.5 * (e[:-1] + e[1:])
        w = np.diff(e)
        piv.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "pivots", piv)
        object.__setattr__(self, "widths", w)

    @property
    def cells(self) -> int:
        return self.edges.size - 1

    def __len__(self):
        return self.cells

    def same_as(self, other: "SizeGrid") -> bool:
        return self.edges.shape == other.edges.shape and bool(np.all(self.edges == other.edges))

    def __repr__(self):
        return f"SizeGrid(p_min={self.p_min:g}, n={self.n:g}, cells={self.cells}, ratio={self.ratio:.6g})"


def make_geometric_grid(p_min: float, n: float, cells: int) -> SizeGrid:
    """Geometric partition of ``(p_min, n]`` into ``cells`` cells.

    >>> make_geometric_grid(1, 4, 2).edges
    array([1., 2., 4.])
    """
    if not p_min > 0:
        raise ValueError("p_min must be positive")
    if not n > p_min:
        raise ValueError("n must exceed p_min")
    if int(cells) != cells or cells < 2:
        raise ValueError("need at least 2 cells")
    cells = int(cells)
    ratio = (n / p_min) ** (1.0 / cells)
    edges = p_min * ratio ** np.arange(cells + 1, dtype=float)
    edges[0] = p_min
    edges[-1] = n
    return SizeGrid(float(p_min), float(n), float(ratio), edges)


def grid_from_edges(edges) -> SizeGrid:
    e = np.asarray(edges, dtype=float)
    ratios = e[1:] / e[:-1]
    return SizeGrid(float(e[0]), float(e[-1]), float(np.exp(np.mean(np.log(ratios)))), e)


def locate(grid: SizeGrid, p):
    """Cell index ``i`` with ``edges[i] < p <= edges[i+1]``, else ``OUT_OF_RANGE``."""
    p_arr = np.asarray(p, dtype=float)
    idx = np.searchsorted(grid.edges, p_arr, side="left") - 1
    bad = (p_arr <= grid.edges[0]) | (p_arr > grid.edges[-1]) | ~np.isfinite(p_arr)
    idx = np.where(bad, OUT_OF_RANGE, idx)
    return int(idx) if idx.ndim == 0 else idx


class PairTarget(NamedTuple):
    lo: int
    hi: int
    w_lo: float
    w_hi: float


def pair_target(grid: SizeGrid, i: int, j: int) -> Optional[PairTarget]:
    """Fixed-pivot split of the merged size ``pivots[i] + pivots[j]``.

    Returns the bracketing pivots ``lo < hi`` and weights with
    ``w_lo + w_hi = 1`` and ``w_lo*pi_lo + w_hi*pi_hi = pi_i + pi_j``, or
    ``None`` when the merged size exceeds the last pivot.
    """
    I = grid.cells
    if not (0 <= i < I and 0 <= j < I):
        raise IndexError("cell index out of range")
    lo, hi, wl, wh = pair_targets(grid, np.array([i]), np.array([j]))
    if hi[0] < 0:
        return None
    return PairTarget(int(lo[0]), int(hi[0]), float(wl[0]), float(wh[0]))


def pair_targets(grid: SizeGrid, i, j):
    """Vectorised :func:`pair_target`; overflow pairs get ``lo = hi = -1``."""
    piv = grid.pivots
    s = piv[i] + piv[j]
    # first pivot >= s; an exact hit lands entirely on that pivot
    hi = np.searchsorted(piv, s, side="left")
    over = hi >= piv.size
    hi = np.where(over, piv.size - 1, hi)
    lo = hi - 1
    # s > pivots[0] always, hence lo >= 0
    w_hi = (s - piv[lo]) / (piv[hi] - piv[lo])
    w_lo = 1.0 - w_hi
    lo = np.where(over, -1, lo)
    hi = np.where(over, -1, hi)
    w_lo = np.where(over, 0.0, w_lo)
    w_hi = np.where(over, 0.0, w_hi)
    return lo, hi, w_lo, w_hi
