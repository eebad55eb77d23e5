"""Sectional right-hand side of the truncated equation on a :class:`SizeGrid`.

Coagulation products are redistributed onto the two bracketing pivots with
number- and mass-preserving weights; pairs whose merged size exceeds the
last pivot are dropped from the birth term (their mass is reported as
``overflow_mass_flux``) but still counted in the death term.

All reductions run in a fixed chunk order, so the output is bit-identical
for any ``workers`` count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .grid import SizeGrid, pair_targets
from .model import ProblemSpec, validate_assumptions

__all__ = ["State", "RhsBreakdown", "Tables", "TableSizeError", "NonFiniteStateError",
           "precompute_tables", "rhs", "mass_balance_residual", "pair_rates",
           "weak_coagulation_term"]

CHUNK = 1 << 15
DEFAULT_MEMORY_CAP = 2 * 1024**3


class TableSizeError(MemoryError):
    """Coefficient tables would exceed the configured memory cap."""

    def __init__(self, required: int, cap: int):
        super().__init__(f"coefficient tables need ~{required / 2**20:.1f} MiB, "
                         f"cap is {cap / 2**20:.1f} MiB")
        self.required = required
        self.cap = cap


class NonFiniteStateError(FloatingPointError):
    def __init__(self, cell: int, value: float):
        super().__init__(f"non-finite concentration {value!r} in cell {cell}")
        self.cell = cell


@dataclass
class State:
    """Cell concentrations (number density per unit size) at time ``t``."""

    t: float
    zeta: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=float)


@dataclass
class RhsBreakdown:
    birth: np.ndarray
    death: np.ndarray
    source: np.ndarray
    removal: np.ndarray
    overflow_mass_flux: float
    overflow_number_flux: float

    @property
    def total(self) -> np.ndarray:
        return self.birth - self.death + self.source - self.removal


@dataclass(eq=False)
class Tables:
    """Precomputed coefficients for :func:`rhs`.

    Pair arrays run over unordered pairs ``i <= j``; ``coef`` already holds
    ``K(pi_i, pi_j) * w_i * w_j`` and the 1/2 for diagonal pairs.
    """

    spec: ProblemSpec
    grid: SizeGrid
    kernel: np.ndarray
    pi: np.ndarray
    pj: np.ndarray
    coef: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    w_lo: np.ndarray
    w_hi: np.ndarray
    overflow: np.ndarray
    pair_mass: np.ndarray
    source_cells: np.ndarray
    removal_rates: np.ndarray
    workers: int = 1
    defect: str | None = None

    def __post_init__(self):
        keep = np.flatnonzero(~self.overflow)
        self._over = np.flatnonzero(self.overflow)
        # birth scatter list: each kept pair contributes to lo and hi
        self._scatter_pair = np.concatenate([keep, keep])
        self._scatter_cell = np.concatenate([self.lo[keep], self.hi[keep]])
        self._scatter_w = np.concatenate([self.w_lo[keep], self.w_hi[keep]])
        self.source_rate = self.source_cells / self.grid.widths

    @property
    def cells(self) -> int:
        return self.grid.cells

    @property
    def coagulation(self) -> bool:
        """False when the kernel vanishes and the pair tables are empty."""
        return self.kernel.size > 0

    def _chunks(self, n):
        return [(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]


def _estimate_bytes(cells: int) -> int:
    npairs = cells * (cells + 1) // 2
    return 8 * cells * cells + npairs * (8 * 11) + 2 * npairs * 24


def precompute_tables(spec: ProblemSpec, grid: SizeGrid, *, check: bool = True,
                      memory_cap: int = DEFAULT_MEMORY_CAP, workers: int = 1,
                      defect: str | None = None) -> Tables:
    """Assemble kernel, pair-target, source and removal tables.

    Parameters
    ----------
    check:
        Refuse problems that fail :func:`validate_assumptions`.
    memory_cap:
        Refuse with :class:`TableSizeError` when the tables would be larger.
    defect:
        ``"mass"`` deliberately breaks the mass split of the birth term;
        only used to self-test the verification suite.
    """
    if check:
        report = validate_assumptions(spec)
        if not report.ok:
            names = ", ".join(c.name for c in report.failures())
            raise ValueError(f"problem fails assumption checks: {names}")
    if grid.n > spec.n * (1 + 1e-12):
        raise ValueError("grid extends beyond the truncation size n")
    I = grid.cells
    piv, w = grid.pivots, grid.widths
    if spec.kernel.A == 0:
        # no coagulation: empty pair tables, so fine grids stay cheap
        e_i = np.zeros(0, dtype=np.intp)
        e_f = np.zeros(0)
        if defect not in (None, "mass"):
            raise ValueError(f"unknown defect {defect!r}")
        return Tables(
            spec=spec, grid=grid, kernel=np.zeros((0, 0)), pi=e_i, pj=e_i, coef=e_f,
            lo=e_i, hi=e_i, w_lo=e_f, w_hi=e_f, overflow=np.zeros(0, dtype=bool), pair_mass=e_f,
            source_cells=spec.source.cell_integrals(grid.edges),
            removal_rates=np.asarray(spec.removal(piv), dtype=float) * np.ones(I),
            workers=max(1, int(workers)), defect=defect,
        )
    need = _estimate_bytes(I)
    if need > memory_cap:
        raise TableSizeError(need, memory_cap)

    P, Q = np.meshgrid(piv, piv, indexing="ij")
    K = np.asarray(spec.kernel(P, Q), dtype=float)
    pi, pj = np.triu_indices(I)
    coef = K[pi, pj] * w[pi] * w[pj]
    coef = np.where(pi == pj, 0.5 * coef, coef)
    lo, hi, w_lo, w_hi = pair_targets(grid, pi, pj)
    over = hi < 0
    if defect == "mass":
        w_hi = w_hi * (1.0 + 1e-3)
    elif defect is not None:
        raise ValueError(f"unknown defect {defect!r}")
    return Tables(
        spec=spec, grid=grid, kernel=K, pi=pi, pj=pj, coef=coef,
        lo=lo, hi=hi, w_lo=w_lo, w_hi=w_hi, overflow=over,
        pair_mass=piv[pi] + piv[pj],
        source_cells=spec.source.cell_integrals(grid.edges),
        removal_rates=np.asarray(spec.removal(piv), dtype=float) * np.ones(I),
        workers=max(1, int(workers)), defect=defect,
    )


def pair_rates(tables: Tables, zeta) -> np.ndarray:
    """Event rate (number per unit time) of every unordered pair."""
    return tables.coef * zeta[tables.pi] * zeta[tables.pj]


def _birth_numbers(tables: Tables, rates: np.ndarray) -> np.ndarray:
    I = tables.cells
    sp, sc, sw = tables._scatter_pair, tables._scatter_cell, tables._scatter_w
    chunks = tables._chunks(sp.size)

    def part(bounds):
        a, b = bounds
        return np.bincount(sc[a:b], weights=rates[sp[a:b]] * sw[a:b], minlength=I)

    if tables.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(tables.workers) as ex:
            parts = list(ex.map(part, chunks))
    else:
        parts = [part(c) for c in chunks]
    out = np.zeros(I)
    for p in parts:
        out += p
    return out


def rhs(tables: Tables, state) -> RhsBreakdown:
    """Evaluate birth, death, source and removal terms at ``state``.

    ``state`` may be a :class:`State` or a bare concentration array.
    """
    zeta = state.zeta if isinstance(state, State) else np.asarray(state, dtype=float)
    if zeta.shape != (tables.cells,):
        raise ValueError("state does not live on the tables' grid")
    bad = ~np.isfinite(zeta)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteStateError(i, float(zeta[i]))
    w = tables.grid.widths
    rates = pair_rates(tables, zeta)
    birth = _birth_numbers(tables, rates) / w
    if tables.coagulation:
        death = zeta * (tables.kernel * (zeta * w)[None, :]).sum(axis=1)
    else:
        death = np.zeros_like(zeta)
    over = tables._over
    return RhsBreakdown(
        birth=birth,
        death=death,
        source=tables.source_rate.copy(),
        removal=tables.removal_rates * zeta,
        overflow_mass_flux=float(np.sum(rates[over] * tables.pair_mass[over])),
        overflow_number_flux=float(np.sum(rates[over])),
    )


def mass_balance_residual(tables: Tables, state, breakdown: RhsBreakdown) -> float:
    """``|dM1/dt - (-overflow + source mass - removal mass)|`` in mass per time.

    The truncation term enters with a minus sign: mass carried by overflow
    pairs leaves the domain.
    """
    piv, w = tables.grid.pivots, tables.grid.widths
    lhs = float(np.sum(piv * breakdown.total * w))
    rhs_ = (-breakdown.overflow_mass_flux
            + float(np.sum(piv * breakdown.source * w))
            - float(np.sum(piv * breakdown.removal * w)))
    return abs(lhs - rhs_)


def weak_coagulation_term(tables: Tables, zeta, omega) -> float:
    """Discrete ``1/2 sum H_omega K zeta zeta`` for pivot values ``omega``.

    The merged-size value is the fixed-pivot split
    ``w_lo omega(lo) + w_hi omega(hi)``, and zero for overflow pairs.
    """
    omega = np.asarray(omega, dtype=float)
    rates = pair_rates(tables, np.asarray(zeta, dtype=float))
    keep = ~tables.overflow
    merged = np.zeros_like(rates)
    merged[keep] = (tables.w_lo[keep] * omega[tables.lo[keep]]
                    + tables.w_hi[keep] * omega[tables.hi[keep]])
    return float(np.sum(rates * (merged - omega[tables.pi] - omega[tables.pj])))
