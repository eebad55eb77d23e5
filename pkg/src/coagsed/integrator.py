"""Time integration of the sectional system.

``integrate`` is an adaptive Dormand-Prince 5(4) scheme with step rejection
on both the error estimate and negative concentrations.  ``picard_solve``
advances by explicit Picard fixed-point iteration on Chebyshev-Lobatto
collocation windows; it is a small-grid cross-check, not a production path.

Besides the concentrations, both integrators carry running time integrals of
the boundary, source and removal fluxes (``Trajectory.cumulative``) using the
same quadrature as the state, so flux bookkeeping is consistent with it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial import Chebyshev

from .discretization import RhsBreakdown, State, Tables, precompute_tables, rhs
from .grid import SizeGrid
from .model import ProblemSpec, TabulatedInitial

__all__ = ["StepControl", "StepRecord", "Trajectory", "IntegrationError",
           "PicardDivergenceError", "project_initial", "integrate", "picard_solve",
           "FLUX_NAMES"]

#: running integrals carried alongside the state
FLUX_NAMES = ("overflow_mass", "overflow_number", "source_mass", "source_number",
              "removal_mass", "removal_number")

Observer = Callable[[float, np.ndarray, RhsBreakdown], None]


class IntegrationError(RuntimeError):
    """Integration aborted; ``trajectory`` holds everything up to the last valid state."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class PicardDivergenceError(RuntimeError):
    """Successive Picard iterates moved apart (step too large for contraction)."""


@dataclass(frozen=True)
class StepControl:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-14
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    dt_max: float = math.inf
    #: admissible negativity, relative to the sup norm of the state
    positivity_rel: float = 1e-12

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if not self.positivity_rel >= 0:
            raise ValueError("positivity_rel must be >= 0")

    def halved(self) -> "StepControl":
        return StepControl(self.rel_tol / 2, self.abs_tol / 2, self.dt_init, self.dt_min,
                           self.dt_max, self.positivity_rel)


@dataclass
class StepRecord:
    t: float
    dt: float
    error: float
    rejections: int
    positivity_rejections: int
    mass_error: float


@dataclass
class Trajectory:
    grid: SizeGrid
    spec: ProblemSpec | None
    times: np.ndarray
    zetas: np.ndarray
    cumulative: dict
    steps: list = field(default_factory=list)
    clamped_mass: float = 0.0
    min_value: float = 0.0
    #: smallest accepted ``min(zeta) / max|zeta|`` before clamping
    min_relative: float = 0.0
    error_estimate_m1: float = 0.0
    excluded: dict = field(default_factory=dict)
    picard_iterations: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def state(self, k: int) -> State:
        return State(float(self.times[k]), self.zetas[k])

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[k], t, rel_tol=1e-12, abs_tol=1e-12):
            raise KeyError(f"no snapshot at t={t}")
        return k

    def m0(self) -> np.ndarray:
        return self.zetas @ self.grid.widths

    def m1(self) -> np.ndarray:
        return self.zetas @ (self.grid.pivots * self.grid.widths)

    @property
    def overflow_cum(self) -> np.ndarray:
        return self.cumulative["overflow_mass"]


def project_initial(spec: ProblemSpec, grid: SizeGrid) -> State:
    """Cell averages of the initial data; excluded mass goes in ``diagnostics``."""
    ini = spec.initial
    if isinstance(ini, TabulatedInitial) and len(ini.edges) == grid.edges.size \
            and np.all(np.asarray(ini.edges) == grid.edges):
        zeta = np.array(ini.values, dtype=float)
    else:
        zeta = np.asarray(ini.cell_integrals(grid.edges), dtype=float) / grid.widths
    zeta = np.maximum(zeta, 0.0)
    return State(0.0, zeta, {
        "number_below_pmin": ini.number_between(0.0, grid.p_min),
        "mass_below_pmin": ini.mass_between(0.0, grid.p_min),
        "number_above_n": ini.number() - ini.number_between(0.0, grid.n),
        "mass_above_n": ini.mass() - ini.mass_between(0.0, grid.n),
    })


def _flux_rates(tables: Tables, zeta, b: RhsBreakdown) -> np.ndarray:
    piv, w = tables.grid.pivots, tables.grid.widths
    return np.array([
        b.overflow_mass_flux,
        b.overflow_number_flux,
        float(np.sum(piv * b.source * w)),
        float(np.sum(b.source * w)),
        float(np.sum(piv * b.removal * w)),
        float(np.sum(b.removal * w)),
    ])


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _snapshot_grid(snapshot_times, t_end):
    if snapshot_times is None:
        return None
    s = np.unique(np.concatenate([[0.0], np.asarray(snapshot_times, dtype=float), [t_end]]))
    if s[0] < 0 or s[-1] > t_end:
        raise ValueError("snapshot times must lie in [0, t_end]")
    # merge times that differ only by rounding (keeping 0 and t_end exact)
    tol = 1e-12 * max(1.0, t_end)
    keep = [s[0]]
    for x in s[1:]:
        if x - keep[-1] > tol:
            keep.append(x)
    keep[-1] = t_end
    return np.array(keep)


def integrate(spec: ProblemSpec, grid: SizeGrid, control: StepControl, t_end: float,
              observers: Iterable[Observer] = (), *, snapshot_times: Sequence[float] | None = None,
              tables: Tables | None = None, workers: int = 1, check: bool = True,
              initial_state=None) -> Trajectory:
    """Integrate the sectional system from the projected initial data to ``t_end``.

    ``initial_state`` replaces the projected initial data when given (cell
    values on ``grid``).

    Snapshots are stored at ``snapshot_times`` (steps are shortened to land on
    them exactly) or, if omitted, after every accepted step.  Observers are
    called as ``observer(t, zeta, breakdown)`` at ``t = 0`` and after every
    accepted step.

    Raises
    ------
    IntegrationError
        If the step size falls below ``dt_min`` or the state turns non-finite;
        the partial trajectory is attached to the exception.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if tables is None:
        tables = precompute_tables(spec, grid, check=check, workers=workers)
    observers = list(observers)
    snaps = _snapshot_grid(snapshot_times, t_end)
    I = grid.cells
    piv_w = grid.pivots * grid.widths

    init = project_initial(spec, grid)
    if initial_state is not None:
        z0 = np.array(initial_state, dtype=float)
        if z0.shape != (I,) or np.any(~np.isfinite(z0)) or np.any(z0 < 0):
            raise ValueError("initial_state must be finite, nonnegative and match the grid")
        init = State(0.0, z0, init.diagnostics)
    y = init.zeta.copy()
    q = np.zeros(len(FLUX_NAMES))
    t = 0.0

    times, zetas, cums = [0.0], [y.copy()], [q.copy()]
    traj = Trajectory(grid, spec, np.array(times), np.array(zetas), {}, excluded=init.diagnostics)

    def finish():
        traj.times = np.array(times)
        traj.zetas = np.array(zetas)
        c = np.array(cums)
        traj.cumulative = {name: c[:, k] for k, name in enumerate(FLUX_NAMES)}
        return traj

    def f(z):
        b = rhs(tables, z)
        return b.total, _flux_rates(tables, z, b), b

    k1, g1, b1 = f(y)
    for ob in observers:
        ob(t, y, b1)

    dt = min(control.dt_init, control.dt_max, t_end)
    next_snap = 1
    rejections = pos_rejections = 0
    while t < t_end:
        target = t_end if snaps is None else snaps[next_snap]
        h = min(dt, target - t)
        land = h >= target - t - 1e-14 * max(1.0, abs(target))
        if land:
            h = target - t
        ks, gs = [k1], [g1]
        try:
            for s in range(1, 6):
                a = _A[s]
                ys = y + h * sum(a[j] * ks[j] for j in range(s) if a[j] != 0.0)
                ks_, gs_, _ = f(ys)
                ks.append(ks_)
                gs.append(gs_)
            y_new = y + h * sum(_B5[j] * ks[j] for j in range(6) if _B5[j] != 0.0)
            k7, g7, b7 = f(y_new)
        except FloatingPointError as exc:
            raise IntegrationError(f"non-finite state at t={t:.6g}: {exc}", finish()) from exc
        ks.append(k7)
        gs.append(g7)
        err_vec = h * sum(_E[j] * ks[j] for j in range(7) if _E[j] != 0.0)
        scale = control.abs_tol + control.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not math.isfinite(err):
            raise IntegrationError(f"non-finite error estimate at t={t:.6g}", finish())

        floor = -control.positivity_rel * float(np.max(np.abs(y_new)))
        ymin = float(y_new.min())
        if err > 1.0 or ymin < floor:
            if ymin < floor and err <= 1.0:
                pos_rejections += 1
                dt = 0.5 * h
            else:
                rejections += 1
                dt = h * max(0.2, 0.9 * err ** -0.2)
            if dt < control.dt_min:
                raise IntegrationError(
                    f"step size {dt:.3g} below dt_min at t={t:.6g} "
                    f"({'positivity' if ymin < floor else 'error control'})", finish())
            continue

        # accepted
        q = q + h * sum(_B5[j] * gs[j] for j in range(6) if _B5[j] != 0.0)
        traj.min_value = min(traj.min_value, ymin)
        if ymin < 0:
            traj.min_relative = min(traj.min_relative, ymin / float(np.max(np.abs(y_new))))
        neg = y_new < 0
        if neg.any():
            traj.clamped_mass += float(np.sum(-y_new[neg] * piv_w[neg]))
            y_new = np.where(neg, 0.0, y_new)
            k7, g7, b7 = f(y_new)
        t = target if land else t + h
        y = y_new
        k1, g1 = k7, g7
        mass_err = abs(float(err_vec @ piv_w))
        traj.error_estimate_m1 += mass_err
        traj.steps.append(StepRecord(t, h, err, rejections, pos_rejections, mass_err))
        rejections = pos_rejections = 0
        for ob in observers:
            ob(t, y, b7)
        if snaps is None or land:
            times.append(t)
            zetas.append(y.copy())
            cums.append(q.copy())
            if snaps is not None:
                next_snap += 1
        fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        dt = min(control.dt_max, h * fac) if not land else max(dt, min(control.dt_max, h * fac))
    return finish()


# --------------------------------------------------------------------------
# Picard iteration
# --------------------------------------------------------------------------

def _collocation(nodes: int):
    """Chebyshev-Lobatto nodes on [0, 1] and the matrix mapping node values
    of a function to its running integral from 0 at every node."""
    m = nodes - 1
    tau = 0.5 * (1.0 - np.cos(np.pi * np.arange(nodes) / m))
    S = np.empty((nodes, nodes))
    for l in range(nodes):
        e = np.zeros(nodes)
        e[l] = 1.0
        basis = Chebyshev.fit(tau, e, m, domain=[0.0, 1.0])
        S[:, l] = basis.integ(lbnd=0.0)(tau)
    return tau, S


def picard_solve(spec: ProblemSpec, grid: SizeGrid, t_end: float, dt: float, iters: int, *,
                 rel_tol: float = 1e-10, nodes: int = 9, tables: Tables | None = None,
                 check: bool = True) -> Trajectory:
    """Explicit Picard iteration window by window.

    On each window ``[t, t + dt]`` the iterate is represented at ``nodes``
    collocation points and updated by ``Z <- zeta(t) + int rhs(Z)`` until the
    relative L1 change at the window end drops below ``rel_tol``.

    Raises
    ------
    PicardDivergenceError
        If the distance between successive iterates grows, or ``iters``
        iterations do not reach ``rel_tol``.
    """
    if grid.cells > 64:
        raise ValueError("picard_solve is limited to grids of at most 64 cells")
    if not (t_end > 0 and dt > 0 and iters >= 1):
        raise ValueError("need t_end > 0, dt > 0 and iters >= 1")
    if tables is None:
        tables = precompute_tables(spec, grid, check=check)
    w = grid.widths
    tau, S = _collocation(nodes)
    init = project_initial(spec, grid)
    y = init.zeta.copy()
    q = np.zeros(len(FLUX_NAMES))
    t = 0.0
    times, zetas, cums, counts = [0.0], [y.copy()], [q.copy()], []

    def evals(Z):
        F = np.empty_like(Z)
        G = np.empty((Z.shape[0], len(FLUX_NAMES)))
        for k in range(Z.shape[0]):
            b = rhs(tables, Z[k])
            F[k] = b.total
            G[k] = _flux_rates(tables, Z[k], b)
        return F, G

    n_windows = max(1, int(math.ceil(t_end / dt - 1e-12)))
    for win in range(n_windows):
        h = min(dt, t_end - t)
        Z = np.tile(y, (nodes, 1))
        prev = math.inf
        scale = max(float(np.abs(y) @ w), 1e-300)
        for it in range(1, iters + 1):
            F, G = evals(Z)
            Znew = y[None, :] + h * (S @ F)
            dist = float(np.max(np.abs(Znew - Z) @ w)) / scale
            Z = Znew
            if not np.isfinite(dist) or (dist > prev and prev > 10 * rel_tol):
                raise PicardDivergenceError(
                    f"iterates diverge on window starting at t={t:.6g} with dt={h:.3g} "
                    f"(distance {prev:.3g} -> {dist:.3g})")
            prev = dist
            if dist <= rel_tol:
                break
        else:
            raise PicardDivergenceError(
                f"no convergence within {iters} iterations on window starting at t={t:.6g}")
        F, G = evals(Z)
        q = q + h * (S[-1] @ G)
        y = Z[-1].copy()
        t = t_end if win == n_windows - 1 else t + h
        times.append(t)
        zetas.append(y.copy())
        cums.append(q.copy())
        counts.append(it)

    c = np.array(cums)
    return Trajectory(grid, spec, np.array(times), np.array(zetas),
                      {name: c[:, k] for k, name in enumerate(FLUX_NAMES)},
                      min_value=float(np.min(zetas)), excluded=init.diagnostics,
                      picard_iterations=counts)
