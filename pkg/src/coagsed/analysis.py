"""Experiments built on the solver: a-priori bounds, mass accounting,
gelation, truncation convergence, continuous dependence and the
stochastic cross-check.

Bound constants are computed from the problem data.  Where the continuous
norms and their discrete (projected) counterparts differ, the larger value
is used, so every bound is valid for both the truncated equation and its
sectional discretisation.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .discretization import Tables, mass_balance_residual, precompute_tables, rhs
from .functionals import ConvexFn, build_sigma_pair, gamma_constants
from .grid import SizeGrid, locate, make_geometric_grid
from .integrator import StepControl, Trajectory, integrate, project_initial
from .model import ClassIIProduct, ProblemSpec, satisfies_sqrt_bound
from .stochastic import EnsembleResult

__all__ = [
    "envelope_constant", "sqrt_constant", "BoundConstants", "bound_constants",
    "BoundCheck", "BoundsReport", "check_bounds", "MassBalanceMonitor",
    "ConservationRow", "conservation_check", "GelationResult", "gelation_monitor",
    "weighted_l1_distance", "GeometricPolicy", "ConvergenceTable", "truncation_convergence",
    "UniquenessResult", "uniqueness_probe", "OracleRow", "compare_with_oracle",
]

#: relative roundoff allowance on every bound comparison
BOUND_RTOL = 1e-12


# --------------------------------------------------------------------------
# constants
# --------------------------------------------------------------------------

def _pivot_sup(tables: Tables | None, weight) -> float:
    if tables is None or not tables.coagulation:
        return 0.0
    w = weight(tables.grid.pivots)
    return float(np.max(tables.kernel / np.outer(w, w)))


def envelope_constant(kernel, tables: Tables | None = None) -> float:
    """Smallest ``A`` with ``K(p, q) <= A (1+p)(1+q)`` (analytic, or sampled on pivots if larger)."""
    a = kernel.A
    if isinstance(kernel, ClassIIProduct):
        a = kernel.A * max(1.0, kernel.eta.eta_star()) ** 2
    return max(a, _pivot_sup(tables, lambda p: 1.0 + p))


def sqrt_constant(kernel, tables: Tables | None = None) -> float:
    """``A`` of the uniqueness class ``K <= A sqrt((1+p)(1+q))``."""
    if not satisfies_sqrt_bound(kernel):
        raise ValueError(f"{type(kernel).__name__} is not bounded by A sqrt((1+p)(1+q))")
    return max(kernel.A, _pivot_sup(tables, lambda p: np.sqrt(1.0 + p)))


@dataclass(frozen=True)
class BoundConstants:
    """A-priori constants on ``[0, T]``.

    ``Xi`` is only defined for the linear kernel class; ``C_lambda`` is the
    Gronwall constant for ``int_0^lambda sigma2(zeta)``.
    """

    T: float
    A: float
    norm_in: float          # ||zeta_in||_(0,1)
    mass_in: float          # int p zeta_in
    number_in: float        # int zeta_in
    norm_S: float           # ||S||_(0,1)
    Lambda_star: float
    Lambda: float
    C5: float
    lam: float
    C_lambda: float
    Xi: float | None
    gammas: tuple
    sigma1: ConvexFn = field(repr=False)
    sigma2: ConvexFn = field(repr=False)


def bound_constants(spec: ProblemSpec, T: float, tables: Tables | None = None, *,
                    lam: float = 2.0, sigmas: tuple | None = None) -> BoundConstants:
    if not lam > 1:
        raise ValueError("lambda must exceed 1")
    ini, src = spec.initial, spec.source
    norm_in, mass_in, number_in = ini.l1_01_norm(), ini.mass(), ini.number()
    norm_S = src.l1_01_norm()
    sigma1, sigma2 = build_sigma_pair(spec) if sigmas is None else sigmas
    G = gamma_constants(sigma1, sigma2, ini, src)
    g1, g2, g3, g4 = G.gamma1, G.gamma2, G.gamma3, G.gamma4
    if tables is not None:
        g = tables.grid
        piv, w = g.pivots, g.widths
        z0 = project_initial(spec, g).zeta
        number_in = max(number_in, float(z0 @ w))
        mass_in = max(mass_in, float(z0 @ (piv * w)))
        norm_in = max(norm_in, float(z0 @ ((1 + piv) * w)))
        norm_S = max(norm_S, float(tables.source_cells @ (1 + piv)))
        g1 = max(g1, float(np.sum(sigma1(piv) * z0 * w)))
        g3 = max(g3, float(np.sum(sigma1(piv) * tables.source_cells)))
    A = envelope_constant(spec.kernel, tables)
    Ls = norm_in + norm_S * T
    L = Ls + mass_in + norm_S
    C5 = 1.5 * A * L**2 + 2.0 * norm_S
    C2 = A * (1 + lam) ** 2 * L + 1.0
    C_lam = (g2 + g4 * T) * math.exp(C2 * T)
    Xi = None
    if spec.kernel.family == "class1":
        if A > 0:
            Xi = (g1 + g3 * T + g3 / (6 * A * L) + 6 * A * float(sigma1(1.0)) * L**2) * math.exp(6 * A * L * T)
        else:
            Xi = g1 + g3 * T
    return BoundConstants(T, A, norm_in, mass_in, number_in, norm_S, Ls, L, C5, lam, C_lam, Xi,
                          (g1, g2, g3, g4), sigma1, sigma2)


# --------------------------------------------------------------------------
# bound checks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundCheck:
    name: str
    passed: bool
    worst_ratio: float      # max observed / bound (<= 1 passes)
    witness_t: float | None
    detail: str = ""


@dataclass
class BoundsReport:
    constants: BoundConstants
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> BoundCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _ratio_check(name, values, bounds, times, detail=""):
    values = np.asarray(values, dtype=float)
    bounds = np.broadcast_to(np.asarray(bounds, dtype=float), values.shape)
    ok = values <= bounds * (1 + BOUND_RTOL) + 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(bounds > 0, values / bounds, np.where(values > 0, np.inf, 0.0))
    k = int(np.argmax(r)) if r.size else 0
    bad = np.flatnonzero(~ok)
    wt = float(times[bad[0]]) if bad.size else (float(times[k]) if r.size else None)
    return BoundCheck(name, bool(ok.all()), float(r.max()) if r.size else 0.0, wt, detail)


def check_bounds(traj: Trajectory, tables: Tables, *, lam: float = 2.0,
                 constants: BoundConstants | None = None) -> BoundsReport:
    """Check the a-priori estimates at every snapshot of ``traj``.

    ``T`` is the final time of the trajectory.
    """
    spec = traj.spec
    T = float(traj.times[-1])
    bc = constants or bound_constants(spec, T, tables, lam=lam)
    g = traj.grid
    piv, w = g.pivots, g.widths
    Z = traj.zetas
    t = traj.times
    checks = []

    norm = Z @ ((1 + piv) * w)
    checks.append(_ratio_check("uniform_bound", norm, bc.Lambda, t, "sum (1+p) zeta <= Lambda(T)"))
    checks.append(_ratio_check("removal_integral", traj.cumulative["removal_number"],
                               bc.norm_in + bc.norm_S * t, t,
                               "int_0^t sum R zeta <= ||zeta_in|| + ||S|| t"))
    m0 = Z @ w
    checks.append(_ratio_check("number_bound", m0, m0[0] + bc.norm_S * t, t,
                               "M0(t) <= M0(0) + ||S|| t"))

    # positivity: relative to the sup norm of the accepted state, and clamping
    pos_ok = traj.min_relative >= -1e-12
    m1max = max(float(np.max(Z @ (piv * w))), 1e-300)
    clamp_ok = traj.clamped_mass <= 1e-9 * m1max
    checks.append(BoundCheck("positivity", pos_ok and clamp_ok,
                             max(0.0, -traj.min_relative / 1e-12, traj.clamped_mass / (1e-9 * m1max)), None,
                             f"min relative value {traj.min_relative:.3g}, clamped mass {traj.clamped_mass:.3g}"))

    # equicontinuity on (0, lambda], consecutive snapshots
    inside = piv <= lam
    if len(t) > 1:
        dz = np.abs(np.diff(Z[:, inside], axis=0)) @ w[inside]
        checks.append(_ratio_check("time_equicontinuity", dz, bc.C5 * np.diff(t), t[1:],
                                   "int_0^lambda |zeta(t)-zeta(s)| <= C5 (t-s)"))

    s2 = np.array([float(np.sum(bc.sigma2(z[inside]) * w[inside])) for z in Z])
    checks.append(_ratio_check("equi_integrability", s2, bc.C_lambda, t,
                               "int_0^lambda sigma2(zeta) <= C(T, lambda)"))
    if bc.Xi is not None:
        s1 = Z @ (bc.sigma1(piv) * w)
        checks.append(_ratio_check("convex_moment", s1, bc.Xi, t, "int sigma1 zeta <= Xi(T)"))
    return BoundsReport(bc, checks)


# --------------------------------------------------------------------------
# mass accounting
# --------------------------------------------------------------------------

class MassBalanceMonitor:
    """Integrator observer recording the instantaneous mass-balance residual.

    ``ratios[k]`` is the residual divided by the current mass ``M1``.
    """

    def __init__(self, tables: Tables):
        self.tables = tables
        self.times: list = []
        self.residuals: list = []
        self.masses: list = []

    def __call__(self, t, zeta, breakdown):
        g = self.tables.grid
        self.times.append(float(t))
        self.residuals.append(mass_balance_residual(self.tables, zeta, breakdown))
        self.masses.append(float(zeta @ (g.pivots * g.widths)))

    @property
    def ratios(self) -> np.ndarray:
        r = np.asarray(self.residuals)
        m = np.asarray(self.masses)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(m > 0, r / np.where(m > 0, m, 1.0), np.where(r > 0, np.inf, 0.0))

    @property
    def worst(self) -> float:
        return float(self.ratios.max()) if self.residuals else 0.0

    def violations(self, rel: float = 1e-10) -> int:
        return int(np.sum(self.ratios > rel))


@dataclass(frozen=True)
class ConservationRow:
    t0: float
    t1: float
    dM1_dt: float           # finite difference of M1
    flux: float             # time-averaged source - removal - overflow mass flux
    defect: float
    source_rate: float      # instantaneous int p S at t0
    removal_rate: float     # instantaneous int p R zeta at t0
    balanced: bool
    locally_constant: bool


def conservation_check(traj: Trajectory, tables: Tables, *, balance_tol: float = 1e-8,
                       constant_tol: float = 1e-8) -> list:
    """Mass budget per snapshot interval.

    The time-averaged fluxes come from the integrator's running flux
    integrals.  An interval is ``balanced`` when the source and removal mass
    rates agree at both ends (and nothing overflows); there ``M1`` must be
    locally constant.
    """
    g = traj.grid
    pw = g.pivots * g.widths
    m1 = traj.m1()
    c = traj.cumulative
    net = c["source_mass"] - c["removal_mass"] - c["overflow_mass"]
    inst = []
    for z in traj.zetas:
        b = rhs(tables, z)
        inst.append((float(b.source @ pw), float(b.removal @ pw), b.overflow_mass_flux))
    rows = []
    for k in range(len(traj.times) - 1):
        t0, t1 = float(traj.times[k]), float(traj.times[k + 1])
        h = t1 - t0
        d = (m1[k + 1] - m1[k]) / h
        f = (net[k + 1] - net[k]) / h
        bal = True
        for j in (k, k + 1):
            s, r, o = inst[j]
            bal &= abs(s - r) <= balance_tol * max(s, r, 1e-300) and o <= balance_tol * max(s, r, 1e-300)
        const = abs(m1[k + 1] - m1[k]) <= constant_tol * max(abs(m1[k]), 1e-300)
        rows.append(ConservationRow(t0, t1, d, f, d - f, inst[k][0], inst[k][1], bool(bal),
                                    bool(const)))
    return rows


@dataclass(frozen=True)
class GelationResult:
    time: float | None      # None: accounted fluxes explain M1
    unexplained: np.ndarray

    @property
    def gelled(self) -> bool:
        return self.time is not None


def gelation_monitor(traj: Trajectory, threshold: float = 1e-6) -> GelationResult:
    """First snapshot where ``M1`` has fallen below its flux-accounted value
    by more than ``threshold`` times the mass scale."""
    m1 = traj.m1()
    c = traj.cumulative
    expected = m1[0] + c["source_mass"] - c["removal_mass"] - c["overflow_mass"]
    gap = m1 - expected
    scale = max(float(m1[0]), float(c["source_mass"][-1]), float(np.max(m1)), 1e-300)
    bad = np.flatnonzero(gap < -threshold * scale)
    return GelationResult(float(traj.times[bad[0]]) if bad.size else None, gap)


# --------------------------------------------------------------------------
# truncation convergence
# --------------------------------------------------------------------------

def weighted_l1_distance(grid_a: SizeGrid, za, grid_b: SizeGrid, zb, lo: float | None = None,
                         hi: float | None = None) -> float:
    """``int_lo^hi (1+p) |f_a - f_b| dp`` for two piecewise-constant profiles.

    Exact on the merged partition; defaults to the common domain.
    """
    lo = max(grid_a.p_min, grid_b.p_min) if lo is None else lo
    hi = min(grid_a.n, grid_b.n) if hi is None else hi
    if not hi > lo:
        return 0.0
    e = np.unique(np.concatenate([grid_a.edges, grid_b.edges, [lo, hi]]))
    e = e[(e >= lo) & (e <= hi)]
    a, b = e[:-1], e[1:]
    mid = 0.5 * (a + b)
    fa = np.asarray(za)[locate(grid_a, mid)]
    fb = np.asarray(zb)[locate(grid_b, mid)]
    return float(np.sum(np.abs(fa - fb) * ((b - a) + 0.5 * (b * b - a * a))))


@dataclass(frozen=True)
class GeometricPolicy:
    """Geometric grid on ``(p_min, n]`` with a fixed number of cells per doubling.

    When ``n / p_min`` are powers of two the grids for different ``n`` nest.
    """

    p_min: float = 25.0 * 2.0**-18
    per_doubling: int = 8

    def __call__(self, spec: ProblemSpec) -> SizeGrid:
        cells = max(2, int(round(self.per_doubling * math.log2(spec.n / self.p_min))))
        return make_geometric_grid(self.p_min, spec.n, cells)


@dataclass
class ConvergenceTable:
    ns: list
    times: np.ndarray
    distances: dict          # (n_a, n_b) -> array over times

    def decreasing(self, k: int = -1) -> bool:
        """Distances between consecutive ``n`` decrease at time index ``k``."""
        d = [self.distances[(a, b)][k] for a, b in zip(self.ns, self.ns[1:])]
        return all(y < x for x, y in zip(d, d[1:]))


def truncation_convergence(specs: Sequence[ProblemSpec], t_end: float, *,
                           policy: Callable[[ProblemSpec], SizeGrid] | None = None,
                           control: StepControl | None = None, times=None,
                           check: bool = True) -> ConvergenceTable:
    """Pairwise weighted-L1 distances between truncations with increasing ``n``."""
    specs = sorted(specs, key=lambda s: s.n)
    if len(specs) < 3:
        raise ValueError("need at least three truncation sizes")
    policy = policy or GeometricPolicy()
    control = control or StepControl()
    times = np.asarray([t_end] if times is None else times, dtype=float)
    runs = []
    for s in specs:
        g = policy(s)
        tr = integrate(s, g, control, t_end, snapshot_times=times, check=check)
        runs.append((g, tr))
    ns = [s.n for s in specs]
    dist = {}
    for ia in range(len(specs)):
        for ib in range(ia + 1, len(specs)):
            ga, ta = runs[ia]
            gb, tb = runs[ib]
            dist[(ns[ia], ns[ib])] = np.array([
                weighted_l1_distance(ga, ta.zetas[ta.index_of(t)], gb, tb.zetas[tb.index_of(t)])
                for t in times])
    return ConvergenceTable(ns, times, dist)


# --------------------------------------------------------------------------
# continuous dependence
# --------------------------------------------------------------------------

@dataclass
class UniquenessResult:
    times: np.ndarray
    d: np.ndarray
    scale: float             # weighted norm of the unperturbed initial state
    A: float
    Lambda: float
    rate: float              # 36 A Lambda(T)
    margin: float = 10.0

    @property
    def envelope(self) -> np.ndarray:
        return self.d[0] * np.exp(self.rate * self.times)

    @property
    def within_envelope(self) -> bool:
        return bool(np.all(self.d <= self.envelope * (1 + 1e-9) + 1e-300))

    @property
    def within_margin(self) -> bool:
        """``d(t) <= d(0) exp(rate t / margin)``: the log-growth is ``margin`` times below the envelope."""
        b = self.d[0] * np.exp(self.rate * self.times / self.margin)
        return bool(np.all(self.d <= b * (1 + 1e-9) + 1e-300))

    @property
    def normalized_nonincreasing(self) -> bool:
        r = self.d * np.exp(-self.rate * self.times)
        return bool(np.all(np.diff(r) <= 1e-9 * max(float(r[0]), 1e-300)))

    @property
    def ok(self) -> bool:
        return self.within_envelope and self.within_margin and self.normalized_nonincreasing


def uniqueness_probe(spec: ProblemSpec, grid: SizeGrid, delta: float, t_end: float, *,
                     control: StepControl | None = None, profile: Callable | None = None,
                     snapshot_times=None, margin: float = 10.0, check: bool = True) -> UniquenessResult:
    """Distance ``int max(1, sqrt p) |zeta - eta|`` between two runs.

    ``eta`` starts from ``zeta_in (1 + delta profile(p))`` (``profile = 1`` by
    default).  Both runs share the coefficient tables and execute
    concurrently; the reduction order is fixed, so ``delta = 0`` yields
    identical paths.
    """
    if not delta >= 0:
        raise ValueError("delta must be >= 0")
    A_u = sqrt_constant(spec.kernel)
    control = control or StepControl()
    tables = precompute_tables(spec, grid, check=check)
    A_u = max(A_u, sqrt_constant(spec.kernel, tables))
    z0 = project_initial(spec, grid).zeta
    prof = np.ones(grid.cells) if profile is None else np.asarray(profile(grid.pivots), dtype=float)
    z1 = z0 * (1.0 + delta * prof)
    if snapshot_times is None:
        snapshot_times = np.linspace(0.0, t_end, 21)

    def run(z):
        return integrate(spec, grid, control, t_end, snapshot_times=snapshot_times,
                         tables=tables, initial_state=z)

    with ThreadPoolExecutor(2) as ex:
        ta, tb = ex.map(run, [z0, z1])
    wgt = np.maximum(1.0, np.sqrt(grid.pivots)) * grid.widths
    d = np.abs(ta.zetas - tb.zetas) @ wgt
    # Lambda(T) from the data of both runs
    bc = bound_constants(spec, t_end, tables)
    piv_w = (1 + grid.pivots) * grid.widths
    extra = max(0.0, float(z1 @ piv_w) - float(z0 @ piv_w)) + max(
        0.0, float(z1 @ (grid.pivots * grid.widths)) - float(z0 @ (grid.pivots * grid.widths)))
    Lam = bc.Lambda + extra
    return UniquenessResult(ta.times, d, float(z0 @ wgt), A_u, Lam, 36.0 * A_u * Lam, margin)


# --------------------------------------------------------------------------
# stochastic cross-check
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleRow:
    t: float
    det_M0: float
    mean_M0: float
    se_M0: float
    z_M0: float              # nan when undefined (zero standard error)
    det_M1: float
    mean_M1: float
    se_M1: float
    z_M1: float


def _z(det, mean, se):
    if se > 0:
        return (det - mean) / se
    return 0.0 if det == mean else math.nan


def compare_with_oracle(traj: Trajectory, ensemble: EnsembleResult) -> list:
    """z-scores of the deterministic moments against ensemble means.

    Raises ``KeyError`` if an ensemble time is not a snapshot of ``traj``.
    """
    m0, m1 = traj.m0(), traj.m1()
    rows = []
    for j, t in enumerate(ensemble.times):
        k = traj.index_of(float(t))
        a, b = ensemble.m0_mean[j], ensemble.m0_se[j]
        c, d = ensemble.m1_mean[j], ensemble.m1_se[j]
        z0 = math.nan if b == 0 and m0[k] == 0 and a == 0 else _z(m0[k], a, b)
        z1 = math.nan if d == 0 and m1[k] == 0 and c == 0 else _z(m1[k], c, d)
        rows.append(OracleRow(float(t), float(m0[k]), float(a), float(b), z0,
                              float(m1[k]), float(c), float(d), z1))
    return rows
