"""Moments, weak-form residuals and superlinear convex functions.

The convex functions here are the de la Vallee-Poussin type weights used to
control tails (applied to sizes) and concentrations (applied to values):
``sigma(0) = sigma'(0) = 0``, ``sigma'`` nondecreasing, concave and unbounded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .discretization import State, Tables, weak_coagulation_term
from .integrator import Trajectory

__all__ = [
    "Weight", "ONE", "MASS", "ONE_PLUS_MASS", "SQRT_CAP", "indicator", "convex_weight", "parse_weight",
    "ConvexFn", "quadratic_sigma", "build_dlvp", "TailProfile", "size_tail_profile",
    "value_tail_profile", "SlackReport", "check_convexp_identities",
    "MomentReport", "moment", "moment_report", "weak_form_residual",
    "GammaConstants", "gamma_constants", "build_sigma_pair",
]


# --------------------------------------------------------------------------
# weights
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Weight:
    """A test function ``omega`` evaluated at pivots."""

    name: str
    fn: Callable = field(compare=False)
    bounded: bool
    sup: float = math.inf

    def __call__(self, p):
        return np.asarray(self.fn(np.asarray(p, dtype=float)), dtype=float)


ONE = Weight("one", lambda p: np.ones_like(p), True, 1.0)
MASS = Weight("mass", lambda p: p, False)
ONE_PLUS_MASS = Weight("one_plus_mass", lambda p: 1.0 + p, False)
SQRT_CAP = Weight("sqrt_cap", lambda p: np.maximum(1.0, np.sqrt(p)), False)


def indicator(a: float, b: float) -> Weight:
    """Indicator of ``(a, b]``."""
    if not b > a:
        raise ValueError("indicator needs a < b")
    return Weight(f"indicator({a:g},{b:g}]", lambda p: ((p > a) & (p <= b)).astype(float), True, 1.0)


def convex_weight(sigma: "ConvexFn") -> Weight:
    return Weight("convex_sigma", sigma, False)


def parse_weight(text: str) -> Weight:
    """Weight from its configuration name.

    ``one``, ``mass``, ``one_plus_mass``, ``sqrt_cap`` or ``indicator:a:b``
    for the indicator of ``(a, b]``.
    """
    t = text.strip().lower()
    named = {w.name: w for w in (ONE, MASS, ONE_PLUS_MASS, SQRT_CAP)}
    if t in named:
        return named[t]
    if t.startswith("indicator:"):
        parts = t.split(":")
        if len(parts) == 3:
            try:
                return indicator(float(parts[1]), float(parts[2]))
            except ValueError:
                pass
        raise ValueError(f"bad indicator weight {text!r}; use indicator:a:b with a < b")
    raise ValueError(f"unknown weight {text!r} (one, mass, one_plus_mass, sqrt_cap, indicator:a:b)")


# --------------------------------------------------------------------------
# convex functions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConvexFn:
    """Convex ``sigma`` with piecewise-linear, concave derivative.

    ``sigma'`` interpolates ``slopes`` at ``knots`` (``knots[0] = 0``,
    ``slopes[0] = 0``).  Beyond the last knot ``sigma'`` continues either
    linearly (``tail="linear"``) or as ``g_K + s_K r_K log(p / r_K)``
    (``tail="log"``), which keeps it concave and unbounded.
    """

    knots: np.ndarray
    slopes: np.ndarray
    tail: str = "log"

    def __post_init__(self):
        r = np.asarray(self.knots, dtype=float)
        g = np.asarray(self.slopes, dtype=float)
        if r.ndim != 1 or r.shape != g.shape or r.size < 2:
            raise ValueError("need matching knot and slope arrays with at least two entries")
        if r[0] != 0 or g[0] != 0:
            raise ValueError("sigma'(0) must be 0 at knot 0")
        if np.any(np.diff(r) <= 0):
            raise ValueError("knots must be strictly increasing")
        seg = np.diff(g) / np.diff(r)
        if np.any(seg <= 0):
            raise ValueError("sigma' must be strictly increasing")
        if np.any(np.diff(seg) > 1e-12 * seg[:-1]):
            raise ValueError("sigma' must be concave (segment slopes nonincreasing)")
        if self.tail not in ("log", "linear"):
            raise ValueError("tail must be 'log' or 'linear'")
        object.__setattr__(self, "knots", r)
        object.__setattr__(self, "slopes", g)
        # sigma at the knots
        vals = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(r))])
        object.__setattr__(self, "_values", vals)
        object.__setattr__(self, "_seg", seg)

    @property
    def unbounded(self) -> bool:
        return True

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        r, g, s = self.knots, self.slopes, self._seg
        rK, gK, sK = r[-1], g[-1], s[-1]
        inner = np.interp(p, r, g)
        pt = np.maximum(p, rK)
        if self.tail == "linear":
            outer = gK + sK * (pt - rK)
        else:
            outer = gK + sK * rK * np.log(pt / rK)
        return np.where(p <= rK, inner, outer)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        r, g, s, v = self.knots, self.slopes, self._seg, self._values
        rK, gK, sK, vK = r[-1], g[-1], s[-1], v[-1]
        k = np.clip(np.searchsorted(r, p, side="right") - 1, 0, r.size - 2)
        x = p - r[k]
        inner = v[k] + g[k] * x + 0.5 * s[k] * x * x
        pt = np.maximum(p, rK)
        if self.tail == "linear":
            y = pt - rK
            outer = vK + gK * y + 0.5 * sK * y * y
        else:
            outer = vK + gK * (pt - rK) + sK * rK * (pt * np.log(pt / rK) - pt + rK)
        return np.where(p <= rK, inner, outer)


def quadratic_sigma() -> ConvexFn:
    """``sigma(p) = p**2`` in the piecewise representation."""
    return ConvexFn(np.array([0.0, 1.0]), np.array([0.0, 2.0]), tail="linear")


@dataclass(frozen=True)
class TailProfile:
    """Samples ``(r_k, tail_k)`` of a nonincreasing tail mass."""

    r: np.ndarray
    tail: np.ndarray


def size_tail_profile(*tails: Callable, r_max: float = 200.0, samples: int = 2000) -> TailProfile:
    """Combined tail ``sum_f int_r^inf p f(p) dp`` from closed-form tail callables."""
    r = np.concatenate([[0.0], np.geomspace(1e-3, r_max, samples)])
    return TailProfile(r, sum(np.asarray(t(r), dtype=float) for t in tails))


def value_tail_profile(*funcs: Callable, p_max: float = 200.0, samples: int = 20001,
                       levels: int = 400) -> TailProfile:
    """Combined ``sum_f int_{f > v} f dp`` over value levels ``v``.

    Computed by midpoint quadrature on a uniform size grid.
    """
    p = (np.arange(samples) + 0.5) * (p_max / samples)
    dp = p_max / samples
    vals = [np.asarray(f(p), dtype=float) for f in funcs]
    vmax = max(float(v.max()) for v in vals)
    if not vmax > 0:
        raise ValueError("all functions vanish")
    lv = np.linspace(0.0, vmax, levels + 1)
    tail = np.zeros_like(lv)
    for v in vals:
        s = np.sort(v)
        cum = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]]) * dp
        tail += cum[np.searchsorted(s, lv, side="right")]
    return TailProfile(lv, tail)


def build_dlvp(profile: TailProfile, *, max_knots: int = 60) -> ConvexFn:
    """Staircase construction of a superlinear convex ``sigma`` for a tail.

    Knots ``r_m`` are placed where the tail mass has halved ``m`` times, with
    spacings forced nondecreasing so that ``sigma'`` (rising by one unit per
    knot) stays concave.  On ``[r_m, r_{m+1}]`` one has ``sigma(p)/p <= m + 1``,
    so ``int sigma f`` is dominated by ``sum (m+1) 2^-m`` times the total tail.
    """
    r = np.asarray(profile.r, dtype=float)
    tail = np.asarray(profile.tail, dtype=float)
    if r.ndim != 1 or r.shape != tail.shape or r.size < 2:
        raise ValueError("tail profile needs matching sample arrays")
    if np.any(np.diff(r) <= 0):
        raise ValueError("tail profile abscissae must be increasing")
    if not np.all(np.isfinite(tail)) or tail[0] <= 0:
        raise ValueError("tail profile must start positive and finite")
    if np.any(np.diff(tail) > 1e-14 * tail[0]) or not tail[-1] < tail[0]:
        raise ValueError("tail profile must be decreasing")
    T0 = tail[0]
    knots = [0.0]
    spacing = 0.0
    m = 1
    while len(knots) <= max_knots:
        hit = np.flatnonzero(tail <= T0 * 0.5**m)
        if hit.size == 0:
            break
        cand = max(r[hit[0]], knots[-1] + spacing)
        if cand <= knots[-1]:
            cand = knots[-1] + max(spacing, 1e-12)
        spacing = cand - knots[-1]
        knots.append(float(cand))
        m += 1
        if tail[hit[0]] == 0.0:
            break
    if len(knots) < 2:
        raise ValueError("tail never halves over the sampled range")
    return ConvexFn(np.array(knots), np.arange(len(knots), dtype=float), tail="log")


def build_sigma_pair(spec) -> tuple[ConvexFn, ConvexFn]:
    """One ``(sigma1, sigma2)`` pair serving both the initial data and the source.

    ``sigma1`` (on sizes) comes from the combined size tail of both;
    ``sigma2`` (on values) from their combined value tail.
    """
    ini, src = spec.initial, spec.source
    size_tails = [ini.size_tail] + ([src.size_tail] if src.s0 > 0 else [])
    sigma1 = build_dlvp(size_tail_profile(*size_tails))
    funcs = [ini] + ([src] if src.s0 > 0 else [])
    sigma2 = build_dlvp(value_tail_profile(*funcs))
    return sigma1, sigma2


# --------------------------------------------------------------------------
# convex inequalities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SlackReport:
    """Worst relative slack per inequality family; negative means violated."""

    lower4: float
    upper4: float
    young5: float
    super6: float
    upper6: float
    worst_pair: tuple

    @property
    def worst(self) -> float:
        return min(self.lower4, self.upper4, self.young5, self.super6, self.upper6)


def check_convexp_identities(sigma, pairs) -> SlackReport:
    """Check, at every pair ``(a, b)``:

    - ``sigma(a) <= a sigma'(a) <= 2 sigma(a)``
    - ``a sigma'(b) <= sigma(a) + sigma(b)``
    - ``0 <= sigma(a+b) - sigma(a) - sigma(b) <= 2 (a sigma(b) + b sigma(a)) / (a + b)``

    Slacks are divided by ``max(1, |largest operand|)``; for the last family
    the operands are ``sigma(a+b)``, ``sigma(a)`` and ``sigma(b)``, whose
    difference carries their rounding error.
    """
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    a, b = pairs[:, 0], pairs[:, 1]
    sa, sb, sab = sigma(a), sigma(b), sigma(a + b)
    da, db = sigma.derivative(a), sigma.derivative(b)

    def rel(big, small, scale=None):
        if scale is None:
            scale = np.maximum(np.abs(big), np.abs(small))
        return (big - small) / np.maximum(1.0, scale)

    gap = sab - sa - sb
    fams = [
        rel(a * da, sa),
        rel(2 * sa, a * da),
        rel(sa + sb, a * db),
        rel(gap, np.zeros_like(gap), sab),
        rel(2 * (a * sb + b * sa) / (a + b), gap, sab),
    ]
    mins = [float(f.min()) for f in fams]
    stacked = np.min(np.vstack(fams), axis=0)
    k = int(np.argmin(stacked))
    return SlackReport(*mins, worst_pair=(float(a[k]), float(b[k])))


# --------------------------------------------------------------------------
# Gamma constants
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaConstants:
    gamma1: float   # int sigma1(p) zeta_in(p) dp
    gamma2: float   # int sigma2(zeta_in(p)) dp
    gamma3: float   # int sigma1(p) S(p) dp
    gamma4: float   # int sigma2(S(p)) dp


def _panels(breaks, p_max, nodes):
    x, w = np.polynomial.legendre.leggauss(nodes)
    pts = np.unique(np.concatenate([[0.0], np.geomspace(1e-6, p_max, 400),
                                    [b for b in breaks if 0 < b < p_max]]))
    a, b = pts[:-1, None], pts[1:, None]
    P = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    W = 0.5 * (b - a) * w[None, :]
    return P.ravel(), W.ravel()


def _cutoff(f, start=10.0):
    # first size beyond which f has dropped below 1e-300 of its sup
    p = start
    while p < 1e6 and float(f(p)) > 1e-300:
        p *= 2.0
    return p


def gamma_constants(sigma1: ConvexFn, sigma2: ConvexFn, initial, source, *, nodes: int = 16) -> GammaConstants:
    """Composite Gauss-Legendre quadrature of the four integrals.

    Panels are geometric on ``(0, p_max]`` and split at the knots of
    ``sigma1``; ``nodes`` sets the resolution per panel.
    """
    def integrate(f):
        p_max = _cutoff(f)
        P, W = _panels(sigma1.knots, p_max, nodes)
        return float(np.sum(W * f(P)))

    g1 = integrate(lambda p: sigma1(p) * initial(p))
    g2 = integrate(lambda p: sigma2(initial(p)))
    if source.s0 > 0:
        g3 = integrate(lambda p: sigma1(p) * source(p))
        g4 = integrate(lambda p: sigma2(source(p)))
    else:
        g3 = g4 = 0.0
    return GammaConstants(g1, g2, g3, g4)


# --------------------------------------------------------------------------
# moments and weak form
# --------------------------------------------------------------------------

def _zeta(state):
    return state.zeta if isinstance(state, State) else np.asarray(state, dtype=float)


def moment(state, w: Weight, grid) -> float:
    """``sum_i w(pivot_i) zeta_i width_i``."""
    return float(np.sum(w(grid.pivots) * _zeta(state) * grid.widths))


@dataclass
class MomentReport:
    t: float
    M0: float
    M1: float
    weighted: dict
    Lambda: float | None = None
    Lambda_star: float | None = None
    Xi: float | None = None


def moment_report(traj: Trajectory, k: int, weights: Sequence[Weight] = (), *, T: float | None = None,
                  bounds=None) -> MomentReport:
    """Moments of snapshot ``k``; ``bounds`` is an optional
    :class:`coagsed.analysis.BoundConstants` supplying the a-priori values."""
    z = traj.zetas[k]
    g = traj.grid
    rep = MomentReport(
        t=float(traj.times[k]),
        M0=float(z @ g.widths),
        M1=float(z @ (g.pivots * g.widths)),
        weighted={w.name: moment(z, w, g) for w in weights},
    )
    if bounds is not None:
        rep.Lambda, rep.Lambda_star, rep.Xi = bounds.Lambda, bounds.Lambda_star, bounds.Xi
    return rep


def _time_integral(y, t):
    # composite Simpson on the (possibly uneven) snapshot times; the
    # trapezoid rule's O(h^2) error would dominate the residual
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if y.size < 2:
        return 0.0
    return float(simpson(y, x=t))


def weak_form_residual(traj: Trajectory, tables: Tables, w: Weight, t: float) -> float:
    """Normalised defect of the time-integrated weak identity at snapshot ``t``.

    Compares ``sum omega (zeta(t) - zeta(0)) width`` with the Simpson time
    integral over snapshots of the coagulation, source and removal terms.
    The defect is divided by the largest of the three magnitudes.
    """
    if not w.bounded:
        raise ValueError(f"weight {w.name!r} is unbounded; the weak form needs a bounded test function")
    k = traj.index_of(t)
    if k == 0:
        return 0.0
    g = traj.grid
    om = w(g.pivots)
    ts = traj.times[: k + 1]
    coag = np.array([weak_coagulation_term(tables, traj.zetas[j], om) for j in range(k + 1)])
    lin = np.array([float(np.sum(om * (tables.source_rate - tables.removal_rates * traj.zetas[j]) * g.widths))
                    for j in range(k + 1)])
    lhs = float(np.sum(om * (traj.zetas[k] - traj.zetas[0]) * g.widths))
    ic, il = _time_integral(coag, ts), _time_integral(lin, ts)
    scale = max(abs(lhs), abs(ic), abs(il))
    if scale == 0:
        return 0.0
    return abs(lhs - ic - il) / scale
