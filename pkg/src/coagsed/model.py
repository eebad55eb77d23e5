"""Problem data: coagulation kernels, source, removal and initial data.

Every spec object is an immutable dataclass.  Evaluators are vectorised over
numpy arrays; the module-level ``eval_*`` helpers add the domain checks used
by the public API.

Kernel boundary convention: at ``p + q = 1`` (linear class) and at ``p = 1``
or ``q = 1`` (product class) the large-argument branch is used.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import special

__all__ = [
    "DomainError",
    "ExtrapolationWarning",
    "PowerLawEta",
    "TabulatedEta",
    "ClassILinear",
    "ClassIIProduct",
    "SqrtBounded",
    "ValidationConstant",
    "ValidationAdditive",
    "SourceSpec",
    "PowerGrowthRemoval",
    "TabulatedRemoval",
    "ExponentialInitial",
    "GammaInitial",
    "TabulatedInitial",
    "ProblemSpec",
    "AssumptionCheck",
    "ValidationReport",
    "eval_kernel",
    "eval_source",
    "eval_removal",
    "validate_assumptions",
    "satisfies_sqrt_bound",
]


class DomainError(ValueError):
    """A size argument lies outside ``(0, inf)``."""


class ExtrapolationWarning(UserWarning):
    """A tabulated function was queried outside its sample range."""


def _positive_sizes(*arrays):
    out = []
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if np.any(~(a > 0)):
            raise DomainError("sizes must be strictly positive and finite")
        out.append(a)
    return out


def _check_table(points, values, name):
    x = np.asarray(points, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or x.size < 2:
        raise ValueError(f"{name}: need matching 1-d sample arrays of length >= 2")
    if np.any(np.diff(x) <= 0):
        raise ValueError(f"{name}: sample points must be strictly increasing")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError(f"{name}: samples must be finite")
    return tuple(float(v) for v in x), tuple(float(v) for v in y)


# --------------------------------------------------------------------------
# eta functions for the product class
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerLawEta:
    """``eta(p) = (1 + p)**beta`` with ``0 <= beta < 1``."""

    beta: float

    def __post_init__(self):
        if not (0.0 <= self.beta < 1.0):
            raise ValueError(f"eta exponent beta={self.beta} must lie in [0, 1)")

    def __call__(self, p):
        return (1.0 + np.asarray(p, dtype=float)) ** self.beta

    def eta_star(self) -> float:
        # (1+p)^(beta-1) is nonincreasing, so the sup over p >= 1 sits at p = 1
        return 2.0 ** (self.beta - 1.0)


@dataclass(frozen=True)
class TabulatedEta:
    """Piecewise-linear eta through ``(points, values)``, flat outside."""

    points: tuple
    values: tuple

    def __post_init__(self):
        x, y = _check_table(self.points, self.values, "TabulatedEta")
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "values", y)

    def __call__(self, p):
        return np.interp(np.asarray(p, dtype=float), self.points, self.values)

    def eta_star(self) -> float:
        x = np.asarray(self.points)
        y = np.asarray(self.values)
        mask = x >= 1.0
        if not mask.any():
            return float(self(1.0)) / 2.0
        # on a piecewise-linear function the ratio eta/(1+p) peaks at a knot
        # (or at p = 1); beyond the last knot eta is flat so the ratio decays
        cand = np.concatenate([[float(self(1.0)) / 2.0], y[mask] / (1.0 + x[mask])])
        return float(cand.max())


EtaSpec = Union[PowerLawEta, TabulatedEta]


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassILinear:
    """Linear kernel: ``A`` for ``p + q < 1`` and ``A (p + q)`` otherwise."""

    A: float
    outside_admissible_classes = False
    family = "class1"

    def __post_init__(self):
        if not self.A >= 0:
            raise ValueError("rate constant A must be >= 0")

    def __call__(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        s = p + q
        return np.where(s < 1.0, self.A, self.A * s)

    def envelope(self, p, q):
        return self.A * (1.0 + np.asarray(p)) * (1.0 + np.asarray(q))

    def majorant(self, p_max: float) -> float:
        """Upper bound of the kernel over ``(0, p_max]^2``."""
        return self.A * max(1.0, 2.0 * p_max)


@dataclass(frozen=True)
class ClassIIProduct:
    """Product kernel built from ``eta``; ``A`` on the unit square."""

    A: float
    eta: EtaSpec
    outside_admissible_classes = False
    family = "class2"

    def __post_init__(self):
        if not self.A >= 0:
            raise ValueError("rate constant A must be >= 0")

    def _factor(self, p):
        return np.where(p < 1.0, 1.0, self.eta(p))

    def __call__(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        # the factor product first, so that K(p, q) == K(q, p) bit for bit
        return self.A * (self._factor(p) * self._factor(q))

    def envelope(self, p, q):
        return self.A * (1.0 + np.asarray(p)) * (1.0 + np.asarray(q))

    def majorant(self, p_max: float) -> float:
        f = 1.0
        if p_max >= 1.0:
            if isinstance(self.eta, PowerLawEta):
                f = max(1.0, float(self.eta(p_max)))
            else:
                grid = np.concatenate([[1.0, p_max], [x for x in self.eta.points if 1.0 <= x <= p_max]])
                f = max(1.0, float(np.max(self.eta(grid))))
        return self.A * f * f


@dataclass(frozen=True)
class SqrtBounded:
    """``A sqrt((1+p)(1+q))``: the extremal kernel of the uniqueness class."""

    A: float
    outside_admissible_classes = False
    family = "sqrt"

    def __post_init__(self):
        if not self.A >= 0:
            raise ValueError("rate constant A must be >= 0")

    def __call__(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return self.A * np.sqrt((1.0 + p) * (1.0 + q))

    def envelope(self, p, q):
        return self.A * np.sqrt((1.0 + np.asarray(p)) * (1.0 + np.asarray(q)))

    def majorant(self, p_max: float) -> float:
        return self.A * (1.0 + p_max)


@dataclass(frozen=True)
class ValidationConstant:
    """Constant kernel ``A``; identical to the product class with ``eta = 1``."""

    A: float
    outside_admissible_classes = False
    family = "constant"

    def __post_init__(self):
        if not self.A >= 0:
            raise ValueError("rate constant A must be >= 0")

    def __call__(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return np.full(np.broadcast(p, q).shape, float(self.A))

    def envelope(self, p, q):
        return self.A * (1.0 + np.asarray(p)) * (1.0 + np.asarray(q))

    def majorant(self, p_max: float) -> float:
        return float(self.A)


@dataclass(frozen=True)
class ValidationAdditive:
    """Additive kernel ``A (p + q)``, for analytic regressions only."""

    A: float
    outside_admissible_classes = True
    family = "additive"

    def __post_init__(self):
        if not self.A >= 0:
            raise ValueError("rate constant A must be >= 0")

    def __call__(self, p, q):
        return self.A * (np.asarray(p, dtype=float) + np.asarray(q, dtype=float))

    def envelope(self, p, q):
        return self.A * (1.0 + np.asarray(p)) * (1.0 + np.asarray(q))

    def majorant(self, p_max: float) -> float:
        return 2.0 * self.A * p_max


KernelSpec = Union[ClassILinear, ClassIIProduct, SqrtBounded, ValidationConstant, ValidationAdditive]


def eval_kernel(spec: KernelSpec, p, q):
    """Evaluate the coagulation rate at sizes ``p, q > 0``.

    Raises
    ------
    DomainError
        If any size is not strictly positive.
    """
    p, q = _positive_sizes(p, q)
    out = spec(p, q)
    return float(out) if out.ndim == 0 else out


def satisfies_sqrt_bound(kernel: KernelSpec, p_max: float = 1e4, samples: int = 121) -> bool:
    """Sampled check of ``K(p, q) <= A sqrt((1+p)(1+q))``."""
    if isinstance(kernel, (SqrtBounded, ValidationConstant)):
        return True
    if isinstance(kernel, (ClassILinear, ValidationAdditive)):
        return kernel.A == 0
    x = _sample_sizes(p_max, samples)
    P, Q = np.meshgrid(x, x, indexing="ij")
    bound = kernel.A * np.sqrt((1.0 + P) * (1.0 + Q))
    return bool(np.all(kernel(P, Q) <= bound * (1.0 + 1e-12)))


# --------------------------------------------------------------------------
# source
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceSpec:
    """Exponential injection rate ``s0 * exp(-lam * p)``."""

    s0: float
    lam: float

    def __post_init__(self):
        if not self.s0 >= 0:
            raise ValueError("source amplitude s0 must be >= 0")
        if not self.lam > 0:
            raise ValueError("source decay rate lambda must be > 0")

    def __call__(self, p):
        return self.s0 * np.exp(-self.lam * np.asarray(p, dtype=float))

    def number_rate(self) -> float:
        """``int_0^inf S``."""
        return self.s0 / self.lam

    def mass_rate(self) -> float:
        """``int_0^inf p S``."""
        return self.s0 / self.lam**2

    def l1_01_norm(self) -> float:
        """``int_0^inf (1 + p) S``."""
        return self.s0 * (1.0 / self.lam + 1.0 / self.lam**2)

    def cell_integrals(self, edges):
        """Exact ``int S`` over each cell of ``edges``."""
        e = np.asarray(edges, dtype=float)
        # exp(-lam a) - exp(-lam b) written through expm1 to keep small cells accurate
        a, b = e[:-1], e[1:]
        return (self.s0 / self.lam) * np.exp(-self.lam * a) * (-np.expm1(-self.lam * (b - a)))

    def cell_mass_integrals(self, edges):
        """Exact ``int p S`` over each cell."""
        e = np.asarray(edges, dtype=float)
        F = -(self.s0 / self.lam**2) * (1.0 + self.lam * e) * np.exp(-self.lam * e)
        return np.diff(F)

    def sample(self, rng, size):
        """Draw injection sizes from the normalised density ``S / int S``."""
        return rng.exponential(1.0 / self.lam, size)

    def size_tail(self, r):
        """``int_r^inf p S(p) dp``."""
        r = np.asarray(r, dtype=float)
        return (self.s0 / self.lam**2) * (1.0 + self.lam * r) * np.exp(-self.lam * r)


def eval_source(spec: SourceSpec, p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p >= 0)):
        raise DomainError("sizes must be nonnegative")
    out = spec(p)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# removal
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerGrowthRemoval:
    """``R(p) = k (1 + p)**alpha`` with ``k >= 0`` and ``0 <= alpha < 1``."""

    k: float
    alpha: float

    def __post_init__(self):
        if not self.k >= 0:
            raise ValueError("removal coefficient k must be >= 0")
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError(
                f"removal exponent alpha={self.alpha} must lie in [0, 1) "
                "(growth bound R(p) <= k (1+p)^alpha)"
            )

    @property
    def is_zero(self) -> bool:
        return self.k == 0

    def __call__(self, p):
        return self.k * (1.0 + np.asarray(p, dtype=float)) ** self.alpha

    def majorant(self, p_max: float) -> float:
        return float(self(p_max))


@dataclass(frozen=True)
class TabulatedRemoval:
    """Piecewise-linear removal rate; flat extrapolation with a warning."""

    points: tuple
    values: tuple

    def __post_init__(self):
        x, y = _check_table(self.points, self.values, "TabulatedRemoval")
        if min(y) < 0:
            raise ValueError("TabulatedRemoval: values must be nonnegative")
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "values", y)

    @property
    def is_zero(self) -> bool:
        return max(self.values) == 0

    def out_of_range(self, p):
        p = np.asarray(p, dtype=float)
        return (p < self.points[0]) | (p > self.points[-1])

    def __call__(self, p):
        return np.interp(np.asarray(p, dtype=float), self.points, self.values)

    def majorant(self, p_max: float) -> float:
        return max(self.values)


RemovalSpec = Union[PowerGrowthRemoval, TabulatedRemoval]


def eval_removal(spec: RemovalSpec, p):
    """Evaluate the removal rate; warns on tabulated extrapolation."""
    (p,) = _positive_sizes(p)
    if isinstance(spec, TabulatedRemoval) and np.any(spec.out_of_range(p)):
        warnings.warn("removal table queried outside its sample range; "
                      "using flat extrapolation", ExtrapolationWarning, stacklevel=2)
    out = spec(p)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# initial data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentialInitial:
    """``c0 * exp(-mu * p)``."""

    c0: float
    mu: float

    def __post_init__(self):
        if not self.c0 >= 0:
            raise ValueError("initial amplitude c0 must be >= 0")
        if not self.mu > 0:
            raise ValueError("initial decay rate mu must be > 0")

    def __call__(self, p):
        return self.c0 * np.exp(-self.mu * np.asarray(p, dtype=float))

    def number(self) -> float:
        return self.c0 / self.mu

    def mass(self) -> float:
        return self.c0 / self.mu**2

    def l1_01_norm(self) -> float:
        return self.number() + self.mass()

    def cell_integrals(self, edges):
        e = np.asarray(edges, dtype=float)
        a, b = e[:-1], e[1:]
        return (self.c0 / self.mu) * np.exp(-self.mu * a) * (-np.expm1(-self.mu * (b - a)))

    def number_between(self, a, b) -> float:
        return float(self.cell_integrals([a, b])[0]) if b > a else 0.0

    def mass_between(self, a, b) -> float:
        F = lambda x: -(self.c0 / self.mu**2) * (1 + self.mu * x) * math.exp(-self.mu * x)
        return F(b) - F(a) if b > a else 0.0

    def size_tail(self, r):
        r = np.asarray(r, dtype=float)
        return (self.c0 / self.mu**2) * (1.0 + self.mu * r) * np.exp(-self.mu * r)

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.mu, size)

    def sup(self) -> float:
        return self.c0


@dataclass(frozen=True)
class GammaInitial:
    """``c0`` times the gamma density with ``shape`` and ``scale``."""

    c0: float
    shape: float
    scale: float

    def __post_init__(self):
        if not self.c0 >= 0:
            raise ValueError("initial amplitude c0 must be >= 0")
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("gamma shape and scale must be > 0")

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        k, th = self.shape, self.scale
        logpdf = (k - 1) * np.log(p) - p / th - special.gammaln(k) - k * math.log(th)
        return self.c0 * np.exp(logpdf)

    def number(self) -> float:
        return self.c0

    def mass(self) -> float:
        return self.c0 * self.shape * self.scale

    def l1_01_norm(self) -> float:
        return self.number() + self.mass()

    def _cdf(self, x, shape):
        return special.gammainc(shape, np.asarray(x, dtype=float) / self.scale)

    def cell_integrals(self, edges):
        return self.c0 * np.diff(self._cdf(edges, self.shape))

    def number_between(self, a, b) -> float:
        return float(self.c0 * (self._cdf(b, self.shape) - self._cdf(a, self.shape))) if b > a else 0.0

    def mass_between(self, a, b) -> float:
        if b <= a:
            return 0.0
        m = self.mass()
        return float(m * (self._cdf(b, self.shape + 1) - self._cdf(a, self.shape + 1)))

    def size_tail(self, r):
        return self.mass() * special.gammaincc(self.shape + 1, np.asarray(r, dtype=float) / self.scale)

    def sample(self, rng, size):
        return rng.gamma(self.shape, self.scale, size)

    def sup(self) -> float:
        if self.shape < 1:
            return math.inf
        if self.shape == 1:
            return self.c0 / self.scale
        return float(self((self.shape - 1) * self.scale))


@dataclass(frozen=True)
class TabulatedInitial:
    """Piecewise-constant initial data given as cell ``edges`` and ``values``."""

    edges: tuple
    values: tuple

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if e.ndim != 1 or e.size != v.size + 1 or v.size < 1:
            raise ValueError("TabulatedInitial: need len(edges) == len(values) + 1")
        if e[0] < 0 or np.any(np.diff(e) <= 0):
            raise ValueError("TabulatedInitial: edges must be >= 0 and strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("TabulatedInitial: values must be finite and nonnegative")
        object.__setattr__(self, "edges", tuple(float(x) for x in e))
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        e = np.asarray(self.edges)
        idx = np.searchsorted(e, p, side="left") - 1
        inside = (p > e[0]) & (p <= e[-1])
        vals = np.asarray(self.values)[np.clip(idx, 0, len(self.values) - 1)]
        return np.where(inside, vals, 0.0)

    def _cum(self, x, moment):
        # cumulative int_0^x p^moment zeta over the piecewise-constant table
        e = np.asarray(self.edges)
        v = np.asarray(self.values)
        x = np.asarray(x, dtype=float)
        lo = np.clip(x[..., None], e[:-1], e[1:])
        if moment == 0:
            return np.sum(v * (lo - e[:-1]), axis=-1)
        return np.sum(v * (lo**2 - e[:-1] ** 2) / 2.0, axis=-1)

    def number(self) -> float:
        return float(self._cum(self.edges[-1], 0))

    def mass(self) -> float:
        return float(self._cum(self.edges[-1], 1))

    def l1_01_norm(self) -> float:
        return self.number() + self.mass()

    def cell_integrals(self, edges):
        return np.diff(self._cum(np.asarray(edges, dtype=float), 0))

    def number_between(self, a, b) -> float:
        return float(self._cum(b, 0) - self._cum(a, 0)) if b > a else 0.0

    def mass_between(self, a, b) -> float:
        return float(self._cum(b, 1) - self._cum(a, 1)) if b > a else 0.0

    def size_tail(self, r):
        return self.mass() - self._cum(np.asarray(r, dtype=float), 1)

    def sample(self, rng, size):
        e = np.asarray(self.edges)
        w = np.asarray(self.values) * np.diff(e)
        cells = rng.choice(len(w), size=size, p=w / w.sum())
        return e[cells] + rng.random(size) * np.diff(e)[cells]

    def sup(self) -> float:
        return max(self.values)


InitialSpec = Union[ExponentialInitial, GammaInitial, TabulatedInitial]


# --------------------------------------------------------------------------
# problem bundle and assumption checks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    """Kernel, source, removal, initial data and truncation size ``n``."""

    kernel: KernelSpec
    source: SourceSpec
    removal: RemovalSpec
    initial: InitialSpec
    n: float

    def __post_init__(self):
        if not self.n > 1:
            raise ValueError(f"truncation size n={self.n} must exceed 1")
        if isinstance(self.removal, TabulatedRemoval) and self.kernel.family not in ("class1", "additive"):
            raise ValueError(
                "a tabulated (merely measurable) removal rate is only admissible "
                "with the linear kernel class"
            )


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    witness: tuple | None = None
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __iter__(self):
        return iter(self.checks)


def _sample_sizes(p_max=1e3, samples=61):
    x = np.geomspace(1e-3, p_max, samples)
    # include the branch points and both sides of them
    extra = [0.25, 0.5, 0.75, 1.0 - 1e-9, 1.0, 1.0 + 1e-9, 2.0]
    return np.unique(np.concatenate([x, extra]))


def _first_failure(mask, *coords):
    bad = np.argwhere(~mask)
    if bad.size == 0:
        return None
    idx = tuple(bad[0])
    return tuple(float(c[idx]) for c in coords)


def _eta_checks(eta: EtaSpec, p_max: float):
    checks = []
    if isinstance(eta, PowerLawEta):
        x = _sample_sizes(p_max)
        x = x[x > 1.0]
        checks.append(AssumptionCheck("eta_at_least_one", bool(np.all(eta(x) >= 1.0)), None,
                                      "eta >= 1 on (1, inf)"))
        checks.append(AssumptionCheck("eta_star_finite", True, None, f"eta* = {eta.eta_star():.6g}"))
        checks.append(AssumptionCheck("eta_sublinear", eta.beta < 1.0, None, "beta < 1"))
        return checks
    x = np.asarray(eta.points)
    y = np.asarray(eta.values)
    m = x > 1.0
    ok = bool(np.all(y[m] >= 1.0)) if m.any() else True
    wit = None if ok else (float(x[m][np.argmin(y[m] >= 1.0)]),)
    checks.append(AssumptionCheck("eta_at_least_one", ok, wit, "eta >= 1 on (1, inf)"))
    es = eta.eta_star()
    checks.append(AssumptionCheck("eta_star_finite", math.isfinite(es), None, f"eta* = {es:.6g}"))
    r1, r2 = y[-2] / x[-2], y[-1] / x[-1]
    ok = r2 < r1
    checks.append(AssumptionCheck("eta_sublinear", bool(ok), None if ok else (float(x[-1]),),
                                  f"eta(p)/p on last two samples: {r1:.6g} -> {r2:.6g}"))
    return checks


def validate_assumptions(spec: ProblemSpec, p_max: float | None = None) -> ValidationReport:
    """Check the standing assumptions on a problem; failures are data.

    Each entry carries a boolean and, for sampled checks, the first witness
    point where the check failed.
    """
    p_max = float(spec.n if p_max is None else p_max)
    k = spec.kernel
    checks: list[AssumptionCheck] = []

    x = _sample_sizes(p_max)
    P, Q = np.meshgrid(x, x, indexing="ij")
    K = k(P, Q)
    checks.append(AssumptionCheck("kernel_nonnegative", bool(np.all(K >= 0)),
                                  _first_failure(K >= 0, P, Q)))
    sym = K == k(Q, P)
    checks.append(AssumptionCheck("kernel_symmetric", bool(sym.all()), _first_failure(sym, P, Q)))

    if k.outside_admissible_classes:
        checks.append(AssumptionCheck("kernel_in_admissible_class", False, None,
                                      f"{type(k).__name__} is a validation kernel outside the admissible classes"))
    else:
        env = K <= k.envelope(P, Q) * (1.0 + 1e-12)
        checks.append(AssumptionCheck("kernel_envelope", bool(env.all()), _first_failure(env, P, Q),
                                      "K(p,q) <= A(1+p)(1+q)"))
        if isinstance(k, SqrtBounded):
            b = K <= k.A * np.sqrt((1 + P) * (1 + Q)) * (1.0 + 1e-12)
            checks.append(AssumptionCheck("kernel_sqrt_envelope", bool(b.all()), _first_failure(b, P, Q)))
        if isinstance(k, ClassIIProduct):
            checks.extend(_eta_checks(k.eta, p_max))

    src = spec.source
    checks.append(AssumptionCheck("source_nonnegative_decreasing", src.s0 >= 0 and src.lam > 0, None,
                                  "S(p) = s0 exp(-lambda p)"))
    checks.append(AssumptionCheck("source_l1_01", math.isfinite(src.l1_01_norm()), None,
                                  f"||S||_(0,1) = {src.l1_01_norm():.6g}"))

    rem = spec.removal
    R = rem(x)
    checks.append(AssumptionCheck("removal_nonnegative", bool(np.all(R >= 0)),
                                  _first_failure(R >= 0, x)))
    if k.family in ("class2", "constant", "sqrt"):
        inc = np.diff(R) >= 0
        checks.append(AssumptionCheck("removal_nondecreasing", bool(inc.all()),
                                      _first_failure(inc, x[1:])))
        if isinstance(rem, TabulatedRemoval):
            checks.append(AssumptionCheck("removal_growth_bound", False, None,
                                          "tabulated removal not allowed with product kernels"))
        else:
            checks.append(AssumptionCheck("removal_growth_bound", True, None,
                                          f"R(p) = {rem.k:g}(1+p)^{rem.alpha:g}"))

    ini = spec.initial
    v = ini(x)
    checks.append(AssumptionCheck("initial_nonnegative", bool(np.all(v >= 0)), _first_failure(v >= 0, x)))
    norm = ini.l1_01_norm()
    checks.append(AssumptionCheck("initial_l1_01", math.isfinite(norm), None,
                                  f"||zeta_in||_(0,1) = {norm:.6g}"))
    return ValidationReport(tuple(checks))
