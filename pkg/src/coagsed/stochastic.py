"""Marcus-Lushnikov particle simulation with injection and removal.

A finite system of particles in a volume ``V`` evolves by exact event-driven
simulation: a pair ``(j, k)`` merges at rate ``K(p_j, p_k) / V``, new
particles arrive at total rate ``V int S`` with sizes drawn from ``S``, and
particle ``j`` is removed at rate ``R(p_j)``.  Coagulation uses thinning:
candidate pairs arrive at the rate of a kernel majorant and are accepted with
probability ``K / majorant``.  Rejected candidates are null events.

As ``V`` grows, ``count / V`` and ``sum(sizes) / V`` follow the (untruncated)
deterministic moments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ProblemSpec, PowerGrowthRemoval, ValidationConstant

__all__ = ["ParticleSystem", "EventRates", "EventRecord", "EnsembleResult",
           "initial_system", "event_rates", "ssa_step", "run_replica", "run_ensemble"]

COAGULATION, INJECTION, REMOVAL, NULL, TERMINAL = "coagulation", "injection", "removal", "null", "terminal"


@dataclass
class ParticleSystem:
    volume: float
    sizes: list
    t: float = 0.0
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)
    mass: float = 0.0

    def __post_init__(self):
        if not self.volume > 0:
            raise ValueError("volume must be positive")
        self.sizes = [float(s) for s in self.sizes]
        if any(not s > 0 for s in self.sizes):
            raise ValueError("particle sizes must be positive")
        self.mass = math.fsum(self.sizes)

    @property
    def count(self) -> int:
        return len(self.sizes)


@dataclass(frozen=True)
class EventRates:
    coagulation: float
    injection: float
    removal: float

    @property
    def total(self) -> float:
        return self.coagulation + self.injection + self.removal


@dataclass(frozen=True)
class EventRecord:
    kind: str
    t: float
    dt: float
    sizes: tuple = ()


def initial_system(spec: ProblemSpec, volume: float, rng: np.random.Generator) -> ParticleSystem:
    """Poisson number of particles with sizes drawn from the initial data."""
    mean = volume * spec.initial.number()
    count = int(rng.poisson(mean)) if mean > 0 else 0
    sizes = spec.initial.sample(rng, count) if count else []
    sizes = [s for s in np.asarray(sizes, dtype=float) if s > 0]
    return ParticleSystem(volume, sizes, 0.0, rng)


def event_rates(system: ParticleSystem, spec: ProblemSpec) -> EventRates:
    """Exact total rates (the coagulation sum is quadratic in the count)."""
    x = np.asarray(system.sizes, dtype=float)
    coag = 0.0
    if x.size > 1:
        K = spec.kernel(x[:, None], x[None, :])
        coag = 0.5 * (float(K.sum()) - float(np.trace(K))) / system.volume
    inj = system.volume * spec.source.number_rate()
    rem = float(np.sum(spec.removal(x))) if x.size else 0.0
    return EventRates(coag, inj, rem)


def _removal_total(system, removal):
    if removal.is_zero or not system.sizes:
        return 0.0, None
    if isinstance(removal, PowerGrowthRemoval) and removal.alpha == 0:
        return removal.k * len(system.sizes), None
    r = removal(np.asarray(system.sizes))
    return float(r.sum()), r


def ssa_step(system: ParticleSystem, spec: ProblemSpec) -> tuple[ParticleSystem, EventRecord]:
    """Advance ``system`` (in place) by one event and return it with the record.

    A terminal record (``dt = inf``) is returned when no event can fire.
    """
    rng = system.rng
    N = len(system.sizes)
    kernel = spec.kernel
    if N > 1 and kernel.A > 0:
        p_max = 0.0 if isinstance(kernel, ValidationConstant) else max(system.sizes)
        kmax = kernel.majorant(p_max)
        coag = kmax * N * (N - 1) / (2.0 * system.volume)
    else:
        kmax = coag = 0.0
    inj = system.volume * spec.source.number_rate()
    rem, rvals = _removal_total(system, spec.removal)
    total = coag + inj + rem
    if total <= 0:
        return system, EventRecord(TERMINAL, system.t, math.inf)

    dt = rng.exponential(1.0 / total)
    system.t += dt
    u = rng.random() * total
    if u < coag:
        j = int(rng.integers(N))
        k = int(rng.integers(N - 1))
        if k >= j:
            k += 1
        pj, pk = system.sizes[j], system.sizes[k]
        if kmax > 0 and rng.random() * kmax > float(kernel(pj, pk)):
            return system, EventRecord(NULL, system.t, dt, (pj, pk))
        system.sizes[j] = pj + pk
        system.sizes[k] = system.sizes[-1]
        system.sizes.pop()
        return system, EventRecord(COAGULATION, system.t, dt, (pj, pk))
    if u < coag + inj:
        s = float(spec.source.sample(rng, None))
        system.sizes.append(s)
        system.mass += s
        return system, EventRecord(INJECTION, system.t, dt, (s,))
    if rvals is None:
        j = int(rng.integers(N))
    else:
        c = np.cumsum(rvals)
        j = min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), N - 1)
    s = system.sizes[j]
    system.sizes[j] = system.sizes[-1]
    system.sizes.pop()
    system.mass -= s
    return system, EventRecord(REMOVAL, system.t, dt, (s,))


def run_replica(spec: ProblemSpec, volume: float, times, rng: np.random.Generator):
    """Counts and masses (per volume) of one realisation at ``times``."""
    times = np.asarray(times, dtype=float)
    system = initial_system(spec, volume, rng)
    m0 = np.empty(times.size)
    m1 = np.empty(times.size)
    k = 0
    while k < times.size and times[k] <= 0:
        m0[k], m1[k] = system.count / volume, system.mass / volume
        k += 1
    while k < times.size:
        count, mass = system.count, system.mass
        _, rec = ssa_step(system, spec)
        # state is piecewise constant, so every record time before the event
        # sees the pre-event state; after a terminal event it never changes
        t_event = math.inf if rec.kind == TERMINAL else rec.t
        while k < times.size and times[k] < t_event:
            m0[k], m1[k] = count / volume, mass / volume
            k += 1
    return m0, m1


@dataclass
class EnsembleResult:
    times: np.ndarray
    volume: float
    m0: np.ndarray      # replicas x times
    m1: np.ndarray

    @property
    def replicas(self) -> int:
        return self.m0.shape[0]

    def _se(self, x):
        return x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])

    @property
    def m0_mean(self):
        return self.m0.mean(axis=0)

    @property
    def m1_mean(self):
        return self.m1.mean(axis=0)

    @property
    def m0_se(self):
        return self._se(self.m0)

    @property
    def m1_se(self):
        return self._se(self.m1)


def run_ensemble(spec: ProblemSpec, volume: float, t_end: float, replicas: int, seed: int,
                 times=None) -> EnsembleResult:
    """Independent replicas; replica ``r`` uses the stream ``(seed, r)``."""
    if replicas < 2:
        raise ValueError("need at least two replicas for standard errors")
    times = np.asarray([t_end] if times is None else times, dtype=float)
    if np.any(times > t_end) or np.any(times < 0):
        raise ValueError("record times must lie in [0, t_end]")
    m0 = np.empty((replicas, times.size))
    m1 = np.empty((replicas, times.size))
    for r in range(replicas):
        rng = np.random.default_rng([int(seed), r])
        m0[r], m1[r] = run_replica(spec, volume, times, rng)
    return EnsembleResult(times, float(volume), m0, m1)
