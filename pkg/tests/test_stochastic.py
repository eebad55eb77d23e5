import math

import numpy as np
import pytest

from coagsed.model import (ClassILinear, ExponentialInitial, PowerGrowthRemoval, ProblemSpec,
                           SourceSpec, SqrtBounded, ValidationConstant)
from coagsed.stochastic import (COAGULATION, INJECTION, NULL, REMOVAL, TERMINAL, ParticleSystem,
                                event_rates, initial_system, run_ensemble, run_replica, ssa_step)


def _spec(kernel=ValidationConstant(1.0), s0=0.0, k=0.0, c0=1.0):
    return ProblemSpec(kernel, SourceSpec(s0, 1.0), PowerGrowthRemoval(k, 0.0),
                       ExponentialInitial(c0, 1.0), 100.0)


def test_particle_system_validation():
    with pytest.raises(ValueError):
        ParticleSystem(0.0, [])
    with pytest.raises(ValueError):
        ParticleSystem(1.0, [1.0, 0.0])
    s = ParticleSystem(2.0, [1, 2.5])
    assert s.count == 2 and s.mass == 3.5


def test_event_rates_closed_form():
    s = ParticleSystem(10.0, [1.0, 2.0, 3.0])
    r = event_rates(s, _spec(ClassILinear(1.0), s0=2.0, k=0.5))
    # pairs: 3 + 4 + 5 over volume 10
    assert r.coagulation == pytest.approx(1.2)
    assert r.injection == pytest.approx(20.0)
    assert r.removal == pytest.approx(1.5)
    assert r.total == pytest.approx(22.7)


def test_coagulation_conserves_mass_and_count_drops():
    spec = _spec(SqrtBounded(1.0))
    rng = np.random.default_rng(3)
    s = ParticleSystem(1.0, list(rng.exponential(1.0, 50)), rng=rng)
    m = s.mass
    kinds = set()
    for _ in range(40):
        n = s.count
        _, rec = ssa_step(s, spec)
        kinds.add(rec.kind)
        if rec.kind == COAGULATION:
            assert s.count == n - 1
        else:
            assert rec.kind == NULL and s.count == n
        assert math.fsum(s.sizes) == pytest.approx(m, rel=1e-12)
    assert COAGULATION in kinds


def test_terminal_when_nothing_can_happen():
    s = ParticleSystem(1.0, [1.0], rng=np.random.default_rng(0))
    _, rec = ssa_step(s, _spec())
    assert rec.kind == TERMINAL and rec.dt == math.inf
    m0, m1 = run_replica(_spec(c0=0.0), 100.0, [0.0, 1.0, 5.0], np.random.default_rng(0))
    assert not m0.any() and not m1.any()


def test_injection_only_counts_are_poisson():
    # no kernel, no removal, no initial particles: N(t) ~ Poisson(V s0/lam t)
    spec = _spec(ValidationConstant(0.0), s0=2.0, c0=0.0)
    V, t = 5.0, 3.0
    ens = run_ensemble(spec, V, t, 400, seed=9, times=[t])
    counts = ens.m0[:, 0] * V
    mean = V * 2.0 * t
    assert np.all(counts == np.round(counts))
    assert counts.mean() == pytest.approx(mean, abs=4 * math.sqrt(mean / 400))
    assert counts.var(ddof=1) == pytest.approx(mean, rel=0.25)
    # sizes follow the source density: mean injected size 1/lam
    assert ens.m1[:, 0].sum() / ens.m0[:, 0].sum() == pytest.approx(1.0, rel=0.05)


def test_removal_only_survival_fraction():
    spec = _spec(ValidationConstant(0.0), k=0.7)
    ens = run_ensemble(spec, 200.0, 1.0, 50, seed=1, times=[0.0, 1.0])
    frac = ens.m0_mean[1] / ens.m0_mean[0]
    assert frac == pytest.approx(math.exp(-0.7), rel=0.05)


def test_removal_and_injection_events_update_mass():
    spec = _spec(ValidationConstant(0.0), s0=1.0, k=1.0)
    s = ParticleSystem(10.0, [0.5, 1.5], rng=np.random.default_rng(5))
    for _ in range(30):
        before = s.mass
        _, rec = ssa_step(s, spec)
        if rec.kind == INJECTION:
            assert s.mass == pytest.approx(before + rec.sizes[0])
        elif rec.kind == REMOVAL:
            assert s.mass == pytest.approx(before - rec.sizes[0])
        assert s.mass == pytest.approx(math.fsum(s.sizes), abs=1e-12)


def test_initial_system_number_is_poisson(rng):
    counts = [initial_system(_spec(c0=2.0), 50.0, rng).count for _ in range(300)]
    assert np.mean(counts) == pytest.approx(100.0, abs=3.0)


def test_ensemble_is_seed_reproducible_and_seed_sensitive():
    spec = _spec(s0=0.5, k=0.2)
    a = run_ensemble(spec, 50.0, 1.0, 5, seed=7, times=[0.5, 1.0])
    b = run_ensemble(spec, 50.0, 1.0, 5, seed=7, times=[0.5, 1.0])
    c = run_ensemble(spec, 50.0, 1.0, 5, seed=8, times=[0.5, 1.0])
    assert np.array_equal(a.m0, b.m0) and np.array_equal(a.m1, b.m1)
    assert not np.array_equal(a.m1, c.m1)
    assert a.replicas == 5 and a.m0_se.shape == (2,)


def test_ensemble_argument_checks():
    with pytest.raises(ValueError):
        run_ensemble(_spec(), 10.0, 1.0, 1, seed=0)
    with pytest.raises(ValueError):
        run_ensemble(_spec(), 10.0, 1.0, 3, seed=0, times=[2.0])
