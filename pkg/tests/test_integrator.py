import math

import numpy as np
import pytest
from scipy import integrate as sint

from coagsed.fixtures import analytic_constant_cell_averages, analytic_constant_solution
from coagsed.grid import make_geometric_grid
from coagsed.integrator import (FLUX_NAMES, IntegrationError, PicardDivergenceError, StepControl,
                                integrate, picard_solve, project_initial)
from coagsed.model import (ClassILinear, ExponentialInitial, PowerGrowthRemoval, ProblemSpec,
                           SourceSpec, SqrtBounded, TabulatedInitial, ValidationConstant)

NO_SOURCE = SourceSpec(0.0, 1.0)


@pytest.mark.parametrize("t", [0.0, 0.7, 3.0])
@pytest.mark.parametrize("p", [0.05, 1.0, 4.0])
def test_analytic_constant_solution_satisfies_equation(t, p):
    """Oracle check: substitute the closed form into the untruncated equation."""
    f = analytic_constant_solution
    h = 1e-5
    if t > h:
        dtf = (f(t + h, p) - f(t - h, p)) / (2 * h)
    else:   # second-order one-sided difference at t = 0
        dtf = (-3 * f(t, p) + 4 * f(t + h, p) - f(t + 2 * h, p)) / (2 * h)
    gain = 0.5 * sint.quad(lambda q: f(t, p - q) * f(t, q), 0.0, p, epsabs=1e-13, epsrel=1e-12)[0]
    loss = f(t, p) * sint.quad(lambda q: f(t, q), 0.0, np.inf, epsabs=1e-13, epsrel=1e-12)[0]
    assert dtf == pytest.approx(gain - loss, rel=1e-6, abs=1e-9)


def test_analytic_cell_averages_match_quadrature():
    g = make_geometric_grid(1e-3, 20.0, 12)
    avg = analytic_constant_cell_averages(2.0, g)
    for i in range(g.cells):
        q = sint.quad(lambda p: analytic_constant_solution(2.0, p), g.edges[i], g.edges[i + 1])[0]
        assert avg[i] == pytest.approx(q / g.widths[i], rel=1e-10)


def test_project_initial_reports_excluded_mass():
    spec = ProblemSpec(ValidationConstant(1.0), NO_SOURCE, PowerGrowthRemoval(0, 0),
                       ExponentialInitial(1.0, 1.0), 5.0)
    g = make_geometric_grid(0.1, 5.0, 10)
    s = project_initial(spec, g)
    assert s.zeta @ g.widths + s.diagnostics["number_below_pmin"] + math.exp(-5.0) == pytest.approx(1.0)


def test_tabulated_initial_on_same_edges_is_taken_verbatim():
    g = make_geometric_grid(0.1, 5.0, 4)
    vals = (1.0, 0.5, 0.25, 0.125)
    spec = ProblemSpec(ValidationConstant(1.0), NO_SOURCE, PowerGrowthRemoval(0, 0),
                       TabulatedInitial(tuple(g.edges), vals), 5.0)
    assert np.array_equal(project_initial(spec, g).zeta, vals)


def _removal_only(k=0.8):
    return ProblemSpec(ValidationConstant(0.0), NO_SOURCE, PowerGrowthRemoval(k, 0.0),
                       ExponentialInitial(1.0, 1.0), 10.0)


def test_removal_only_is_exact_exponential_decay():
    spec = _removal_only()
    g = make_geometric_grid(1e-3, 10.0, 30)
    tr = integrate(spec, g, StepControl(rel_tol=1e-10), 2.0, snapshot_times=[0.5, 1.0, 2.0])
    z0 = tr.zetas[0]
    for t, z in zip(tr.times, tr.zetas):
        assert np.allclose(z, z0 * math.exp(-0.8 * t), rtol=1e-9)
    # removed number equals the loss of M0
    assert tr.cumulative["removal_number"][-1] == pytest.approx(tr.m0()[0] - tr.m0()[-1], rel=1e-9)


def test_picard_agrees_with_exact_removal_and_with_rk():
    spec = _removal_only()
    g = make_geometric_grid(1e-3, 10.0, 30)
    pc = picard_solve(spec, g, 2.0, 0.25, 60)
    assert np.allclose(pc.zetas[-1], pc.zetas[0] * math.exp(-1.6), rtol=1e-9)
    assert all(1 <= n <= 60 for n in pc.picard_iterations)

    spec = ProblemSpec(ClassILinear(1.0), SourceSpec(1.0, 1.0), PowerGrowthRemoval(0.5, 0.5),
                       ExponentialInitial(1.0, 1.0), 10.0)
    g = make_geometric_grid(1e-3, 10.0, 24)
    pc = picard_solve(spec, g, 0.5, 0.05, 80)
    rk = integrate(spec, g, StepControl(rel_tol=1e-10, abs_tol=1e-16), 0.5, snapshot_times=pc.times)
    assert np.allclose(pc.zetas, rk.zetas, rtol=1e-7, atol=1e-12)
    for name in FLUX_NAMES:
        assert np.allclose(pc.cumulative[name], rk.cumulative[name], rtol=1e-7, atol=1e-12)


def test_picard_reports_divergence():
    spec = ProblemSpec(ClassILinear(1.0), SourceSpec(1.0, 1.0), PowerGrowthRemoval(0.5, 0.5),
                       ExponentialInitial(1.0, 1.0), 10.0)
    g = make_geometric_grid(1e-3, 10.0, 24)
    with pytest.raises(PicardDivergenceError):
        picard_solve(spec, g, 4.0, 4.0, 200)
    with pytest.raises(PicardDivergenceError):
        picard_solve(spec, g, 0.5, 0.05, 1)
    with pytest.raises(ValueError):
        picard_solve(spec, make_geometric_grid(1e-3, 10.0, 65), 0.5, 0.05, 10)


def test_snapshots_land_exactly_and_include_endpoints():
    spec = _removal_only()
    g = make_geometric_grid(1e-3, 10.0, 20)
    tr = integrate(spec, g, StepControl(), 1.0, snapshot_times=[0.1, 0.3, 0.3 + 1e-15, 0.7])
    assert list(tr.times) == [0.0, 0.1, 0.3, 0.7, 1.0]
    assert tr.index_of(0.7) == 3
    with pytest.raises(KeyError):
        tr.index_of(0.5)
    with pytest.raises(ValueError):
        integrate(spec, g, StepControl(), 1.0, snapshot_times=[2.0])


def test_without_snapshots_every_step_is_stored():
    spec = _removal_only()
    g = make_geometric_grid(1e-3, 10.0, 20)
    tr = integrate(spec, g, StepControl(), 1.0)
    assert len(tr) == len(tr.steps) + 1
    assert tr.times[-1] == 1.0


def test_observers_see_every_accepted_step():
    spec = _removal_only()
    g = make_geometric_grid(1e-3, 10.0, 20)
    seen = []
    tr = integrate(spec, g, StepControl(), 1.0, [lambda t, z, b: seen.append(t)])
    assert seen == list(tr.times)


def test_initial_state_override_and_validation():
    spec = _removal_only()
    g = make_geometric_grid(1e-3, 10.0, 20)
    tr = integrate(spec, g, StepControl(), 0.5, initial_state=np.full(20, 2.0))
    assert np.allclose(tr.zetas[-1], 2.0 * math.exp(-0.4), rtol=1e-8)
    for bad in (np.ones(19), -np.ones(20), np.full(20, np.inf)):
        with pytest.raises(ValueError):
            integrate(spec, g, StepControl(), 0.5, initial_state=bad)


def test_dt_min_failure_carries_partial_trajectory():
    spec = ProblemSpec(ClassILinear(1.0), SourceSpec(1.0, 1.0), PowerGrowthRemoval(0.5, 0.5),
                       ExponentialInitial(1.0, 1.0), 10.0)
    g = make_geometric_grid(1e-3, 10.0, 20)
    ctl = StepControl(rel_tol=1e-14, abs_tol=1e-30, dt_init=0.1, dt_min=0.05)
    with pytest.raises(IntegrationError) as exc:
        integrate(spec, g, ctl, 1.0)
    assert exc.value.trajectory is not None and len(exc.value.trajectory) >= 1


def test_step_control_validation():
    with pytest.raises(ValueError):
        StepControl(rel_tol=0)
    with pytest.raises(ValueError):
        StepControl(dt_min=1.0, dt_init=0.1)
    h = StepControl().halved()
    assert h.rel_tol == 0.5e-8


def test_positivity_is_preserved_under_strong_removal():
    spec = ProblemSpec(SqrtBounded(1.0), SourceSpec(0.0, 1.0), PowerGrowthRemoval(50.0, 0.9),
                       ExponentialInitial(1.0, 1.0), 50.0)
    g = make_geometric_grid(1e-3, 50.0, 40)
    tr = integrate(spec, g, StepControl(), 1.0)
    assert tr.zetas.min() >= 0.0
    assert tr.min_relative >= -1e-12
    assert tr.clamped_mass <= 1e-9 * tr.m1()[0]
