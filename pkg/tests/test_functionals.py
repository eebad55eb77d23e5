import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coagsed.functionals import (MASS, ONE, ONE_PLUS_MASS, SQRT_CAP, ConvexFn, TailProfile,
                                 build_dlvp, build_sigma_pair, check_convexp_identities,
                                 gamma_constants, indicator, moment, moment_report, parse_weight,
                                 quadratic_sigma, size_tail_profile, weak_form_residual)
from coagsed.fixtures import FIXTURES, fixture
from coagsed.model import ExponentialInitial, SourceSpec

from helpers import run_fixture


def test_weights():
    p = np.array([0.5, 1.0, 1.5, 4.0])
    assert np.array_equal(ONE(p), np.ones(4))
    assert np.array_equal(MASS(p), p)
    assert np.array_equal(ONE_PLUS_MASS(p), 1 + p)
    assert np.array_equal(SQRT_CAP(p), [1.0, 1.0, np.sqrt(1.5), 2.0])
    assert np.array_equal(indicator(1.0, 2.0)(p), [0.0, 0.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        indicator(2.0, 1.0)


def test_parse_weight():
    assert parse_weight(" One ") is ONE
    assert parse_weight("sqrt_cap") is SQRT_CAP
    w = parse_weight("indicator:1:2")
    assert w.bounded and w(np.array([1.5]))[0] == 1.0
    for bad in ("indicator:2:1", "indicator:1", "cube"):
        with pytest.raises(ValueError):
            parse_weight(bad)


def test_quadratic_sigma_is_p_squared():
    s = quadratic_sigma()
    p = np.geomspace(1e-3, 1e3, 50)
    assert np.allclose(s(p), p * p, rtol=1e-14)
    assert np.allclose(s.derivative(p), 2 * p, rtol=1e-14)


def test_convex_fn_validation():
    with pytest.raises(ValueError):
        ConvexFn(np.array([0.0, 1.0]), np.array([1.0, 2.0]))             # sigma'(0) != 0
    with pytest.raises(ValueError):
        ConvexFn(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 3.0]))   # sigma' convex, not concave
    with pytest.raises(ValueError):
        ConvexFn(np.array([0.0, 1.0]), np.array([0.0, 1.0]), tail="cubic")


def test_convex_fn_value_is_integral_of_derivative():
    s = ConvexFn(np.array([0.0, 1.0, 3.0, 6.0]), np.array([0.0, 1.0, 2.0, 3.0]))
    p = np.linspace(0.0, 40.0, 400001)
    d = s.derivative(p)
    num = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(p))])
    assert np.allclose(s(p[::1000]), num[::1000], rtol=1e-8, atol=1e-12)


def test_build_dlvp_properties():
    prof = size_tail_profile(ExponentialInitial(1.0, 1.0).size_tail, SourceSpec(1.0, 2.0).size_tail)
    s = build_dlvp(prof)
    assert s.knots[0] == 0.0 and s.knots.size > 5
    # superlinear: sigma(p)/p grows without bound
    assert s(1e6) / 1e6 > s(1e3) / 1e3 > s(10.0) / 10.0
    with pytest.raises(ValueError):
        build_dlvp(TailProfile(np.array([0.0, 1.0]), np.array([1.0, 1.0])))
    with pytest.raises(ValueError):
        build_dlvp(TailProfile(np.array([0.0, 1.0]), np.array([0.0, 0.0])))


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_built_sigma_pairs_satisfy_convexity_identities(name):
    spec = fixture(name).spec
    rng = np.random.default_rng(11)
    pairs = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=(500, 2)))
    for s in build_sigma_pair(spec) + (quadratic_sigma(),):
        assert check_convexp_identities(s, pairs).worst >= -1e-10


@given(a=st.floats(1e-6, 1e6), b=st.floats(1e-6, 1e6))
@settings(max_examples=200, deadline=None)
def test_quadratic_identities_property(a, b):
    rep = check_convexp_identities(quadratic_sigma(), [(a, b)])
    assert rep.worst >= -1e-10


def test_violation_is_detected():
    class Cubic:
        def __call__(self, p):
            return np.asarray(p) ** 3

        def derivative(self, p):
            return 3 * np.asarray(p) ** 2
    rep = check_convexp_identities(Cubic(), [(2.0, 3.0)])
    assert rep.upper4 < 0           # a sigma'(a) = 3 sigma(a) > 2 sigma(a)


def test_gamma_constants_for_p_squared():
    ini, src = ExponentialInitial(1.0, 1.0), SourceSpec(1.0, 1.0)
    for nodes in (16, 32):
        g = gamma_constants(quadratic_sigma(), quadratic_sigma(), ini, src, nodes=nodes)
        assert g.gamma1 == pytest.approx(2.0, rel=1e-10)       # int p^2 e^-p
        assert g.gamma3 == pytest.approx(2.0, rel=1e-10)
        assert g.gamma2 == pytest.approx(0.5, rel=1e-10)       # int e^-2p
        assert g.gamma4 == pytest.approx(0.5, rel=1e-10)
    g = gamma_constants(quadratic_sigma(), quadratic_sigma(), ini, SourceSpec(0.0, 1.0))
    assert g.gamma3 == g.gamma4 == 0.0


def test_moment_and_report():
    r = run_fixture("constant_small")
    g = r.fixture.grid
    z = r.traj.zetas[0]
    assert moment(z, ONE, g) == pytest.approx(float(z @ g.widths))
    rep = moment_report(r.traj, 0, [ONE_PLUS_MASS])
    assert rep.weighted["one_plus_mass"] == pytest.approx(rep.M0 + rep.M1)
    assert rep.Lambda is None


def test_weak_form_residual_small_and_refuses_unbounded_weights():
    r = run_fixture("class1")
    for w in (ONE, indicator(1.0, 2.0)):
        assert weak_form_residual(r.traj, r.tables, w, 1.0) < 1e-3
        assert weak_form_residual(r.traj, r.tables, w, 0.0) == 0.0
    with pytest.raises(ValueError, match="unbounded"):
        weak_form_residual(r.traj, r.tables, MASS, 1.0)
