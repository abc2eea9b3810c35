import math

import pytest
from hypothesis import given, settings, strategies as st

from asaga.theory import (DivergentConfigError, ProblemConstants, RegimeError, asaga_max_a, asaga_speedup_ok,
                          hogwild_ball_radius, hogwild_max_a, kromagnon_max_a, saga_rate, sgd_ball_radius,
                          sgd_rate, svrg_rate, svrg_theta, tau_upper_bound)


def test_saga_rate_examples():
    assert saga_rate(100, 10, 1) == 1 / 500
    assert saga_rate(10, 1000, 1) == 1 / 5000
    assert saga_rate(50, 50, 0.5) == 0.5 / 50 / 5
    with pytest.raises(ValueError):
        saga_rate(10, 10, 1.5)


def test_asaga_max_a():
    assert asaga_max_a(0, 0.3, 100) == 1 / 32
    assert math.isclose(asaga_max_a(5, 1.0, 1e12), 1 / (32 * 6), rel_tol=1e-9)
    with pytest.raises(RegimeError):
        asaga_max_a(10, 0.5, 10, n=100)
    asaga_max_a(9, 0.5, 10, n=100)


def test_speedup_regimes():
    v = asaga_speedup_ok(10**6, 1e3, 1.0, 10)
    assert v.ok and v.regime == "well-conditioned" and v.threshold == 1000
    v = asaga_speedup_ok(100, 1000, 1.0, 10)
    assert not v.ok and v.regime == "ill-conditioned"
    n = 10**4
    assert asaga_speedup_ok(n, 10 * n, 1 / n, 1).threshold == pytest.approx(math.sqrt(n))


def test_svrg_theta():
    L, mu, g, m = 1.0, 0.01, 0.05, 1000
    classical = (1 / (mu * g * m) + 2 * L * g) / (1 - 2 * L * g)
    assert svrg_theta(g, m, L, mu, 0.5, 0) == classical
    n = 1000  # kappa = n, gamma = 1/(10 L): m = 50 n is the O(n) constant giving exactly 0.5
    assert svrg_theta(0.1, 50 * n, 1.0, 1.0 / n, 1.0, 0) == pytest.approx(0.5)
    assert svrg_theta(0.1, 20 * n, 1.0, 1.0 / n, 1.0, 0) == pytest.approx(0.875)
    with pytest.raises(DivergentConfigError):
        svrg_theta(1.0, 10, 1.0, 0.1, 1.0, 0)
    assert svrg_theta(1e-6, 10, 1.0, 0.1, 1.0, 0) > 1e5


def test_kromagnon():
    p = kromagnon_max_a(0, 0.5, 100, n=1000)
    assert p.a == 0.25 and p.m == 32 * 100 / 0.25 and p.rho == svrg_rate(1000, 100, 0.25)
    assert kromagnon_max_a(4, 1.0, 1e9).a == pytest.approx(1 / 36)
    assert kromagnon_max_a(5, 0.1, 50).m > p.m
    assert p.gamma(2.0) == 0.25 / 8


def test_hogwild():
    assert hogwild_max_a(0, 0.4, 10) == 1 / 5
    assert hogwild_max_a(100, 1e-6, 1.0) == 1.0 / 100  # kappa/tau cap binds
    assert hogwild_max_a(100, 1.0, 1e6) < 1e6 / 100
    assert hogwild_ball_radius(0.1, 0.01, 2.0, 0.3, 0) == 8 * 0.1 * 2.0 / 0.01
    assert hogwild_ball_radius(0.1, 0.01, 2.0, 0.3, 0) == 4 * sgd_ball_radius(0.1, 0.01, 2.0)
    assert sgd_rate(100, 0.5) == 0.005
    assert tau_upper_bound(4, 2.5) == 7.5


def test_problem_constants():
    c = ProblemConstants(100, 2.0, 0.01, 0.05, 3)
    assert c.kappa == 200
    with pytest.raises(ValueError):
        ProblemConstants(100, 2.0, 0.01, 0.001)
    with pytest.raises(ValueError):
        ProblemConstants(100, 2.0, 0.01, 0.5, -1)


triples = st.tuples(st.integers(0, 10**4), st.floats(1e-6, 1.0), st.floats(1.0, 1e8))


@settings(max_examples=300, deadline=None)
@given(triples, st.integers(1, 100))
def test_monotone_in_tau(t, k):
    tau, delta, kappa = t
    assert asaga_max_a(tau + k, delta, kappa) <= asaga_max_a(tau, delta, kappa)
    assert hogwild_max_a(tau + k, delta, kappa) <= hogwild_max_a(tau, delta, kappa)
    assert kromagnon_max_a(tau + k, delta, kappa).a <= kromagnon_max_a(tau, delta, kappa).a


@settings(max_examples=300, deadline=None)
@given(triples, st.floats(1.0, 100.0))
def test_monotone_in_delta(t, factor):
    tau, delta, kappa = t
    big = min(1.0, delta * factor)
    assert asaga_max_a(tau, big, kappa) <= asaga_max_a(tau, delta, kappa) * (1 + 1e-12)
    assert hogwild_max_a(tau, big, kappa) <= hogwild_max_a(tau, delta, kappa) * (1 + 1e-12)
    assert kromagnon_max_a(tau, big, kappa).a <= kromagnon_max_a(tau, delta, kappa).a
