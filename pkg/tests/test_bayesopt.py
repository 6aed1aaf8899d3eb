import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from rdopt.bayesopt import BOState, bo_run, expected_improvement, propose_next
from rdopt.domain import BoxDomain


def ei_quadrature(mu, sd, f_best):
    f = lambda x: (f_best - x) * stats.norm.pdf(x, mu, sd)
    return integrate.quad(f, -np.inf, f_best, epsabs=1e-12, epsrel=1e-12, limit=200)[0]


def test_standard_normal_value():
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(1 / np.sqrt(2 * np.pi), abs=1e-12)
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(0.39894, abs=1e-5)


def test_zero_variance():
    assert expected_improvement(1.0, 0.0, 3.0) == 2.0
    assert expected_improvement(3.0, 0.0, 1.0) == 0.0


def test_matches_quadrature():
    for mu in (-1.0, 0.0, 2.0):
        for sd in (0.1, 1.0, 5.0):
            assert expected_improvement(mu, sd ** 2, 0.5) == pytest.approx(ei_quadrature(mu, sd, 0.5), abs=1e-8)


def test_vectorized():
    ei = expected_improvement(np.array([0.0, 1.0]), np.array([1.0, 4.0]), 0.0)
    assert ei.shape == (2,)
    assert ei[0] == expected_improvement(0.0, 1.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(1e-3, 10), st.floats(-10, 10), st.floats(0, 5))
def test_nonnegative_and_monotone(mu, sd, f_best, delta):
    a = expected_improvement(mu, sd ** 2, f_best)
    b = expected_improvement(mu, sd ** 2, f_best + delta)
    assert a >= 0 and b >= a - 1e-12


def quad2(p):
    p = np.asarray(p)
    return float((p[0] - 0.3) ** 2 + 2 * (p[1] + 0.2) ** 2)


def test_minimizes_a_quadratic():
    dom = BoxDomain([-1.0, -1.0], [1.0, 1.0])
    res = bo_run(quad2, dom, 20, mode="minimize", rng=0, restarts=16)
    assert res.best_value < 0.01
    assert len([h for h in res.history if h["source"] != "seed"]) == 20
    assert all(dom.contains(h["point"]) for h in res.history)


def test_maximize_mirrors_minimize():
    dom = BoxDomain([-1.0, -1.0], [1.0, 1.0])
    a = bo_run(quad2, dom, 8, mode="minimize", rng=3, restarts=8)
    b = bo_run(lambda p: -quad2(p), dom, 8, mode="maximize", rng=3, restarts=8)
    np.testing.assert_array_equal([h["point"] for h in a.history], [h["point"] for h in b.history])
    assert b.best_value == -a.best_value


def test_zero_budget_returns_best_seed():
    dom = BoxDomain([0.0], [1.0])
    res = bo_run(lambda p: 0.0, dom, 0, [([0.1], 5.0), ([0.2], 1.0)], mode="minimize")
    assert res.best_value == 1.0 and res.best_point.tolist() == [0.2]


def test_failed_evaluations_are_recorded_and_retried():
    dom = BoxDomain([0.0], [1.0])
    calls = []

    def f(p):
        calls.append(p[0])
        if len(calls) == 3:
            raise RuntimeError("diverged")
        return (p[0] - 0.5) ** 2

    res = bo_run(f, dom, 6, mode="minimize", rng=0, restarts=8)
    assert len(calls) == 6
    assert sum(h["failed"] for h in res.history) == 1
    assert all(np.isfinite(h["value"]) for h in res.history if not h["failed"])


def test_propose_next_needs_two_observations():
    state = BOState(BoxDomain([0.0], [1.0]))
    state.add([0.5], 1.0)
    with pytest.raises(ValueError):
        propose_next(state)
    state.add([0.1], 2.0)
    prop = propose_next(state, restarts=8, rng=0)
    assert 0.0 <= prop.point[0] <= 1.0


def test_flat_objective_falls_back_to_sobol():
    dom = BoxDomain([0.0, 0.0], [1.0, 1.0])
    res = bo_run(lambda p: 1.0, dom, 5, mode="minimize", rng=0, restarts=8)
    pts = np.array([h["point"] for h in res.history])
    assert len(np.unique(pts, axis=0)) == len(pts)
