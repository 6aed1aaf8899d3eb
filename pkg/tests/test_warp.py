import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdopt import warp
from rdopt.errors import InvalidCutoffError, OutOfDomainError
from rdopt.warp import WarpedGPModel, derive_warp, fit_warped, g_forward, g_inverse


def test_unit_cutoff_example():
    w = derive_warp(0.0, 1.0, 0.0)
    assert w.a_lower == 1.0 and w.y_tilde_cutoff == 0.0 and w.b_linear == 1.0
    assert g_inverse(w, 2.0) == 3.0
    assert g_inverse(w, -1.0) == pytest.approx(math.exp(-1))


def test_e_cutoff_example():
    w = derive_warp(0.0, math.e, 0.0)
    assert w.a_lower == pytest.approx(1 / math.e, rel=1e-15)
    assert w.y_tilde_cutoff == pytest.approx(math.e, rel=1e-15)
    assert w.b_linear == pytest.approx(0.0, abs=1e-15)


def test_invalid_cutoff():
    with pytest.raises(InvalidCutoffError):
        derive_warp(1.0, 1.0, 0.0)
    with pytest.raises(InvalidCutoffError):
        derive_warp(1.0, 0.5, 0.0)


def test_forward_rejects_values_at_or_below_bound():
    w = derive_warp(0.0, 1.0, 0.0)
    with pytest.raises(OutOfDomainError):
        g_forward(w, [0.5, 0.0])


def test_continuity_at_cutoff():
    w = derive_warp(-2.0, 3.0, 1.5)
    eps = 1e-9
    left, right = g_inverse(w, w.y_tilde_cutoff - eps), g_inverse(w, w.y_tilde_cutoff + eps)
    assert left == pytest.approx(w.y_lower_cutoff, abs=1e-8)
    assert right == pytest.approx(w.y_lower_cutoff, abs=1e-8)
    assert warp.g_inverse_derivative(w, w.y_tilde_cutoff - 1e-12) == pytest.approx(1.0, rel=1e-9)


def test_span_pinning_makes_affine_segment_identity():
    w = warp.warp_for_span(0.0, 7.0)
    assert w.b_linear == pytest.approx(0.0, abs=1e-12)
    assert g_inverse(w, 20.0) == pytest.approx(20.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 50), st.floats(-10, 10),
       st.lists(st.floats(-50, 50), min_size=1, max_size=20))
def test_round_trip_and_monotone(y_lower, span, b, yt):
    w = derive_warp(y_lower, y_lower + span, b)
    yt = np.sort(np.asarray(yt))
    y = g_inverse(w, yt)
    assert np.all(np.diff(y) >= 0)
    ok = y > w.y_lower  # values representable above the bound
    if ok.any():
        # rounding y costs eps*|y|, amplified by dg/dy = 1/(a (y - y_lower)) below the cutoff
        z = y[ok] - w.y_lower
        tol = 1e-10 + 4 * np.finfo(float).eps * np.abs(y[ok]) * np.maximum(1.0, 1.0 / (w.a_lower * z))
        assert np.all(np.abs(g_forward(w, y[ok]) - yt[ok]) <= tol)


def _positive_data(rng, n=60):
    X = rng.random((n, 2))
    y = 0.05 + 3.0 * np.exp(-((X - 0.6) ** 2).sum(1) / 0.05)
    return X, y


def test_fit_warped_predictions_respect_bound(rng):
    X, y = _positive_data(rng)
    m = fit_warped(X, y, restarts=2, seed=0)
    P = rng.random((200, 2)) * 1.4 - 0.2  # includes extrapolation
    pred = m.predict_bounded_batch(P)
    assert np.all(pred.median > 0.0)
    assert np.all(pred.sigma_minus >= 0) and np.all(pred.sigma_plus >= 0)
    np.testing.assert_allclose(m.predict_bounded_batch(X).median, y, rtol=1e-3)


def test_bounded_prediction_definitions(rng):
    X, y = _positive_data(rng)
    m = fit_warped(X, y, restarts=2, seed=0)
    p = np.array([0.3, 0.4])
    raw = m.gp.predict(p)
    sd = math.sqrt(raw.variance)
    b = warp.predict_bounded(m, p)
    assert b.median == pytest.approx(g_inverse(m.warp, raw.mean))
    hi, lo = g_inverse(m.warp, raw.mean + sd), g_inverse(m.warp, raw.mean - sd)
    assert b.variance_proxy == pytest.approx(((hi - lo) / 2) ** 2)
    med, var = m.predict_for_mc(p[None, :], "transformed")
    assert var[0] == pytest.approx(raw.variance)


def test_warped_likelihood_gradient(rng):
    X, y = _positive_data(rng, 30)
    theta = np.array([np.log(0.3), np.log(0.2), np.log(0.5)])
    _, g = warp.warped_likelihood(X, y, 0.0, theta)
    eps = 1e-6
    for i in range(3):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += eps
        tm[i] -= eps
        fd = (warp.warped_likelihood(X, y, 0.0, tp)[0] - warp.warped_likelihood(X, y, 0.0, tm)[0]) / (2 * eps)
        assert g[i] == pytest.approx(fd, rel=1e-4, abs=1e-5)


def test_constant_data_falls_back_to_affine(rng):
    X = rng.random((10, 2))
    m = fit_warped(X, np.full(10, 2.0), restarts=1, seed=0)
    assert m.affine_only
    assert m.predict_bounded([0.5, 0.5]).median == pytest.approx(2.0)


def test_fit_rejects_bound_violations(rng):
    X = rng.random((5, 1))
    with pytest.raises(OutOfDomainError):
        fit_warped(X, [1.0, 2.0, 0.0, 3.0, 1.0])


def test_serialization_round_trip(rng):
    X, y = _positive_data(rng, 30)
    m = fit_warped(X, y, restarts=1, seed=0)
    m2 = WarpedGPModel.from_dict(m.to_dict())
    P = rng.random((10, 2))
    np.testing.assert_array_equal(m.predict_bounded_batch(P).median, m2.predict_bounded_batch(P).median)
