import math

import numpy as np
import pytest
from scipy import stats

from rdopt.errors import EmptySampleError, EstimateError, NotPositiveDefiniteError, ShapeError
from rdopt.montecarlo import (ManufacturingDistribution, RobustConfig, RobustEstimate, mc_error, perc_deviations,
                              percentile, robust_estimate_direct, robust_estimate_surrogate, sample_mvn, summarize)


class StubSurrogate:
    """Known median function with a constant predictive variance."""

    def __init__(self, f, var=0.0, dim=1):
        self.f, self.var, self.dim = f, var, dim
        self.calls = 0

    def predict_for_mc(self, points, variance_space="bounded"):
        self.calls += 1
        return self.f(points), np.full(len(points), self.var)


def test_normal_reference_quantile():
    assert stats.norm.ppf(0.84) == pytest.approx(0.99446, abs=1e-5)
    assert stats.norm.ppf(0.5) == 0.0


def test_percentile_interpolates():
    assert percentile([1.0, 2.0, 3.0, 4.0], 50) == 2.5
    assert percentile([5.0], 16) == 5.0


def test_mc_error_two_values():
    assert mc_error([0.0, 2.0]) == pytest.approx(0.70710678, rel=1e-8)


def test_chi2_median(rng):
    x = rng.chisquare(2, 400_000)
    assert percentile(x, 50) == pytest.approx(2 * math.log(2), abs=0.01)


def test_exponential_deviations(rng):
    x = rng.exponential(1.0, 400_000)
    dm, dp = perc_deviations(x)
    assert dm == pytest.approx(math.log(2) + math.log(0.84), abs=0.01)
    assert dp == pytest.approx(-math.log(0.16) - math.log(2), abs=0.02)


def test_empty_sample():
    for fn in (mc_error, perc_deviations, lambda v: percentile(v, 50)):
        with pytest.raises(EmptySampleError):
            fn([])


def test_summarize_combines_errors(rng):
    v = rng.normal(3, 1, 1000)
    est = summarize(v, sigma_gp_sq=4e-4)
    assert est.sigma_median == pytest.approx(math.sqrt(4e-4 + est.sigma_mc ** 2))
    assert est.n_total == 1000 and est.converged
    assert RobustEstimate.from_dict(est.to_dict()) == est
    assert str(est).startswith("(")


def test_distribution_sampling(rng):
    cov = np.array([[4.0, 1.2], [1.2, 1.0]])
    d = ManufacturingDistribution([1.0, -2.0], cov)
    x = sample_mvn(d, 200_000, rng)
    np.testing.assert_allclose(x.mean(0), d.mean, atol=0.02)
    np.testing.assert_allclose(np.cov(x.T), cov, atol=0.05)


def test_distribution_validation():
    with pytest.raises(ShapeError):
        ManufacturingDistribution([0.0, 0.0], np.eye(3))
    with pytest.raises(NotPositiveDefiniteError):
        ManufacturingDistribution([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]]).factor()
    # singular but valid
    d = ManufacturingDistribution([0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]])
    a = d.factor()
    np.testing.assert_allclose(a @ a.T, d.covariance, atol=1e-12)


def test_zero_sigma_is_deterministic(rng):
    d = ManufacturingDistribution.diagonal([3.0], 0.0)
    est = robust_estimate_surrogate(StubSurrogate(lambda p: p[:, 0] ** 2), d, RobustConfig(batch=100), rng)
    assert est.median == 9.0 and est.sigma_mc == 0.0 and est.n_total == 100


def test_estimator_converges_to_truth(rng):
    # f = x on N(10, 1): median 10, deviations equal to the normal quantile
    s = StubSurrogate(lambda p: p[:, 0], var=1e-6)
    est = robust_estimate_surrogate(s, ManufacturingDistribution.diagonal([10.0], 1.0), RobustConfig(), rng)
    assert est.converged
    assert est.median == pytest.approx(10.0, abs=5 * est.sigma_median)
    assert est.sigma_minus == pytest.approx(0.99446, abs=0.05)
    assert est.sigma_gp_sq == pytest.approx(1e-6)
    assert est.n_total % 1000 == 0


def test_pseudocode_stop_respects_cap(rng):
    s = StubSurrogate(lambda p: p[:, 0])
    cfg = RobustConfig(batch=100, rel_tol=1e-9, n_cap=500)
    est = robust_estimate_surrogate(s, ManufacturingDistribution.diagonal([1.0], 1.0), cfg, rng)
    assert est.n_total == 500 and not est.converged


def test_at_least_mode_draws_the_cap(rng):
    s = StubSurrogate(lambda p: 100 + p[:, 0])
    d = ManufacturingDistribution.diagonal([0.0], 0.01)
    quick = robust_estimate_surrogate(s, d, RobustConfig(batch=100, n_cap=1000), rng)
    full = robust_estimate_surrogate(s, d, RobustConfig(batch=100, n_cap=1000, stop_mode="at_least"), rng)
    assert quick.n_total == 100
    assert full.n_total == 1000


def test_zero_median_never_converges(rng):
    s = StubSurrogate(lambda p: np.zeros(len(p)))
    cfg = RobustConfig(batch=100, n_cap=300)
    est = robust_estimate_surrogate(s, ManufacturingDistribution.diagonal([0.0], 1.0), cfg, rng)
    assert est.n_total == 300 and not est.converged


def test_dimension_mismatch(rng):
    with pytest.raises(ShapeError):
        robust_estimate_surrogate(StubSurrogate(lambda p: p[:, 0], dim=2),
                                  ManufacturingDistribution.diagonal([0.0], 1.0), RobustConfig(), rng)


def test_direct_estimate_and_failures(rng):
    d = ManufacturingDistribution.diagonal([0.0, 0.0], 1.0)
    est = robust_estimate_direct(lambda p: float(p @ p), d, 20_000, rng=rng)
    assert est.median == pytest.approx(2 * math.log(2), abs=0.05)  # chi2(2)

    def flaky(p):
        if p[0] > 0:
            raise RuntimeError("solver diverged")
        return 1.0

    with pytest.raises(EstimateError):
        robust_estimate_direct(flaky, d, 200, rng=rng)


def test_mc_error_scales_with_sample_size(rng):
    small = np.mean([mc_error(rng.normal(size=1000)) for _ in range(20)])
    large = np.mean([mc_error(rng.normal(size=4000)) for _ in range(20)])
    assert large / small == pytest.approx(0.5, rel=0.1)
