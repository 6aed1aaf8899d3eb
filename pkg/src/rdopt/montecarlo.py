"""Percentile statistics and Monte Carlo robust estimates.

A robust estimate summarizes the distribution of an objective under
manufacturing scatter by its median and the asymmetric spreads
``sigma_minus = P50 - P16`` and ``sigma_plus = P84 - P50``. The Monte Carlo
error ``sqrt(Var/M)`` is strictly a standard error of the mean; it is applied
to the median as an approximation.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .errors import EmptySampleError, EstimateError, NotPositiveDefiniteError, ShapeError
from .seeding import as_generator

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class ManufacturingDistribution:
    """Multivariate normal scatter ``N(mean, covariance)`` around a nominal design."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float)).copy()
        if cov.shape != (mu.size, mu.size):
            raise ShapeError(f"covariance shape {cov.shape} does not match mean of size {mu.size}")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=0.0):
            raise NotPositiveDefiniteError("covariance must be symmetric")
        mu.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def diagonal(cls, mean, sigma) -> "ManufacturingDistribution":
        mu = np.atleast_1d(np.asarray(mean, dtype=float))
        s = np.broadcast_to(np.asarray(sigma, dtype=float), mu.shape)
        return cls(mu, np.diag(s ** 2))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def is_diagonal(self) -> bool:
        c = self.covariance
        return bool(np.all(c == np.diag(np.diag(c))))

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def shifted(self, mean) -> "ManufacturingDistribution":
        return ManufacturingDistribution(mean, self.covariance)

    def factor(self) -> np.ndarray:
        """Matrix ``A`` with ``A A^T = covariance``."""
        cov = self.covariance
        if self.is_diagonal:
            d = np.diag(cov)
            if np.any(d < 0):
                raise NotPositiveDefiniteError("negative variance on the diagonal")
            return np.diag(np.sqrt(d))
        try:
            return linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError:
            w, v = linalg.eigh(cov)
            if np.min(w) < -1e-12 * max(1.0, np.max(np.abs(w))):
                raise NotPositiveDefiniteError(
                    f"covariance has negative eigenvalue {np.min(w):g}") from None
            return v * np.sqrt(np.clip(w, 0.0, None))

    def to_dict(self):
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mean"], d["covariance"])


def sample_mvn(dist: ManufacturingDistribution, count: int, rng=None) -> np.ndarray:
    """Draw ``count`` i.i.d. samples, shape ``(count, N)``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    g = as_generator(rng)
    z = g.standard_normal((int(count), dist.dim))
    if dist.is_diagonal:
        return dist.mean + z * dist.sigma
    return dist.mean + z @ dist.factor().T


def _nonempty(values):
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptySampleError("statistic of an empty sample")
    return v


def percentile(values, q):
    """Linear-interpolation percentile, ``q`` in ``[0, 100]``."""
    return float(np.percentile(_nonempty(values), q))


def perc_deviations(values):
    """``(P50 - P16, P84 - P50)`` of the sample."""
    p16, p50, p84 = np.percentile(_nonempty(values), [16, 50, 84])
    return float(p50 - p16), float(p84 - p50)


def mc_error(values) -> float:
    """``sqrt(Var/M)`` with the population (1/M) variance."""
    v = _nonempty(values)
    return float(np.sqrt(np.var(v) / v.size))


@dataclass(frozen=True)
class RobustEstimate:
    median: float
    sigma_minus: float
    sigma_plus: float
    sigma_mc: float
    sigma_gp_sq: float
    sigma_median: float
    n_total: int
    converged: bool

    def __str__(self):
        return (f"({self.median:.4g} ± {self.sigma_median:.2g})"
                f"_-{self.sigma_minus:.2g}^+{self.sigma_plus:.2g}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def summarize(values, sigma_gp_sq=0.0, converged=True) -> RobustEstimate:
    v = _nonempty(values)
    p16, p50, p84 = np.percentile(v, [16, 50, 84])
    smc = mc_error(v)
    return RobustEstimate(
        median=float(p50), sigma_minus=float(p50 - p16), sigma_plus=float(p84 - p50),
        sigma_mc=smc, sigma_gp_sq=float(sigma_gp_sq),
        sigma_median=float(np.sqrt(sigma_gp_sq + smc * smc)),
        n_total=int(v.size), converged=bool(converged))


@dataclass(frozen=True)
class RobustConfig:
    """Settings of the iterative surrogate estimator.

    ``stop_mode='pseudocode'`` stops as soon as the relative MC error drops
    below ``rel_tol`` *or* ``n_cap`` samples are drawn. ``'at_least'`` keeps
    sampling until both ``n_cap`` samples are drawn and the error has
    converged, bounded by ``n_hard_cap``.
    """

    batch: int = 1000
    rel_tol: float = 1e-3
    n_cap: int = 50000
    stop_mode: str = "pseudocode"
    n_hard_cap: int = 500000
    variance_space: str = "bounded"

    def __post_init__(self):
        if self.batch < 1 or self.n_cap < 1:
            raise ValueError("batch and n_cap must be positive")
        if self.stop_mode not in ("pseudocode", "at_least"):
            raise ValueError(f"unknown stop_mode {self.stop_mode!r}")
        if self.variance_space not in ("bounded", "transformed"):
            raise ValueError(f"unknown variance_space {self.variance_space!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _keep_sampling(cfg: RobustConfig, rel, n_tot):
    if cfg.stop_mode == "pseudocode":
        return rel >= cfg.rel_tol and n_tot < cfg.n_cap
    return (rel >= cfg.rel_tol or n_tot < cfg.n_cap) and n_tot < cfg.n_hard_cap


def robust_estimate_surrogate(model, dist: ManufacturingDistribution, cfg: RobustConfig = RobustConfig(),
                              rng=None) -> RobustEstimate:
    """Iterative Monte Carlo estimate of the median under ``dist`` on a surrogate.

    Batches of ``cfg.batch`` samples are drawn and pushed through the
    surrogate until the relative Monte Carlo error of the collected medians
    falls below ``cfg.rel_tol`` or the sample cap is reached. The GP
    contribution ``sigma_gp_sq`` is the median of the per-sample predicted
    variances.

    ``model`` needs a ``predict_for_mc(points, variance_space)`` method
    returning median and variance arrays (see :class:`~rdopt.warp.WarpedGPModel`).
    """
    if dist.dim != model.dim:
        raise ShapeError(f"distribution has dimension {dist.dim}, surrogate {model.dim}")
    g = as_generator(rng)
    ys, ss = [], []
    n_tot = 0
    rel = np.inf
    while _keep_sampling(cfg, rel, n_tot):
        pts = sample_mvn(dist, cfg.batch, g)
        n_tot += cfg.batch
        y, s = model.predict_for_mc(pts, cfg.variance_space)
        ys.append(y)
        ss.append(s)
        y_tot = np.concatenate(ys)
        med = float(np.percentile(y_tot, 50))
        rel = mc_error(y_tot) / abs(med) if med != 0 else np.inf
    y_tot = np.concatenate(ys)
    sigma_gp_sq = float(np.percentile(np.concatenate(ss), 50))
    return summarize(y_tot, sigma_gp_sq, converged=rel < cfg.rel_tol)


def robust_estimate_direct(objective, dist: ManufacturingDistribution, count: int, parallelism: int = 1,
                           rng=None, max_fail_fraction: float = 0.1) -> RobustEstimate:
    """Median and spreads of the true objective under ``dist`` from ``count`` samples.

    Failed evaluations are excluded. More than ``max_fail_fraction`` failures
    raise :class:`EstimateError`.
    """
    from .objectives import evaluate_batch

    if count < 2:
        raise ValueError("count must be at least 2")
    pts = sample_mvn(dist, count, rng)
    values, failed = evaluate_batch(objective, pts, parallelism)
    n_fail = int(np.count_nonzero(failed))
    if n_fail > max_fail_fraction * count:
        raise EstimateError(f"{n_fail} of {count} objective evaluations failed")
    if n_fail:
        log.warning("excluded %d failed evaluations out of %d", n_fail, count)
    return summarize(values[~failed], 0.0, converged=True)
