"""Exact Gaussian-process regression with a Matérn 5/2 kernel.

The model has a constant prior mean ``mu0``, kernel amplitude ``sigma0_sq``
and one length scale per input axis. There is no noise term: a small
diagonal jitter, escalated only when the Cholesky factorization fails, is the
sole regularizer. Inputs are used in their raw units.

Hyperparameters are fitted by maximizing the log marginal likelihood. The
mean and amplitude are profiled out in closed form, so the numerical search
runs over the log length scales only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import cdist

from .errors import FitError, NotPositiveDefiniteError, NumericError, ShapeError
from .seeding import as_generator

log = logging.getLogger(__name__)

SQRT5 = np.sqrt(5.0)
LOG2PI = np.log(2.0 * np.pi)

JITTER_START = 1e-10
JITTER_MAX = 1e-4
LENGTH_SCALE_RANGE = (1e-3, 10.0)
AMPLITUDE_RANGE = (1e-6, 1e6)

SCHEMA_VERSION = 1
PREDICT_BLOCK = 64


@dataclass(frozen=True, eq=False)
class GPHyperparams:
    mu0: float
    sigma0_sq: float
    length_scales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float)).copy()
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError(f"length scales must be positive and finite, got {ls}")
        if not (np.isfinite(self.sigma0_sq) and self.sigma0_sq > 0):
            raise ValueError(f"sigma0_sq must be positive, got {self.sigma0_sq}")
        if not np.isfinite(self.mu0):
            raise ValueError("mu0 must be finite")
        ls.setflags(write=False)
        object.__setattr__(self, "length_scales", ls)
        object.__setattr__(self, "mu0", float(self.mu0))
        object.__setattr__(self, "sigma0_sq", float(self.sigma0_sq))

    @property
    def dim(self):
        return self.length_scales.size

    def to_dict(self):
        return {"mu0": self.mu0, "sigma0_sq": self.sigma0_sq,
                "length_scales": self.length_scales.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mu0"], d["sigma0_sq"], d["length_scales"])


class Prediction(NamedTuple):
    """Posterior mean and variance; scalars for one point, arrays for a batch."""

    mean: float
    variance: float


def _matern_from_r(r):
    return (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)


def correlation_matrix(x1, x2, length_scales):
    """Unit-amplitude Matérn 5/2 correlation between the rows of two arrays."""
    r = cdist(x1 / length_scales, x2 / length_scales)
    return _matern_from_r(r)


def matern52(p, p_prime, hyper: GPHyperparams) -> float:
    """Matérn 5/2 covariance ``sigma0_sq * (1 + √5 r + 5/3 r²) exp(-√5 r)``."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(p_prime, dtype=float).ravel()
    if p.shape != q.shape or p.size != hyper.dim:
        raise ShapeError(f"points of size {p.size}, {q.size} for {hyper.dim} length scales")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise NumericError("kernel arguments must be finite")
    r = np.sqrt(np.sum(((p - q) / hyper.length_scales) ** 2))
    return float(hyper.sigma0_sq * _matern_from_r(r))


def factorize(corr, jitter_start=JITTER_START, jitter_max=JITTER_MAX):
    """Cholesky factor of ``corr + jitter*I`` with escalating jitter.

    Returns ``(L, jitter)``. ``corr`` is a correlation matrix (unit diagonal),
    so the jitter is relative to the kernel amplitude.
    """
    n = corr.shape[0]
    jitter = jitter_start
    while jitter <= jitter_max * (1 + 1e-9):
        a = corr.copy()
        a[np.diag_indices(n)] += jitter
        try:
            return linalg.cholesky(a, lower=True, check_finite=False), jitter
        except linalg.LinAlgError:
            jitter *= 10.0
    raise NotPositiveDefiniteError(
        f"kernel matrix of size {n} not positive definite with jitter up to {jitter_max:g}")


class GPModel:
    """A Gaussian process conditioned on training data.

    Instances are immutable after construction and safe to share between
    threads for prediction.
    """

    def __init__(self, hyper: GPHyperparams, train_points, train_values, *, jitter_start=JITTER_START):
        X = np.atleast_2d(np.asarray(train_points, dtype=float))
        y = np.asarray(train_values, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ShapeError(f"{X.shape[0]} points but {y.size} values")
        if X.shape[1] != hyper.dim:
            raise ShapeError(f"points have dimension {X.shape[1]}, hyperparameters {hyper.dim}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NumericError("training data must be finite")
        self.hyper = hyper
        self.train_points = X
        self.train_values = y
        self._scaled = X / hyper.length_scales
        corr = _matern_from_r(cdist(self._scaled, self._scaled))
        self.chol, self.jitter = factorize(corr, jitter_start)
        resid = y - hyper.mu0
        # alpha = K^-1 (y - mu0) with K = sigma0_sq * (corr + jitter I)
        self.alpha = linalg.cho_solve((self.chol, True), resid, check_finite=False) / hyper.sigma0_sq
        for arr in (self.train_points, self.train_values, self.chol, self.alpha, self._scaled):
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.hyper.dim

    @property
    def n_train(self) -> int:
        return self.train_values.size

    def log_marginal_likelihood(self) -> float:
        """Log evidence of the training values under the current hyperparameters."""
        h = self.hyper
        m = self.n_train
        resid = self.train_values - h.mu0
        quad = float(resid @ self.alpha)
        logdet = m * np.log(h.sigma0_sq) + 2.0 * np.sum(np.log(np.diag(self.chol)))
        return -0.5 * quad - 0.5 * logdet - 0.5 * m * LOG2PI

    def kernel_matrix(self) -> np.ndarray:
        """``K`` including the jitter actually used for the factorization."""
        k = self.hyper.sigma0_sq * _matern_from_r(cdist(self._scaled, self._scaled))
        k[np.diag_indices_from(k)] += self.hyper.sigma0_sq * self.jitter
        return k

    def predict_batch(self, points) -> Prediction:
        """Posterior mean and variance at each row of ``points``.

        Returns a :class:`Prediction` whose fields are arrays of length
        ``len(points)``. The variance is clamped to ``[0, sigma0_sq]``.
        """
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P[None, :]
        if P.ndim != 2 or P.shape[1] != self.dim:
            raise ShapeError(f"expected points of shape (n, {self.dim}), got {P.shape}")
        h = self.hyper
        n = P.shape[0]
        # Fixed-size padded blocks make every row's floating-point result
        # independent of batch size and position.
        nblk = -(-n // PREDICT_BLOCK)
        padded = np.zeros((nblk * PREDICT_BLOCK, self.dim))
        padded[:n] = P
        kstar = h.sigma0_sq * _matern_from_r(cdist(padded / h.length_scales, self._scaled))
        mean = np.empty(nblk * PREDICT_BLOCK)
        quad = np.empty(nblk * PREDICT_BLOCK)
        for b in range(nblk):
            sl = slice(b * PREDICT_BLOCK, (b + 1) * PREDICT_BLOCK)
            k = kstar[sl]
            mean[sl] = h.mu0 + k @ self.alpha
            v = linalg.solve_triangular(self.chol, k.T, lower=True, check_finite=False)
            quad[sl] = np.einsum("ij,ij->j", v, v)
        mean = mean[:n]
        # K = sigma0_sq * L L^T, so k^T K^-1 k = |L^-1 k|^2 / sigma0_sq
        var = h.sigma0_sq - quad[:n] / h.sigma0_sq
        return Prediction(mean, np.clip(var, 0.0, h.sigma0_sq))

    def predict(self, p_star) -> Prediction:
        p = np.asarray(p_star, dtype=float).ravel()
        if p.size != self.dim:
            raise ShapeError(f"expected {self.dim} coordinates, got {p.size}")
        pred = self.predict_batch(p[None, :])
        return Prediction(float(pred.mean[0]), float(pred.variance[0]))

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "gp",
                "hyper": self.hyper.to_dict(),
                "train_points": self.train_points.tolist(),
                "train_values": self.train_values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GPModel":
        from .serialization import check_schema

        check_schema(d, SCHEMA_VERSION)
        return cls(GPHyperparams.from_dict(d["hyper"]), d["train_points"], d["train_values"])


# --------------------------------------------------------------------------
# hyperparameter fitting


class ProfiledLikelihood(NamedTuple):
    value: float
    grad_log_ls: np.ndarray
    alpha: np.ndarray  # C^-1 (y - mu0); kernel-amplitude free
    mu0: float
    sigma0_sq: float


def value_scale(y):
    """Reference variance used to bound the kernel amplitude."""
    v = float(np.var(y))
    floor = 1e-12 * max(1.0, float(np.mean(y)) ** 2)
    return max(v, floor)


def profiled_likelihood(X, y, log_ls, var_scale, grad=True) -> ProfiledLikelihood:
    """Log marginal likelihood with ``mu0`` and ``sigma0_sq`` maximized out.

    ``sigma0_sq`` is clamped to ``AMPLITUDE_RANGE * var_scale``. The gradient
    with respect to the log length scales is exact for the profiled value.
    """
    ls = np.exp(log_ls)
    m = y.size
    scaled = X / ls
    r = cdist(scaled, scaled)
    e = np.exp(-SQRT5 * r)
    corr = (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * e
    L, _ = factorize(corr)
    ones = np.ones(m)
    cy = linalg.cho_solve((L, True), np.column_stack([y, ones]), check_finite=False)
    mu0 = float(ones @ cy[:, 0] / (ones @ cy[:, 1]))
    alpha = cy[:, 0] - mu0 * cy[:, 1]
    resid = y - mu0
    quad = float(resid @ alpha)
    lo, hi = AMPLITUDE_RANGE
    sigma0_sq = float(np.clip(quad / m, lo * var_scale, hi * var_scale))
    logdet_c = 2.0 * np.sum(np.log(np.diag(L)))
    value = -0.5 * quad / sigma0_sq - 0.5 * m * np.log(sigma0_sq) - 0.5 * logdet_c - 0.5 * m * LOG2PI
    g = np.zeros(ls.size)
    if grad:
        cinv = linalg.cho_solve((L, True), np.eye(m), check_finite=False)
        w = (np.outer(alpha, alpha) / sigma0_sq - cinv) * ((5.0 / 3.0) * (1.0 + SQRT5 * r) * e)
        for i in range(ls.size):
            d = scaled[:, i][:, None] - scaled[:, i][None, :]
            g[i] = 0.5 * np.sum(w * d * d)
    return ProfiledLikelihood(float(value), g, alpha, mu0, sigma0_sq)


def length_scale_bounds(edges):
    lo, hi = LENGTH_SCALE_RANGE
    return [(np.log(lo * e), np.log(hi * e)) for e in edges]


def axis_edges(X, domain=None):
    """Per-axis edge lengths used to set length-scale search ranges."""
    if domain is not None:
        edges = np.asarray(domain.width, dtype=float)
    else:
        edges = np.ptp(X, axis=0)
    return np.where(edges > 0, edges, 1.0)


def initial_log_ls(edges, restarts, rng):
    """Starting points: one deterministic guess then log-uniform draws."""
    base = np.log(0.25 * edges)
    starts = [base]
    for _ in range(restarts - 1):
        starts.append(np.log(edges * np.exp(rng.uniform(np.log(0.02), np.log(2.0), size=edges.size))))
    return starts


def canonical_subset(X, n_max, rng):
    """Row indices of a subset of at most ``n_max`` rows.

    Rows are first sorted lexicographically so the choice does not depend on
    the order of the input rows.
    """
    m = X.shape[0]
    order = np.lexsort(X.T[::-1])
    if n_max is None or m <= n_max:
        return order
    pick = np.sort(rng.choice(m, size=n_max, replace=False))
    return order[pick]


def fit(train_points, train_values, restarts: int = 8, seed=0, *, domain=None,
        max_fit_points: int | None = 1024, init_log_ls=None) -> GPModel:
    """Fit hyperparameters by multi-start L-BFGS-B and condition on the data.

    Parameters
    ----------
    train_points : array_like, shape (M, N)
    train_values : array_like, shape (M,)
    restarts : int
        Number of local optimizations; the best optimum is kept.
    seed : int or Generator
        Controls the random restart locations.
    domain : BoxDomain, optional
        Sets the length-scale search range; defaults to the data extent.
    max_fit_points : int or None
        The likelihood is optimized on a random subset of at most this many
        rows (all rows are still used for conditioning).
    init_log_ls : array_like, optional
        Extra starting point, e.g. a previous optimum.

    Raises
    ------
    FitError
        If every restart fails.
    """
    X = np.atleast_2d(np.asarray(train_points, dtype=float))
    y = np.asarray(train_values, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ShapeError(f"{X.shape[0]} points but {y.size} values")
    if y.size < 2:
        raise ValueError("at least two training points are required")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericError("training data must be finite")
    rng = as_generator(seed)
    idx = canonical_subset(X, max_fit_points, rng)
    Xs, ys = X[idx], y[idx]
    edges = axis_edges(X, domain)
    bounds = length_scale_bounds(edges)
    vscale = value_scale(ys)

    def objective(theta):
        try:
            pl = profiled_likelihood(Xs, ys, theta, vscale)
        except NotPositiveDefiniteError:
            return 1e300, np.zeros_like(theta)
        return -pl.value, -pl.grad_log_ls

    starts = initial_log_ls(edges, max(1, int(restarts)), rng)
    if init_log_ls is not None:
        starts.insert(0, np.asarray(init_log_ls, dtype=float))
    best, errors = None, []
    for x0 in starts:
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        try:
            res = optimize.minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                                    options={"maxiter": 200})
        except (ValueError, ArithmeticError) as exc:
            errors.append(repr(exc))
            continue
        if not np.isfinite(res.fun) or res.fun >= 1e299:
            errors.append(f"start {x0}: {res.message}")
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FitError("all hyperparameter restarts failed: " + "; ".join(errors))
    return condition(X, y, best.x, vscale if len(idx) == y.size else value_scale(y))


def condition(X, y, log_ls, var_scale=None) -> GPModel:
    """Build a model for fixed length scales, profiling ``mu0``/``sigma0_sq`` on all data."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    pl = profiled_likelihood(X, y, np.asarray(log_ls, dtype=float),
                             value_scale(y) if var_scale is None else var_scale, grad=False)
    return GPModel(GPHyperparams(pl.mu0, pl.sigma0_sq, np.exp(log_ls)), X, y)
