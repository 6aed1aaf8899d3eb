"""Gaussian processes for data bounded from below.

Observations ``y > y_lower`` are mapped to an unbounded space by a monotone
transform ``g`` and a :mod:`rdopt.gp` model is trained on ``g(y)``.
Predictions are mapped back with ``g_inverse``, which is an exponential
segment near the bound joined with value and slope continuity to an affine
segment of slope one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from . import gp
from .errors import FitError, InvalidCutoffError, NotPositiveDefiniteError, OutOfDomainError, ShapeError
from .seeding import as_generator

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class WarpParams:
    """Parameters of the piecewise transform.

    Only ``y_lower``, ``y_lower_cutoff`` and ``b_lower`` are free; use
    :func:`derive_warp` to construct a consistent instance.
    """

    y_lower: float
    y_lower_cutoff: float
    b_lower: float
    a_lower: float
    b_linear: float
    y_tilde_cutoff: float
    m_linear: float = 1.0

    @property
    def span(self) -> float:
        return self.y_lower_cutoff - self.y_lower

    def to_dict(self):
        return {"y_lower": self.y_lower, "y_lower_cutoff": self.y_lower_cutoff, "b_lower": self.b_lower}

    @classmethod
    def from_dict(cls, d):
        return derive_warp(d["y_lower"], d["y_lower_cutoff"], d["b_lower"])


def derive_warp(y_lower: float, y_lower_cutoff: float, b_lower: float) -> WarpParams:
    """Solve for the segment parameters that make ``g_inverse`` C¹.

    The exponential segment ``y_lower + exp(a (ỹ - b_lower))`` reaches
    ``y_lower_cutoff`` with slope one at ``y_tilde_cutoff``, where the affine
    segment ``ỹ + b_linear`` takes over.
    """
    y_lower, y_lower_cutoff, b_lower = float(y_lower), float(y_lower_cutoff), float(b_lower)
    span = y_lower_cutoff - y_lower
    if not (np.isfinite(span) and span > 0):
        raise InvalidCutoffError(
            f"cutoff {y_lower_cutoff!r} must lie above the lower bound {y_lower!r}")
    a = 1.0 / span
    yt_c = b_lower + span * np.log(span)
    return WarpParams(y_lower, y_lower_cutoff, b_lower, float(a), float(y_lower_cutoff - yt_c), float(yt_c))


def g_inverse(warp: WarpParams, y_tilde):
    """Map unbounded values back to ``(y_lower, inf)``."""
    yt = np.asarray(y_tilde, dtype=float)
    low = warp.y_lower + np.exp(warp.a_lower * (np.minimum(yt, warp.y_tilde_cutoff) - warp.b_lower))
    out = np.where(yt < warp.y_tilde_cutoff, low, yt + warp.b_linear)
    return float(out) if out.ndim == 0 else out


def g_forward(warp: WarpParams, y):
    """Map bounded values ``y > y_lower`` to the unbounded space."""
    yv = np.asarray(y, dtype=float)
    if np.any(~(yv > warp.y_lower)):
        raise OutOfDomainError(f"values must exceed the lower bound {warp.y_lower}")
    below = warp.b_lower + np.log(np.minimum(yv, warp.y_lower_cutoff) - warp.y_lower) / warp.a_lower
    out = np.where(yv < warp.y_lower_cutoff, below, yv - warp.b_linear)
    return float(out) if out.ndim == 0 else out


def g_inverse_derivative(warp: WarpParams, y_tilde):
    yt = np.asarray(y_tilde, dtype=float)
    low = warp.a_lower * np.exp(warp.a_lower * (np.minimum(yt, warp.y_tilde_cutoff) - warp.b_lower))
    return np.where(yt < warp.y_tilde_cutoff, low, 1.0)


def warp_for_span(y_lower: float, span: float) -> WarpParams:
    """Transform with the given cutoff span whose affine segment is the identity.

    ``b_lower`` only shifts all transformed values by a constant, which the
    GP prior mean absorbs exactly, so it is pinned to make ``b_linear = 0``.
    """
    return derive_warp(y_lower, y_lower + span, y_lower + span - span * np.log(span))


class BoundedPrediction(NamedTuple):
    median: float
    sigma_minus: float
    sigma_plus: float
    variance_proxy: float


class WarpedGPModel:
    """A GP trained on ``g(Y)`` with predictions reported in the bounded domain."""

    def __init__(self, gp_model: gp.GPModel, warp: WarpParams, *, affine_only=False):
        self.gp = gp_model
        self.warp = warp
        self.affine_only = bool(affine_only)

    @property
    def bound(self) -> float:
        return self.warp.y_lower

    @property
    def dim(self) -> int:
        return self.gp.dim

    @property
    def train_points(self):
        return self.gp.train_points

    @property
    def train_values(self):
        """Training observations in the bounded domain."""
        return g_inverse(self.warp, self.gp.train_values)

    def _map(self, mean, var):
        sd = np.sqrt(var)
        med = g_inverse(self.warp, mean)
        lo = g_inverse(self.warp, mean - sd)
        hi = g_inverse(self.warp, mean + sd)
        return med, med - lo, hi - med, (0.5 * (hi - lo)) ** 2

    def predict_bounded_batch(self, points) -> BoundedPrediction:
        pred = self.gp.predict_batch(points)
        return BoundedPrediction(*self._map(pred.mean, pred.variance))

    def predict_bounded(self, p_star) -> BoundedPrediction:
        pred = self.gp.predict(p_star)
        return BoundedPrediction(*(float(v) for v in self._map(pred.mean, pred.variance)))

    def predict_for_mc(self, points, variance_space="bounded"):
        """Median and variance observations as consumed by the robust estimator.

        ``variance_space='bounded'`` returns the symmetric-quantile variance
        proxy, ``'transformed'`` the raw GP variance.
        """
        pred = self.gp.predict_batch(points)
        med, _, _, proxy = self._map(pred.mean, pred.variance)
        if variance_space == "bounded":
            return med, proxy
        if variance_space == "transformed":
            return med, pred.variance
        raise ValueError(f"unknown variance_space {variance_space!r}")

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "kind": "warped_gp", "gp": self.gp.to_dict(),
                "warp": self.warp.to_dict(), "affine_only": self.affine_only}

    @classmethod
    def from_dict(cls, d):
        from .serialization import check_schema

        check_schema(d, SCHEMA_VERSION)
        return cls(gp.GPModel.from_dict(d["gp"]), WarpParams.from_dict(d["warp"]),
                   affine_only=d.get("affine_only", False))


def predict_bounded(model: WarpedGPModel, p_star) -> BoundedPrediction:
    return model.predict_bounded(p_star)


# --------------------------------------------------------------------------
# fitting


def _transform_terms(y, y_lower, span):
    """Transformed values, their derivative w.r.t. log(span), and log g'(y)."""
    z = y - y_lower
    below = z < span
    lz = np.log(z / span)
    yt = np.where(below, y_lower + span * (1.0 + lz), y)
    dyt = np.where(below, span * lz, 0.0)
    log_jac = np.where(below, -lz, 0.0)
    return yt, dyt, float(np.sum(log_jac)), int(np.count_nonzero(below))


def span_search_range(y, y_lower):
    z = np.asarray(y) - y_lower
    return 0.5 * float(np.min(z)), float(np.percentile(z, 90))


def warped_likelihood(X, y, y_lower, theta, grad=True):
    """Profiled GP likelihood of ``g(y)`` plus the log-Jacobian of ``g``.

    ``theta`` holds the log length scales followed by ``log(span)``.
    """
    log_ls, c = theta[:-1], theta[-1]
    span = float(np.exp(c))
    yt, dyt, log_jac, n_below = _transform_terms(y, y_lower, span)
    pl = gp.profiled_likelihood(X, yt, log_ls, gp.value_scale(yt), grad=grad)
    value = pl.value + log_jac
    g = np.append(pl.grad_log_ls, -(pl.alpha @ dyt) / pl.sigma0_sq + n_below)
    return value, g


def fit_warped(train_points, train_values, restarts: int = 8, seed=0, *, y_lower: float = 0.0,
               domain=None, max_fit_points: int | None = 1024) -> WarpedGPModel:
    """Jointly fit the transform cutoff and the GP hyperparameters.

    The objective is the log marginal likelihood of the transformed values
    plus ``sum(log g'(y))``. Without that Jacobian term the optimizer can
    inflate the likelihood by stretching the transform.

    If all values are equal, or the cutoff search range is empty, the
    transform degenerates to the affine segment and the returned model has
    ``affine_only=True``.
    """
    X = np.atleast_2d(np.asarray(train_points, dtype=float))
    y = np.asarray(train_values, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ShapeError(f"{X.shape[0]} points but {y.size} values")
    if y.size < 2:
        raise ValueError("at least two training points are required")
    if np.any(~(y > y_lower)):
        raise OutOfDomainError(f"all training values must exceed the lower bound {y_lower}")
    rng = as_generator(seed)
    lo, hi = span_search_range(y, y_lower)

    if np.ptp(y) <= 1e-12 * max(1.0, abs(float(np.mean(y)))) or hi <= lo:
        if np.ptp(y) <= 1e-12 * max(1.0, abs(float(np.mean(y)))):
            log.warning("constant training values; using an affine-only transform")
        warp = warp_for_span(y_lower, lo)
        model = gp.fit(X, g_forward(warp, y), restarts, rng, domain=domain, max_fit_points=max_fit_points)
        return WarpedGPModel(model, warp, affine_only=True)

    idx = gp.canonical_subset(X, max_fit_points, rng)
    Xs, ys = X[idx], y[idx]
    edges = gp.axis_edges(X, domain)
    bounds = gp.length_scale_bounds(edges) + [(np.log(lo), np.log(hi))]

    def objective(theta):
        try:
            v, g = warped_likelihood(Xs, ys, y_lower, theta)
        except NotPositiveDefiniteError:
            return 1e300, np.zeros_like(theta)
        return -v, -g

    n = max(1, int(restarts))
    ls_starts = gp.initial_log_ls(edges, n, rng)
    best, errors = None, []
    for k, x0 in enumerate(ls_starts):
        c0 = np.log(lo) + (np.log(hi) - np.log(lo)) * (k + 0.5) / n
        theta0 = np.clip(np.append(x0, c0), [b[0] for b in bounds], [b[1] for b in bounds])
        try:
            res = optimize.minimize(objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                                    options={"maxiter": 200})
        except (ValueError, ArithmeticError) as exc:
            errors.append(repr(exc))
            continue
        if not np.isfinite(res.fun) or res.fun >= 1e299:
            errors.append(f"start {k}: {res.message}")
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FitError("all warped-GP restarts failed: " + "; ".join(errors))
    warp = warp_for_span(y_lower, float(np.exp(best.x[-1])))
    model = gp.condition(X, g_forward(warp, y), best.x[:-1])
    return WarpedGPModel(model, warp)
