"""Sequential Bayesian optimization with expected improvement.

Internally everything is minimization; ``mode='maximize'`` negates the
objective values before they reach the surrogate, so maximizing ``f`` and
minimizing ``-f`` produce identical proposal sequences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import norm

from . import gp
from .domain import BoxDomain
from .errors import FitError, NotPositiveDefiniteError, RdoptError
from .seeding import as_generator
from .sobol import sobol_sequence

log = logging.getLogger(__name__)

MODES = ("minimize", "maximize")


def expected_improvement(mean, variance, f_best):
    """Closed-form ``E[max(0, f_best - X)]`` for ``X ~ N(mean, variance)``.

    Works elementwise on arrays. At zero variance it reduces to
    ``max(0, f_best - mean)``.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    diff = f_best - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, diff / np.where(sd > 0, sd, 1.0), 0.0)
        ei = np.where(sd > 0, diff * norm.cdf(z) + sd * norm.pdf(z), np.maximum(diff, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


@dataclass
class BOState:
    """Observations and settings of one optimization run."""

    domain: BoxDomain
    mode: str = "minimize"
    budget: int = 0
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)
    iteration: int = 0
    inner_gp: gp.GPModel | None = None
    log_ls: np.ndarray | None = None
    max_fit_points: int = 256
    fit_restarts: int = 2

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    def add(self, point, value):
        self.points.append(np.asarray(point, dtype=float).copy())
        self.values.append(float(value))

    @property
    def n_obs(self):
        return len(self.values)

    def internal_values(self):
        """Observation values in minimization convention."""
        y = np.asarray(self.values, dtype=float)
        return -y if self.mode == "maximize" else y

    @property
    def f_min(self):
        """Best internal (minimization) value."""
        return float(np.min(self.internal_values()))

    def best(self):
        y = np.asarray(self.values)
        i = int(np.argmax(y) if self.mode == "maximize" else np.argmin(y))
        return self.points[i], self.values[i]


@dataclass
class Proposal:
    point: np.ndarray
    ei: float
    source: str  # "ei" or "fallback"


def _fit_inner(state: BOState, rng):
    X = np.asarray(state.points)
    y = state.internal_values()
    if X.shape[0] > state.max_fit_points:
        # hyperparameters from the neighbourhood of the incumbent
        u = state.domain.to_unit(X)
        d = np.sum((u - u[int(np.argmin(y))]) ** 2, axis=1)
        sub = np.sort(np.argsort(d, kind="stable")[: state.max_fit_points])
    else:
        sub = np.arange(X.shape[0])
    local = gp.fit(X[sub], y[sub], state.fit_restarts, rng, domain=state.domain, max_fit_points=None,
                   init_log_ls=state.log_ls)
    log_ls = np.log(local.hyper.length_scales)
    model = local if sub.size == X.shape[0] else gp.condition(X, y, log_ls)
    return model, log_ls


def _fallback_point(state: BOState):
    """Next Sobol point that is not an existing observation."""
    k = state.n_obs + state.iteration
    while True:
        p = state.domain.from_unit(sobol_sequence(state.domain.dim, 1, skip=k + 1)[0])
        if not _is_duplicate(state, p):
            return p
        k += 1


def _is_duplicate(state: BOState, p, rtol=1e-9):
    if not state.points:
        return False
    u = state.domain.to_unit(np.asarray(state.points))
    return bool(np.any(np.max(np.abs(u - state.domain.to_unit(p)), axis=1) <= rtol))


def _candidates(state: BOState, restarts: int, rng, n_refine: int = 4):
    """Ranked proposals from EI screening plus local refinement."""
    model, log_ls = _fit_inner(state, rng)
    state.inner_gp, state.log_ls = model, log_ls
    dom = state.domain
    f_best = state.f_min
    dim = dom.dim

    def ei_unit(U):
        pred = model.predict_batch(dom.from_unit(np.clip(U, 0.0, 1.0)))
        return expected_improvement(pred.mean, pred.variance, f_best)

    skip = int(rng.integers(0, 2 ** 20))
    screen = [sobol_sequence(dim, 16 * max(1, restarts), skip)]
    X = dom.to_unit(np.asarray(state.points))
    order = np.argsort(state.internal_values(), kind="stable")[:4]
    for i in order:
        screen.append(np.clip(X[i] + 0.02 * rng.standard_normal((max(1, restarts) // 4, dim)), 0.0, 1.0))
    U = np.vstack(screen)
    ei = ei_unit(U)
    top = np.argsort(-ei, kind="stable")[: max(1, restarts)]
    h = 1e-6

    def fun(u):
        pts = np.vstack([u, u + h * np.eye(dim)])
        vals = ei_unit(pts)
        return -vals[0], -(vals[1:] - vals[0]) / h

    refined = []
    for i in top[:n_refine]:
        res = optimize.minimize(fun, U[i], jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * dim,
                                options={"maxiter": 50})
        u = np.clip(res.x, 0.0, 1.0)
        val = float(ei_unit(u[None, :])[0])
        if val < ei[i]:
            u, val = U[i], float(ei[i])
        refined.append((val, u))
    refined += [(float(ei[i]), U[i]) for i in top[n_refine:]]
    refined.sort(key=lambda t: -t[0])
    out = []
    for val, u in refined:
        p = dom.from_unit(u)
        if val <= 0.0 or _is_duplicate(state, p):
            continue
        if any(np.array_equal(p, q.point) for q in out):
            continue
        out.append(Proposal(p, val, "ei"))
    return out


def propose_next(state: BOState, restarts: int = 64, rng=None, n_refine: int = 4) -> Proposal:
    """Next point to evaluate: the EI maximizer, or a Sobol point when EI gives no guidance."""
    if state.n_obs < 2:
        raise ValueError("at least two observations are required")
    g = as_generator(rng)
    try:
        cands = _candidates(state, restarts, g, n_refine)
    except (FitError, NotPositiveDefiniteError) as exc:
        log.warning("inner GP fit failed (%s); proposing a Sobol point", exc)
        cands = []
    if cands:
        return cands[0]
    return Proposal(_fallback_point(state), 0.0, "fallback")


@dataclass
class BOResult:
    best_point: np.ndarray
    best_value: float
    history: list


def _record(history, state, it, point, value, source, failed=False):
    finite = [v for v in state.values]
    incumbent = None
    if finite:
        incumbent = float(max(finite) if state.mode == "maximize" else min(finite))
    history.append({"iteration": it, "point": np.asarray(point, dtype=float).tolist(),
                    "value": None if failed else float(value), "incumbent": incumbent,
                    "source": source, "failed": bool(failed)})


def _evaluate(objective, p):
    try:
        v = float(objective(p))
    except Exception as exc:  # noqa: BLE001 - objective failures are recorded
        log.warning("objective failed at %s: %s", np.asarray(p).tolist(), exc)
        return None
    return v if np.isfinite(v) else None


def bo_run(objective, domain: BoxDomain, budget: int, seed_observations=(), mode: str = "minimize",
           rng=None, restarts: int = 64, max_fit_points: int = 256, n_refine: int = 4) -> BOResult:
    """Run ``budget`` objective evaluations of EI-driven Bayesian optimization.

    Parameters
    ----------
    objective : callable
        Maps a point (1-D array) to a float.
    domain : BoxDomain
        Search box; every proposal lies inside it.
    budget : int
        Number of objective evaluations (failed ones count too).
    seed_observations : iterable of (point, value)
        Prior observations; they enter the history with ``source='seed'``.
    mode : {'minimize', 'maximize'}
    rng : seed or Generator

    Returns
    -------
    BOResult
        Best observation according to ``mode`` and the ordered history.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    g = as_generator(rng)
    state = BOState(domain, mode, int(budget), max_fit_points=max_fit_points)
    history = []
    for p, v in seed_observations:
        state.add(p, v)
        _record(history, state, 0, p, v, "seed")
    spent = 0
    while spent < budget:
        state.iteration += 1
        if state.n_obs < 2:
            prop = Proposal(_fallback_point(state), 0.0, "init")
            retry = []
        else:
            try:
                cands = _candidates(state, restarts, g, n_refine)
            except (FitError, NotPositiveDefiniteError) as exc:
                log.warning("inner GP fit failed (%s); using a Sobol point", exc)
                cands = []
            prop = cands[0] if cands else Proposal(_fallback_point(state), 0.0, "fallback")
            retry = cands[1:2]
        value = _evaluate(objective, prop.point)
        spent += 1
        if value is None:
            _record(history, state, state.iteration, prop.point, np.nan, prop.source, failed=True)
            if spent >= budget:
                break
            prop = retry[0] if retry else Proposal(_fallback_point(state), 0.0, "fallback")
            value = _evaluate(objective, prop.point)
            spent += 1
            if value is None:
                _record(history, state, state.iteration, prop.point, np.nan, prop.source, failed=True)
                continue
        state.add(prop.point, value)
        _record(history, state, state.iteration, prop.point, value, prop.source)
    if state.n_obs == 0:
        raise RdoptError("no successful observations")
    bp, bv = state.best()
    return BOResult(np.asarray(bp), float(bv), history)
