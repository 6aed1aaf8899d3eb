"""Two-pass robust design optimization.

Each pass runs five stages on a training box:

1. evaluate the forward model on Sobol points (and drop extreme outliers),
2. fit a bounded-output GP surrogate,
3. compute robust estimates at many Sobol centers of the 3σ-shrunk box and
   keep the best entry of each cluster,
4. refine the best entries with Bayesian optimization of the robust median,
5. verify the refined candidates on the forward model.

The first pass scans a wide box coarsely; the second repeats the stages on a
±5σ box around the first pass's verified winner. Every stage result can be
persisted through a :class:`CampaignStore` so an interrupted campaign resumes
at the first unfinished stage.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bayesopt, warp
from .config import CampaignConfig, NaiveSettings, PassSettings
from .domain import BoxDomain
from .errors import CampaignError, DomainTooSmallError, OutlierFilterError, RdoptError
from .montecarlo import (ManufacturingDistribution, RobustConfig, RobustEstimate, robust_estimate_direct,
                         robust_estimate_surrogate)
from .objectives import evaluate_batch, make_objective
from .seeding import stream_seed
from .sobol import sobol_in_domain

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# named random streams split from the master seed
STREAMS = [f"{tag}.{name}" for tag in ("pass1", "pass2") for name in ("fit", "map", "converge", "verify")] \
    + ["pass2.final", "naive"]


# --------------------------------------------------------------------------
# domains


def shrink_eval_domain(train_domain: BoxDomain, sigma_manuf) -> BoxDomain:
    """Training box reduced by three manufacturing sigmas on every side."""
    s = np.broadcast_to(np.asarray(sigma_manuf, dtype=float), (train_domain.dim,))
    lo = train_domain.lower + 3.0 * s
    hi = train_domain.upper - 3.0 * s
    bad = np.flatnonzero(hi <= lo)
    if bad.size:
        i = int(bad[0])
        raise DomainTooSmallError(
            f"axis {i} ({train_domain.labels[i]}): width {train_domain.width[i]:g} "
            f"leaves no evaluation domain after removing 3 sigma = {3 * s[i]:g} per side", axis=i)
    return BoxDomain(lo, hi, train_domain.labels, train_domain.units)


def narrow_domain(center, sigma_manuf, half_width_sigmas: float = 5.0, labels=(), units="") -> BoxDomain:
    """Box of ``±half_width_sigmas`` manufacturing sigmas around ``center``."""
    c = np.asarray(center, dtype=float)
    s = np.broadcast_to(np.asarray(sigma_manuf, dtype=float), c.shape)
    dom = BoxDomain(c - half_width_sigmas * s, c + half_width_sigmas * s, labels, units,
                    allow_degenerate=True)
    if dom.is_degenerate:
        log.warning("narrow domain is degenerate (zero sigma on some axis)")
    return dom


# --------------------------------------------------------------------------
# data containers


@dataclass
class TrainingSet:
    points: np.ndarray
    values: np.ndarray
    model_name: str = ""
    skip: int = 0
    failed_points: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    def __len__(self):
        return self.values.size

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "model_name": self.model_name, "skip": self.skip,
                "points": self.points.tolist(), "values": self.values.tolist(),
                "failed_points": np.asarray(self.failed_points).tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["points"], dtype=float), np.asarray(d["values"], dtype=float),
                   d.get("model_name", ""), d.get("skip", 0), np.asarray(d.get("failed_points", [])))


@dataclass
class MapEntry:
    point: np.ndarray
    estimate: RobustEstimate
    index: int = -1

    def to_dict(self):
        return {"point": np.asarray(self.point).tolist(), "estimate": self.estimate.to_dict(),
                "index": self.index}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["point"], dtype=float), RobustEstimate.from_dict(d["estimate"]),
                   d.get("index", -1))


def _entries_to_list(entries):
    return [e.to_dict() for e in entries]


def _entries_from_list(items):
    return [MapEntry.from_dict(d) for d in items]


@dataclass
class PassConfig:
    """Settings of one pass, bound to its training box."""

    train_domain: BoxDomain
    sigma_manuf: np.ndarray
    settings: PassSettings = field(default_factory=PassSettings)
    robust: RobustConfig = field(default_factory=RobustConfig)
    y_lower: float = 0.0
    parallelism: int = 1

    def __post_init__(self):
        self.sigma_manuf = np.broadcast_to(np.asarray(self.sigma_manuf, dtype=float),
                                           (self.train_domain.dim,)).copy()
        n = self.settings.n_train
        if n & (n - 1):
            log.warning("n_train=%d is not a power of two; Sobol balance is lost", n)

    @property
    def eval_domain(self) -> BoxDomain:
        return shrink_eval_domain(self.train_domain, self.sigma_manuf)

    def distribution(self, center) -> ManufacturingDistribution:
        return ManufacturingDistribution.diagonal(center, self.sigma_manuf)


@dataclass
class PassResult:
    train_domain: BoxDomain
    eval_domain: BoxDomain
    surrogate: warp.WarpedGPModel
    robust_map: list
    clustered: list
    candidates: list
    verified: list
    removed: list = field(default_factory=list)

    @property
    def selected(self) -> np.ndarray:
        return self.verified[0].point

    @property
    def selected_estimate(self) -> RobustEstimate:
        return self.verified[0].estimate


@dataclass
class NaiveResult:
    point: np.ndarray
    value: float
    estimate: RobustEstimate
    history: list = field(default_factory=list)

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "point": np.asarray(self.point).tolist(),
                "value": self.value, "estimate": self.estimate.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["point"], dtype=float), float(d["value"]),
                   RobustEstimate.from_dict(d["estimate"]))


@dataclass
class CampaignResult:
    pass1: PassResult
    pass2: PassResult
    naive: NaiveResult | None = None
    final_surrogate_estimate: RobustEstimate | None = None
    clipped: bool = False
    report: dict = field(default_factory=dict)

    @property
    def selected(self):
        return self.pass2.selected


# --------------------------------------------------------------------------
# stage 1


def generate_training_data(model, domain: BoxDomain, n: int, skip: int = 0, parallelism: int = 1,
                           max_fail_fraction: float = 0.1) -> TrainingSet:
    """Evaluate ``model`` at ``n`` Sobol points of ``domain``; failed points are excluded."""
    if n < 2:
        raise ValueError("n must be at least 2")
    pts = sobol_in_domain(domain, n, skip)
    values, failed = evaluate_batch(model, pts, parallelism)
    n_fail = int(np.count_nonzero(failed))
    if n_fail > max_fail_fraction * n:
        raise CampaignError(f"{n_fail} of {n} training evaluations failed", stage="training")
    if n_fail:
        log.warning("excluding %d failed training evaluations", n_fail)
    name = getattr(model, "name", type(model).__name__)
    return TrainingSet(pts[~failed], values[~failed], name, skip, pts[failed])


def default_outlier_threshold(values) -> float:
    """``median + 10 * (P84 - P50)`` of the training values."""
    p50, p84 = np.percentile(values, [50, 84])
    return float(p50 + 10.0 * (p84 - p50))


def filter_outliers(train: TrainingSet, threshold: float | None = None, max_fraction: float = 0.1):
    """Remove values strictly above ``threshold`` (default: :func:`default_outlier_threshold`).

    Returns the filtered set and the removed ``(point, value)`` pairs.
    """
    thr = default_outlier_threshold(train.values) if threshold is None else float(threshold)
    drop = train.values > thr
    n_drop = int(np.count_nonzero(drop))
    if n_drop > max_fraction * len(train):
        raise OutlierFilterError(
            f"threshold {thr:g} would remove {n_drop} of {len(train)} training values")
    removed = [(p, float(v)) for p, v in zip(train.points[drop], train.values[drop])]
    if n_drop:
        log.info("removed %d training values above %g", n_drop, thr)
    kept = TrainingSet(train.points[~drop], train.values[~drop], train.model_name, train.skip,
                       train.failed_points)
    return kept, removed


# --------------------------------------------------------------------------
# stage 2


def fit_surrogate(train: TrainingSet, domain: BoxDomain, settings: PassSettings, rng, y_lower=0.0):
    return warp.fit_warped(train.points, train.values, settings.fit_restarts, rng, y_lower=y_lower,
                           domain=domain, max_fit_points=settings.max_fit_points)


# --------------------------------------------------------------------------
# stage 3


def _seed_sequence(rng):
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if isinstance(rng, np.random.Generator):
        return np.random.SeedSequence(int(rng.integers(0, 2 ** 63 - 1)))
    return np.random.SeedSequence(rng)


def batch_robust_map(surrogate, eval_domain: BoxDomain, n_eval: int, sigma_manuf, cfg: RobustConfig = RobustConfig(),
                     rng=0, skip: int = 0, parallelism: int = 1) -> list:
    """Robust estimates at ``n_eval`` Sobol centers, best median first.

    Every center gets its own child random stream, so the result does not
    depend on ``parallelism``. Ties keep Sobol order.
    """
    centers = sobol_in_domain(eval_domain, n_eval, skip)
    seeds = _seed_sequence(rng).spawn(n_eval)
    sigma = np.broadcast_to(np.asarray(sigma_manuf, dtype=float), (eval_domain.dim,))

    def one(i):
        dist = ManufacturingDistribution.diagonal(centers[i], sigma)
        return robust_estimate_surrogate(surrogate, dist, cfg, np.random.default_rng(seeds[i]))

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as ex:
            ests = list(ex.map(one, range(n_eval)))
    else:
        ests = [one(i) for i in range(n_eval)]
    entries = [MapEntry(centers[i], ests[i], i) for i in range(n_eval)]
    entries.sort(key=lambda e: -e.estimate.median)  # stable
    return entries


def cluster_filter(sorted_results, eval_domain: BoxDomain, radius: float = 0.25) -> list:
    """Greedy thinning: keep an entry only if it is at least ``radius`` away
    (in unit-cube coordinates of ``eval_domain``) from every kept entry."""
    kept, kept_u = [], []
    for e in sorted_results:
        u = eval_domain.to_unit(e.point)
        if all(np.linalg.norm(u - k) >= radius for k in kept_u):
            kept.append(e)
            kept_u.append(u)
    return kept


# --------------------------------------------------------------------------
# stage 4


def _seed_neighbors(candidate, robust_map, eval_domain, radius, min_seeds=3):
    if not robust_map:
        return [candidate.point]
    u0 = eval_domain.to_unit(candidate.point)
    pts = np.asarray([e.point for e in robust_map])
    d = np.linalg.norm(eval_domain.to_unit(pts) - u0, axis=1)
    order = np.argsort(d, kind="stable")
    chosen = [i for i in order if d[i] < radius]
    for i in order:
        if len(chosen) >= min_seeds:
            break
        if i not in chosen:
            chosen.append(i)
    seeds = [candidate.point]
    for i in chosen:
        if not np.array_equal(pts[i], candidate.point):
            seeds.append(pts[i])
    return seeds


def converge_candidates(surrogate, candidates, eval_domain: BoxDomain, sigma_manuf, bo_budget: int,
                        cfg: RobustConfig = RobustConfig(), rng=0, robust_map=None, radius: float = 0.25,
                        bo_restarts: int = 64, history_sink=None) -> list:
    """Refine each candidate by maximizing the surrogate's robust median with BO.

    The BO objective draws its manufacturing samples from one fixed random
    stream per candidate, which makes it a deterministic, smooth function of
    the distribution mean. Seeds are the candidate and its robust-map
    neighbours. Converged points closer than ``radius`` are merged, keeping the
    best.
    """
    if bo_budget <= 0:
        return list(candidates)
    sigma = np.broadcast_to(np.asarray(sigma_manuf, dtype=float), (eval_domain.dim,))
    seeds = _seed_sequence(rng).spawn(len(candidates))
    converged = []
    for k, cand in enumerate(candidates):
        crn_seed, bo_seed = seeds[k].spawn(2)
        cache = {}

        def objective(p, _cache=cache, _seed=crn_seed):
            est = robust_estimate_surrogate(surrogate, ManufacturingDistribution.diagonal(p, sigma), cfg,
                                            np.random.default_rng(_seed))
            _cache[np.asarray(p, dtype=float).tobytes()] = est
            return est.median

        start = _seed_neighbors(cand, robust_map or [], eval_domain, radius)
        obs = [(p, objective(p)) for p in start]
        res = bayesopt.bo_run(objective, eval_domain, bo_budget, obs, "maximize",
                              np.random.default_rng(bo_seed), restarts=bo_restarts)
        if history_sink is not None:
            history_sink(k, res.history)
        est = cache[np.asarray(res.best_point, dtype=float).tobytes()]
        converged.append(MapEntry(np.asarray(res.best_point), est, cand.index))
    converged.sort(key=lambda e: -e.estimate.median)
    merged = cluster_filter(converged, eval_domain, radius)
    if len(merged) < len(converged):
        log.info("%d candidates converged into %d distinct optima", len(converged), len(merged))
    return merged


# --------------------------------------------------------------------------
# stage 5


def verify_candidates(model, candidates, sigma_manuf, n_verify: int, parallelism: int = 1, rng=0) -> list:
    """Direct robust estimates on the forward model, best median first
    (ties: smaller lower spread)."""
    if n_verify < 2:
        raise ValueError("n_verify must be at least 2")
    seeds = _seed_sequence(rng).spawn(len(candidates))
    out = []
    for k, cand in enumerate(candidates):
        dist = ManufacturingDistribution.diagonal(cand.point, sigma_manuf)
        est = robust_estimate_direct(model, dist, n_verify, parallelism, np.random.default_rng(seeds[k]))
        out.append(MapEntry(np.asarray(cand.point), est, cand.index))
    out.sort(key=lambda e: (-e.estimate.median, e.estimate.sigma_minus))
    return out


# --------------------------------------------------------------------------
# persistence


class CampaignStore:
    """Campaign directory: config snapshot, manifest and per-stage artifacts.

    Layout::

        config.toml            copy of the campaign configuration
        manifest.json          schema version, config hash, completed stages
        evaluations.jsonl      one record per forward-model batch
        timing.jsonl           wall-clock time per stage (not reproducible)
        pass1/*.json, pass1/bo_history.jsonl, pass2/..., naive.json, campaign.json
    """

    def __init__(self, root, config: CampaignConfig | None = None):
        from pathlib import Path

        self.root = Path(root)
        self.config = config
        self._lock = None

    # --- locking
    def __enter__(self):
        from filelock import FileLock, Timeout

        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.root / ".lock"))
        try:
            self._lock.acquire(timeout=0)
        except Timeout:
            raise CampaignError(f"campaign directory {self.root} is in use by another run") from None
        return self

    def __exit__(self, *exc):
        if self._lock is not None:
            self._lock.release()
        return False

    # --- manifest
    @property
    def manifest_path(self):
        return self.root / "manifest.json"

    def manifest(self):
        from .serialization import check_schema, read_json

        if not self.manifest_path.exists():
            return {"schema_version": SCHEMA_VERSION, "config_hash": None, "stages": {}, "artifacts": {}}
        m = read_json(self.manifest_path)
        check_schema(m, SCHEMA_VERSION)
        return m

    def start(self, resume: bool):
        from . import config as config_mod
        from .serialization import write_json

        self.root.mkdir(parents=True, exist_ok=True)
        h = self.config.config_hash()
        m = self.manifest()
        if resume and m["config_hash"] not in (None, h):
            raise CampaignError("configuration changed since the campaign was started; cannot resume")
        if not resume:
            others = [p for p in self.root.iterdir() if p.name != ".lock"]
            if others and not self.manifest_path.exists():
                raise CampaignError(f"{self.root} is not empty and holds no campaign; refusing to overwrite")
            for p in sorted(self.root.rglob("*"), reverse=True):
                if p.is_file() and p.name != ".lock":
                    p.unlink()
            m = {"schema_version": SCHEMA_VERSION, "config_hash": h, "stages": {}, "artifacts": {}}
        m["config_hash"] = h
        m["seeds"] = {"master": int(self.config.seed), "streams": STREAMS}
        (self.root / "config.toml").write_text(config_mod.dumps(self.config))
        write_json(self.manifest_path, m)

    def done(self, stage) -> bool:
        m = self.manifest()
        return bool(m["stages"].get(stage)) and (self.root / m["artifacts"][stage]).exists()

    def save(self, stage, relpath, obj, elapsed=None):
        from .serialization import append_jsonl, write_json

        write_json(self.root / relpath, obj)
        m = self.manifest()
        m["stages"][stage] = True
        m["artifacts"][stage] = relpath
        write_json(self.manifest_path, m)
        if elapsed is not None:
            append_jsonl(self.root / "timing.jsonl", [{"stage": stage, "seconds": round(elapsed, 3)}])

    def load(self, stage):
        from .serialization import read_json

        m = self.manifest()
        return read_json(self.root / m["artifacts"][stage])

    def log_evaluations(self, stage, n):
        from .serialization import append_jsonl

        append_jsonl(self.root / "evaluations.jsonl", [{"stage": stage, "n_evaluations": int(n)}])

    def write_history(self, relpath, records):
        from .serialization import write_jsonl

        write_jsonl(self.root / relpath, records)


class _NullStore:
    """Store stand-in used when no campaign directory is given."""

    def done(self, stage):
        return False

    def save(self, *a, **k):
        pass

    def log_evaluations(self, *a):
        pass

    def write_history(self, *a):
        pass


class _CountingModel:
    """Wraps a forward model and counts evaluations (for the evaluation log)."""

    def __init__(self, model):
        self.model = model
        self.count = 0
        self.name = getattr(model, "name", type(model).__name__)
        self.dim = getattr(model, "dim", None)

    def evaluate_many(self, points):
        P = np.atleast_2d(points)
        self.count += P.shape[0]
        if hasattr(self.model, "evaluate_many"):
            return self.model.evaluate_many(P)
        return np.array([float(self.model(p)) for p in P])

    def __call__(self, p):
        return float(self.evaluate_many(np.asarray(p, dtype=float)[None, :])[0])


def _stage(store, name, relpath, compute, dump, load, completed):
    """Run or resume one stage."""
    if store.done(name):
        log.info("stage %s: loaded from %s", name, relpath)
        value = load(store.load(name))
    else:
        t0 = time.perf_counter()
        try:
            value = compute()
        except RdoptError as exc:
            raise CampaignError(f"stage {name} failed: {exc}", stage=name, completed=completed) from exc
        store.save(name, relpath, dump(value), time.perf_counter() - t0)
    completed.append(name)
    return value


# --------------------------------------------------------------------------
# passes


def run_pass(model, pcfg: PassConfig, seed: int, tag: str, store=None, completed=None) -> PassResult:
    """Run the five stages on ``pcfg.train_domain``."""
    store = store or _NullStore()
    completed = [] if completed is None else completed
    s = pcfg.settings
    eval_domain = pcfg.eval_domain
    counter = _CountingModel(model)

    def evaluations(stage):
        if counter.count:
            store.log_evaluations(stage, counter.count)
            counter.count = 0

    def do_training():
        ts = generate_training_data(counter, pcfg.train_domain, s.n_train, s.train_skip, pcfg.parallelism)
        evaluations(f"{tag}.training")
        return ts

    train = _stage(store, f"{tag}.training", f"{tag}/training.json", do_training,
                   lambda t: t.to_dict(), TrainingSet.from_dict, completed)

    def do_filter():
        kept, removed = filter_outliers(train, s.outlier_threshold)
        return kept, removed

    def dump_filter(v):
        kept, removed = v
        return {"schema_version": SCHEMA_VERSION, "kept": kept.to_dict(),
                "removed": [{"point": p.tolist(), "value": val} for p, val in removed]}

    def load_filter(d):
        return TrainingSet.from_dict(d["kept"]), [(np.asarray(r["point"]), r["value"]) for r in d["removed"]]

    filtered, removed = _stage(store, f"{tag}.filter", f"{tag}/filtered.json", do_filter, dump_filter,
                               load_filter, completed)

    surrogate = _stage(
        store, f"{tag}.surrogate", f"{tag}/surrogate.json",
        lambda: fit_surrogate(filtered, pcfg.train_domain, s, np.random.default_rng(stream_seed(seed, tag, "fit")),
                              pcfg.y_lower),
        lambda m: m.to_dict(), warp.WarpedGPModel.from_dict, completed)

    def dump_entries(entries):
        return {"schema_version": SCHEMA_VERSION, "entries": _entries_to_list(entries)}

    def load_entries(d):
        return _entries_from_list(d["entries"])

    robust_map = _stage(
        store, f"{tag}.map", f"{tag}/robust_map.json",
        lambda: batch_robust_map(surrogate, eval_domain, s.n_eval, pcfg.sigma_manuf, pcfg.robust,
                                 stream_seed(seed, tag, "map"), s.eval_skip, pcfg.parallelism),
        dump_entries, load_entries, completed)

    clustered = _stage(
        store, f"{tag}.cluster", f"{tag}/clustered.json",
        lambda: cluster_filter(robust_map, eval_domain, s.cluster_radius)[: s.n_candidates],
        dump_entries, load_entries, completed)

    def do_converge():
        history = []
        out = converge_candidates(surrogate, clustered, eval_domain, pcfg.sigma_manuf, s.bo_budget,
                                  pcfg.robust, stream_seed(seed, tag, "converge"), robust_map,
                                  s.cluster_radius, s.bo_restarts,
                                  lambda k, hist: history.extend(dict(r, candidate=k) for r in hist))
        store.write_history(f"{tag}/bo_history.jsonl", history)
        return out

    candidates = _stage(store, f"{tag}.converge", f"{tag}/candidates.json", do_converge,
                        dump_entries, load_entries, completed)

    def do_verify():
        out = verify_candidates(counter, candidates, pcfg.sigma_manuf, s.n_verify, pcfg.parallelism,
                                stream_seed(seed, tag, "verify"))
        evaluations(f"{tag}.verify")
        return out

    verified = _stage(store, f"{tag}.verify", f"{tag}/verified.json", do_verify,
                      dump_entries, load_entries, completed)
    return PassResult(pcfg.train_domain, eval_domain, surrogate, robust_map, clustered, candidates,
                      verified, removed)


def naive_optimize(model, domain: BoxDomain, train: TrainingSet, bo_budget: int, sigma_manuf, n_verify: int,
                   rng=0, parallelism: int = 1, bo_restarts: int = 64) -> NaiveResult:
    """Maximize the raw model by BO seeded with the whole training set, then
    measure how the found optimum fares under manufacturing scatter."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    bo_seed, verify_seed = _seed_sequence(rng).spawn(2)
    seeds = list(zip(train.points, train.values))
    res = bayesopt.bo_run(model, domain, bo_budget, seeds, "maximize", np.random.default_rng(bo_seed),
                          restarts=bo_restarts)
    dist = ManufacturingDistribution.diagonal(res.best_point, sigma_manuf)
    est = robust_estimate_direct(model, dist, n_verify, parallelism, np.random.default_rng(verify_seed))
    return NaiveResult(np.asarray(res.best_point), res.best_value, est,
                       [r for r in res.history if r["source"] != "seed"])


def first_pass_config(cfg: CampaignConfig) -> PassConfig:
    return PassConfig(cfg.domain, cfg.sigma_manuf, cfg.pass1, cfg.robust, cfg.y_lower, cfg.parallelism)


def run_naive(model, cfg: CampaignConfig, store: CampaignStore | None = None, completed=None) -> NaiveResult:
    """Naive baseline on the first-pass training set, generating it if the store lacks it."""
    store_ = store or _NullStore()
    completed = [] if completed is None else completed
    counter = _CountingModel(model)

    def do_training():
        ts = generate_training_data(counter, cfg.domain, cfg.pass1.n_train, cfg.pass1.train_skip, cfg.parallelism)
        store_.log_evaluations("pass1.training", counter.count)
        counter.count = 0
        return ts

    train1 = _stage(store_, "pass1.training", "pass1/training.json", do_training, lambda t: t.to_dict(),
                    TrainingSet.from_dict, completed)

    def do_naive():
        res = naive_optimize(counter, cfg.domain, train1, cfg.naive.bo_budget, cfg.sigma_manuf,
                             cfg.naive.n_verify, stream_seed(cfg.seed, "naive"), cfg.parallelism,
                             cfg.pass1.bo_restarts)
        store_.log_evaluations("naive", counter.count)
        store_.write_history("naive_bo_history.jsonl", res.history)
        return res

    return _stage(store_, "naive", "naive.json", do_naive, lambda r: r.to_dict(), NaiveResult.from_dict,
                  completed)


def second_domain(cfg: CampaignConfig, center):
    """Narrow box around ``center`` clipped to the wide domain; also reports clipping."""
    nd = narrow_domain(center, cfg.sigma_manuf, cfg.half_width_sigmas, cfg.domain.labels, cfg.domain.units)
    clipped_dom = nd.intersect(cfg.domain)
    clipped = not (clipped_dom == nd)
    if clipped:
        log.warning("second-pass domain clipped to the wide domain: %r", clipped_dom)
    return BoxDomain(clipped_dom.lower, clipped_dom.upper, cfg.domain.labels, cfg.domain.units), clipped


def run_two_pass(model, cfg: CampaignConfig, store: CampaignStore | None = None) -> CampaignResult:
    """Execute both passes (and the naive baseline if enabled).

    Raises
    ------
    CampaignError
        Names the failed stage and lists the completed ones; all completed
        artifacts remain in ``store``.
    """
    cfg.validate()
    completed = []
    store_ = store or _NullStore()
    p1 = run_pass(model, first_pass_config(cfg), cfg.seed, "pass1", store_, completed)

    dom2, clipped = second_domain(cfg, p1.selected)
    pcfg2 = PassConfig(dom2, cfg.sigma_manuf, cfg.pass2, cfg.robust, cfg.y_lower, cfg.parallelism)
    try:
        pcfg2.eval_domain
    except DomainTooSmallError as exc:
        raise CampaignError(f"second-pass domain too small after clipping: {exc}", stage="pass2",
                            completed=completed) from exc
    p2 = run_pass(model, pcfg2, cfg.seed, "pass2", store_, completed)

    final_est = _stage(
        store_, "pass2.final", "pass2/final_estimate.json",
        lambda: robust_estimate_surrogate(p2.surrogate, ManufacturingDistribution.diagonal(p2.selected, cfg.sigma_manuf),
                                          cfg.robust, np.random.default_rng(stream_seed(cfg.seed, "pass2", "final"))),
        lambda e: dict(e.to_dict(), schema_version=SCHEMA_VERSION), RobustEstimate.from_dict, completed)

    naive = run_naive(model, cfg, store, completed) if cfg.naive.enabled else None

    result = CampaignResult(p1, p2, naive, final_est, clipped)
    result.report = build_report(result, cfg)
    store_.save("report", "campaign.json", result.report)
    return result


def build_report(result: CampaignResult, cfg: CampaignConfig) -> dict:
    def entry(e):
        return {"point": np.asarray(e.point).tolist(), "estimate": e.estimate.to_dict()}

    rep = {
        "schema_version": SCHEMA_VERSION,
        "labels": list(cfg.domain.labels), "units": cfg.domain.units,
        "sigma_manuf": cfg.sigma_manuf.tolist(),
        "pass1": {"train_domain": result.pass1.train_domain.to_dict(),
                  "eval_domain": result.pass1.eval_domain.to_dict(),
                  "n_removed": len(result.pass1.removed),
                  "verified": [entry(e) for e in result.pass1.verified]},
        "pass2": {"train_domain": result.pass2.train_domain.to_dict(),
                  "eval_domain": result.pass2.eval_domain.to_dict(), "clipped": result.clipped,
                  "n_removed": len(result.pass2.removed),
                  "verified": [entry(e) for e in result.pass2.verified]},
        "selected": {"point": np.asarray(result.selected).tolist(),
                     "surrogate_estimate": result.final_surrogate_estimate.to_dict()
                     if result.final_surrogate_estimate else None,
                     "verified_estimate": result.pass2.selected_estimate.to_dict()},
    }
    if result.naive is not None:
        rep["naive"] = result.naive.to_dict()
    return rep


# --------------------------------------------------------------------------
# follow-up analyses


def reevaluate_uncertainty(surrogate, train_domain: BoxDomain, new_sigma, cfg: RobustConfig, bo_budget: int,
                           rng=0, n_eval: int = 4096, radius: float = 0.25, n_candidates: int = 1,
                           eval_skip: int = 0, bo_restarts: int = 64):
    """Re-run the robust map and refinement on an existing surrogate with a new scatter.

    Makes no forward-model evaluations. Returns the best ``(point, RobustEstimate)``
    by surrogate median.
    """
    eval_domain = shrink_eval_domain(train_domain, new_sigma)
    map_seed, conv_seed = _seed_sequence(rng).spawn(2)
    rmap = batch_robust_map(surrogate, eval_domain, n_eval, new_sigma, cfg, map_seed, eval_skip)
    cands = cluster_filter(rmap, eval_domain, radius)[:n_candidates]
    conv = converge_candidates(surrogate, cands, eval_domain, new_sigma, bo_budget, cfg, conv_seed, rmap,
                               radius, bo_restarts)
    best = conv[0]
    return best.point, best.estimate


@dataclass
class LandscapeSlice:
    axis_i: int
    axis_j: int
    p_i: np.ndarray
    p_j: np.ndarray
    values: np.ndarray  # values[a, b] at (p_i[a], p_j[b])
    center: np.ndarray
    ellipses: list

    def rows(self):
        for a, x in enumerate(self.p_i):
            for b, y in enumerate(self.p_j):
                yield a, b, float(x), float(y), float(self.values[a, b])


def _ellipses(cov2, center2, levels=(1, 2, 3)):
    w, v = np.linalg.eigh(cov2)
    w = np.clip(w, 0.0, None)
    # major-axis direction, folded into (-90, 90]
    angle = float(np.degrees(np.arctan2(v[1, 1], v[0, 1])))
    angle = angle - 180.0 if angle > 90.0 else angle + 180.0 if angle <= -90.0 else angle
    return [{"level": k, "center": list(map(float, center2)),
             "semi_axes": [float(k * np.sqrt(w[1])), float(k * np.sqrt(w[0]))], "angle_deg": angle}
            for k in levels]


def landscape_slice(func, center, axis_i: int, axis_j: int, grid: int, extent_sigmas: float, sigma_manuf):
    """Values on a ``grid × grid`` lattice in the ``(axis_i, axis_j)`` plane through ``center``.

    ``func`` is a warped surrogate (its median prediction is used) or a
    forward model. The lattice spans ``±extent_sigmas`` manufacturing sigmas.
    ``sigma_manuf`` may be a vector of sigmas or a full covariance matrix; the
    1σ/2σ/3σ ellipses of its ``(i, j)`` marginal are returned as metadata.
    """
    if grid < 2:
        raise ValueError("grid must be at least 2")
    c = np.asarray(center, dtype=float)
    if axis_i == axis_j or not (0 <= axis_i < c.size and 0 <= axis_j < c.size):
        raise ValueError(f"invalid axes ({axis_i}, {axis_j}) for dimension {c.size}")
    s = np.asarray(sigma_manuf, dtype=float)
    cov = s if s.ndim == 2 else np.diag(np.broadcast_to(s, c.shape) ** 2)
    si, sj = np.sqrt(cov[axis_i, axis_i]), np.sqrt(cov[axis_j, axis_j])
    pi = c[axis_i] + np.linspace(-extent_sigmas, extent_sigmas, grid) * si
    pj = c[axis_j] + np.linspace(-extent_sigmas, extent_sigmas, grid) * sj
    A, B = np.meshgrid(pi, pj, indexing="ij")
    pts = np.tile(c, (grid * grid, 1))
    pts[:, axis_i] = A.ravel()
    pts[:, axis_j] = B.ravel()
    if hasattr(func, "predict_bounded_batch"):
        vals = func.predict_bounded_batch(pts).median
    else:
        vals, _ = evaluate_batch(func, pts)
    cov2 = cov[np.ix_([axis_i, axis_j], [axis_i, axis_j])]
    return LandscapeSlice(axis_i, axis_j, pi, pj, np.asarray(vals).reshape(grid, grid), c,
                          _ellipses(cov2, c[[axis_i, axis_j]]))


def model_from_config(cfg: CampaignConfig):
    return make_objective(cfg.model)


def reference_campaign_config(seed: int = 0, **overrides) -> CampaignConfig:
    """Small campaign on the 4-D ridge/plateau reference objective.

    Sample counts are scaled down so a full two-pass run with the naive
    baseline fits in a few minutes on one core.
    """
    from .objectives import reference_ridge_plateau

    obj = reference_ridge_plateau(4)
    dom = BoxDomain(obj.default_domain.lower, obj.default_domain.upper, ("w", "h", "a", "d"), "nm")
    robust = RobustConfig(batch=1000, rel_tol=1e-3, n_cap=3000)
    p1 = PassSettings(n_train=1024, n_eval=256, outlier_threshold=10.0, n_candidates=4, bo_budget=12,
                      n_verify=64, fit_restarts=3, max_fit_points=512, bo_restarts=32)
    p2 = PassSettings(n_train=512, n_eval=128, outlier_threshold=10.0, n_candidates=1, bo_budget=12,
                      n_verify=512, fit_restarts=3, max_fit_points=512, bo_restarts=32)
    kw = dict(model={"name": "ridge_plateau", "params": obj.params()}, domain=dom, sigma_manuf=16.8,
              seed=seed, robust=robust, pass1=p1, pass2=p2,
              naive=NaiveSettings(enabled=True, bo_budget=24, n_verify=512))
    kw.update(overrides)
    return CampaignConfig(**kw)
