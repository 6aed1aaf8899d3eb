"""Command-line front end for robust design campaigns.

Exit status is 0 on success, 1 when a stage fails or a required artifact is
missing, and 2 for invalid configuration or arguments.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import pipeline, warp
from .errors import CampaignError, ConfigError, DomainTooSmallError, RdoptError, SchemaVersionError
from .montecarlo import RobustEstimate
from .seeding import stream_seed
from .serialization import read_json, write_json

ENV_OUTPUT_DIR = "RDOPT_OUTPUT_DIR"

log = logging.getLogger("rdopt")


class UsageError(Exception):
    """Bad command-line input (exit status 2)."""


class StageError(Exception):
    """Missing artifact or failed stage (exit status 1)."""


def _floats(text: str, what: str):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _ints(text: str, what: str):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated integers, got {text!r}") from None


def _load_config(args) -> config_mod.CampaignConfig:
    if not args.config:
        raise UsageError("--config is required")
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file {path} not found", field="config")
    cfg = config_mod.load(path)
    changes = {}
    if getattr(args, "seed_override", None) is not None:
        changes["seed"] = args.seed_override
    if getattr(args, "parallelism", None) is not None:
        changes["parallelism"] = args.parallelism
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
    return cfg.validate()


def _campaign_dir(args, cfg=None) -> Path:
    if getattr(args, "dir", None):
        return Path(args.dir)
    if os.environ.get(ENV_OUTPUT_DIR):
        return Path(os.environ[ENV_OUTPUT_DIR])
    if cfg is not None:
        return Path(cfg.output_dir)
    raise UsageError(f"--dir is required (or set {ENV_OUTPUT_DIR})")


def _stored_config(root: Path) -> config_mod.CampaignConfig:
    path = root / "config.toml"
    if not path.exists():
        raise StageError(f"{root} holds no campaign (config.toml missing)")
    return config_mod.load(path)


def _fmt_point(point, labels, units):
    u = f" {units}" if units else ""
    return ", ".join(f"{lab}={x:.4g}{u}" for lab, x in zip(labels, point))


def _fmt_estimate(est: RobustEstimate) -> str:
    return (f"({est.median:.4g} ± {est.sigma_median:.2g})  "
            f"σ₋/σ₊ = {est.sigma_minus:.2g}/{est.sigma_plus:.2g}  [N={est.n_total}]")


def format_report(rep: dict) -> str:
    labels, units = rep["labels"], rep.get("units", "")
    lines = []
    for tag in ("pass1", "pass2"):
        p = rep.get(tag)
        if not p:
            continue
        dom = p["train_domain"]
        box = " × ".join(f"[{lo:.4g}, {hi:.4g}]" for lo, hi in zip(dom["lower"], dom["upper"]))
        lines.append(f"{tag}: training domain {box}" + ("  (clipped)" if p.get("clipped") else ""))
        if p.get("n_removed"):
            lines.append(f"  {p['n_removed']} outliers removed from training data")
        for k, v in enumerate(p["verified"]):
            lines.append(f"  #{k + 1} {_fmt_point(v['point'], labels, units)}  "
                         f"{_fmt_estimate(RobustEstimate.from_dict(v['estimate']))}")
    sel = rep.get("selected")
    if sel:
        lines.append("selected robust design: " + _fmt_point(sel["point"], labels, units))
        if sel.get("surrogate_estimate"):
            lines.append("  surrogate    " + _fmt_estimate(RobustEstimate.from_dict(sel["surrogate_estimate"])))
        lines.append("  verification " + _fmt_estimate(RobustEstimate.from_dict(sel["verified_estimate"])))
    nv = rep.get("naive")
    if nv:
        lines.append("naive optimum: " + _fmt_point(nv["point"], labels, units) + f"  value {nv['value']:.4g}")
        lines.append("  under scatter " + _fmt_estimate(RobustEstimate.from_dict(nv["estimate"])))
    for r in rep.get("reevaluations", []):
        lines.append(f"re-evaluation σ={r['sigma']}: " + _fmt_point(r["point"], labels, units))
        lines.append("  surrogate    " + _fmt_estimate(RobustEstimate.from_dict(r["estimate"])))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    cfg = _load_config(args)
    p1 = pipeline.first_pass_config(cfg)
    ev = p1.eval_domain
    print(f"config OK: {cfg.domain.dim} parameters, model {cfg.model['name']!r}, seed {cfg.seed}")
    print("evaluation domain: " + " × ".join(f"[{lo:.4g}, {hi:.4g}]" for lo, hi in zip(ev.lower, ev.upper)))
    return 0


def cmd_run(args):
    cfg = _load_config(args)
    root = _campaign_dir(args, cfg)
    model = pipeline.model_from_config(cfg)
    with pipeline.CampaignStore(root, cfg) as store:
        store.start(resume=args.resume)
        result = pipeline.run_two_pass(model, cfg, store)
    print(format_report(result.report))
    print(f"campaign directory: {root}")
    return 0


def cmd_naive(args):
    cfg = _load_config(args)
    root = _campaign_dir(args, cfg)
    model = pipeline.model_from_config(cfg)
    with pipeline.CampaignStore(root, cfg) as store:
        store.start(resume=True)
        res = pipeline.run_naive(model, cfg, store)
        report_path = root / "campaign.json"
        if report_path.exists():
            rep = read_json(report_path)
            rep["naive"] = res.to_dict()
            store.save("report", "campaign.json", rep)
    print("naive optimum: " + _fmt_point(res.point, cfg.domain.labels, cfg.domain.units))
    print(f"  raw value     {res.value:.6g}")
    print("  under scatter " + _fmt_estimate(res.estimate))
    return 0


def _load_surrogate(root: Path, stage="pass2.surrogate"):
    if not (root / "manifest.json").exists():
        raise StageError(f"{root} holds no campaign; run the campaign first")
    with pipeline.CampaignStore(root) as store:
        try:
            m = store.manifest()
        except SchemaVersionError as exc:
            raise StageError(str(exc)) from None
        if not m["stages"].get(stage) or not store.done(stage):
            raise StageError(f"no {stage} artifact in {root}; run the campaign first")
        return warp.WarpedGPModel.from_dict(store.load(stage)), m


def cmd_reevaluate(args):
    root = _campaign_dir(args)
    if not args.sigma:
        raise UsageError("--sigma is required")
    sigma = _floats(args.sigma, "--sigma")
    cfg = _stored_config(root)
    if len(sigma) == 1:
        sigma = sigma * cfg.domain.dim
    if len(sigma) != cfg.domain.dim or min(sigma) < 0:
        raise UsageError(f"--sigma needs {cfg.domain.dim} non-negative values")
    surrogate, _ = _load_surrogate(root)
    rep = read_json(root / "campaign.json") if (root / "campaign.json").exists() else None
    pass1_best = read_json(root / "pass1" / "verified.json")["entries"][0]["point"]
    train_domain, _ = pipeline.second_domain(cfg, pass1_best)
    try:
        pipeline.shrink_eval_domain(train_domain, sigma)
    except DomainTooSmallError as exc:
        raise UsageError(f"--sigma too large for the second-pass domain: {exc}") from None
    s2 = cfg.pass2
    tag = "_".join(f"{x:g}" for x in sigma)
    rng = stream_seed(cfg.seed, "reevaluate", tag)
    point, est = pipeline.reevaluate_uncertainty(surrogate, train_domain, sigma, cfg.robust, s2.bo_budget, rng,
                                                 n_eval=s2.n_eval, radius=s2.cluster_radius,
                                                 eval_skip=s2.eval_skip, bo_restarts=s2.bo_restarts)
    record = {"schema_version": pipeline.SCHEMA_VERSION, "sigma": sigma,
              "point": np.asarray(point).tolist(), "estimate": est.to_dict()}
    with pipeline.CampaignStore(root) as store:
        store.save(f"reevaluate.{tag}", f"reevaluate_{tag}.json", record)
        if rep is not None:
            rep.setdefault("reevaluations", [])
            rep["reevaluations"] = [r for r in rep["reevaluations"] if r["sigma"] != sigma] + [record]
            store.save("report", "campaign.json", rep)
    print(f"re-evaluation with σ = {sigma}: " + _fmt_point(point, cfg.domain.labels, cfg.domain.units))
    print("  surrogate " + _fmt_estimate(est))
    return 0


def cmd_slice(args):
    root = _campaign_dir(args)
    cfg = _stored_config(root)
    axes = _ints(args.axes, "--axes")
    if len(axes) != 2:
        raise UsageError("--axes needs exactly two axis indices")
    dim = cfg.domain.dim
    if axes[0] == axes[1] or not all(0 <= a < dim for a in axes):
        raise UsageError(f"--axes: invalid axes {axes} for {dim} parameters")
    if args.grid < 2:
        raise UsageError("--grid must be at least 2")
    if args.source == "model":
        func = pipeline.model_from_config(cfg)
    else:
        func, _ = _load_surrogate(root)
    if args.center:
        center = _floats(args.center, "--center")
        if len(center) != dim:
            raise UsageError(f"--center needs {dim} values")
    else:
        if not (root / "campaign.json").exists():
            raise StageError("no selected design yet; pass --center")
        center = read_json(root / "campaign.json")["selected"]["point"]
    sl = pipeline.landscape_slice(func, center, axes[0], axes[1], args.grid, args.extent, cfg.sigma_manuf)
    out = Path(args.out) if args.out else root / f"slice_{axes[0]}_{axes[1]}.csv"
    write_slice(sl, out, cfg.domain.labels, args.source)
    print(f"wrote {args.grid * args.grid} grid values to {out}")
    return 0


def write_slice(sl, out: Path, labels=(), source="surrogate"):
    """CSV of ``(i, j, p_i, p_j, value)`` rows plus a JSON sidecar with the ellipses."""
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "p_i", "p_j", "value"])
        for a, b, x, y, v in sl.rows():
            w.writerow([a, b, repr(x), repr(y), repr(v)])
    meta = {"schema_version": pipeline.SCHEMA_VERSION, "source": source,
            "axes": [sl.axis_i, sl.axis_j], "center": sl.center.tolist(), "ellipses": sl.ellipses}
    if labels:
        meta["labels"] = [labels[sl.axis_i], labels[sl.axis_j]]
    write_json(out.with_suffix(".json"), meta)


def read_slice(path):
    """Inverse of :func:`write_slice`: returns ``(p_i, p_j, values)``."""
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    ni = max(int(r["i"]) for r in rows) + 1
    nj = max(int(r["j"]) for r in rows) + 1
    vals = np.empty((ni, nj))
    pi, pj = np.empty(ni), np.empty(nj)
    for r in rows:
        a, b = int(r["i"]), int(r["j"])
        vals[a, b] = float(r["value"])
        pi[a], pj[b] = float(r["p_i"]), float(r["p_j"])
    return pi, pj, vals


def cmd_report(args):
    root = _campaign_dir(args)
    path = root / "campaign.json"
    if not path.exists():
        raise StageError(f"no report in {root}; the campaign has not finished")
    rep = read_json(path)
    if rep.get("schema_version") != pipeline.SCHEMA_VERSION:
        raise StageError(f"unsupported report schema_version {rep.get('schema_version')!r}")
    print(format_report(rep))
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rdopt", description="Robust design optimization campaigns.")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="campaign configuration (TOML)")
        p.add_argument("--dir", help=f"campaign directory (default: ${ENV_OUTPUT_DIR} or config output_dir)")

    p = sub.add_parser("run", help="run or resume a two-pass campaign")
    common(p)
    p.add_argument("--resume", action="store_true", help="continue at the first unfinished stage")
    p.add_argument("--seed-override", type=int, help="replace the master seed")
    p.add_argument("--parallelism", type=int, help="concurrent model evaluations")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("naive", help="naive maximization baseline")
    common(p)
    p.add_argument("--seed-override", type=int)
    p.add_argument("--parallelism", type=int)
    p.set_defaults(func=cmd_naive)

    p = sub.add_parser("reevaluate", help="robust optimum of the stored surrogate for a new sigma")
    common(p, config=False)
    p.add_argument("--sigma", help="comma-separated manufacturing sigmas (one value applies to all axes)")
    p.set_defaults(func=cmd_reevaluate)

    p = sub.add_parser("slice", help="export a 2-D landscape slice as CSV")
    common(p, config=False)
    p.add_argument("--axes", default="0,1", help="two axis indices, e.g. 0,2")
    p.add_argument("--grid", type=int, default=41)
    p.add_argument("--extent", type=float, default=4.0, help="half width in manufacturing sigmas")
    p.add_argument("--center", help="comma-separated center (default: selected design)")
    p.add_argument("--source", choices=("surrogate", "model"), default="surrogate")
    p.add_argument("--out", help="CSV path (default: <dir>/slice_<i>_<j>.csv)")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("validate", help="check a configuration file")
    p.add_argument("--config", help="campaign configuration (TOML)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="print the summary of a finished campaign")
    common(p, config=False)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f" [{exc.field}]" if getattr(exc, "field", None) else ""
        print(f"configuration error{where}: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CampaignError as exc:
        stage = getattr(exc, "stage", None)
        print(f"campaign failed{f' in stage {stage}' if stage else ''}: {exc}", file=sys.stderr)
        done = getattr(exc, "completed", None)
        if done:
            print(f"completed stages: {', '.join(done)}", file=sys.stderr)
        return 1
    except (StageError, RdoptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
