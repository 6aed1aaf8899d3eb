"""Campaign configuration and its TOML file format."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib
import tomli_w

from .domain import BoxDomain
from .errors import ConfigError, DomainTooSmallError
from .montecarlo import RobustConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PassSettings:
    n_train: int = 4096
    n_eval: int = 4096
    outlier_threshold: float | None = None
    cluster_radius: float = 0.25
    n_candidates: int = 6
    bo_budget: int = 64
    n_verify: int = 64
    fit_restarts: int = 8
    max_fit_points: int = 1024
    bo_restarts: int = 64
    train_skip: int = 0
    eval_skip: int = 0

    def __post_init__(self):
        for name in ("n_train", "n_eval", "n_candidates", "fit_restarts", "bo_restarts", "max_fit_points"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive", field=name)
        if self.n_train < 2:
            raise ConfigError("n_train must be at least 2", field="n_train")
        if self.n_verify < 2:
            raise ConfigError("n_verify must be at least 2", field="n_verify")
        if self.bo_budget < 0 or self.train_skip < 0 or self.eval_skip < 0:
            raise ConfigError("bo_budget and skips must be non-negative")
        if not self.cluster_radius > 0:
            raise ConfigError("cluster_radius must be positive", field="cluster_radius")


@dataclass(frozen=True)
class NaiveSettings:
    enabled: bool = True
    bo_budget: int = 64
    n_verify: int = 512


def _default_pass2():
    return PassSettings(n_candidates=1, n_verify=512)


@dataclass(frozen=True, eq=False)
class CampaignConfig:
    """Everything needed to run (and reproduce) a two-pass campaign."""

    model: dict
    domain: BoxDomain
    sigma_manuf: np.ndarray
    seed: int = 0
    parallelism: int = 1
    half_width_sigmas: float = 5.0
    y_lower: float = 0.0
    output_dir: str = "campaign"
    robust: RobustConfig = field(default_factory=RobustConfig)
    pass1: PassSettings = field(default_factory=PassSettings)
    pass2: PassSettings = field(default_factory=_default_pass2)
    naive: NaiveSettings = field(default_factory=NaiveSettings)

    def __post_init__(self):
        s = np.broadcast_to(np.asarray(self.sigma_manuf, dtype=float), (self.domain.dim,)).copy()
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ConfigError("sigma must be finite and non-negative", field="manufacturing.sigma")
        object.__setattr__(self, "sigma_manuf", s)
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1", field="parallelism")
        if not self.half_width_sigmas > 0:
            raise ConfigError("half_width_sigmas must be positive", field="half_width_sigmas")

    def validate(self):
        """Check that both passes have a non-empty evaluation domain."""
        from .pipeline import shrink_eval_domain

        try:
            shrink_eval_domain(self.domain, self.sigma_manuf)
        except DomainTooSmallError as exc:
            raise ConfigError(f"domain axis {self.domain.labels[exc.axis]!r}: {exc}",
                              field=f"domain.{self.domain.labels[exc.axis]}") from None
        if not self.half_width_sigmas > 3.0 and np.any(self.sigma_manuf > 0):
            raise ConfigError("half_width_sigmas must exceed 3 so the second pass has an eval domain",
                              field="half_width_sigmas")
        return self

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "seed": int(self.seed), "parallelism": int(self.parallelism),
            "half_width_sigmas": float(self.half_width_sigmas), "y_lower": float(self.y_lower),
            "output_dir": self.output_dir,
            "model": self.model,
            "domain": self.domain.to_dict(),
            "manufacturing": {"sigma": self.sigma_manuf.tolist()},
            "robust": dataclasses.asdict(self.robust),
            "pass1": _drop_none(dataclasses.asdict(self.pass1)),
            "pass2": _drop_none(dataclasses.asdict(self.pass2)),
            "naive": dataclasses.asdict(self.naive),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        top = {"schema_version", "seed", "parallelism", "half_width_sigmas", "y_lower", "output_dir",
               "model", "domain", "manufacturing", "robust", "pass1", "pass2", "naive"}
        _reject_unknown(d, top, "")
        if d.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {d.get('schema_version')!r}", field="schema_version")
        for key in ("model", "domain", "manufacturing"):
            if key not in d:
                raise ConfigError(f"missing section [{key}]", field=key)
        model = d["model"]
        _reject_unknown(model, {"name", "params"}, "model")
        if "name" not in model:
            raise ConfigError("model.name is required", field="model.name")
        dom = d["domain"]
        _reject_unknown(dom, {"lower", "upper", "labels", "units"}, "domain")
        try:
            domain = BoxDomain.from_dict(dom)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid domain: {exc}", field="domain") from None
        man = d["manufacturing"]
        _reject_unknown(man, {"sigma"}, "manufacturing")
        kwargs = {}
        for name, typ in (("robust", RobustConfig), ("pass1", PassSettings), ("pass2", PassSettings),
                          ("naive", NaiveSettings)):
            if name in d:
                sec = d[name]
                _reject_unknown(sec, {f.name for f in dataclasses.fields(typ)}, name)
                base = _default_pass2() if name == "pass2" else typ()
                try:
                    kwargs[name] = dataclasses.replace(base, **sec)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"[{name}]: {exc}", field=name) from None
        scalars = {k: d[k] for k in ("seed", "parallelism", "half_width_sigmas", "y_lower", "output_dir") if k in d}
        try:
            return cls(model={"name": model["name"], "params": model.get("params", {})}, domain=domain,
                       sigma_manuf=man.get("sigma"), **scalars, **kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _drop_none(d):
    return {k: v for k, v in d.items() if v is not None}


def _reject_unknown(section, allowed, where):
    if not isinstance(section, dict):
        raise ConfigError(f"[{where}] must be a table", field=where)
    unknown = set(section) - set(allowed)
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"unknown key {name!r} in [{where or 'top level'}]",
                          field=f"{where}.{name}" if where else name)


def loads(text: str) -> CampaignConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from None
    return CampaignConfig.from_dict(data)


def dumps(cfg: CampaignConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def load(path) -> CampaignConfig:
    return loads(Path(path).read_text())


def save(cfg: CampaignConfig, path):
    Path(path).write_text(dumps(cfg))
