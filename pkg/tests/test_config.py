import dataclasses

import pytest

from rdopt import config as config_mod
from rdopt.domain import BoxDomain
from rdopt.errors import ConfigError
from rdopt.pipeline import reference_campaign_config


def test_round_trip_is_identity(tiny_config):
    text = config_mod.dumps(tiny_config)
    again = config_mod.loads(text)
    assert again.to_dict() == tiny_config.to_dict()
    assert config_mod.dumps(again) == text
    assert again.config_hash() == tiny_config.config_hash()


def test_reference_config_round_trip():
    cfg = reference_campaign_config()
    assert config_mod.loads(config_mod.dumps(cfg)).to_dict() == cfg.to_dict()


def test_hash_changes_with_seed(tiny_config):
    assert dataclasses.replace(tiny_config, seed=1).config_hash() != tiny_config.config_hash()


def test_comments_are_allowed(tiny_config):
    text = "# reviewed campaign\n" + config_mod.dumps(tiny_config)
    assert config_mod.loads(text).seed == tiny_config.seed


@pytest.mark.parametrize("section, key", [("", "colour"), ("pass1", "n_trian"), ("robust", "tol")])
def test_unknown_keys_rejected(tiny_config, section, key):
    d = tiny_config.to_dict()
    (d[section] if section else d)[key] = 1
    with pytest.raises(ConfigError) as exc:
        config_mod.CampaignConfig.from_dict(d)
    assert key in str(exc.value)


def test_missing_section(tiny_config):
    d = tiny_config.to_dict()
    del d["manufacturing"]
    with pytest.raises(ConfigError, match="manufacturing"):
        config_mod.CampaignConfig.from_dict(d)


def test_malformed_toml():
    with pytest.raises(ConfigError, match="malformed"):
        config_mod.loads("seed = = 3")


def test_bad_values(tiny_config):
    d = tiny_config.to_dict()
    d["pass1"]["n_train"] = 1
    with pytest.raises(ConfigError):
        config_mod.CampaignConfig.from_dict(d)
    d = tiny_config.to_dict()
    d["robust"]["stop_mode"] = "sometimes"
    with pytest.raises(ConfigError):
        config_mod.CampaignConfig.from_dict(d)
    d = tiny_config.to_dict()
    d["manufacturing"]["sigma"] = -1.0
    with pytest.raises(ConfigError):
        config_mod.CampaignConfig.from_dict(d)


def test_narrow_axis_fails_validation_naming_the_axis(tiny_config):
    dom = BoxDomain([0.0, 0.0], [10.0, 1.5], ("x", "y"), "mm")  # 1.5 < 6 * 0.3 on y
    cfg = dataclasses.replace(tiny_config, domain=dom)
    with pytest.raises(ConfigError) as exc:
        cfg.validate()
    assert exc.value.field == "domain.y"


def test_per_axis_sigma(tiny_config):
    d = tiny_config.to_dict()
    d["manufacturing"]["sigma"] = [0.3, 0.1]
    cfg = config_mod.CampaignConfig.from_dict(d)
    assert cfg.sigma_manuf.tolist() == [0.3, 0.1]
