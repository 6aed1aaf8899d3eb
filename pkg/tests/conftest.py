import numpy as np
import pytest

from rdopt import config as config_mod
from rdopt.config import NaiveSettings, PassSettings
from rdopt.domain import BoxDomain
from rdopt.montecarlo import RobustConfig
from rdopt.objectives import GaussianBump

# acceptance outcomes, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def tiny_campaign_config(seed=0, **overrides):
    """A 2-D bump campaign that runs in a few seconds."""
    dom = BoxDomain([0.0, 0.0], [10.0, 10.0], ("x", "y"), "mm")
    obj = GaussianBump([6.0, 4.5], 2.0, 3.0, dom, baseline=0.01)
    common = dict(n_eval=32, fit_restarts=2, max_fit_points=64, bo_restarts=16, bo_budget=3)
    kw = dict(
        model={"name": "gaussian_bump", "params": obj.params()}, domain=dom, sigma_manuf=0.3, seed=seed,
        robust=RobustConfig(batch=500, n_cap=1000),
        pass1=PassSettings(n_train=64, n_candidates=2, n_verify=32, **common),
        pass2=PassSettings(n_train=64, n_candidates=1, n_verify=64, **common),
        naive=NaiveSettings(enabled=True, bo_budget=3, n_verify=64))
    kw.update(overrides)
    return config_mod.CampaignConfig(**kw)


@pytest.fixture
def tiny_config():
    return tiny_campaign_config()


@pytest.fixture
def tiny_config_file(tmp_path, tiny_config):
    path = tmp_path / "campaign.toml"
    config_mod.save(tiny_config, path)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
