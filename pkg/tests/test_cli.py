import json

import numpy as np
import pytest

from rdopt import cli
from rdopt import config as config_mod
from rdopt.serialization import read_jsonl


@pytest.fixture
def campaign(tmp_path, tiny_config_file):
    root = tmp_path / "run"
    assert cli.main(["run", "--config", str(tiny_config_file), "--dir", str(root)]) == 0
    return root


def test_validate(tiny_config_file, capsys):
    assert cli.main(["validate", "--config", str(tiny_config_file)]) == 0
    assert "config OK" in capsys.readouterr().out


def test_run_completes_all_stages(campaign, capsys):
    m = json.loads((campaign / "manifest.json").read_text())
    assert all(m["stages"].values())
    assert {"pass1.verify", "pass2.verify", "naive", "report"} <= set(m["stages"])
    assert cli.main(["report", "--dir", str(campaign)]) == 0
    out = capsys.readouterr().out
    assert "selected robust design" in out and "±" in out and "σ₋/σ₊" in out


def test_narrow_domain_exits_2_naming_axis(tmp_path, tiny_config, capsys):
    d = tiny_config.to_dict()
    d["domain"]["upper"] = [10.0, 1.5]
    path = tmp_path / "bad.toml"
    path.write_text(config_mod.dumps(config_mod.CampaignConfig.from_dict(d)))
    assert cli.main(["run", "--config", str(path), "--dir", str(tmp_path / "x")]) == 2
    assert "domain.y" in capsys.readouterr().err


def test_unknown_key_exits_2(tmp_path, tiny_config_file, capsys):
    path = tmp_path / "typo.toml"
    path.write_text(tiny_config_file.read_text().replace("[pass1]", "[pass1]\nn_trian = 3"))
    assert cli.main(["validate", "--config", str(path)]) == 2
    assert "n_trian" in capsys.readouterr().err


def test_resume_makes_no_training_calls(tmp_path, tiny_config_file):
    root = tmp_path / "r"
    assert cli.main(["run", "--config", str(tiny_config_file), "--dir", str(root)]) == 0
    # pretend the campaign stopped after training
    m = json.loads((root / "manifest.json").read_text())
    m["stages"] = {"pass1.training": True}
    m["artifacts"] = {"pass1.training": m["artifacts"]["pass1.training"]}
    (root / "manifest.json").write_text(json.dumps(m))
    before = len(read_jsonl(root / "evaluations.jsonl"))
    assert cli.main(["run", "--config", str(tiny_config_file), "--dir", str(root), "--resume"]) == 0
    new = [r["stage"] for r in read_jsonl(root / "evaluations.jsonl")[before:]]
    assert "pass1.training" not in new and "pass1.verify" in new


def test_output_dir_from_environment(tmp_path, tiny_config_file, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUTPUT_DIR, str(tmp_path / "env"))
    assert cli.main(["run", "--config", str(tiny_config_file), "--seed-override", "3"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()
    assert config_mod.load(tmp_path / "env" / "config.toml").seed == 3


def test_naive_generates_training_data(tmp_path, tiny_config_file, capsys):
    root = tmp_path / "fresh"
    assert cli.main(["naive", "--config", str(tiny_config_file), "--dir", str(root)]) == 0
    assert (root / "pass1" / "training.json").exists()
    assert "naive optimum" in capsys.readouterr().out


def test_naive_updates_report(campaign, tiny_config_file):
    rep = json.loads((campaign / "campaign.json").read_text())
    assert cli.main(["naive", "--config", str(tiny_config_file), "--dir", str(campaign)]) == 0
    assert json.loads((campaign / "campaign.json").read_text())["naive"] == rep["naive"]


def test_reevaluate(campaign, tiny_config):
    before = (campaign / "evaluations.jsonl").read_text()
    assert cli.main(["reevaluate", "--dir", str(campaign), "--sigma", "0.3,0.3"]) == 0
    rec = json.loads((campaign / "reevaluate_0.3_0.3.json").read_text())
    selected = json.loads((campaign / "campaign.json").read_text())["selected"]["point"]
    # same sigma reproduces the stored selection within the cluster radius (unit coordinates)
    dom = json.loads((campaign / "campaign.json").read_text())["pass2"]["eval_domain"]
    width = np.subtract(dom["upper"], dom["lower"])
    assert np.linalg.norm((np.subtract(rec["point"], selected)) / width) < tiny_config.pass2.cluster_radius
    assert (campaign / "evaluations.jsonl").read_text() == before  # no model calls


def test_reevaluate_errors(campaign, tmp_path):
    assert cli.main(["reevaluate", "--dir", str(tmp_path / "none"), "--sigma", "0.1"]) == 1
    assert cli.main(["reevaluate", "--dir", str(campaign), "--sigma", "50"]) == 2
    assert cli.main(["reevaluate", "--dir", str(campaign), "--sigma", "a,b"]) == 2


def test_slice_csv(campaign, tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["slice", "--dir", str(campaign), "--axes", "0,1", "--grid", "2", "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "i,j,p_i,p_j,value" and len(lines) == 5
    meta = json.loads(out.with_suffix(".json").read_text())
    assert [e["level"] for e in meta["ellipses"]] == [1, 2, 3]


def test_slice_round_trip_is_bitwise(campaign, tmp_path):
    from rdopt import pipeline, warp

    center = [6.0, 4.5]
    out = tmp_path / "grid.csv"
    assert cli.main(["slice", "--dir", str(campaign), "--grid", "7", "--center", "6,4.5", "--out", str(out)]) == 0
    sur = warp.WarpedGPModel.from_dict(json.loads((campaign / "pass2" / "surrogate.json").read_text()))
    sl = pipeline.landscape_slice(sur, center, 0, 1, 7, 4.0, [0.3, 0.3])
    pi, pj, vals = cli.read_slice(out)
    np.testing.assert_array_equal(vals, sl.values)
    np.testing.assert_array_equal(pi, sl.p_i)


def test_slice_bad_axes(campaign):
    assert cli.main(["slice", "--dir", str(campaign), "--axes", "0,5"]) == 2
    assert cli.main(["slice", "--dir", str(campaign), "--axes", "1"]) == 2


def test_report_missing(tmp_path):
    assert cli.main(["report", "--dir", str(tmp_path)]) == 1
