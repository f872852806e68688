from __future__ import annotations

import json
from pathlib import Path

import pytest

from crsfl.config import ConfigError, ExperimentConfig, load_config


def test_defaults_validate_and_roundtrip():
    cfg = ExperimentConfig()
    cfg.validate()
    assert ExperimentConfig.from_dict(json.loads(cfg.to_json())) == cfg


def test_shipped_default_file_matches_code_defaults():
    assert load_config(Path(__file__).parents[1] / "configs" / "default.json") == ExperimentConfig()


def test_overrides_replace_leaves():
    cfg = ExperimentConfig().with_overrides({"run.rounds": 7, "model.hidden": [8, 8],
                                             "resources.noise_sd": 0})
    assert cfg.run.rounds == 7 and cfg.model.hidden == (8, 8)
    assert isinstance(cfg.resources.noise_sd, float)


@pytest.mark.parametrize("override, fragment", [
    ({"run.rounds": 0}, "run.rounds"),
    ({"run.arm": "fedprox"}, "run.arm"),
    ({"run.nope": 1}, "unknown key"),
    ({"bogus.key": 1}, "unknown section"),
    ({"run.rounds": "ten"}, "expected int"),
    ({"selector.csfl_fraction": 0.0}, "csfl_fraction"),
    ({"run.sl_budget_mode": "fast"}, "sl_budget_mode"),
])
def test_bad_values_report_the_field(override, fragment):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig().with_overrides(override)
    assert any(fragment in p for p in info.value.problems)


def test_multiple_problems_reported_together():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"run": {"rounds": -1, "seed": "x"}, "extra": {}})
    assert len(info.value.problems) >= 2


def test_malformed_json(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_partial_file_keeps_other_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"run": {"seed": 3}}))
    cfg = load_config(path)
    assert cfg.run.seed == 3 and cfg.model == ExperimentConfig().model
