import numpy as np
import pytest
import tomli

from riskplan.config import ConfigError, dumps, load_planner_config, override, to_dict
from riskplan.planner import PlannerConfig


def test_round_trip_defaults():
    cfg = PlannerConfig()
    back = override(PlannerConfig(), tomli.loads(dumps(cfg)))
    assert to_dict(back) == to_dict(cfg)


def test_round_trip_modified(tmp_path):
    cfg = override(PlannerConfig(), {"weights": {"w_h": 3.5}, "mpc": {"N": 12, "R_input": [[2.0, 0.0], [0.0, 7.0]]}})
    f = tmp_path / "c.toml"
    f.write_text(dumps(cfg))
    back = load_planner_config(f)
    assert back.weights.w_h == 3.5 and back.mpc.N == 12
    assert np.array_equal(back.mpc.R_input, np.diag([2.0, 7.0]))


def test_partial_override_keeps_defaults(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("[planner.limits]\nv_max = 22.0\n")
    cfg = load_planner_config(f)
    assert cfg.limits.v_max == 22.0 and cfg.limits.a_l_max == PlannerConfig().limits.a_l_max


@pytest.mark.parametrize("data", [
    {"nonsense": 1},
    {"weights": {"w_s": "heavy"}},
    {"mpc": {"N": 2.5}},
    {"mpc": {"Q_state": [[1.0, 0.0], [0.0, 1.0]]}},
    {"weights": 3},
    {"limits": {"v_min": 50.0}},
    {"replan_period": 0.01},
])
def test_rejects_bad_values(data):
    with pytest.raises(ConfigError):
        override(PlannerConfig(), data)


def test_unreadable_and_malformed(tmp_path):
    with pytest.raises(ConfigError, match="missing.toml"):
        load_planner_config(tmp_path / "missing.toml")
    f = tmp_path / "bad.toml"
    f.write_text("[planner\n")
    with pytest.raises(ConfigError):
        load_planner_config(f)


def test_dump_is_compact_and_sorted_stably():
    text = dumps(PlannerConfig())
    assert "[sampler]" in text and "counts = [9, 3, 4]" in text
    assert dumps(PlannerConfig()) == text
