"""Run configuration tests: defaults, overrides, file loading, validation."""

import pytest

from semnav.config import RunConfig, STABILITY_MAJORITY_DEN, STABILITY_MAJORITY_NUM
from semnav.errors import ConfigError


def test_default_values_pin_the_contract():
    c = RunConfig()
    assert c.dim == 512
    assert c.image_weight == 0.7
    assert c.text_weight == 0.3
    assert c.voxel == 0.05
    assert c.min_obs_points == 10
    assert c.match_threshold == 1.05
    assert c.keyframe_translation == 1.0
    assert c.keyframe_rotation_deg == 20.0
    assert c.stability_window == 20
    assert c.stability_min_obs == 5
    assert c.split_persistence == 3
    assert c.anchor_threshold == 0.6
    assert c.grid_resolution == 0.1
    assert c.on_distance == 0.1
    assert c.containment_threshold == 0.6
    assert c.merge_overlap == 0.3
    assert c.replace_overlap == 0.7
    assert c.score_margin == 0.05
    assert c.attempt_limit == 3
    assert c.success_radius == 1.0
    assert c.inflation == 0.2
    assert c.rrt_budget == 5000
    assert c.rrt_step == 0.3
    assert c.rrt_goal_bias == 0.05
    assert c.seed == 0


def test_majority_rule_is_two_thirds():
    assert (STABILITY_MAJORITY_NUM, STABILITY_MAJORITY_DEN) == (2, 3)


def test_effective_overlap_radius_defaults_to_voxel():
    assert RunConfig().effective_overlap_radius == 0.05
    assert RunConfig(overlap_radius=0.2).effective_overlap_radius == 0.2


def test_with_overrides_known_key():
    base = RunConfig()
    out = base.with_overrides({"match_threshold": 1.2})
    assert out.match_threshold == 1.2
    assert base.match_threshold == 1.05


def test_with_overrides_unknown_key():
    with pytest.raises(ConfigError):
        RunConfig().with_overrides({"matchthreshold": 1.2})


@pytest.mark.parametrize(
    "field,value",
    [
        ("dim", 0),
        ("voxel", 0.0),
        ("voxel", -0.1),
        ("image_weight", -0.2),
        ("min_obs_points", 0),
        ("stability_window", 0),
        ("stability_min_obs", 0),
        ("split_persistence", 0),
        ("anchor_threshold", 1.5),
        ("containment_threshold", -0.1),
        ("grid_resolution", 0.0),
        ("attempt_limit", 0),
        ("success_radius", 0.0),
        ("rrt_budget", 0),
        ("rrt_step", 0.0),
        ("rrt_goal_bias", 1.5),
        ("rrt_early_exit_ratio", 0.5),
    ],
)
def test_validation_rejects_bad_values(field, value):
    with pytest.raises(ConfigError):
        RunConfig(**{field: value})


def test_dict_round_trip():
    c = RunConfig(dim=64, match_threshold=1.1, seed=9)
    assert RunConfig.from_dict(c.to_dict()) == c


def test_to_dict_keys_sorted():
    keys = list(RunConfig().to_dict())
    assert keys == sorted(keys)


def test_from_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("dim: 32\nmatch_threshold: 1.2\n")
    c = RunConfig.from_file(path)
    assert c.dim == 32
    assert c.match_threshold == 1.2
    assert c.voxel == 0.05


def test_from_file_rejects_bad_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("dim: [unclosed\n")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)


def test_from_file_rejects_non_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)


def test_from_file_rejects_unknown_key(tmp_path):
    path = tmp_path / "extra.yaml"
    path.write_text("dim: 32\nnot_a_field: 1\n")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)
