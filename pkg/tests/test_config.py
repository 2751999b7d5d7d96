"""Tests for config presets, strict parsing, and deep-merge semantics."""

import json

import pytest

from strokegen.config import (CONFIG_VERSION, DiffusionTrainConfig, RunConfig,
                              config_from_dict, full_profile, load_config,
                              profile_config, toy_profile)
from strokegen.errors import InvalidArgument, ParseError


# ---------------------------------------------------------------------------
# presets

def test_toy_profile_geometry():
    run = toy_profile()
    assert run.profile == "toy"
    assert run.style.full_size == (32, 256)
    assert run.style.scales == ((24, 192), (16, 128))
    assert run.style.grid == (4, 32)
    assert run.diffusion.steps == 50
    assert run.diffusion_train.iters == 2000


def test_full_profile_geometry():
    run = full_profile()
    assert run.profile == "full"
    assert run.style.full_size == (128, 1024)
    assert run.style.scales == ((96, 768), (64, 512))
    assert run.diffusion.steps == 1000
    assert run.diffusion.beta_max == 0.02
    assert run.diffusion_train.warmup == 1000
    assert run.diffusion_train.ema_decay == 0.999


def test_profile_config_dispatch():
    assert profile_config("toy", seed=7).seed == 7
    assert profile_config("full").profile == "full"
    with pytest.raises(InvalidArgument):
        profile_config("huge")


def test_train_schedule_defaults():
    cfg = DiffusionTrainConfig()
    assert cfg.warmup < cfg.iters
    assert 0.0 < cfg.ema_decay < 1.0


# ---------------------------------------------------------------------------
# validation

def test_version_mismatch_rejected():
    with pytest.raises(InvalidArgument):
        RunConfig(version=CONFIG_VERSION + 1)


def test_unknown_profile_rejected():
    with pytest.raises(InvalidArgument):
        RunConfig(profile="medium")


def test_unknown_keys_rejected():
    with pytest.raises(InvalidArgument) as err:
        config_from_dict({"learning_rate": 1e-3})
    assert "learning_rate" in str(err.value)


def test_unknown_nested_keys_rejected():
    with pytest.raises(InvalidArgument) as err:
        config_from_dict({"diffusion": {"stepz": 10}})
    assert "config.diffusion" in str(err.value)


def test_non_dict_root_rejected():
    with pytest.raises(InvalidArgument):
        config_from_dict([1, 2, 3])


# ---------------------------------------------------------------------------
# dict round-trip and merging

def test_to_dict_round_trip():
    run = toy_profile(seed=5)
    assert config_from_dict(run.to_dict()).to_dict() == run.to_dict()


def test_full_profile_dict_round_trip():
    run = full_profile(seed=2)
    assert config_from_dict(run.to_dict()).to_dict() == run.to_dict()


def test_overrides_merge_into_profile_defaults():
    run = config_from_dict({"diffusion": {"layers": 5},
                            "diffusion_train": {"lr": 1e-3}})
    assert run.diffusion.layers == 5
    assert run.diffusion_train.lr == 1e-3
    # untouched siblings keep their preset values
    assert run.diffusion.steps == toy_profile().diffusion.steps
    assert run.diffusion_train.iters == toy_profile().diffusion_train.iters


def test_merge_uses_named_profile_defaults():
    run = config_from_dict({"profile": "full", "seed": 3})
    assert run.diffusion.steps == 1000
    assert run.seed == 3


def test_tuple_fields_accept_json_lists():
    run = config_from_dict({"style": {"full_size": [32, 256],
                                      "scales": [[24, 192], [16, 128]],
                                      "local_crop": [20, 96]}})
    assert run.style.full_size == (32, 256)
    assert run.style.scales == ((24, 192), (16, 128))
    assert run.style.local_crop == (20, 96)


def test_replace_returns_new_config():
    run = toy_profile()
    other = run.replace(seed=9)
    assert other.seed == 9 and run.seed == 0
    assert other.style == run.style


# ---------------------------------------------------------------------------
# file loading

def test_load_config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 11, "diffusion": {"heads": 2}}))
    run = load_config(path)
    assert run.seed == 11
    assert run.diffusion.heads == 2


def test_load_config_bad_json(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_config(path)
