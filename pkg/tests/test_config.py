"""Configuration file loading and validation."""
import json

import pytest

from sar_gateway.config import DEFAULT_SCRIPTS, ConfigError, GatewayConfig


def test_defaults_validate():
    config = GatewayConfig().validate()
    assert config.robot_port == 7780
    assert config.http_port == 7781
    assert config.backend == "mock"
    assert config.pipeline_mode == "pipelined"
    assert config.fragment_size == 16000
    assert config.alpha == 0.3
    assert [s["script_id"] for s in config.scripts] == [
        "calm_waters",
        "meet_and_greet",
        "adventure_time",
    ]


def test_from_file_applies_values(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"robot_port": 9000, "backend": "remote", "alpha": 0.5}))
    config = GatewayConfig.from_file(path)
    assert config.robot_port == 9000
    assert config.backend == "remote"
    assert config.alpha == 0.5
    assert config.http_port == 7781  # untouched default


def test_from_file_overrides_win(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"robot_port": 9000}))
    config = GatewayConfig.from_file(path, robot_port=9100, http_port=None)
    assert config.robot_port == 9100
    assert config.http_port == 7781


def test_unknown_keys_rejected(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"robot_prot": 9000}))
    with pytest.raises(ConfigError):
        GatewayConfig.from_file(path)


@pytest.mark.parametrize(
    "overrides",
    [
        {"backend": "azure"},
        {"pipeline_mode": "parallel"},
        {"fragment_size": 0},
        {"alpha": 1.5},
        {"vad_start_threshold": 0.01, "vad_stop_threshold": 0.02},
        {"animations": {"happiness": "dance_joy"}},
        {"phrases": {"Positive": ["x"]}},
        {"scripts": [{"script_id": "broken"}]},
        {"scripts": [dict(DEFAULT_SCRIPTS[0], mood_range=[0.5, -0.5])]},
    ],
)
def test_invalid_values_rejected(overrides):
    with pytest.raises(ConfigError):
        GatewayConfig(**overrides).validate()


def test_with_overrides_skips_none():
    config = GatewayConfig().with_overrides(robot_port=None, http_port=8888)
    assert config.robot_port == 7780
    assert config.http_port == 8888


def test_save_load_roundtrip(tmp_path):
    path = tmp_path / "config.json"
    original = GatewayConfig(robot_port=7000, retry_limit=5, transcribe_latency_s=0.2)
    original.save(path)
    assert GatewayConfig.from_file(path) == original
