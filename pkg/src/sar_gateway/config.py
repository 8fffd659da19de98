"""Gateway configuration: one JSON file, validated at startup."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import audio, backends, behavior
from .user_model import DEFAULT_ALPHA, BehaviorScript

PIPELINED = "pipelined"
SEQUENTIAL = "sequential"

DEFAULT_SCRIPTS = [
    {
        "script_id": "calm_waters",
        "title": "Calm waters breathing story",
        "steps": [
            {"kind": "speech", "text": "Let's take a slow breath together."},
            {"kind": "animation", "animation_id": "slump_shoulders"},
            {"kind": "speech", "text": "We are safe and calm, like quiet water."},
        ],
        "mood_range": [-1.0, -0.2],
        "last_used": None,
    },
    {
        "script_id": "meet_and_greet",
        "title": "Getting to know each other",
        "steps": [
            {"kind": "speech", "text": "Hello! I am your robot friend."},
            {"kind": "speech", "text": "What did you do today?"},
        ],
        "mood_range": [-0.3, 0.3],
        "last_used": None,
    },
    {
        "script_id": "adventure_time",
        "title": "Jungle adventure story",
        "steps": [
            {"kind": "speech", "text": "Let's go on an adventure!"},
            {"kind": "animation", "animation_id": "dance_joy"},
            {"kind": "speech", "text": "You lead the way, explorer!"},
        ],
        "mood_range": [0.2, 1.0],
        "last_used": None,
    },
]


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class GatewayConfig:
    robot_port: int = 7780
    http_port: int = 7781
    data_dir: str = "./sar-data"
    backend: str = "mock"  # mock | remote

    # VAD defaults mirrored to clients that ask for them
    vad_start_threshold: float = audio.DEFAULT_START_THRESHOLD
    vad_stop_threshold: float = audio.DEFAULT_STOP_THRESHOLD
    vad_hangover_windows: int = audio.DEFAULT_HANGOVER_WINDOWS

    fragment_size: int = audio.DEFAULT_FRAGMENT_SIZE
    pipeline_mode: str = PIPELINED  # pipelined | sequential (reference mode)
    transcription_workers: int = 8
    transcribe_latency_s: float = 0.0  # mock-backend latency injection

    alpha: float = DEFAULT_ALPHA
    retry_phrase: str = behavior.DEFAULT_RETRY_PHRASE
    retry_limit: int = behavior.DEFAULT_RETRY_LIMIT
    animations: dict = field(default_factory=lambda: dict(behavior.DEFAULT_ANIMATIONS))
    phrases: dict = field(default_factory=lambda: {k: list(v) for k, v in behavior.DEFAULT_PHRASES.items()})
    scripts: list = field(default_factory=lambda: [dict(s) for s in DEFAULT_SCRIPTS])

    manifest_path: str | None = None
    positive_words_path: str | None = None
    negative_words_path: str | None = None

    remote_host: str = "127.0.0.1"
    remote_port: int = 8800
    remote_path_prefix: str = ""
    backend_connect_timeout_s: float = backends.DEFAULT_CONNECT_TIMEOUT
    backend_total_timeout_s: float = backends.DEFAULT_TOTAL_TIMEOUT

    max_frame_bytes: int = 16 * 1024 * 1024
    response_timeout_s: float = 15.0  # robot-sim wait for a reply

    def validate(self) -> "GatewayConfig":
        if self.backend not in ("mock", "remote"):
            raise ConfigError(f"backend must be mock or remote, got {self.backend!r}")
        if self.pipeline_mode not in (PIPELINED, SEQUENTIAL):
            raise ConfigError(f"pipeline_mode must be pipelined or sequential, got {self.pipeline_mode!r}")
        if self.fragment_size <= 0:
            raise ConfigError("fragment_size must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0,1]")
        if self.vad_stop_threshold > self.vad_start_threshold:
            raise ConfigError("vad stop_threshold must not exceed start_threshold")
        try:
            behavior.validate_animation_table(self.animations)
            behavior.validate_phrase_table(self.phrases)
        except behavior.IncompleteTable as exc:
            raise ConfigError(str(exc)) from exc
        for script in self.scripts:
            try:
                BehaviorScript.from_dict(script)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"invalid script {script.get('script_id')!r}: {exc}") from exc
        return self

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "GatewayConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw).validate()

    def save(self, path: str | Path) -> None:
        payload = {name: getattr(self, name) for name in self.__dataclass_fields__}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def with_overrides(self, **overrides) -> "GatewayConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None}).validate()
