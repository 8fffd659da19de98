"""Per-child persistent model: preferences, EWMA emotion profile, mood.

The profile is an exponentially weighted moving average over observed
emotion scores (first observation seeds it verbatim).  Mood valence is a
fixed linear combination of the profile clamped to [-1, 1], and script
selection matches valence against each script's mood range with an LRU
tie-break.

Storage is one newline-delimited JSON file per child, append-only, last
record wins; every record carries a format version.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .backends import EmotionScores
from .protocol import EMOTIONS

DEFAULT_ALPHA = 0.3
RECORD_VERSION = 1

# valence weights per emotion (standard polarity of the six basic emotions)
VALENCE_WEIGHTS = {
    "happiness": 1.0,
    "sadness": -1.0,
    "surprise": 0.25,
    "fear": -0.75,
    "anger": -0.75,
    "disgust": -0.75,
}


class UserModelError(Exception):
    pass


class NoObservations(UserModelError):
    """Mood asked for before any emotion was observed."""


class NotFound(UserModelError):
    pass


class StorageUnavailable(UserModelError):
    pass


class EmptyLibrary(UserModelError):
    pass


@dataclass(frozen=True)
class UserModel:
    child_id: str
    preferences: dict[str, str] = field(default_factory=dict)
    emotion_profile: dict[str, float] | None = None  # None until first observation
    observation_count: int = 0
    last_updated: float | None = None
    interaction_log_ref: tuple[str, ...] = ()

    def __post_init__(self):
        if (self.observation_count == 0) != (self.emotion_profile is None):
            raise ValueError("profile must be absent exactly when observation_count is 0")
        if self.emotion_profile is not None:
            if set(self.emotion_profile) != set(EMOTIONS):
                raise ValueError("profile must carry exactly the six emotions")
            for name, value in self.emotion_profile.items():
                if not 0.0 <= value <= 1.0:
                    raise ValueError(f"profile entry {name}={value} out of [0,1]")


@dataclass(frozen=True)
class BehaviorScript:
    script_id: str
    title: str
    steps: tuple[dict, ...]  # BehaviorCommand templates (wire-shaped bodies)
    mood_range: tuple[float, float]
    last_used: float | None = None

    def __post_init__(self):
        lo, hi = self.mood_range
        if not (-1.0 <= lo <= hi <= 1.0):
            raise ValueError(f"mood_range [{lo}, {hi}] must be ordered within [-1, 1]")
        if not self.steps:
            raise ValueError("steps must be non-empty")

    def as_dict(self) -> dict:
        return {
            "script_id": self.script_id,
            "title": self.title,
            "steps": list(self.steps),
            "mood_range": list(self.mood_range),
            "last_used": self.last_used,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BehaviorScript":
        return cls(
            script_id=obj["script_id"],
            title=obj["title"],
            steps=tuple(obj["steps"]),
            mood_range=(float(obj["mood_range"][0]), float(obj["mood_range"][1])),
            last_used=obj.get("last_used"),
        )


def observe_emotion(
    model: UserModel, scores: EmotionScores, ts: float, alpha: float = DEFAULT_ALPHA
) -> UserModel:
    """Fold one observation into the profile.

    First observation seeds the profile with the scores; afterwards each
    entry moves by profile <- (1-alpha)*profile + alpha*score.
    """
    observed = scores.as_dict()
    if model.observation_count == 0:
        profile = observed
    else:
        profile = {
            name: (1.0 - alpha) * model.emotion_profile[name] + alpha * observed[name]
            for name in EMOTIONS
        }
    return replace(
        model,
        emotion_profile=profile,
        observation_count=model.observation_count + 1,
        last_updated=ts,
    )


def mood_valence(model: UserModel) -> float:
    """Weighted sum of the profile clamped to [-1, 1]."""
    if model.observation_count == 0 or model.emotion_profile is None:
        raise NoObservations(f"no emotions observed yet for {model.child_id}")
    raw = sum(VALENCE_WEIGHTS[name] * model.emotion_profile[name] for name in EMOTIONS)
    return max(-1.0, min(1.0, raw))


def choose_script(library: list[BehaviorScript], model: UserModel) -> BehaviorScript:
    """Pick the script for the child's current mood.

    Among scripts whose mood_range contains the valence, the least recently
    used wins (never-used counts as oldest).  With no range match, the
    script whose range midpoint is nearest the valence wins; ties go to the
    smaller script_id.  A child with no observations counts as neutral
    (valence 0.0) for selection.
    """
    if not library:
        raise EmptyLibrary("no scripts to choose from")
    try:
        valence = mood_valence(model)
    except NoObservations:
        valence = 0.0
    matching = [s for s in library if s.mood_range[0] <= valence <= s.mood_range[1]]
    if matching:
        return min(
            matching,
            key=lambda s: (s.last_used if s.last_used is not None else float("-inf"), s.script_id),
        )
    def midpoint_distance(s: BehaviorScript) -> float:
        lo, hi = s.mood_range
        return abs((lo + hi) / 2.0 - valence)
    return min(library, key=lambda s: (midpoint_distance(s), s.script_id))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _model_to_record(model: UserModel) -> dict:
    return {
        "version": RECORD_VERSION,
        "model": {
            "child_id": model.child_id,
            "preferences": model.preferences,
            "emotion_profile": model.emotion_profile,
            "observation_count": model.observation_count,
            "last_updated": model.last_updated,
            "interaction_log_ref": list(model.interaction_log_ref),
        },
    }


def _model_from_record(record: dict) -> UserModel:
    if record.get("version") != RECORD_VERSION:
        raise StorageUnavailable(f"unsupported record version {record.get('version')!r}")
    m = record["model"]
    return UserModel(
        child_id=m["child_id"],
        preferences=dict(m["preferences"]),
        emotion_profile=dict(m["emotion_profile"]) if m["emotion_profile"] is not None else None,
        observation_count=m["observation_count"],
        last_updated=m["last_updated"],
        interaction_log_ref=tuple(m["interaction_log_ref"]),
    )


class ModelStore:
    """Directory of per-child NDJSON model files with serialized mutation.

    Appends are atomic read-modify-write under a per-child lock; the last
    record in a file is the current model.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageUnavailable(f"cannot create model store at {directory}: {exc}") from exc
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, child_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(child_id, threading.Lock())

    def _path_for(self, child_id: str) -> Path:
        if not child_id or any(c in child_id for c in "/\\\0") or child_id in (".", ".."):
            raise UserModelError(f"invalid child_id {child_id!r}")
        return self.directory / f"{child_id}.ndjson"

    def exists(self, child_id: str) -> bool:
        return self._path_for(child_id).exists()

    def load(self, child_id: str) -> UserModel:
        path = self._path_for(child_id)
        with self._lock_for(child_id):
            if not path.exists():
                raise NotFound(f"no model for child {child_id!r}")
            try:
                lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line]
            except OSError as exc:
                raise StorageUnavailable(str(exc)) from exc
        if not lines:
            raise NotFound(f"no records for child {child_id!r}")
        return _model_from_record(json.loads(lines[-1]))

    def persist(self, model: UserModel) -> None:
        path = self._path_for(model.child_id)
        record = json.dumps(_model_to_record(model), sort_keys=True, separators=(",", ":"))
        with self._lock_for(model.child_id):
            try:
                with open(path, "a", encoding="utf-8") as fh:
                    fh.write(record + "\n")
                    fh.flush()
            except OSError as exc:
                raise StorageUnavailable(str(exc)) from exc

    def update(self, child_id: str, fn: Callable[[UserModel], UserModel]) -> UserModel:
        """Atomic read-modify-write; creates a fresh model when absent."""
        path = self._path_for(child_id)
        with self._lock_for(child_id):
            if path.exists():
                lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line]
                current = _model_from_record(json.loads(lines[-1])) if lines else UserModel(child_id)
            else:
                current = UserModel(child_id)
            updated = fn(current)
            record = json.dumps(_model_to_record(updated), sort_keys=True, separators=(",", ":"))
            try:
                with open(path, "a", encoding="utf-8") as fh:
                    fh.write(record + "\n")
                    fh.flush()
            except OSError as exc:
                raise StorageUnavailable(str(exc)) from exc
            return updated

    def list_children(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.ndjson"))
