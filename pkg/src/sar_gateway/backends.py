"""Pluggable analysis services: emotion recognition, speech-to-text, sentiment.

Two interchangeable backends:

* LocalBackend — deterministic stand-in for the external providers.  Images
  and utterances are recognized by SHA-256 lookup in a fixture manifest;
  sentiment comes from a word-list lexicon.
* RemoteBackend — HTTP client posting base64 payloads to a configured
  endpoint, for deployments where the real services exist.

Both raise BackendUnavailable on connectivity problems; retry policy is the
caller's (arbitration's) job.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .audio import floats_to_pcm16
from .clock import Clock
from .protocol import EMOTIONS, ERROR_TEXT, b64encode_bytes

_TOKEN_RE = re.compile(r"[a-z0-9]+")

DEFAULT_CONNECT_TIMEOUT = 5.0
DEFAULT_TOTAL_TIMEOUT = 10.0

HIT_CONFIDENCE = 0.9
MISS_CONFIDENCE = 0.05


class BackendError(Exception):
    pass


class BackendUnavailable(BackendError):
    """The service could not be reached or did not answer in time."""


class InvalidImage(BackendError):
    """Payload size does not match width x height x 3 RGB bytes."""


@dataclass(frozen=True)
class EmotionScores:
    """Per-class confidences for the six basic emotions; they need not sum to 1."""

    happiness: float
    sadness: float
    surprise: float
    fear: float
    anger: float
    disgust: float
    service: str = "mock"

    def __post_init__(self):
        for name in EMOTIONS:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} confidence {value} out of [0,1]")

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in EMOTIONS}

    @classmethod
    def from_dict(cls, scores: dict[str, float], service: str) -> "EmotionScores":
        return cls(service=service, **{name: float(scores[name]) for name in EMOTIONS})


@dataclass(frozen=True)
class NoFace:
    """Recognition failure; carries the protocol's literal error text."""

    error: str = ERROR_TEXT


RecognitionResult = EmotionScores | NoFace


@dataclass(frozen=True)
class SentimentScore:
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"sentiment {self.value} out of [0,1]")


def payload_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class FixtureManifest:
    """Immutable map from payload SHA-256 to a labeled result.

    File format: JSON object {sha256-hex: {"kind": "emotion"|"transcript",
    "label": text}}.
    """

    def __init__(self, entries: dict[str, dict[str, str]]):
        for digest, entry in entries.items():
            kind = entry.get("kind")
            label = entry.get("label")
            if kind == "emotion":
                if label not in EMOTIONS:
                    raise ValueError(f"{digest}: {label!r} is not an emotion name")
            elif kind == "transcript":
                if not label:
                    raise ValueError(f"{digest}: empty transcript")
            else:
                raise ValueError(f"{digest}: unknown kind {kind!r}")
        self._entries = dict(entries)

    @classmethod
    def load(cls, path: str | Path) -> "FixtureManifest":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    @classmethod
    def empty(cls) -> "FixtureManifest":
        return cls({})

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self._entries, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def lookup(self, data: bytes, kind: str) -> str | None:
        entry = self._entries.get(payload_hash(data))
        if entry is not None and entry["kind"] == kind:
            return entry["label"]
        return None

    def with_entry(self, data: bytes, kind: str, label: str) -> "FixtureManifest":
        entries = dict(self._entries)
        entries[payload_hash(data)] = {"kind": kind, "label": label}
        return FixtureManifest(entries)

    def __len__(self) -> int:
        return len(self._entries)


# ---------------------------------------------------------------------------
# lexicon sentiment
# ---------------------------------------------------------------------------

def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric boundaries."""
    return _TOKEN_RE.findall(text.lower())


class Lexicon:
    def __init__(self, positive: set[str], negative: set[str]):
        self.positive = {w.lower() for w in positive}
        self.negative = {w.lower() for w in negative}

    @classmethod
    def load(cls, positive_path: str | Path, negative_path: str | Path) -> "Lexicon":
        return cls(_read_wordlist(positive_path), _read_wordlist(negative_path))

    @classmethod
    def default(cls) -> "Lexicon":
        data = Path(__file__).parent / "data"
        return cls.load(data / "positive_words.txt", data / "negative_words.txt")

    def score(self, text: str) -> SentimentScore:
        """(1 + (P-N)/(P+N)) / 2 over lexicon hits; 0.5 when no token hits."""
        tokens = tokenize(text)
        p = sum(1 for t in tokens if t in self.positive)
        n = sum(1 for t in tokens if t in self.negative)
        if p + n == 0:
            return SentimentScore(0.5)
        return SentimentScore((1.0 + (p - n) / (p + n)) / 2.0)


def _read_wordlist(path: str | Path) -> set[str]:
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip().lower()
            if word and not word.startswith("#"):
                words.add(word)
    if not words:
        raise ValueError(f"{path}: empty word list")
    return words


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

def _check_image(image_bytes: bytes, width: int, height: int) -> None:
    expected = width * height * 3
    if len(image_bytes) != expected:
        raise InvalidImage(
            f"payload of {len(image_bytes)} bytes, expected {width}x{height}x3 = {expected}"
        )


class LocalBackend:
    """Deterministic manifest + lexicon backend (the `mock` service tag)."""

    service = "mock"

    def __init__(
        self,
        manifest: FixtureManifest,
        lexicon: Lexicon | None = None,
        clock: Clock | None = None,
        transcribe_latency_s: float = 0.0,
    ):
        self.manifest = manifest
        self.lexicon = lexicon or Lexicon.default()
        self.clock = clock or Clock()
        self.transcribe_latency_s = transcribe_latency_s

    def classify_emotion(self, image_bytes: bytes, width: int, height: int) -> RecognitionResult:
        _check_image(image_bytes, width, height)
        label = self.manifest.lookup(image_bytes, "emotion")
        if label is None:
            return NoFace()
        scores = {name: (HIT_CONFIDENCE if name == label else MISS_CONFIDENCE) for name in EMOTIONS}
        return EmotionScores.from_dict(scores, service=self.service)

    def transcribe(self, samples: np.ndarray) -> str:
        """Manifest lookup on the s16le bytes; unknown audio -> empty text.

        Works at any granularity (whole utterance or single fragment), so
        pipelined callers can look fragments up as they arrive.
        """
        if np.asarray(samples).size == 0:
            raise ValueError("cannot transcribe empty samples")
        if self.transcribe_latency_s > 0:
            self.clock.sleep(self.transcribe_latency_s)
        return self.manifest.lookup(floats_to_pcm16(samples), "transcript") or ""

    def analyze_sentiment(self, text: str) -> SentimentScore:
        return self.lexicon.score(text)


class RemoteBackend:
    """HTTP client for an external analysis service (the `remote` tag).

    Wire contract: POST JSON to <base_url> + path —
      /emotion    {"pixels_b64":..., "width":..., "height":...}
                  -> {"scores": {six emotions}} or {"error": "message error"}
      /transcribe {"samples_b64": s16le base64} -> {"transcript": text}
      /sentiment  {"text": ...}                 -> {"value": number}
    """

    service = "remote"

    def __init__(
        self,
        host: str,
        port: int,
        path_prefix: str = "",
        connect_timeout_s: float = DEFAULT_CONNECT_TIMEOUT,
        total_timeout_s: float = DEFAULT_TOTAL_TIMEOUT,
        session: requests.Session | None = None,
    ):
        self.base_url = f"http://{host}:{port}{path_prefix}"
        # requests has no total-timeout knob; connect + read approximates it
        self.timeout = (connect_timeout_s, max(total_timeout_s - connect_timeout_s, 0.1))
        self._http = session or requests.Session()

    def _post(self, path: str, payload: dict) -> dict:
        try:
            response = self._http.post(self.base_url + path, json=payload, timeout=self.timeout)
            response.raise_for_status()
            return response.json()
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise BackendUnavailable(f"{self.base_url}{path}: {exc}") from exc
        except (requests.RequestException, ValueError) as exc:
            raise BackendUnavailable(f"{self.base_url}{path}: bad response: {exc}") from exc

    def classify_emotion(self, image_bytes: bytes, width: int, height: int) -> RecognitionResult:
        _check_image(image_bytes, width, height)
        reply = self._post(
            "/emotion",
            {"pixels_b64": b64encode_bytes(image_bytes), "width": width, "height": height},
        )
        if "error" in reply:
            return NoFace()
        try:
            return EmotionScores.from_dict(reply["scores"], service=self.service)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendUnavailable(f"malformed emotion response: {exc}") from exc

    def transcribe(self, samples: np.ndarray) -> str:
        reply = self._post("/transcribe", {"samples_b64": b64encode_bytes(floats_to_pcm16(samples))})
        transcript = reply.get("transcript")
        if not isinstance(transcript, str):
            raise BackendUnavailable("malformed transcribe response")
        return transcript

    def analyze_sentiment(self, text: str) -> SentimentScore:
        reply = self._post("/sentiment", {"text": text})
        value = reply.get("value")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise BackendUnavailable("malformed sentiment response")
        return SentimentScore(min(max(float(value), 0.0), 1.0))
