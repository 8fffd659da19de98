"""Framed message protocol between the robot client and the gateway.

Two layers:

* frame layer — a 4-byte big-endian payload length followed by that many
  bytes of UTF-8 text (`frame_payload` / `deframe_payload`);
* message layer — the payload is one canonical JSON object with `type`,
  `seq` and a type-specific `body`, validated against the schemas below
  (`encode_frame` / `decode_frame`).

The full schema catalogue with one canonical example per type lives in
protocol.md at the repository root.
"""
from __future__ import annotations

import base64
import binascii
import json
import struct
from dataclasses import dataclass, field
from typing import Any, Callable

DEFAULT_MAX_FRAME_BYTES = 16 * 1024 * 1024

EMOTIONS = ("happiness", "sadness", "surprise", "fear", "anger", "disgust")
SERVICES = ("mock", "remote")
BEHAVIOR_KINDS = ("animation", "speech", "retry_prompt")

MESSAGE_TYPES = (
    "hello",
    "image_request",
    "emotion_result",
    "audio_start",
    "audio_fragment",
    "audio_end",
    "utterance_result",
    "behavior",
    "error",
)

ERROR_TEXT = "message error"  # literal failure payload sent on recognition miss


class ProtocolError(Exception):
    """Base class for codec failures."""


class SerializationError(ProtocolError):
    """Outgoing message violates its type's schema."""


class MalformedFrame(ProtocolError):
    """Incoming payload is not valid UTF-8 JSON or violates a schema."""


class FrameTooLarge(ProtocolError):
    """Declared payload length exceeds the configured maximum."""


class _NeedMoreData:
    """Sentinel: the buffer does not yet hold one complete frame."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NeedMoreData"


NEED_MORE_DATA = _NeedMoreData()


@dataclass(frozen=True)
class Message:
    type: str
    seq: int
    body: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# body schema validation
# ---------------------------------------------------------------------------

def _is_b64(value: Any) -> bool:
    if not isinstance(value, str):
        return False
    try:
        base64.b64decode(value, validate=True)
        return True
    except (binascii.Error, ValueError):
        return False


def _check_hello(body: dict) -> str | None:
    allowed = {"robot_id", "child_id", "session_id"}
    for key, value in body.items():
        if key not in allowed:
            return f"unexpected hello field {key!r}"
        if not isinstance(value, str) or not value:
            return f"hello field {key!r} must be a non-empty string"
    if "robot_id" not in body and "session_id" not in body:
        return "hello needs robot_id (client) or session_id (gateway)"
    return None


def _check_image_request(body: dict) -> str | None:
    image = body.get("image")
    if not isinstance(image, dict):
        return "image_request needs an image object"
    for dim in ("width", "height"):
        if not isinstance(image.get(dim), int) or isinstance(image.get(dim), bool) or image[dim] <= 0:
            return f"image.{dim} must be a positive integer"
    if not _is_b64(image.get("pixels_b64")):
        return "image.pixels_b64 must be base64 text"
    return None


def _check_scores(scores: Any) -> str | None:
    if not isinstance(scores, dict):
        return "scores must be an object"
    if set(scores) != set(EMOTIONS):
        return "scores must carry exactly the six basic emotions"
    for name, value in scores.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return f"score {name} must be a number"
        if not 0.0 <= float(value) <= 1.0:
            return f"score {name} out of [0,1]"
    return None


def _check_emotion_result(body: dict) -> str | None:
    if body.get("service") not in SERVICES:
        return "service must be 'mock' or 'remote'"
    has_scores = "scores" in body
    has_error = "error" in body
    if has_scores == has_error:
        return "exactly one of scores/error must be present"
    if has_scores:
        return _check_scores(body["scores"])
    if body["error"] != ERROR_TEXT:
        return f"error text must be the literal {ERROR_TEXT!r}"
    return None


def _check_audio_start(body: dict) -> str | None:
    if not isinstance(body.get("utterance_id"), str) or not body["utterance_id"]:
        return "utterance_id must be a non-empty string"
    rate = body.get("sample_rate_hz")
    if not isinstance(rate, int) or isinstance(rate, bool) or rate <= 0:
        return "sample_rate_hz must be a positive integer"
    return None


def _check_audio_fragment(body: dict) -> str | None:
    if not isinstance(body.get("utterance_id"), str) or not body["utterance_id"]:
        return "utterance_id must be a non-empty string"
    index = body.get("index")
    if not isinstance(index, int) or isinstance(index, bool) or index < 0:
        return "index must be a non-negative integer"
    if not _is_b64(body.get("samples_b64")):
        return "samples_b64 must be base64 text"
    return None


def _check_audio_end(body: dict) -> str | None:
    if not isinstance(body.get("utterance_id"), str) or not body["utterance_id"]:
        return "utterance_id must be a non-empty string"
    count = body.get("fragment_count")
    if not isinstance(count, int) or isinstance(count, bool) or count < 0:
        return "fragment_count must be a non-negative integer"
    return None


def _check_utterance_result(body: dict) -> str | None:
    if not isinstance(body.get("utterance_id"), str) or not body["utterance_id"]:
        return "utterance_id must be a non-empty string"
    if not isinstance(body.get("transcript"), str):
        return "transcript must be a string"
    sentiment = body.get("sentiment")
    if isinstance(sentiment, bool) or not isinstance(sentiment, (int, float)):
        return "sentiment must be a number"
    if not 0.0 <= float(sentiment) <= 1.0:
        return "sentiment out of [0,1]"
    return None


def _check_behavior(body: dict) -> str | None:
    kind = body.get("kind")
    if kind not in BEHAVIOR_KINDS:
        return "kind must be animation/speech/retry_prompt"
    if kind == "animation":
        if not isinstance(body.get("animation_id"), str) or not body["animation_id"]:
            return "animation needs animation_id"
    else:
        if not isinstance(body.get("text"), str) or not body["text"]:
            return f"{kind} needs text"
    return None


def _check_error(body: dict) -> str | None:
    if not isinstance(body.get("message"), str) or not body["message"]:
        return "error needs a message"
    return None


_BODY_CHECKS: dict[str, Callable[[dict], str | None]] = {
    "hello": _check_hello,
    "image_request": _check_image_request,
    "emotion_result": _check_emotion_result,
    "audio_start": _check_audio_start,
    "audio_fragment": _check_audio_fragment,
    "audio_end": _check_audio_end,
    "utterance_result": _check_utterance_result,
    "behavior": _check_behavior,
    "error": _check_error,
}


def validate_message(message: Message) -> str | None:
    """Return a problem description, or None when the message is valid."""
    if message.type not in MESSAGE_TYPES:
        return f"unknown message type {message.type!r}"
    if not isinstance(message.seq, int) or isinstance(message.seq, bool) or message.seq < 0:
        return "seq must be a non-negative integer"
    if not isinstance(message.body, dict):
        return "body must be an object"
    return _BODY_CHECKS[message.type](message.body)


# ---------------------------------------------------------------------------
# frame layer
# ---------------------------------------------------------------------------

def frame_payload(payload: bytes) -> bytes:
    """Prefix a raw payload with its 4-byte big-endian byte count."""
    return struct.pack(">I", len(payload)) + payload


def deframe_payload(
    buffer: bytes, max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES
) -> tuple[bytes, int] | _NeedMoreData:
    """Extract one payload from the head of `buffer`.

    Returns (payload, consumed) or NEED_MORE_DATA when the buffer holds
    fewer than 4 + length bytes.
    """
    if len(buffer) < 4:
        return NEED_MORE_DATA
    (length,) = struct.unpack(">I", buffer[:4])
    if length > max_frame_bytes:
        raise FrameTooLarge(f"declared payload of {length} bytes exceeds {max_frame_bytes}")
    if len(buffer) < 4 + length:
        return NEED_MORE_DATA
    return buffer[4 : 4 + length], 4 + length


# ---------------------------------------------------------------------------
# message layer
# ---------------------------------------------------------------------------

def canonical_json(obj: Any) -> bytes:
    """Canonical serialization: sorted keys, compact separators, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def encode_frame(message: Message) -> bytes:
    problem = validate_message(message)
    if problem is not None:
        raise SerializationError(problem)
    payload = canonical_json({"type": message.type, "seq": message.seq, "body": message.body})
    return frame_payload(payload)


def decode_frame(
    buffer: bytes, max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES
) -> tuple[Message, int] | _NeedMoreData:
    """Parse exactly one message from the head of `buffer`.

    Returns (message, consumed-byte-count) or NEED_MORE_DATA.  Raises
    MalformedFrame when the payload is complete but not a valid message,
    FrameTooLarge when the declared length exceeds the cap.
    """
    result = deframe_payload(buffer, max_frame_bytes=max_frame_bytes)
    if result is NEED_MORE_DATA:
        return NEED_MORE_DATA
    payload, consumed = result
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFrame(f"payload is not UTF-8 JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedFrame("payload must be a JSON object")
    extra = set(obj) - {"type", "seq", "body"}
    if extra:
        raise MalformedFrame(f"unexpected top-level fields {sorted(extra)}")
    if "type" not in obj or "seq" not in obj:
        raise MalformedFrame("message needs type and seq")
    message = Message(type=obj["type"], seq=obj["seq"], body=obj.get("body", {}))
    problem = validate_message(message)
    if problem is not None:
        raise MalformedFrame(problem)
    return message, consumed


class FrameDecoder:
    """Incremental decoder over a byte stream (one per connection)."""

    def __init__(self, max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES):
        self._buffer = bytearray()
        self._max = max_frame_bytes

    def feed(self, data: bytes) -> list[Message]:
        """Append bytes and return every message completed by them."""
        self._buffer.extend(data)
        messages = []
        while True:
            result = decode_frame(bytes(self._buffer), max_frame_bytes=self._max)
            if result is NEED_MORE_DATA:
                return messages
            message, consumed = result
            del self._buffer[:consumed]
            messages.append(message)

    @property
    def buffered(self) -> int:
        return len(self._buffer)


# base64 helpers shared by everything that moves binary payloads

def b64encode_bytes(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def b64decode_str(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)
