"""Turns analysis results into robot behavior.

Predominant-emotion animation selection, sentiment-banded speech responses,
and the recognition-failure retry path.  All choices are deterministic:
argmax ties break in the canonical emotion order, phrases rotate round-robin
per session.
"""
from __future__ import annotations

from dataclasses import dataclass

from .backends import EmotionScores, SentimentScore
from .protocol import EMOTIONS

NEGATIVE = "Negative"
NEUTRAL = "Neutral"
POSITIVE = "Positive"
BANDS = (NEGATIVE, NEUTRAL, POSITIVE)

# banding of the [0,1] sentiment value: [0,0.4) / [0.4,0.6] / (0.6,1]
NEGATIVE_BELOW = 0.4
POSITIVE_ABOVE = 0.6

DEFAULT_RETRY_PHRASE = "I could not see your face. Shall we try that again?"
DEFAULT_RETRY_LIMIT = 3

DEFAULT_ANIMATIONS = {
    "happiness": "dance_joy",
    "sadness": "slump_shoulders",
    "surprise": "jump_back",
    "fear": "shrink_away",
    "anger": "stomp_foot",
    "disgust": "turn_head",
}

DEFAULT_PHRASES = {
    NEGATIVE: [
        "I am sorry to hear that. I am here with you.",
        "That sounds hard. Want to play a little game together?",
    ],
    NEUTRAL: [
        "Okay! Tell me more.",
        "I see. What would you like to do next?",
    ],
    POSITIVE: [
        "That makes me happy too!",
        "Wonderful! Let's keep going!",
    ],
}


class IncompleteTable(Exception):
    """Animation or phrase table fails validation at configuration load."""


@dataclass(frozen=True)
class BehaviorCommand:
    kind: str  # animation | speech | retry_prompt
    animation_id: str | None = None
    text: str | None = None

    def as_body(self) -> dict:
        if self.kind == "animation":
            return {"kind": "animation", "animation_id": self.animation_id}
        return {"kind": self.kind, "text": self.text}

    @classmethod
    def from_body(cls, body: dict) -> "BehaviorCommand":
        return cls(
            kind=body["kind"],
            animation_id=body.get("animation_id"),
            text=body.get("text"),
        )


def predominant_emotion(scores: EmotionScores) -> str:
    """Label of the maximum confidence; ties go to the earlier emotion in
    the canonical listing order (happiness, sadness, surprise, fear, anger,
    disgust)."""
    best = EMOTIONS[0]
    best_value = getattr(scores, best)
    for name in EMOTIONS[1:]:
        value = getattr(scores, name)
        if value > best_value:
            best, best_value = name, value
    return best


def validate_animation_table(table: dict[str, str]) -> dict[str, str]:
    missing = [name for name in EMOTIONS if name not in table]
    if missing:
        raise IncompleteTable(f"animation table missing {missing}")
    ids = [table[name] for name in EMOTIONS]
    if len(set(ids)) != len(ids):
        raise IncompleteTable("animation ids must be distinct per emotion")
    for name, anim in table.items():
        if not isinstance(anim, str) or not anim:
            raise IncompleteTable(f"animation id for {name!r} must be non-empty text")
    return dict(table)


def validate_phrase_table(table: dict[str, list[str]]) -> dict[str, list[str]]:
    missing = [band for band in BANDS if band not in table]
    if missing:
        raise IncompleteTable(f"phrase table missing bands {missing}")
    for band in BANDS:
        phrases = table[band]
        if not phrases or not all(isinstance(p, str) and p for p in phrases):
            raise IncompleteTable(f"band {band} needs a non-empty phrase list")
    return {band: list(table[band]) for band in BANDS}


def select_animation(label: str, animation_table: dict[str, str]) -> BehaviorCommand:
    if label not in EMOTIONS:
        raise ValueError(f"unknown emotion label {label!r}")
    return BehaviorCommand(kind="animation", animation_id=animation_table[label])


def sentiment_band(score: SentimentScore) -> str:
    value = score.value
    if value < NEGATIVE_BELOW:
        return NEGATIVE
    if value <= POSITIVE_ABOVE:
        return NEUTRAL
    return POSITIVE


class SessionArbiter:
    """Per-session behavior state: retry counter and round-robin cursors.

    Owned by one session handler; never shared across sessions.
    """

    def __init__(
        self,
        animation_table: dict[str, str] | None = None,
        phrase_table: dict[str, list[str]] | None = None,
        retry_phrase: str = DEFAULT_RETRY_PHRASE,
        retry_limit: int = DEFAULT_RETRY_LIMIT,
    ):
        self.animations = validate_animation_table(animation_table or DEFAULT_ANIMATIONS)
        self.phrases = validate_phrase_table(phrase_table or DEFAULT_PHRASES)
        self.retry_phrase = retry_phrase
        self.retry_limit = retry_limit
        self.retry_counter = 0
        self._cursors = {band: 0 for band in BANDS}

    def on_scores(self, scores: EmotionScores) -> tuple[str, BehaviorCommand]:
        """Successful recognition: argmax animation; resets the retry run."""
        self.retry_counter = 0
        label = predominant_emotion(scores)
        return label, select_animation(label, self.animations)

    def handle_recognition_error(self) -> tuple[BehaviorCommand, bool]:
        """NoFace: retry prompt; True when the counter just hit the limit."""
        self.retry_counter += 1
        limit_reached = self.retry_counter == self.retry_limit
        return BehaviorCommand(kind="retry_prompt", text=self.retry_phrase), limit_reached

    def retry_prompt(self) -> BehaviorCommand:
        """Retry prompt outside the NoFace path (backend down, bad audio)."""
        return BehaviorCommand(kind="retry_prompt", text=self.retry_phrase)

    def select_response(self, band: str) -> BehaviorCommand:
        """Round-robin over the band's phrase list; deterministic per session."""
        phrases = self.phrases[band]
        cursor = self._cursors[band]
        self._cursors[band] = (cursor + 1) % len(phrases)
        return BehaviorCommand(kind="speech", text=phrases[cursor])
