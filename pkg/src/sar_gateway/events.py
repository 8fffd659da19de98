"""Append-only session event log with live subscription and replay.

One newline-delimited JSON file per session.  Events carry the injected
clock's timestamp plus a per-session arrival counter `n`; `(ts, n)` is
strictly increasing, and `n` doubles as the resume cursor for live feeds.

`reduce_events` is the pure reducer that reconstructs a session's final
state from its log; the gateway's session-detail endpoint and the operator
console both derive their views from it, so a recorded log replays to the
exact live state.
"""
from __future__ import annotations

import json
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path

EVENT_KINDS = (
    "connect",
    "image_received",
    "emotion_result",
    "speech_start",
    "fragment_received",
    "utterance_complete",
    "transcript",
    "sentiment",
    "behavior_sent",
    "error",
    "operator_action",
    "retry_limit_reached",
    "warning",
)


@dataclass(frozen=True)
class SessionEvent:
    ts: float
    n: int
    session_id: str
    kind: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")

    def as_dict(self) -> dict:
        return {
            "ts": self.ts,
            "n": self.n,
            "session_id": self.session_id,
            "kind": self.kind,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SessionEvent":
        return cls(
            ts=obj["ts"],
            n=obj["n"],
            session_id=obj["session_id"],
            kind=obj["kind"],
            payload=obj.get("payload", {}),
        )


class EventLog:
    """Event sink for one session: disk file, memory replay, live fan-out."""

    def __init__(self, session_id: str, path: str | Path):
        self.session_id = session_id
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")
        self._events: list[SessionEvent] = []
        self._subscribers: list[queue.SimpleQueue] = []
        self._lock = threading.Lock()
        self._closed = False

    def append(self, ts: float, kind: str, payload: dict | None = None) -> SessionEvent:
        with self._lock:
            if self._closed:
                raise RuntimeError(f"event log for {self.session_id} is closed")
            event = SessionEvent(
                ts=ts,
                n=len(self._events),
                session_id=self.session_id,
                kind=kind,
                payload=payload or {},
            )
            self._fh.write(json.dumps(event.as_dict(), sort_keys=True, separators=(",", ":")) + "\n")
            self._fh.flush()
            self._events.append(event)
            for q in self._subscribers:
                q.put(event)
            return event

    def subscribe(self, after_n: int = -1) -> "EventSubscription":
        """Catch up past `after_n` then stream live; no gaps, no duplicates."""
        q: queue.SimpleQueue = queue.SimpleQueue()
        with self._lock:
            for event in self._events:
                if event.n > after_n:
                    q.put(event)
            if self._closed:
                q.put(None)  # end marker
            else:
                self._subscribers.append(q)
        return EventSubscription(self, q)

    def _unsubscribe(self, q: queue.SimpleQueue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def events(self) -> list[SessionEvent]:
        with self._lock:
            return list(self._events)

    def close(self) -> None:
        """End of session: flush, notify live feeds, release the file."""
        with self._lock:
            if self._closed:
                return
            self._closed = True
            self._fh.close()
            for q in self._subscribers:
                q.put(None)
            self._subscribers.clear()

    @property
    def closed(self) -> bool:
        with self._lock:
            return self._closed


class EventSubscription:
    """Iterator over a live feed; yields events until the session ends."""

    def __init__(self, log: EventLog, q: queue.SimpleQueue):
        self._log = log
        self._queue = q

    def get(self, timeout: float | None = None) -> SessionEvent | None:
        """Next event, or None on session end; queue.Empty on timeout."""
        return self._queue.get(timeout=timeout)

    def cancel(self) -> None:
        self._log._unsubscribe(self._queue)


def read_log(path: str | Path) -> list[SessionEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(SessionEvent.from_dict(json.loads(line)))
    return events


def reduce_events(events: list[SessionEvent]) -> dict:
    """Fold a session's events into its final observable state.

    Pure function of the event sequence: counts per kind, the last
    recognized emotion and valence, last transcript/sentiment, the active
    script, retry pressure, and every behavior sent, in order.
    """
    state = {
        "session_id": events[0].session_id if events else None,
        "child_id": None,
        "robot_id": None,
        "event_count": len(events),
        "counts": {},
        "predominant_emotion": None,
        "valence": None,
        "active_script_id": None,
        "transcript": None,
        "sentiment": None,
        "sentiment_band": None,
        "behaviors_sent": [],
        "retry_limit_reached": False,
        "errors": [],
    }
    for event in events:
        state["counts"][event.kind] = state["counts"].get(event.kind, 0) + 1
        p = event.payload
        if event.kind == "connect":
            state["child_id"] = p.get("child_id")
            state["robot_id"] = p.get("robot_id")
            if p.get("script_id") is not None:
                state["active_script_id"] = p.get("script_id")
        elif event.kind == "emotion_result":
            if "predominant" in p:
                state["predominant_emotion"] = p["predominant"]
            if "valence" in p:
                state["valence"] = p["valence"]
            if p.get("script_id") is not None:
                state["active_script_id"] = p["script_id"]
        elif event.kind == "operator_action":
            if p.get("action") == "activate_script" and p.get("script_id") is not None:
                state["active_script_id"] = p["script_id"]
        elif event.kind == "transcript":
            state["transcript"] = p.get("text")
        elif event.kind == "sentiment":
            state["sentiment"] = p.get("value")
            state["sentiment_band"] = p.get("band")
        elif event.kind == "behavior_sent":
            state["behaviors_sent"].append(p.get("command"))
        elif event.kind == "retry_limit_reached":
            state["retry_limit_reached"] = True
        elif event.kind == "error":
            state["errors"].append(p.get("reason"))
    return state
