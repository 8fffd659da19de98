"""Robot client simulator: replays scenario files against a gateway.

A scenario is a JSON document listing timed steps (send an image, speak a
WAV file, pause) plus an optional list of expected behavior commands.  The
simulator speaks the wire protocol exactly like the robot would: images go
out as one frame, speech is segmented by the same RMS/VAD machinery the
robot runs and streamed as audio_start/fragment/end.

Sending and receiving are concurrent; every received frame is appended to
a transcript (one line per frame).  With expectations present, the exit
status reports whether the received behavior sequence matched.
"""
from __future__ import annotations

import argparse
import difflib
import json
import socket
import threading
from dataclasses import dataclass, field
from pathlib import Path

from . import audio
from .clock import Clock
from .images import read_ppm
from .protocol import (
    FrameDecoder,
    Message,
    ProtocolError,
    b64encode_bytes,
    encode_frame,
)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONNECTION = 2
EXIT_TIMEOUT = 3

ACTIONS = ("send_image", "speak", "pause")


class ScenarioError(Exception):
    pass


class ConnectionFailed(Exception):
    pass


class TimeoutWaitingResponse(Exception):
    pass


class ExpectationMismatch(Exception):
    pass


@dataclass(frozen=True)
class Step:
    at: float
    action: str
    file: Path | None = None


@dataclass(frozen=True)
class Scenario:
    robot_id: str
    child_id: str
    steps: tuple[Step, ...]
    expected: tuple[dict, ...] | None = None
    fragment_size: int = audio.DEFAULT_FRAGMENT_SIZE
    vad: audio.VadState = field(default_factory=audio.VadState)


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; referenced files must exist."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    steps = []
    last_at = 0.0
    for i, entry in enumerate(raw.get("steps", [])):
        at = float(entry.get("at", 0.0))
        action = entry.get("action")
        if action not in ACTIONS:
            raise ScenarioError(f"step {i}: unknown action {action!r}")
        if at < last_at:
            raise ScenarioError(f"step {i}: offset {at} decreases (previous {last_at})")
        last_at = at
        file = None
        if action in ("send_image", "speak"):
            if "file" not in entry:
                raise ScenarioError(f"step {i}: {action} needs a file")
            file = (path.parent / entry["file"]).resolve()
            if not file.exists():
                raise ScenarioError(f"step {i}: {file} does not exist")
        steps.append(Step(at=at, action=action, file=file))
    vad_cfg = raw.get("vad", {})
    vad = audio.VadState(
        start_threshold=vad_cfg.get("start_threshold", audio.DEFAULT_START_THRESHOLD),
        stop_threshold=vad_cfg.get("stop_threshold", audio.DEFAULT_STOP_THRESHOLD),
        hangover_windows=vad_cfg.get("hangover_windows", audio.DEFAULT_HANGOVER_WINDOWS),
    )
    expected = raw.get("expected")
    return Scenario(
        robot_id=raw.get("robot_id", "sim-robot"),
        child_id=raw.get("child_id", "sim-child"),
        steps=tuple(steps),
        expected=tuple(expected) if expected is not None else None,
        fragment_size=int(raw.get("fragment_size", audio.DEFAULT_FRAGMENT_SIZE)),
        vad=vad,
    )


@dataclass
class ScenarioRun:
    transcript: list[str]  # behavior frames only, in arrival order
    behaviors: list[dict]
    exit_code: int
    detail: str = ""
    frames: list[str] = field(default_factory=list)  # every received frame


class _Receiver:
    """Reads gateway frames on a side thread; collects transcript lines."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._decoder = FrameDecoder()
        self._expected_seq = 0
        self.transcript: list[str] = []
        self.behaviors: list[dict] = []
        self.frames: list[str] = []
        self.terminal = 0  # behavior or error frames == completed turns
        self.failure: str | None = None
        self._cond = threading.Condition()
        self._done = False
        self._thread = threading.Thread(target=self._run, daemon=True, name="sim-recv")
        self._thread.start()

    def _run(self) -> None:
        try:
            while True:
                data = self._sock.recv(65536)
                if not data:
                    break
                for message in self._decoder.feed(data):
                    self._on_message(message)
        except ProtocolError as exc:
            with self._cond:
                self.failure = f"{type(exc).__name__}: {exc}"
        except OSError:
            pass
        finally:
            with self._cond:
                self._done = True
                self._cond.notify_all()

    def _on_message(self, message: Message) -> None:
        with self._cond:
            if message.seq != self._expected_seq:
                self.failure = f"gateway seq {message.seq}, expected {self._expected_seq}"
                self._cond.notify_all()
                return
            self._expected_seq += 1
            body = json.dumps(message.body, sort_keys=True, separators=(",", ":"))
            line = f"{message.type} {body}"
            self.frames.append(line)
            if message.type == "behavior":
                self.transcript.append(line)
                self.behaviors.append(message.body)
            if message.type in ("behavior", "error"):
                self.terminal += 1
            self._cond.notify_all()

    def wait_for_terminal(self, count: int, timeout: float) -> bool:
        with self._cond:
            return self._cond.wait_for(
                lambda: self.terminal >= count or self.failure or self._done,
                timeout=timeout,
            ) and self.terminal >= count


def _behavior_matches(expected: dict, actual: dict) -> bool:
    return all(actual.get(k) == v for k, v in expected.items())


def check_expectations(expected: tuple[dict, ...], behaviors: list[dict]) -> str | None:
    """None when matched; otherwise a printable diff."""
    want = [json.dumps(e, sort_keys=True) for e in expected]
    got = [json.dumps(b, sort_keys=True) for b in behaviors]
    if len(behaviors) == len(expected) and all(
        _behavior_matches(e, b) for e, b in zip(expected, behaviors)
    ):
        return None
    diff = difflib.unified_diff(want, got, fromfile="expected", tofile="received", lineterm="")
    return "\n".join(diff)


def run_scenario(
    scenario: Scenario,
    gateway_address: tuple[str, int],
    check: bool = False,
    clock: Clock | None = None,
    response_timeout_s: float = 15.0,
) -> ScenarioRun:
    """Execute the steps on schedule; returns the transcript and exit code."""
    clock = clock or Clock()
    try:
        sock = socket.create_connection(gateway_address, timeout=10.0)
    except OSError as exc:
        return ScenarioRun([], [], EXIT_CONNECTION, f"connect to {gateway_address}: {exc}")
    sock.settimeout(None)
    receiver = _Receiver(sock)
    out_seq = 0
    turns = 0
    utterance_counter = 0

    def send(type_: str, body: dict) -> None:
        nonlocal out_seq
        sock.sendall(encode_frame(Message(type=type_, seq=out_seq, body=body)))
        out_seq += 1

    try:
        send("hello", {"robot_id": scenario.robot_id, "child_id": scenario.child_id})
        start = clock.now()
        for step in scenario.steps:
            delay = step.at - (clock.now() - start)
            if delay > 0:
                clock.sleep(delay)
            if step.action == "pause":
                continue
            if step.action == "send_image":
                width, height, pixels = read_ppm(step.file)
                send("image_request", {
                    "image": {
                        "width": width,
                        "height": height,
                        "pixels_b64": b64encode_bytes(pixels),
                    }
                })
                turns += 1
            elif step.action == "speak":
                samples, rate = audio.read_wav(step.file)
                segmenter = audio.VadSegmenter(scenario.vad)
                for utterance in segmenter.segment(samples, rate):
                    if utterance.size == 0:
                        continue
                    utterance_id = f"u{utterance_counter}"
                    utterance_counter += 1
                    fragments = audio.fragment(utterance, scenario.fragment_size, utterance_id)
                    send("audio_start", {
                        "utterance_id": utterance_id,
                        "sample_rate_hz": rate,
                    })
                    for frag in fragments:
                        send("audio_fragment", {
                            "utterance_id": utterance_id,
                            "index": frag.index,
                            "samples_b64": b64encode_bytes(audio.floats_to_pcm16(frag.samples)),
                        })
                    send("audio_end", {
                        "utterance_id": utterance_id,
                        "fragment_count": len(fragments),
                    })
                    turns += 1
        if not receiver.wait_for_terminal(turns, timeout=response_timeout_s):
            if receiver.failure:
                return ScenarioRun(
                    receiver.transcript,
                    receiver.behaviors,
                    EXIT_CONNECTION,
                    receiver.failure,
                    frames=receiver.frames,
                )
            return ScenarioRun(
                receiver.transcript,
                receiver.behaviors,
                EXIT_TIMEOUT,
                f"{receiver.terminal} of {turns} turns answered within {response_timeout_s}s",
                frames=receiver.frames,
            )
    except OSError as exc:
        return ScenarioRun(
            receiver.transcript, receiver.behaviors, EXIT_CONNECTION, str(exc), frames=receiver.frames
        )
    finally:
        try:
            sock.close()
        except OSError:
            pass

    if check and scenario.expected is not None:
        diff = check_expectations(scenario.expected, receiver.behaviors)
        if diff is not None:
            return ScenarioRun(
                receiver.transcript, receiver.behaviors, EXIT_MISMATCH, diff, frames=receiver.frames
            )
    return ScenarioRun(receiver.transcript, receiver.behaviors, EXIT_OK, frames=receiver.frames)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sar-sim", description="Scenario-replaying robot client")
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument("--gateway", required=True, help="host:port of the gateway robot listener")
    parser.add_argument("--check", action="store_true", help="verify expected behaviors; exit 1 on mismatch")
    parser.add_argument("--timeout", type=float, default=15.0, help="seconds to wait for responses")
    args = parser.parse_args(argv)

    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, OSError, json.JSONDecodeError, ValueError) as exc:
        parser.error(str(exc))
        return 2
    host, _, port = args.gateway.rpartition(":")
    if not host or not port.isdigit():
        parser.error(f"--gateway must be host:port, got {args.gateway!r}")
        return 2

    run = run_scenario(
        scenario, (host, int(port)), check=args.check, response_timeout_s=args.timeout
    )
    for line in run.transcript:
        print(line)
    if run.exit_code != EXIT_OK:
        print(f"-- {run.detail}")
    return run.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
