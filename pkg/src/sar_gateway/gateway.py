"""The middleware gateway: robot-facing TCP server plus operator HTTP API.

Each robot connection gets one session and one handler thread.  Image turns
run serially within a connection; audio fragment transcription overlaps
recording when `pipeline_mode` is "pipelined" (the default) and degrades to
a serial reference mode with "sequential".  Every frame in or out becomes a
session event, appended by the handler thread only, so event order is
deterministic under a virtual clock.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import socket
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import audio
from .backends import (
    BackendUnavailable,
    FixtureManifest,
    InvalidImage,
    Lexicon,
    LocalBackend,
    NoFace,
    RemoteBackend,
    payload_hash,
)
from .behavior import SessionArbiter, sentiment_band
from .clock import Clock
from .config import PIPELINED, ConfigError, GatewayConfig
from .events import EventLog
from .protocol import (
    ERROR_TEXT,
    FrameDecoder,
    Message,
    ProtocolError,
    b64decode_str,
    encode_frame,
)
from .user_model import (
    BehaviorScript,
    ModelStore,
    choose_script,
    mood_valence,
    observe_emotion,
)

RECV_CHUNK = 65536


class ScriptLibrary:
    """Mutable, persisted script collection shared across sessions."""

    def __init__(self, path: str | Path, seed: list[dict]):
        self.path = Path(path)
        self._lock = threading.Lock()
        if self.path.exists():
            raw = json.loads(self.path.read_text(encoding="utf-8"))
        else:
            raw = seed
        self._scripts = {s["script_id"]: BehaviorScript.from_dict(s) for s in raw}
        if not self.path.exists():
            self._save_locked()

    def _save_locked(self) -> None:
        payload = [self._scripts[k].as_dict() for k in sorted(self._scripts)]
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def list(self) -> list[BehaviorScript]:
        with self._lock:
            return [self._scripts[k] for k in sorted(self._scripts)]

    def get(self, script_id: str) -> BehaviorScript | None:
        with self._lock:
            return self._scripts.get(script_id)

    def put(self, script: BehaviorScript) -> None:
        with self._lock:
            self._scripts[script.script_id] = script
            self._save_locked()

    def touch(self, script_id: str, ts: float) -> None:
        with self._lock:
            script = self._scripts.get(script_id)
            if script is not None:
                self._scripts[script_id] = BehaviorScript.from_dict(
                    {**script.as_dict(), "last_used": ts}
                )
                self._save_locked()


@dataclass
class Session:
    session_id: str
    child_id: str
    robot_id: str
    started: float
    arbiter: SessionArbiter
    log: EventLog
    preferences: dict[str, str] = field(default_factory=dict)  # snapshot at start
    active_script_id: str | None = None
    operator_override: bool = False
    ended: float | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def summary(self) -> dict:
        return {
            "session_id": self.session_id,
            "child_id": self.child_id,
            "robot_id": self.robot_id,
            "started": self.started,
            "ended": self.ended,
            "active_script_id": self.active_script_id,
            "operator_override": self.operator_override,
            "retry_counter": self.arbiter.retry_counter,
            "event_count": len(self.log.events()),
        }


class _Assembly:
    """In-flight utterance on one connection: fragments plus their futures."""

    def __init__(self, utterance_id: str, sample_rate_hz: int):
        self.utterance_id = utterance_id
        self.sample_rate_hz = sample_rate_hz
        self.fragments: list[audio.AudioFragment] = []
        self.futures: dict[int, Future] = {}


class _Connection:
    """Per-connection protocol state, confined to the handler thread."""

    def __init__(self, sock: socket.socket, max_frame_bytes: int):
        self.sock = sock
        self.decoder = FrameDecoder(max_frame_bytes=max_frame_bytes)
        self.in_seq = 0
        self.out_seq = 0
        self.session: Session | None = None
        self.assembly: _Assembly | None = None

    def send(self, type_: str, body: dict) -> Message:
        message = Message(type=type_, seq=self.out_seq, body=body)
        self.sock.sendall(encode_frame(message))
        self.out_seq += 1
        return message


class Gateway:
    """Accepts robot connections and serves the operator API.

    `clock` is the single time source for everything: event timestamps,
    backend latency, turn measurements.  Tests inject a VirtualClock.
    """

    def __init__(self, config: GatewayConfig, clock: Clock | None = None, backend=None):
        self.config = config.validate()
        self.clock = clock or Clock()
        self.data_dir = Path(config.data_dir)
        (self.data_dir / "sessions").mkdir(parents=True, exist_ok=True)
        self.model_store = ModelStore(self.data_dir / "models")
        self.scripts = ScriptLibrary(self.data_dir / "scripts.json", config.scripts)
        self.backend = backend if backend is not None else self._make_backend()
        self.sessions: dict[str, Session] = {}
        self._sessions_lock = threading.Lock()
        self._session_counter = 0
        self._robot_sock: socket.socket | None = None
        self._http_server = None
        self._threads: list[threading.Thread] = []
        self._conns: list[socket.socket] = []
        self._stopping = False

    # -- lifecycle ----------------------------------------------------------

    def _make_backend(self):
        if self.config.backend == "remote":
            return RemoteBackend(
                host=self.config.remote_host,
                port=self.config.remote_port,
                path_prefix=self.config.remote_path_prefix,
                connect_timeout_s=self.config.backend_connect_timeout_s,
                total_timeout_s=self.config.backend_total_timeout_s,
            )
        if self.config.manifest_path:
            manifest = FixtureManifest.load(self.config.manifest_path)
        else:
            manifest = FixtureManifest.empty()
        if self.config.positive_words_path and self.config.negative_words_path:
            lexicon = Lexicon.load(self.config.positive_words_path, self.config.negative_words_path)
        else:
            lexicon = Lexicon.default()
        return LocalBackend(
            manifest,
            lexicon,
            clock=self.clock,
            transcribe_latency_s=self.config.transcribe_latency_s,
        )

    def start(self) -> None:
        self._robot_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._robot_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._robot_sock.bind(("127.0.0.1", self.config.robot_port))
        self._robot_sock.listen(8)
        # closing a socket does not wake a thread already blocked in accept(),
        # so the accept loop polls for _stopping
        self._robot_sock.settimeout(0.25)
        accept_thread = threading.Thread(target=self._accept_loop, daemon=True, name="robot-accept")
        accept_thread.start()
        self._threads.append(accept_thread)

        from .operator_api import make_http_server

        self._http_server = make_http_server(self, self.config.http_port)
        http_thread = threading.Thread(
            target=self._http_server.serve_forever, daemon=True, name="operator-http"
        )
        http_thread.start()
        self._threads.append(http_thread)

    def stop(self) -> None:
        self._stopping = True
        if self._robot_sock is not None:
            try:
                self._robot_sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._robot_sock.close()
            except OSError:
                pass
        for conn in list(self._conns):
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        if self._http_server is not None:
            self._http_server.shutdown()
            self._http_server.server_close()
        for thread in self._threads:
            thread.join(timeout=5)

    @property
    def robot_address(self) -> tuple[str, int]:
        assert self._robot_sock is not None, "gateway not started"
        return self._robot_sock.getsockname()

    @property
    def http_address(self) -> tuple[str, int]:
        assert self._http_server is not None, "gateway not started"
        return self._http_server.server_address

    # -- robot connections --------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopping:
            try:
                sock, _addr = self._robot_sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            self._conns.append(sock)
            handler = threading.Thread(
                target=self._handle_connection, args=(sock,), daemon=True, name="robot-conn"
            )
            handler.start()
            self._threads.append(handler)

    def _handle_connection(self, sock: socket.socket) -> None:
        conn = _Connection(sock, self.config.max_frame_bytes)
        executor: ThreadPoolExecutor | None = None
        try:
            if self.config.pipeline_mode == PIPELINED:
                executor = ThreadPoolExecutor(max_workers=self.config.transcription_workers)
            while True:
                try:
                    data = sock.recv(RECV_CHUNK)
                except OSError:
                    return
                if not data:
                    return
                try:
                    messages = conn.decoder.feed(data)
                except ProtocolError as exc:
                    self._protocol_failure(conn, f"{type(exc).__name__}: {exc}")
                    return
                for message in messages:
                    if message.seq != conn.in_seq:
                        self._protocol_failure(
                            conn, f"seq {message.seq} received, expected {conn.in_seq}"
                        )
                        return
                    conn.in_seq += 1
                    try:
                        if not self._dispatch(conn, message, executor):
                            return
                    except OSError:
                        # connection died mid-turn; replies have nowhere to go
                        return
        finally:
            if executor is not None:
                executor.shutdown(wait=False, cancel_futures=True)
            self._end_session(conn)
            try:
                sock.close()
            except OSError:
                pass
            if sock in self._conns:
                self._conns.remove(sock)

    def _protocol_failure(self, conn: _Connection, detail: str) -> None:
        if conn.session is not None:
            conn.session.log.append(self.clock.now(), "error", {"reason": "protocol", "detail": detail})
        try:
            conn.send("error", {"message": detail})
        except OSError:
            pass

    def _end_session(self, conn: _Connection) -> None:
        session = conn.session
        if session is None:
            return
        with session.lock:
            if session.ended is None:
                session.ended = self.clock.now()
        session.log.close()
        conn.session = None

    def _dispatch(self, conn: _Connection, message: Message, executor) -> bool:
        """Route one robot frame; False ends the connection."""
        if conn.session is None:
            if message.type != "hello":
                self._protocol_failure(conn, f"first message must be hello, got {message.type}")
                return False
            self._start_session(conn, message)
            return True
        if message.type == "image_request":
            self._on_image_request(conn, message)
        elif message.type == "audio_start":
            self._on_audio_start(conn, message)
        elif message.type == "audio_fragment":
            self._on_audio_fragment(conn, message, executor)
        elif message.type == "audio_end":
            self._on_audio_end(conn, message, executor)
        elif message.type == "error":
            self._on_client_error(conn, message)
        else:
            self._protocol_failure(conn, f"unexpected {message.type} from robot")
            return False
        return True

    # -- session setup ------------------------------------------------------

    def _start_session(self, conn: _Connection, message: Message) -> None:
        robot_id = message.body.get("robot_id", "robot")
        child_id = message.body.get("child_id", "anonymous")
        now = self.clock.now()
        with self._sessions_lock:
            session_id = f"s{self._session_counter:04d}"
            self._session_counter += 1
        model = self.model_store.update(
            child_id,
            lambda m: dataclasses.replace(
                m, interaction_log_ref=m.interaction_log_ref + (session_id,)
            ),
        )
        arbiter = SessionArbiter(
            animation_table=self.config.animations,
            phrase_table=self.config.phrases,
            retry_phrase=self.config.retry_phrase,
            retry_limit=self.config.retry_limit,
        )
        log = EventLog(session_id, self.data_dir / "sessions" / f"{session_id}.ndjson")
        session = Session(
            session_id=session_id,
            child_id=child_id,
            robot_id=robot_id,
            started=now,
            arbiter=arbiter,
            log=log,
            preferences=dict(model.preferences),
        )
        script = choose_script(self.scripts.list(), model)
        session.active_script_id = script.script_id
        self.scripts.touch(script.script_id, now)
        with self._sessions_lock:
            self.sessions[session_id] = session
        conn.session = session
        log.append(now, "connect", {
            "robot_id": robot_id,
            "child_id": child_id,
            "script_id": session.active_script_id,
        })
        conn.send("hello", {"session_id": session_id})

    # -- image turns --------------------------------------------------------

    def _on_image_request(self, conn: _Connection, message: Message) -> None:
        session = conn.session
        image = message.body["image"]
        width, height = image["width"], image["height"]
        pixels = b64decode_str(image["pixels_b64"])
        session.log.append(self.clock.now(), "image_received", {
            "width": width,
            "height": height,
            "bytes": len(pixels),
            "sha256": payload_hash(pixels),
        })
        try:
            result = self.backend.classify_emotion(pixels, width, height)
        except InvalidImage as exc:
            session.log.append(self.clock.now(), "error", {"reason": "invalid_image", "detail": str(exc)})
            conn.send("error", {"message": f"invalid image: {exc}"})
            return
        except BackendUnavailable as exc:
            self._backend_down(conn, str(exc))
            return
        if isinstance(result, NoFace):
            conn.send("emotion_result", {"service": self.backend.service, "error": ERROR_TEXT})
            session.log.append(self.clock.now(), "emotion_result", {
                "service": self.backend.service,
                "error": ERROR_TEXT,
                "script_id": session.active_script_id,
            })
            command, limit_reached = session.arbiter.handle_recognition_error()
            if limit_reached:
                session.log.append(self.clock.now(), "retry_limit_reached", {
                    "count": session.arbiter.retry_counter,
                })
            conn.send("behavior", command.as_body())
            session.log.append(self.clock.now(), "behavior_sent", {"command": command.as_body()})
            return
        label, command = session.arbiter.on_scores(result)
        now = self.clock.now()
        model = self.model_store.update(
            session.child_id,
            lambda m: observe_emotion(m, result, now, alpha=self.config.alpha),
        )
        valence = mood_valence(model)
        with session.lock:
            if not session.operator_override:
                chosen = choose_script(self.scripts.list(), model)
                if chosen.script_id != session.active_script_id:
                    session.active_script_id = chosen.script_id
                    self.scripts.touch(chosen.script_id, now)
        conn.send("emotion_result", {"service": result.service, "scores": result.as_dict()})
        session.log.append(self.clock.now(), "emotion_result", {
            "service": result.service,
            "scores": result.as_dict(),
            "predominant": label,
            "valence": valence,
            "script_id": session.active_script_id,
        })
        conn.send("behavior", command.as_body())
        session.log.append(self.clock.now(), "behavior_sent", {"command": command.as_body()})

    def _backend_down(self, conn: _Connection, detail: str) -> None:
        """Never leave the robot waiting: error event plus a retry prompt."""
        session = conn.session
        session.log.append(self.clock.now(), "error", {"reason": "backend_unavailable", "detail": detail})
        command = session.arbiter.retry_prompt()
        conn.send("behavior", command.as_body())
        session.log.append(self.clock.now(), "behavior_sent", {"command": command.as_body()})

    # -- audio turns --------------------------------------------------------

    def _on_audio_start(self, conn: _Connection, message: Message) -> None:
        session = conn.session
        body = message.body
        if conn.assembly is not None:
            session.log.append(self.clock.now(), "warning", {
                "reason": "audio_start_while_open",
                "discarded_utterance": conn.assembly.utterance_id,
            })
        conn.assembly = _Assembly(body["utterance_id"], body["sample_rate_hz"])
        session.log.append(self.clock.now(), "speech_start", {
            "utterance_id": body["utterance_id"],
            "sample_rate_hz": body["sample_rate_hz"],
        })

    def _on_audio_fragment(self, conn: _Connection, message: Message, executor=None) -> None:
        session = conn.session
        body = message.body
        assembly = conn.assembly
        if assembly is None or assembly.utterance_id != body["utterance_id"]:
            session.log.append(self.clock.now(), "warning", {
                "reason": "orphan_fragment",
                "utterance_id": body["utterance_id"],
                "index": body["index"],
            })
            return
        samples = audio.pcm16_to_floats(b64decode_str(body["samples_b64"]))
        fragment = audio.AudioFragment(assembly.utterance_id, body["index"], samples)
        assembly.fragments.append(fragment)
        session.log.append(self.clock.now(), "fragment_received", {
            "utterance_id": assembly.utterance_id,
            "index": fragment.index,
            "samples": int(samples.size),
        })
        if executor is not None and fragment.index not in assembly.futures:
            assembly.futures[fragment.index] = executor.submit(self.backend.transcribe, samples)

    def _on_audio_end(self, conn: _Connection, message: Message, executor) -> None:
        session = conn.session
        body = message.body
        assembly = conn.assembly
        conn.assembly = None
        if assembly is None or assembly.utterance_id != body["utterance_id"]:
            session.log.append(self.clock.now(), "warning", {
                "reason": "audio_end_without_start",
                "utterance_id": body["utterance_id"],
            })
            command = session.arbiter.retry_prompt()
            conn.send("behavior", command.as_body())
            session.log.append(self.clock.now(), "behavior_sent", {"command": command.as_body()})
            return
        declared = body["fragment_count"]
        try:
            samples = audio.reassemble(assembly.fragments, declared)
        except audio.AudioError as exc:
            session.log.append(self.clock.now(), "error", {
                "reason": type(exc).__name__,
                "utterance_id": assembly.utterance_id,
                "detail": str(exc),
            })
            command = session.arbiter.retry_prompt()
            conn.send("behavior", command.as_body())
            session.log.append(self.clock.now(), "behavior_sent", {"command": command.as_body()})
            return
        if samples.size == 0:
            session.log.append(self.clock.now(), "warning", {
                "reason": "empty_utterance",
                "utterance_id": assembly.utterance_id,
            })
            command = session.arbiter.retry_prompt()
            conn.send("behavior", command.as_body())
            session.log.append(self.clock.now(), "behavior_sent", {"command": command.as_body()})
            return
        session.log.append(self.clock.now(), "utterance_complete", {
            "utterance_id": assembly.utterance_id,
            "fragment_count": declared,
            "samples": int(samples.size),
        })
        ordered = sorted(assembly.fragments, key=lambda f: f.index)
        try:
            if executor is not None:
                parts = [assembly.futures[f.index].result() for f in ordered]
            else:
                parts = [self.backend.transcribe(f.samples) for f in ordered]
        except BackendUnavailable as exc:
            self._backend_down(conn, str(exc))
            return
        transcript = " ".join(p for p in parts if p)
        session.log.append(self.clock.now(), "transcript", {
            "utterance_id": assembly.utterance_id,
            "text": transcript,
        })
        try:
            sentiment = self.backend.analyze_sentiment(transcript)
        except BackendUnavailable as exc:
            self._backend_down(conn, str(exc))
            return
        band = sentiment_band(sentiment)
        session.log.append(self.clock.now(), "sentiment", {
            "utterance_id": assembly.utterance_id,
            "value": sentiment.value,
            "band": band,
        })
        conn.send("utterance_result", {
            "utterance_id": assembly.utterance_id,
            "transcript": transcript,
            "sentiment": sentiment.value,
        })
        command = session.arbiter.select_response(band)
        conn.send("behavior", command.as_body())
        session.log.append(self.clock.now(), "behavior_sent", {"command": command.as_body()})

    def _on_client_error(self, conn: _Connection, message: Message) -> None:
        conn.session.log.append(self.clock.now(), "error", {
            "reason": "robot_reported",
            "detail": message.body["message"],
        })

    # -- operator-facing helpers (used by the HTTP API) ----------------------

    def list_sessions(self) -> list[dict]:
        with self._sessions_lock:
            return [self.sessions[k].summary() for k in sorted(self.sessions)]

    def get_session(self, session_id: str) -> Session | None:
        with self._sessions_lock:
            return self.sessions.get(session_id)

    def active_sessions_for_child(self, child_id: str) -> list[Session]:
        with self._sessions_lock:
            return [
                s for s in self.sessions.values() if s.child_id == child_id and s.ended is None
            ]

    def active_sessions_using_script(self, script_id: str) -> list[Session]:
        with self._sessions_lock:
            return [
                s
                for s in self.sessions.values()
                if s.active_script_id == script_id and s.ended is None
            ]

    def activate_script(self, session_id: str, script_id: str) -> tuple[int, dict]:
        """Operator override: sticky until session end.  Returns (status, body)."""
        session = self.get_session(session_id)
        if session is None:
            return 404, {"error": f"unknown session {session_id!r}"}
        script = self.scripts.get(script_id)
        if script is None:
            return 404, {"error": f"unknown script {script_id!r}"}
        with session.lock:
            if session.ended is not None:
                return 409, {"error": f"session {session_id} has ended"}
            session.active_script_id = script_id
            session.operator_override = True
        now = self.clock.now()
        self.scripts.touch(script_id, now)
        session.log.append(now, "operator_action", {
            "action": "activate_script",
            "script_id": script_id,
        })
        return 200, {"session_id": session_id, "active_script_id": script_id, "override": True}

    def put_script(self, script_id: str, payload: dict) -> tuple[int, dict]:
        if payload.get("script_id") not in (None, script_id):
            return 422, {"error": "script_id in body does not match URL"}
        payload = {**payload, "script_id": script_id}
        payload.setdefault("last_used", None)
        try:
            script = BehaviorScript.from_dict(payload)
        except (KeyError, TypeError, ValueError) as exc:
            return 422, {"error": f"invalid script: {exc}"}
        self.scripts.put(script)
        now = self.clock.now()
        for session in self.active_sessions_using_script(script_id):
            session.log.append(now, "operator_action", {
                "action": "edit_script",
                "script_id": script_id,
            })
        return 200, script.as_dict()

    def get_preferences(self, child_id: str) -> tuple[int, dict]:
        try:
            model = self.model_store.load(child_id)
        except Exception:
            return 404, {"error": f"unknown child {child_id!r}"}
        return 200, {"child_id": child_id, "preferences": model.preferences}

    def put_preferences(self, child_id: str, preferences: dict) -> tuple[int, dict]:
        if not isinstance(preferences, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in preferences.items()
        ):
            return 422, {"error": "preferences must be a map of strings"}
        updated = self.model_store.update(
            child_id, lambda m: dataclasses.replace(m, preferences=dict(preferences))
        )
        now = self.clock.now()
        for session in self.active_sessions_for_child(child_id):
            session.log.append(now, "operator_action", {
                "action": "put_preferences",
                "child_id": child_id,
                "preferences": dict(preferences),
            })
        return 200, {"child_id": child_id, "preferences": updated.preferences}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sar-gateway", description="Robot middleware gateway")
    parser.add_argument("--robot-port", type=int, default=None, help="TCP port for robot clients")
    parser.add_argument("--http-port", type=int, default=None, help="HTTP port for the operator API")
    parser.add_argument("--data-dir", default=None, help="directory for models, scripts, session logs")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--backend", choices=["mock", "remote"], default=None)
    args = parser.parse_args(argv)

    overrides = {
        "robot_port": args.robot_port,
        "http_port": args.http_port,
        "data_dir": args.data_dir,
        "backend": args.backend,
    }
    try:
        if args.config:
            config = GatewayConfig.from_file(args.config, **overrides)
        else:
            config = GatewayConfig().with_overrides(**overrides)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        parser.error(str(exc))
        return 2

    gateway = Gateway(config)
    gateway.start()
    robot_host, robot_port = gateway.robot_address
    http_host, http_port = gateway.http_address
    print(f"robot listener on {robot_host}:{robot_port}")
    print(f"operator API on http://{http_host}:{http_port}")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        gateway.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
