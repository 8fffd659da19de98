"""End-to-end gateway behavior over real sockets and the operator API."""
import json
import urllib.error
import urllib.request

import numpy as np
import pytest

from sar_gateway.audio import VadSegmenter, floats_to_pcm16, fragment, read_wav
from sar_gateway.backends import BackendUnavailable
from sar_gateway.behavior import DEFAULT_PHRASES, DEFAULT_RETRY_PHRASE
from sar_gateway.events import read_log
from sar_gateway.images import read_ppm
from sar_gateway.protocol import ERROR_TEXT, Message, b64encode_bytes, encode_frame, frame_payload

from helpers import RobotClient, http, image_body, wait_until

POSITIVE_PHRASES = DEFAULT_PHRASES["Positive"]
NEUTRAL_PHRASES = DEFAULT_PHRASES["Neutral"]


@pytest.fixture
def gateway(make_gateway):
    return make_gateway()


@pytest.fixture
def client(gateway):
    robot = RobotClient(gateway.robot_address)
    yield robot
    robot.close()


@pytest.fixture
def happy_image(assets):
    return read_ppm(assets["happy_image"])


@pytest.fixture
def unknown_image(assets):
    return read_ppm(assets["unknown_image"])


@pytest.fixture(scope="session")
def fixture_utterance(assets):
    samples, rate = read_wav(assets["wav"])
    utterances = VadSegmenter().segment(samples, rate)
    assert len(utterances) == 1
    return utterances[0], rate


def speak(client, utterance, rate, utterance_id="u0", fragment_size=8000,
          drop=(), dup=(), declared=None):
    """Send one utterance as audio frames, with optional fault injection."""
    frags = fragment(utterance, fragment_size, utterance_id)
    client.send("audio_start", {"utterance_id": utterance_id, "sample_rate_hz": rate})
    for frag in frags:
        if frag.index in drop:
            continue
        body = {
            "utterance_id": utterance_id,
            "index": frag.index,
            "samples_b64": b64encode_bytes(floats_to_pcm16(frag.samples)),
        }
        client.send("audio_fragment", body)
        if frag.index in dup:
            client.send("audio_fragment", body)
    count = len(frags) if declared is None else declared
    client.send("audio_end", {"utterance_id": utterance_id, "fragment_count": count})


def events_of(gateway, session_id):
    return gateway.get_session(session_id).log.events()


def wait_events(gateway, session_id, kind, count=1):
    def probe():
        matches = [e for e in events_of(gateway, session_id) if e.kind == kind]
        return matches if len(matches) >= count else None

    return wait_until(probe)


# -- connection lifecycle ------------------------------------------------------

def test_hello_assigns_sequential_session_ids(gateway):
    first = RobotClient(gateway.robot_address)
    second = RobotClient(gateway.robot_address)
    try:
        assert first.hello(child_id="c1") == "s0000"
        assert second.hello(child_id="c2") == "s0001"
        status, sessions = http("GET", gateway.http_address, "/sessions")
        assert status == 200
        assert [s["session_id"] for s in sessions] == ["s0000", "s0001"]
        assert [s["child_id"] for s in sessions] == ["c1", "c2"]
    finally:
        first.close()
        second.close()


def test_first_message_must_be_hello(gateway, happy_image):
    client = RobotClient(gateway.robot_address)
    width, height, pixels = happy_image
    client.send("image_request", image_body(pixels, width, height))
    reply = client.recv()
    assert reply.type == "error"
    assert "hello" in reply.body["message"]
    assert client.wait_closed()


def test_wrong_seq_closes_connection(gateway, client):
    session_id = client.hello()
    client.send_raw(encode_frame(Message("error", 7, {"message": "x"})))
    reply = client.recv()
    assert reply.type == "error"
    assert "seq" in reply.body["message"]
    assert client.wait_closed()
    errors = wait_events(gateway, session_id, "error")
    assert errors[0].payload["reason"] == "protocol"


def test_malformed_frame_closes_connection(gateway, client):
    client.hello()
    client.send_raw(frame_payload(b"not json"))
    reply = client.recv()
    assert reply.type == "error"
    assert client.wait_closed()


def test_second_hello_is_a_protocol_error(gateway, client):
    client.hello()
    client.send("hello", {"robot_id": "r1", "child_id": "c1"})
    assert client.recv().type == "error"
    assert client.wait_closed()


def test_session_marked_ended_on_disconnect(gateway, client):
    session_id = client.hello()
    client.close()
    wait_until(
        lambda: http("GET", gateway.http_address, f"/sessions/{session_id}")[1]["ended"]
        is not None
    )
    log_path = gateway.data_dir / "sessions" / f"{session_id}.ndjson"
    assert log_path.exists()


# -- image turns -----------------------------------------------------------------

def test_happy_image_turn(gateway, client, happy_image):
    session_id = client.hello(child_id="kid-a")
    width, height, pixels = happy_image
    client.send("image_request", image_body(pixels, width, height))

    result = client.recv()
    assert result.type == "emotion_result"
    assert result.body["service"] == "mock"
    assert result.body["scores"]["happiness"] == 0.9
    assert result.body["scores"]["disgust"] == 0.05

    behavior = client.recv()
    assert behavior.type == "behavior"
    assert behavior.body == {"kind": "animation", "animation_id": "dance_joy"}

    model = gateway.model_store.load("kid-a")
    assert model.observation_count == 1
    assert model.emotion_profile["happiness"] == 0.9

    emotion_events = wait_events(gateway, session_id, "emotion_result")
    payload = emotion_events[0].payload
    assert payload["predominant"] == "happiness"
    assert payload["valence"] == pytest.approx(0.75, abs=1e-9)
    assert payload["script_id"] == "adventure_time"


def test_unknown_image_gets_retry_prompt(gateway, client, unknown_image):
    session_id = client.hello(child_id="kid-b")
    width, height, pixels = unknown_image
    client.send("image_request", image_body(pixels, width, height))

    result = client.recv()
    assert result.type == "emotion_result"
    assert result.body == {"service": "mock", "error": ERROR_TEXT}

    behavior = client.recv()
    assert behavior.body == {"kind": "retry_prompt", "text": DEFAULT_RETRY_PHRASE}

    # a failed recognition must not touch the emotion profile
    wait_events(gateway, session_id, "behavior_sent")
    assert gateway.model_store.load("kid-b").observation_count == 0


def test_retry_limit_fires_once_and_resets(gateway, client, unknown_image, happy_image):
    session_id = client.hello()
    width, height, pixels = unknown_image

    for _ in range(3):
        client.send("image_request", image_body(pixels, width, height))
        client.recv()  # emotion_result error
        client.recv()  # retry prompt
    limit_events = wait_events(gateway, session_id, "retry_limit_reached")
    assert len(limit_events) == 1
    assert limit_events[0].payload["count"] == 3

    w, h, happy = happy_image
    client.send("image_request", image_body(happy, w, h))
    client.recv()
    client.recv()
    status, summary = http("GET", gateway.http_address, f"/sessions/{session_id}")
    assert summary["retry_counter"] == 0

    # next failure run starts counting from scratch
    client.send("image_request", image_body(pixels, width, height))
    client.recv()
    client.recv()
    assert len(wait_events(gateway, session_id, "behavior_sent", count=5)) == 5
    assert len([e for e in events_of(gateway, session_id) if e.kind == "retry_limit_reached"]) == 1


def test_invalid_image_keeps_connection(gateway, client, happy_image):
    session_id = client.hello()
    client.send("image_request", image_body(b"abc", 2, 2))
    reply = client.recv()
    assert reply.type == "error"
    assert "invalid image" in reply.body["message"]

    errors = wait_events(gateway, session_id, "error")
    assert errors[0].payload["reason"] == "invalid_image"

    width, height, pixels = happy_image
    client.send("image_request", image_body(pixels, width, height))
    assert client.recv().type == "emotion_result"


# -- audio turns -------------------------------------------------------------------

def test_fixture_utterance_full_turn(gateway, client, fixture_utterance):
    session_id = client.hello()
    utterance, rate = fixture_utterance
    speak(client, utterance, rate)

    result = client.recv()
    assert result.type == "utterance_result"
    assert result.body["transcript"] == "i am happy"
    assert result.body["sentiment"] == 1.0

    behavior = client.recv()
    assert behavior.body == {"kind": "speech", "text": POSITIVE_PHRASES[0]}

    wait_events(gateway, session_id, "behavior_sent")
    recorded = [e.kind for e in events_of(gateway, session_id)]
    assert recorded == [
        "connect",
        "speech_start",
        "fragment_received",
        "fragment_received",
        "utterance_complete",
        "transcript",
        "sentiment",
        "behavior_sent",
    ]
    sentiment = next(e for e in events_of(gateway, session_id) if e.kind == "sentiment")
    assert sentiment.payload["value"] == 1.0
    assert sentiment.payload["band"] == "Positive"


def test_positive_phrases_rotate(gateway, client, fixture_utterance):
    client.hello()
    utterance, rate = fixture_utterance
    for i, expected in enumerate([POSITIVE_PHRASES[0], POSITIVE_PHRASES[1], POSITIVE_PHRASES[0]]):
        speak(client, utterance, rate, utterance_id=f"u{i}")
        client.recv()  # utterance_result
        assert client.recv().body["text"] == expected


def test_unrecognized_audio_turns_neutral(gateway, client):
    client.hello()
    rng = np.random.default_rng(5)
    samples = rng.uniform(-0.5, 0.5, 8000)
    speak(client, samples, 16000)
    result = client.recv()
    assert result.body["transcript"] == ""
    assert result.body["sentiment"] == 0.5
    assert client.recv().body["text"] == NEUTRAL_PHRASES[0]


@pytest.mark.parametrize(
    "fault,reason",
    [
        (dict(drop=(1,)), "IncompleteUtterance"),
        (dict(dup=(0,)), "DuplicateFragment"),
        (dict(declared=1), "CountMismatch"),
    ],
)
def test_broken_fragment_streams_get_retry(gateway, client, fixture_utterance, fault, reason):
    session_id = client.hello()
    utterance, rate = fixture_utterance
    speak(client, utterance, rate, **fault)
    behavior = client.recv()
    assert behavior.body["kind"] == "retry_prompt"
    errors = wait_events(gateway, session_id, "error")
    assert errors[0].payload["reason"] == reason


def test_empty_utterance_gets_retry(gateway, client):
    session_id = client.hello()
    client.send("audio_start", {"utterance_id": "u0", "sample_rate_hz": 16000})
    client.send("audio_end", {"utterance_id": "u0", "fragment_count": 0})
    assert client.recv().body["kind"] == "retry_prompt"
    warnings = wait_events(gateway, session_id, "warning")
    assert warnings[0].payload["reason"] == "empty_utterance"


def test_orphan_fragment_and_end_without_start(gateway, client):
    session_id = client.hello()
    client.send(
        "audio_fragment",
        {"utterance_id": "u9", "index": 0, "samples_b64": b64encode_bytes(b"\x00\x00")},
    )
    warnings = wait_events(gateway, session_id, "warning")
    assert warnings[0].payload["reason"] == "orphan_fragment"

    client.send("audio_end", {"utterance_id": "u9", "fragment_count": 1})
    assert client.recv().body["kind"] == "retry_prompt"
    warnings = wait_events(gateway, session_id, "warning", count=2)
    assert warnings[1].payload["reason"] == "audio_end_without_start"


def test_audio_start_while_open_discards_first(gateway, client, fixture_utterance):
    session_id = client.hello()
    utterance, rate = fixture_utterance
    client.send("audio_start", {"utterance_id": "u0", "sample_rate_hz": rate})
    speak(client, utterance, rate, utterance_id="u1")
    result = client.recv()
    assert result.body["utterance_id"] == "u1"
    assert result.body["transcript"] == "i am happy"
    client.recv()
    warnings = wait_events(gateway, session_id, "warning")
    assert warnings[0].payload == {
        "reason": "audio_start_while_open",
        "discarded_utterance": "u0",
    }


def test_sequential_mode_gives_same_answer(make_gateway, fixture_utterance):
    gateway = make_gateway(pipeline_mode="sequential")
    client = RobotClient(gateway.robot_address)
    try:
        client.hello()
        utterance, rate = fixture_utterance
        speak(client, utterance, rate)
        result = client.recv()
        assert result.body["transcript"] == "i am happy"
        assert client.recv().body["text"] == POSITIVE_PHRASES[0]
    finally:
        client.close()


def test_client_error_is_logged_and_session_continues(gateway, client, happy_image):
    session_id = client.hello()
    client.send("error", {"message": "battery low"})
    errors = wait_events(gateway, session_id, "error")
    assert errors[0].payload == {"reason": "robot_reported", "detail": "battery low"}
    width, height, pixels = happy_image
    client.send("image_request", image_body(pixels, width, height))
    assert client.recv().type == "emotion_result"


# -- backend failure ------------------------------------------------------------------

class FailingBackend:
    service = "mock"

    def classify_emotion(self, image_bytes, width, height):
        raise BackendUnavailable("synthetic outage")

    def transcribe(self, samples):
        raise BackendUnavailable("synthetic outage")

    def analyze_sentiment(self, text):
        raise BackendUnavailable("synthetic outage")


def test_backend_down_still_answers(make_gateway, happy_image, fixture_utterance):
    gateway = make_gateway(backend=FailingBackend())
    client = RobotClient(gateway.robot_address)
    try:
        session_id = client.hello()
        width, height, pixels = happy_image
        client.send("image_request", image_body(pixels, width, height))
        assert client.recv().body["kind"] == "retry_prompt"

        utterance, rate = fixture_utterance
        speak(client, utterance, rate)
        assert client.recv().body["kind"] == "retry_prompt"

        errors = wait_events(gateway, session_id, "error", count=2)
        assert all(e.payload["reason"] == "backend_unavailable" for e in errors)
    finally:
        client.close()


# -- adaptation and persistence ----------------------------------------------------------

def test_script_follows_mood(gateway, client, happy_image):
    session_id = client.hello(child_id="kid-c")
    status, detail = http("GET", gateway.http_address, f"/sessions/{session_id}")
    assert detail["active_script_id"] == "meet_and_greet"  # neutral start

    width, height, pixels = happy_image
    client.send("image_request", image_body(pixels, width, height))
    client.recv()
    client.recv()
    wait_until(
        lambda: http("GET", gateway.http_address, f"/sessions/{session_id}")[1][
            "active_script_id"
        ]
        == "adventure_time"
    )


def test_mood_persists_across_sessions(make_gateway, happy_image):
    gateway = make_gateway()
    width, height, pixels = happy_image

    first = RobotClient(gateway.robot_address)
    first.hello(child_id="kid-d")
    first.send("image_request", image_body(pixels, width, height))
    first.recv()
    first.recv()
    first.close()

    second = RobotClient(gateway.robot_address)
    try:
        session_id = second.hello(child_id="kid-d")
        status, detail = http("GET", gateway.http_address, f"/sessions/{session_id}")
        assert detail["active_script_id"] == "adventure_time"  # remembered mood
        model = gateway.model_store.load("kid-d")
        assert model.interaction_log_ref == ("s0000", "s0001")
    finally:
        second.close()


# -- operator API ---------------------------------------------------------------------------

def test_operator_override_is_sticky(gateway, client, happy_image):
    session_id = client.hello()
    status, body = http(
        "PUT", gateway.http_address, f"/sessions/{session_id}/script",
        {"script_id": "calm_waters"},
    )
    assert status == 200
    assert body["active_script_id"] == "calm_waters"

    width, height, pixels = happy_image
    client.send("image_request", image_body(pixels, width, height))
    client.recv()
    client.recv()

    emotion_events = wait_events(gateway, session_id, "emotion_result")
    assert emotion_events[0].payload["script_id"] == "calm_waters"  # no auto-switch
    actions = [e for e in events_of(gateway, session_id) if e.kind == "operator_action"]
    assert actions[0].payload == {"action": "activate_script", "script_id": "calm_waters"}


def test_activate_script_error_paths(gateway, client):
    session_id = client.hello()
    address = gateway.http_address
    assert http("PUT", address, "/sessions/nope/script", {"script_id": "calm_waters"})[0] == 404
    assert http("PUT", address, f"/sessions/{session_id}/script", {"script_id": "nope"})[0] == 404
    assert http("PUT", address, f"/sessions/{session_id}/script", {"script_id": ""})[0] == 422
    assert http("PUT", address, f"/sessions/{session_id}/script", {})[0] == 422

    client.close()
    wait_until(
        lambda: http("GET", address, f"/sessions/{session_id}")[1]["ended"] is not None
    )
    status, _ = http("PUT", address, f"/sessions/{session_id}/script", {"script_id": "calm_waters"})
    assert status == 409


def test_put_and_get_script(gateway, client):
    session_id = client.hello()
    address = gateway.http_address
    payload = {
        "title": "Counting game",
        "steps": [{"kind": "speech", "text": "One, two, three!"}],
        "mood_range": [-0.2, 0.6],
    }
    status, body = http("PUT", address, "/scripts/counting_game", payload)
    assert status == 200
    assert body["script_id"] == "counting_game"

    status, fetched = http("GET", address, "/scripts/counting_game")
    assert status == 200
    assert fetched["title"] == "Counting game"

    status, listing = http("GET", address, "/scripts")
    assert "counting_game" in [s["script_id"] for s in listing]

    # editing the script a session is running notifies that session's log
    http("PUT", address, f"/sessions/{session_id}/script", {"script_id": "counting_game"})
    status, _ = http("PUT", address, "/scripts/counting_game", payload)
    assert status == 200
    actions = wait_events(gateway, session_id, "operator_action", count=2)
    assert actions[1].payload["action"] == "edit_script"


def test_put_script_validation(gateway):
    address = gateway.http_address
    mismatched = {"script_id": "other", "title": "x", "steps": [{}], "mood_range": [0, 1]}
    assert http("PUT", address, "/scripts/mine", mismatched)[0] == 422
    invalid = {"title": "x", "steps": [], "mood_range": [0, 1]}
    assert http("PUT", address, "/scripts/mine", invalid)[0] == 422
    backwards = {"title": "x", "steps": [{"kind": "speech", "text": "y"}], "mood_range": [1, 0]}
    assert http("PUT", address, "/scripts/mine", backwards)[0] == 422
    assert http("GET", address, "/scripts/mine")[0] == 404


def test_preferences_roundtrip(gateway, client):
    session_id = client.hello(child_id="kid-e")
    address = gateway.http_address
    assert http("GET", address, "/children/stranger/preferences")[0] == 404

    status, body = http(
        "PUT", address, "/children/kid-e/preferences", {"favorite_color": "green"}
    )
    assert status == 200
    status, body = http("GET", address, "/children/kid-e/preferences")
    assert status == 200
    assert body["preferences"] == {"favorite_color": "green"}

    status, _ = http("PUT", address, "/children/kid-e/preferences", {"n": 3})
    assert status == 422

    actions = wait_events(gateway, session_id, "operator_action")
    assert actions[0].payload["action"] == "put_preferences"


def test_unknown_routes_and_bad_bodies(gateway):
    address = gateway.http_address
    assert http("GET", address, "/nope")[0] == 404
    assert http("GET", address, "/sessions/s9999")[0] == 404
    assert http("GET", address, "/sessions/s9999/events")[0] == 404
    assert http("GET", address, "/sessions/s9999/live")[0] == 404

    host, port = address
    request = urllib.request.Request(
        f"http://{host}:{port}/children/kid/preferences", data=b"not json", method="PUT"
    )
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            status = response.status
    except urllib.error.HTTPError as exc:
        status = exc.code
    assert status == 400


def test_cross_origin_headers(gateway):
    # the operator console runs in a browser on a different origin
    host, port = gateway.http_address
    request = urllib.request.Request(f"http://{host}:{port}/sessions")
    with urllib.request.urlopen(request, timeout=10) as response:
        assert response.headers["Access-Control-Allow-Origin"] == "*"

    preflight = urllib.request.Request(
        f"http://{host}:{port}/sessions/s0000/script", method="OPTIONS"
    )
    with urllib.request.urlopen(preflight, timeout=10) as response:
        assert response.status == 204
        assert response.headers["Access-Control-Allow-Origin"] == "*"
        assert "PUT" in response.headers["Access-Control-Allow-Methods"]
        assert "Last-Event-ID" in response.headers["Access-Control-Allow-Headers"]


def test_session_detail_reduces_state(gateway, client, happy_image):
    session_id = client.hello(child_id="kid-f")
    width, height, pixels = happy_image
    client.send("image_request", image_body(pixels, width, height))
    client.recv()
    client.recv()
    wait_events(gateway, session_id, "behavior_sent")

    status, detail = http("GET", gateway.http_address, f"/sessions/{session_id}")
    assert status == 200
    state = detail["state"]
    assert state["predominant_emotion"] == "happiness"
    assert state["behaviors_sent"][-1] == {"kind": "animation", "animation_id": "dance_joy"}
    assert state["counts"]["image_received"] == 1


def raw_get(address, path, headers=None):
    host, port = address
    request = urllib.request.Request(f"http://{host}:{port}{path}", headers=headers or {})
    return urllib.request.urlopen(request, timeout=10)


def test_event_download_matches_disk(gateway, client, happy_image):
    session_id = client.hello()
    width, height, pixels = happy_image
    client.send("image_request", image_body(pixels, width, height))
    client.recv()
    client.recv()
    wait_events(gateway, session_id, "behavior_sent")

    with raw_get(gateway.http_address, f"/sessions/{session_id}/events") as response:
        assert response.headers["Content-Type"] == "application/x-ndjson"
        downloaded = response.read()
    on_disk = (gateway.data_dir / "sessions" / f"{session_id}.ndjson").read_bytes()
    assert downloaded == on_disk
    parsed = read_log(gateway.data_dir / "sessions" / f"{session_id}.ndjson")
    assert [e.kind for e in parsed] == [e.kind for e in events_of(gateway, session_id)]


# -- live event stream ------------------------------------------------------------------------

class SseStream:
    """Minimal server-sent-events reader over urllib."""

    def __init__(self, address, path, headers=None):
        self.response = raw_get(address, path, headers)

    def next_event(self):
        """Next (id, event, data) triple; None when the stream closes."""
        event_id, event_type, data = None, "message", []
        while True:
            line = self.response.readline()
            if not line:
                return None
            line = line.decode("utf-8").rstrip("\n")
            if line == "":
                if data or event_id is not None or event_type != "message":
                    return event_id, event_type, "\n".join(data)
                continue  # keepalive frame
            if line.startswith(":"):
                continue
            key, _, value = line.partition(":")
            value = value.lstrip(" ")
            if key == "id":
                event_id = int(value)
            elif key == "event":
                event_type = value
            elif key == "data":
                data.append(value)

    def close(self):
        self.response.close()


def test_live_stream_replays_and_follows(gateway, client, happy_image):
    session_id = client.hello()
    width, height, pixels = happy_image
    client.send("image_request", image_body(pixels, width, height))
    client.recv()
    client.recv()
    wait_events(gateway, session_id, "behavior_sent")

    stream = SseStream(gateway.http_address, f"/sessions/{session_id}/live")
    try:
        replayed = [stream.next_event() for _ in range(4)]
        assert [r[0] for r in replayed] == [0, 1, 2, 3]
        kinds = [json.loads(r[2])["kind"] for r in replayed]
        assert kinds == ["connect", "image_received", "emotion_result", "behavior_sent"]

        client.send("image_request", image_body(pixels, width, height))
        client.recv()
        client.recv()
        live = stream.next_event()
        assert live[0] == 4
        assert json.loads(live[2])["kind"] == "image_received"
    finally:
        stream.close()


def test_live_stream_resumes_after_cursor(gateway, client, happy_image):
    session_id = client.hello()
    width, height, pixels = happy_image
    client.send("image_request", image_body(pixels, width, height))
    client.recv()
    client.recv()
    wait_events(gateway, session_id, "behavior_sent")

    by_param = SseStream(gateway.http_address, f"/sessions/{session_id}/live?after=2")
    try:
        event = by_param.next_event()
        assert event[0] == 3
    finally:
        by_param.close()

    by_header = SseStream(
        gateway.http_address,
        f"/sessions/{session_id}/live",
        headers={"Last-Event-ID": "2"},
    )
    try:
        event = by_header.next_event()
        assert event[0] == 3
    finally:
        by_header.close()


def test_live_stream_ends_with_session(gateway, client):
    session_id = client.hello()
    stream = SseStream(gateway.http_address, f"/sessions/{session_id}/live")
    try:
        first = stream.next_event()
        assert json.loads(first[2])["kind"] == "connect"
        client.close()
        end = stream.next_event()
        assert end[1] == "end"
        assert json.loads(end[2]) == {"session_id": session_id}
    finally:
        stream.close()
