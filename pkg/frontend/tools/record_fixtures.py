"""Record the console test fixtures from a real gateway run.

Starts a throwaway gateway on a virtual clock, plays one session through it
(fresh child, happy image turn, operator script override, a failed
recognition, one spoken utterance), and saves what the console's tests need:

* session_log.ndjson  - the session's event log, byte for byte
* final_state.json    - the gateway's own reduction of that log, taken from
                        GET /sessions/{id} after the robot disconnected

Rerun after any gateway change that affects the log format:

    python3 tools/record_fixtures.py
"""
import json
import socket
import tempfile
import time
import urllib.request
from pathlib import Path

from sar_gateway.clock import VirtualClock
from sar_gateway.config import GatewayConfig
from sar_gateway.fixtures import build_fixtures
from sar_gateway.gateway import Gateway
from sar_gateway.protocol import FrameDecoder, Message, b64encode_bytes, encode_frame
from sar_gateway.images import read_ppm
from sar_gateway import audio

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="console-fixtures-"))
    assets = build_fixtures(workdir / "assets")
    gateway = Gateway(
        GatewayConfig(
            robot_port=0,
            http_port=0,
            data_dir=str(workdir / "gateway"),
            manifest_path=str(assets["manifest"]),
        ),
        clock=VirtualClock(),
    )
    gateway.start()
    host, port = gateway.http_address
    base = f"http://{host}:{port}"

    sock = socket.create_connection(gateway.robot_address)
    decoder = FrameDecoder()
    out_seq = 0
    received = 0

    def send(type_: str, body: dict) -> None:
        nonlocal out_seq
        sock.sendall(encode_frame(Message(type=type_, seq=out_seq, body=body)))
        out_seq += 1

    def recv_until(type_: str) -> None:
        nonlocal received
        while True:
            for message in decoder.feed(sock.recv(65536)):
                received += 1
                if message.type == type_:
                    return

    send("hello", {"robot_id": "nao-01", "child_id": "child-01"})
    recv_until("hello")

    width, height, pixels = read_ppm(assets["happy_image"])
    send("image_request", {"image": {
        "width": width, "height": height, "pixels_b64": b64encode_bytes(pixels),
    }})
    recv_until("behavior")

    # operator overrides the mood-chosen script mid-session
    request = urllib.request.Request(
        f"{base}/sessions/s0000/script",
        data=json.dumps({"script_id": "calm_waters"}).encode(),
        method="PUT",
        headers={"Content-Type": "application/json"},
    )
    urllib.request.urlopen(request).read()

    width, height, pixels = read_ppm(assets["unknown_image"])
    send("image_request", {"image": {
        "width": width, "height": height, "pixels_b64": b64encode_bytes(pixels),
    }})
    recv_until("behavior")

    samples, rate = audio.read_wav(assets["wav"])
    utterance = next(iter(audio.VadSegmenter().segment(samples, rate)))
    fragments = audio.fragment(utterance, 8000, "u0")
    send("audio_start", {"utterance_id": "u0", "sample_rate_hz": rate})
    for frag in fragments:
        send("audio_fragment", {
            "utterance_id": "u0",
            "index": frag.index,
            "samples_b64": b64encode_bytes(audio.floats_to_pcm16(frag.samples)),
        })
    send("audio_end", {"utterance_id": "u0", "fragment_count": len(fragments)})
    recv_until("behavior")

    sock.close()
    deadline = time.monotonic() + 5.0
    while time.monotonic() < deadline:
        detail = json.loads(urllib.request.urlopen(f"{base}/sessions/s0000").read())
        if detail["ended"] is not None:
            break
        time.sleep(0.02)
    else:
        raise RuntimeError("session never ended")

    FIXTURES.mkdir(parents=True, exist_ok=True)
    log_bytes = (workdir / "gateway" / "sessions" / "s0000.ndjson").read_bytes()
    (FIXTURES / "session_log.ndjson").write_bytes(log_bytes)
    (FIXTURES / "final_state.json").write_text(
        json.dumps(detail["state"], indent=2, sort_keys=True) + "\n"
    )
    gateway.stop()
    print(f"recorded {len(log_bytes.splitlines())} events -> {FIXTURES}")


if __name__ == "__main__":
    main()
