# Driving the operator HTTP API
# -----------------------------
#
# Therapists steer sessions through a small JSON-over-HTTP surface plus a
# server-sent-events stream. This script starts a gateway, opens a live robot
# connection, and exercises the operator side with nothing but urllib.

import json
import socket
import tempfile
import urllib.request
from pathlib import Path

from sar_gateway.config import GatewayConfig
from sar_gateway.fixtures import build_fixtures
from sar_gateway.gateway import Gateway
from sar_gateway.protocol import Message, encode_frame

workdir = Path(tempfile.mkdtemp(prefix="sar-operator-"))
assets = build_fixtures(workdir / "assets")
gateway = Gateway(GatewayConfig(
    robot_port=0,
    http_port=0,
    data_dir=str(workdir / "gateway"),
    manifest_path=str(assets["manifest"]),
))
gateway.start()
host, port = gateway.http_address
base = f"http://{host}:{port}"


def get(path):
    with urllib.request.urlopen(base + path) as resp:
        return json.loads(resp.read())


def put(path, body):
    request = urllib.request.Request(
        base + path, data=json.dumps(body).encode(), method="PUT",
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(request) as resp:
        return json.loads(resp.read())


# A robot connects and says hello; that opens session s0000.

robot = socket.create_connection(gateway.robot_address)
robot.sendall(encode_frame(Message(
    type="hello", seq=0, body={"robot_id": "nao-01", "child_id": "child-01"},
)))
robot.recv(65536)  # hello reply with the session id

print("sessions:", [(s["session_id"], s["ended"] is None) for s in get("/sessions")])

detail = get("/sessions/s0000")
print("active script:", detail["state"]["active_script_id"])
print("event count:", detail["event_count"])

# Scripts live in a small library the operator can edit at runtime.

print("library:", [s["script_id"] for s in get("/scripts")])
put("/scripts/counting_game", {
    "script_id": "counting_game",
    "title": "Count to five together",
    "mood_range": [-0.2, 0.6],
    "steps": [
        {"kind": "speech", "text": "Let us count! One..."},
        {"kind": "animation", "animation_id": "nod_head"},
    ],
})

# Activating a script on a live session overrides mood-based selection until
# the operator clears it. The action itself lands in the event log, so the
# audit trail and the UI share one history.

put("/sessions/s0000/script", {"script_id": "counting_game"})
print("after override:", get("/sessions/s0000")["state"]["active_script_id"])

put("/children/child-01/preferences", {"favorite_game": "counting", "volume": "quiet"})
print("preferences:", get("/children/child-01/preferences"))

# The same events the SSE stream carries can be fetched as a file, which is
# how the downloadable session report works.

events = urllib.request.urlopen(base + "/sessions/s0000/events").read()
kinds = [json.loads(line)["kind"] for line in events.splitlines()]
print("event kinds so far:", kinds)

robot.close()
gateway.stop()
