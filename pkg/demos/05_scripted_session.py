"""
A complete session, end to end
===============================

This walkthrough builds the bundled demo assets (a recognizable happy-face
image, a short "i am happy" recording, and the manifest that ties them to
labels), starts a gateway with the deterministic local backend, and replays
the bundled scenario against it exactly the way the `sar-sim` command does.
"""
import json
import tempfile
from pathlib import Path

from sar_gateway.clock import VirtualClock
from sar_gateway.config import GatewayConfig
from sar_gateway.events import read_log
from sar_gateway.fixtures import build_fixtures
from sar_gateway.gateway import Gateway
from sar_gateway.sim import load_scenario, run_scenario

workdir = Path(tempfile.mkdtemp(prefix="sar-demo-"))
assets = build_fixtures(workdir / "assets")
print("assets:", sorted(p.name for p in (workdir / "assets").iterdir()))

# The scenario file is plain JSON: timed steps plus the behaviors the robot
# is expected to receive back.

scenario_doc = json.loads(Path(assets["scenario"]).read_text())
print("steps:", [(s["at"], s["action"]) for s in scenario_doc["steps"]])
print("expected:", scenario_doc["expected"])

# A virtual clock pins every event timestamp to the clock origin, which is
# what makes two runs byte-identical. Production uses the real clock simply
# by not passing one.

config = GatewayConfig(
    robot_port=0,                      # ephemeral; the OS picks a free port
    http_port=0,
    data_dir=str(workdir / "gateway"),
    manifest_path=str(assets["manifest"]),
)
gateway = Gateway(config, clock=VirtualClock())
gateway.start()
print("robot listener:", gateway.robot_address)
print("operator api:  ", gateway.http_address)

# run_scenario connects as a robot, sends the image, segments and streams the
# recording, and collects every frame that comes back.

run = run_scenario(load_scenario(assets["scenario"]), gateway.robot_address, check=True)
print("exit code:", run.exit_code)
for line in run.frames:
    print("  <-", line)

gateway.stop()

# Everything that happened is on disk as an append-only NDJSON event log,
# one file per session. The log is the source of truth: session state shown
# by the operator API is recomputed from it, never stored separately.

log_path = workdir / "gateway" / "sessions" / "s0000.ndjson"
for event in read_log(log_path):
    print(f"  n={event.n:2d} ts={event.ts:.1f} {event.kind:18} {json.dumps(event.payload)[:60]}")

# The child's model was updated by the happy observation and persists for
# the next session. The store is append-only NDJSON too; the live record is
# simply the last line.

records = (workdir / "gateway" / "models" / "child-01.ndjson").read_text().splitlines()
model = json.loads(records[-1])["model"]
print("stored profile happiness:", model["emotion_profile"]["happiness"])
print("interaction log refs:", model["interaction_log_ref"])
