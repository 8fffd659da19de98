"""
The robot wire protocol, frame by frame
========================================

Everything the robot and the gateway say to each other travels as a length
prefix plus a canonical JSON payload. This walkthrough builds frames by hand,
takes them apart again, and pokes at the failure modes.
"""
from sar_gateway.protocol import (
    NEED_MORE_DATA,
    FrameDecoder,
    MalformedFrame,
    Message,
    decode_frame,
    encode_frame,
    frame_payload,
)

# A frame is 4 bytes of big-endian payload length, then the payload itself.
# The smallest legal JSON object makes the point nicely:

frame = frame_payload(b"{}")
print("smallest frame:", frame.hex(" "))          # 00 00 00 02 7b 7d

# Real messages have a type, a per-direction sequence number, and a body.
# The encoder canonicalizes the JSON (sorted keys, no whitespace), so the
# same message always produces the same bytes.

hello = Message(type="hello", seq=0, body={"robot_id": "nao-01", "child_id": "kid-7"})
encoded = encode_frame(hello)
print("hello frame:", len(encoded), "bytes")
print("payload:", encoded[4:].decode())

# Decoding gives the message back along with how many bytes were consumed,
# which is what lets several frames ride in one TCP read.

decoded, consumed = decode_frame(encoded)
print("roundtrip ok:", decoded == hello, "| consumed:", consumed)

# TCP does not respect frame boundaries. Until the last byte of a frame has
# arrived the decoder reports NEED_MORE_DATA instead of guessing.

for cut in (0, 3, 4, len(encoded) - 1):
    print(f"first {cut:2d} bytes ->", decode_frame(encoded[:cut]))

# The stateful FrameDecoder buffers partial input across feeds. Here the
# same hello arrives in three arbitrary chunks:

decoder = FrameDecoder()
chunks = [encoded[:5], encoded[5:11], encoded[11:]]
for chunk in chunks:
    messages = decoder.feed(chunk)
    print(f"fed {len(chunk):2d} bytes -> {len(messages)} message(s)")

# Validation happens at decode time. A structurally valid frame whose payload
# is not a known message is rejected, and the connection that sent it is torn
# down by the gateway rather than interpreted loosely.

try:
    decode_frame(frame_payload(b'{"type":"dance","seq":0,"body":{}}'))
except MalformedFrame as exc:
    print("rejected:", exc)

# Sequence numbers count from 0 separately in each direction and must step by
# exactly one. The gateway closes any connection that skips or repeats, which
# keeps replay and loss visible instead of silent.

print("expected next robot seq after hello:", hello.seq + 1)
