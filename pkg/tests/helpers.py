"""Shared test plumbing: a robot-side protocol driver and HTTP helpers."""
from __future__ import annotations

import json
import socket
import time
import urllib.error
import urllib.request

from sar_gateway.protocol import FrameDecoder, Message, b64encode_bytes, encode_frame


class RobotClient:
    """Drives the robot side of a gateway connection from a test."""

    def __init__(self, address, timeout: float = 10.0):
        self.sock = socket.create_connection(address, timeout=timeout)
        self.decoder = FrameDecoder()
        self.out_seq = 0
        self.in_seq = 0
        self.inbox: list[Message] = []

    def send(self, type_: str, body: dict) -> None:
        self.sock.sendall(encode_frame(Message(type=type_, seq=self.out_seq, body=body)))
        self.out_seq += 1

    def send_raw(self, data: bytes) -> None:
        self.sock.sendall(data)

    def recv(self, timeout: float = 10.0) -> Message:
        """Next gateway message; checks the per-direction seq discipline."""
        deadline = time.monotonic() + timeout
        while not self.inbox:
            self.sock.settimeout(max(deadline - time.monotonic(), 0.05))
            data = self.sock.recv(65536)
            if not data:
                raise ConnectionError("gateway closed the connection")
            self.inbox.extend(self.decoder.feed(data))
        message = self.inbox.pop(0)
        assert message.seq == self.in_seq, f"gateway seq {message.seq}, expected {self.in_seq}"
        self.in_seq += 1
        return message

    def recv_until(self, type_: str, timeout: float = 10.0) -> Message:
        deadline = time.monotonic() + timeout
        while True:
            message = self.recv(timeout=max(deadline - time.monotonic(), 0.05))
            if message.type == type_:
                return message

    def hello(self, robot_id: str = "r1", child_id: str = "c1") -> str:
        self.send("hello", {"robot_id": robot_id, "child_id": child_id})
        reply = self.recv()
        assert reply.type == "hello", reply
        return reply.body["session_id"]

    def wait_closed(self, timeout: float = 5.0) -> bool:
        """True once the gateway closes its end."""
        self.sock.settimeout(timeout)
        try:
            while True:
                data = self.sock.recv(65536)
                if not data:
                    return True
                self.inbox.extend(self.decoder.feed(data))
        except socket.timeout:
            return False

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def image_body(pixels: bytes, width: int, height: int) -> dict:
    return {"image": {"width": width, "height": height, "pixels_b64": b64encode_bytes(pixels)}}


def http(method: str, address, path: str, body: dict | None = None, headers: dict | None = None):
    """Tiny JSON-over-HTTP helper; returns (status, parsed body)."""
    host, port = address
    data = json.dumps(body).encode() if body is not None else None
    request = urllib.request.Request(
        f"http://{host}:{port}{path}", data=data, method=method, headers=headers or {}
    )
    if data is not None:
        request.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            raw = response.read()
            return response.status, json.loads(raw) if raw else None
    except urllib.error.HTTPError as exc:
        raw = exc.read()
        return exc.code, json.loads(raw) if raw else None


def wait_until(predicate, timeout: float = 5.0, interval: float = 0.02):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        result = predicate()
        if result:
            return result
        time.sleep(interval)
    raise TimeoutError("condition not met in time")
