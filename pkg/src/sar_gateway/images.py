"""Minimal PPM (P6) reading/writing.

Fixture images are binary PPM: a self-describing container whose body is
exactly the width*height*3 RGB payload the emotion service consumes and the
fixture manifest hashes.
"""
from __future__ import annotations

from pathlib import Path


def read_ppm(path: str | Path) -> tuple[int, int, bytes]:
    """Returns (width, height, raw RGB bytes)."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment runs to end of line
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    magic, width_s, height_s, maxval_s = fields
    if magic != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    width, height, maxval = int(width_s), int(height_s), int(maxval_s)
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported")
    pos += 1  # single whitespace after maxval
    pixels = data[pos : pos + width * height * 3]
    if len(pixels) != width * height * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return width, height, pixels


def write_ppm(path: str | Path, width: int, height: int, pixels: bytes) -> None:
    if len(pixels) != width * height * 3:
        raise ValueError(f"pixel buffer is {len(pixels)} bytes, expected {width * height * 3}")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pixels)


def solid_color(width: int, height: int, rgb: tuple[int, int, int]) -> bytes:
    return bytes(rgb) * (width * height)
