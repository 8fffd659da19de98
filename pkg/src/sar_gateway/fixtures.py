"""Deterministic demo assets.

Builds a small set of files the mock backend can recognize: a face image
labeled with an emotion, a spoken-phrase WAV whose fragments map to
transcript pieces, the manifest connecting payload hashes to those labels,
and a ready-to-run scenario exercising one image turn plus one audio turn.

Everything is synthesized from constants, so repeated builds are
byte-identical and the manifest hashes always match what a replay of the
scenario puts on the wire.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .audio import floats_to_pcm16, window_length, write_wav
from .backends import FixtureManifest
from .images import solid_color, write_ppm

SAMPLE_RATE = 16000
TONE_AMPLITUDE = 0.5

# 0.3 s lead silence, 1.0 s tone, 0.8 s tail silence: whole 0.1 s windows,
# so the voiced stretch is exactly the tone (10 windows, 16000 samples)
LEAD_WINDOWS = 3
TAIL_WINDOWS = 8

FRAGMENT_SIZE = 8000  # splits the tone into exactly two fragments

PHRASE = "i am happy"
FRAGMENT_PHRASES = ("i am", "happy")
# one pitch per fragment; 440 Hz repeats exactly every 8000 samples, so a
# single tone would make both fragments byte-identical (one manifest entry)
TONE_SEGMENT_HZ = (440.0, 554.0)

IMAGE_WIDTH = 64
IMAGE_HEIGHT = 64
HAPPY_RGB = (245, 205, 90)
UNKNOWN_RGB = (80, 80, 96)


def synth_phrase() -> np.ndarray:
    """Silence, a two-pitch tone standing in for speech, silence again."""
    lead = np.zeros(LEAD_WINDOWS * window_length(SAMPLE_RATE))
    t = np.arange(FRAGMENT_SIZE) / SAMPLE_RATE
    segments = [TONE_AMPLITUDE * np.sin(2.0 * np.pi * hz * t) for hz in TONE_SEGMENT_HZ]
    tail = np.zeros(TAIL_WINDOWS * window_length(SAMPLE_RATE))
    return np.concatenate([lead, *segments, tail])


def build_fixtures(directory: str | Path) -> dict[str, Path]:
    """Write the asset files into `directory`; returns name -> path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "happy_image": directory / "happiness.ppm",
        "unknown_image": directory / "unknown_face.ppm",
        "wav": directory / "i_am_happy.wav",
        "manifest": directory / "manifest.json",
        "scenario": directory / "happy_session.json",
    }

    happy_pixels = solid_color(IMAGE_WIDTH, IMAGE_HEIGHT, HAPPY_RGB)
    write_ppm(paths["happy_image"], IMAGE_WIDTH, IMAGE_HEIGHT, happy_pixels)
    write_ppm(
        paths["unknown_image"],
        IMAGE_WIDTH,
        IMAGE_HEIGHT,
        solid_color(IMAGE_WIDTH, IMAGE_HEIGHT, UNKNOWN_RGB),
    )

    signal = synth_phrase()
    write_wav(paths["wav"], signal, SAMPLE_RATE)

    # hash the exact bytes a replay produces: slice at the byte level so the
    # fragment payloads are literal substrings of the stored samples
    n = window_length(SAMPLE_RATE)
    tone_bytes = len(TONE_SEGMENT_HZ) * FRAGMENT_SIZE * 2
    pcm = floats_to_pcm16(signal)
    tone_pcm = pcm[LEAD_WINDOWS * n * 2 : LEAD_WINDOWS * n * 2 + tone_bytes]
    fragment_pcm = [
        tone_pcm[i * FRAGMENT_SIZE * 2 : (i + 1) * FRAGMENT_SIZE * 2]
        for i in range(len(FRAGMENT_PHRASES))
    ]

    manifest = FixtureManifest.empty()
    manifest = manifest.with_entry(happy_pixels, "emotion", "happiness")
    manifest = manifest.with_entry(tone_pcm, "transcript", PHRASE)
    for piece, text in zip(fragment_pcm, FRAGMENT_PHRASES):
        manifest = manifest.with_entry(piece, "transcript", text)
    manifest.save(paths["manifest"])

    scenario = {
        "robot_id": "nao-01",
        "child_id": "child-01",
        "fragment_size": FRAGMENT_SIZE,
        "steps": [
            {"at": 0.0, "action": "send_image", "file": paths["happy_image"].name},
            {"at": 0.0, "action": "speak", "file": paths["wav"].name},
        ],
        "expected": [
            {"kind": "animation", "animation_id": "dance_joy"},
            {"kind": "speech", "text": "That makes me happy too!"},
        ],
    }
    with open(paths["scenario"], "w", encoding="utf-8") as fh:
        json.dump(scenario, fh, indent=2)
        fh.write("\n")

    return paths
