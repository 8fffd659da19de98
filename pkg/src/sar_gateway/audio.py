"""Voice-activity detection, utterance recording, fragmentation, reassembly.

Audio is handled as float64 numpy arrays normalized to [-1, 1]; the wire
and fixture formats are signed 16-bit little-endian PCM.  The RMS of each
0.1 s window (root of the mean of the squared samples) drives a hysteresis
state machine with a hangover counter, which segments the stream into
utterances.
"""
from __future__ import annotations

import io
import wave
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

WINDOWS_PER_SECOND = 10  # fixed 0.1 s analysis cadence

DEFAULT_START_THRESHOLD = 0.02
DEFAULT_STOP_THRESHOLD = 0.01
DEFAULT_HANGOVER_WINDOWS = 5
DEFAULT_FRAGMENT_SIZE = 16000  # ~1 s at 16 kHz

PCM_SCALE = 32768.0


class AudioError(Exception):
    pass


class EmptyWindow(AudioError):
    pass


class EmptyUtterance(AudioError):
    pass


class IncompleteUtterance(AudioError):
    pass


class DuplicateFragment(AudioError):
    pass


class CountMismatch(AudioError):
    pass


# ---------------------------------------------------------------------------
# PCM and WAV plumbing
# ---------------------------------------------------------------------------

def pcm16_to_floats(data: bytes) -> np.ndarray:
    """s16le bytes -> float64 in [-1, 1)."""
    return np.frombuffer(data, dtype="<i2").astype(np.float64) / PCM_SCALE


def floats_to_pcm16(samples: np.ndarray) -> bytes:
    """float64 in [-1, 1] -> s16le bytes; exact inverse of pcm16_to_floats."""
    ints = np.clip(np.rint(np.asarray(samples) * PCM_SCALE), -32768, 32767)
    return ints.astype("<i2").tobytes()


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a mono s16le WAV file; returns (samples in [-1,1], sample rate)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1 or wf.getsampwidth() != 2:
            raise AudioError(f"{path}: expected mono 16-bit PCM")
        rate = wf.getframerate()
        data = wf.readframes(wf.getnframes())
    return pcm16_to_floats(data), rate


def write_wav(path: str | Path, samples: np.ndarray, sample_rate_hz: int) -> None:
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate_hz)
        wf.writeframes(floats_to_pcm16(samples))


# ---------------------------------------------------------------------------
# RMS windows
# ---------------------------------------------------------------------------

def window_length(sample_rate_hz: int) -> int:
    return sample_rate_hz // WINDOWS_PER_SECOND


def iter_windows(samples: np.ndarray, sample_rate_hz: int):
    """Split into consecutive 0.1 s windows; a partial tail is discarded."""
    n = window_length(sample_rate_hz)
    if n <= 0:
        raise AudioError(f"sample rate {sample_rate_hz} too low for 0.1 s windows")
    for start in range(0, len(samples) - n + 1, n):
        yield samples[start : start + n]


def compute_rms(window: np.ndarray) -> float:
    """Root of the mean of the squared samples; in [0,1] for normalized input."""
    window = np.asarray(window)
    if window.size == 0:
        raise EmptyWindow("cannot take RMS of an empty window")
    return float(np.sqrt(np.mean(np.square(window, dtype=np.float64))))


# ---------------------------------------------------------------------------
# VAD state machine
# ---------------------------------------------------------------------------

IDLE = "Idle"
SPEAKING = "Speaking"

SPEECH_START = "SpeechStart"
SPEECH_STOP = "SpeechStop"


@dataclass(frozen=True)
class VadState:
    phase: str = IDLE
    hangover_count: int = 0
    start_threshold: float = DEFAULT_START_THRESHOLD
    stop_threshold: float = DEFAULT_STOP_THRESHOLD
    hangover_windows: int = DEFAULT_HANGOVER_WINDOWS

    def __post_init__(self):
        if self.stop_threshold > self.start_threshold:
            raise ValueError("stop_threshold must not exceed start_threshold")
        if self.hangover_windows <= 0:
            raise ValueError("hangover_windows must be positive")
        if not 0 <= self.hangover_count <= self.hangover_windows:
            raise ValueError("hangover_count out of range")


def vad_step(state: VadState, rms: float) -> tuple[VadState, str | None]:
    """Advance the detector by one window; returns (state', event).

    Idle -> Speaking (SpeechStart) once rms reaches start_threshold.
    Speaking persists while rms >= stop_threshold; below it the hangover
    counter runs, resetting whenever rms recovers, and SpeechStop fires
    after hangover_windows consecutive sub-threshold windows.
    """
    if rms < 0:
        raise ValueError("rms must be non-negative")
    if state.phase == IDLE:
        if rms >= state.start_threshold:
            return replace(state, phase=SPEAKING, hangover_count=0), SPEECH_START
        return state, None
    # Speaking
    if rms >= state.stop_threshold:
        if state.hangover_count:
            return replace(state, hangover_count=0), None
        return state, None
    count = state.hangover_count + 1
    if count >= state.hangover_windows:
        return replace(state, phase=IDLE, hangover_count=0), SPEECH_STOP
    return replace(state, hangover_count=count), None


class VadSegmenter:
    """Streams 0.1 s windows through the VAD and collects utterance samples.

    An utterance spans the SpeechStart-triggering window through the last
    window at or above stop_threshold; the trailing hangover windows are
    trimmed.  Sub-threshold runs that recover (pauses inside speech) stay in.
    """

    def __init__(self, state: VadState | None = None):
        self.state = state or VadState()
        self._windows: list[np.ndarray] = []

    def push(self, window: np.ndarray) -> tuple[str | None, np.ndarray | None]:
        """Feed one window; returns (event, utterance samples on SpeechStop)."""
        rms = compute_rms(window)
        self.state, event = vad_step(self.state, rms)
        utterance = None
        if self.state.phase == SPEAKING or event == SPEECH_STOP:
            self._windows.append(window)
        if event == SPEECH_STOP:
            kept = self._windows[: -self.state.hangover_windows]
            self._windows = []
            utterance = np.concatenate(kept) if kept else np.empty(0)
        return event, utterance

    def segment(self, samples: np.ndarray, sample_rate_hz: int) -> list[np.ndarray]:
        """Run a whole buffer; returns completed (non-empty) utterances."""
        utterances = []
        for window in iter_windows(samples, sample_rate_hz):
            _, utterance = self.push(window)
            if utterance is not None and utterance.size:
                utterances.append(utterance)
        return utterances


# ---------------------------------------------------------------------------
# fragmentation / reassembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AudioFragment:
    utterance_id: str
    index: int
    samples: np.ndarray = field(compare=False)


@dataclass
class Utterance:
    utterance_id: str
    samples: np.ndarray
    fragment_count: int
    transcript: str | None = None
    sentiment: float | None = None


def fragment(samples: np.ndarray, fragment_size: int, utterance_id: str = "u") -> list[AudioFragment]:
    """Cut samples into fragments of `fragment_size`; the last may be short."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise EmptyUtterance("nothing to fragment")
    if fragment_size <= 0:
        raise ValueError("fragment_size must be positive")
    return [
        AudioFragment(utterance_id, i, samples[start : start + fragment_size])
        for i, start in enumerate(range(0, len(samples), fragment_size))
    ]


def reassemble(fragments: list[AudioFragment], declared_count: int) -> np.ndarray:
    """Order fragments by index and concatenate.

    Succeeds only when the indices form exactly 0..declared_count-1 for a
    single utterance_id.
    """
    if fragments:
        ids = {f.utterance_id for f in fragments}
        if len(ids) > 1:
            raise ValueError(f"fragments from multiple utterances: {sorted(ids)}")
    seen: dict[int, AudioFragment] = {}
    for frag in fragments:
        if frag.index in seen:
            raise DuplicateFragment(f"fragment {frag.index} delivered twice")
        seen[frag.index] = frag
    stray = sorted(i for i in seen if not 0 <= i < declared_count)
    if stray:
        raise CountMismatch(
            f"indices {stray} fall outside the declared 0..{declared_count - 1}"
        )
    missing = [i for i in range(declared_count) if i not in seen]
    if missing:
        raise IncompleteUtterance(f"missing fragment indices {missing}")
    if declared_count == 0:
        return np.empty(0)
    return np.concatenate([seen[i].samples for i in range(declared_count)])
