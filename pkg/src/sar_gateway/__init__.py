"""Middleware gateway between a social robot and its analysis services.

The robot speaks a length-prefixed JSON frame protocol over TCP; the
gateway segments speech, fans fragments out to transcription, folds
emotion observations into per-child models, picks behaviors and scripts,
and exposes everything to operators over HTTP with live event feeds.
"""
from .audio import (
    VadSegmenter,
    VadState,
    compute_rms,
    fragment,
    reassemble,
    vad_step,
)
from .backends import (
    BackendUnavailable,
    EmotionScores,
    FixtureManifest,
    Lexicon,
    LocalBackend,
    NoFace,
    RemoteBackend,
    SentimentScore,
)
from .behavior import (
    BehaviorCommand,
    SessionArbiter,
    predominant_emotion,
    select_animation,
    sentiment_band,
)
from .clock import Clock, VirtualClock
from .config import GatewayConfig
from .events import EventLog, SessionEvent, read_log, reduce_events
from .gateway import Gateway
from .protocol import EMOTIONS, FrameDecoder, Message, decode_frame, encode_frame
from .sim import Scenario, load_scenario, run_scenario
from .user_model import (
    BehaviorScript,
    ModelStore,
    UserModel,
    choose_script,
    mood_valence,
    observe_emotion,
)

__version__ = "0.1.0"

__all__ = [
    "BackendUnavailable",
    "BehaviorCommand",
    "BehaviorScript",
    "Clock",
    "EMOTIONS",
    "EmotionScores",
    "EventLog",
    "FixtureManifest",
    "FrameDecoder",
    "Gateway",
    "GatewayConfig",
    "Lexicon",
    "LocalBackend",
    "Message",
    "ModelStore",
    "NoFace",
    "RemoteBackend",
    "Scenario",
    "SentimentScore",
    "SessionArbiter",
    "SessionEvent",
    "UserModel",
    "VadSegmenter",
    "VadState",
    "VirtualClock",
    "choose_script",
    "compute_rms",
    "decode_frame",
    "encode_frame",
    "fragment",
    "load_scenario",
    "mood_valence",
    "observe_emotion",
    "predominant_emotion",
    "read_log",
    "reassemble",
    "reduce_events",
    "run_scenario",
    "select_animation",
    "sentiment_band",
    "vad_step",
]
