"""Streaming side of the rig: codecs, wire format, broker, eye services,
recording, discovery and the orchestrator."""

from .broker import Broker, BrokerClient
from .codec import (
    DecodeError,
    decode_color,
    decode_depth,
    encode_color,
    encode_depth,
    quantize_depth,
)
from .discovery import AnnounceListener, announce_broker, make_announce, parse_announce
from .eye import EyeConfig, EyeError, EyeService
from .orchestrator import (
    AssembledFrame,
    CalibrationSettings,
    FrameAssembler,
    MultiViewSet,
    Orchestrator,
    OrchestratorConfig,
    OrchestratorError,
    create_app,
)
from .recording import (
    RecordingError,
    RecordingWriter,
    build_index,
    iter_recording,
    load_index,
    recorded_eyes,
)
from .wire import (
    ControlMessage,
    FrameMessage,
    WireError,
    decode_control_message,
    decode_frame_message,
    topic_matches,
    validate_topic,
)

__all__ = [
    "AnnounceListener",
    "AssembledFrame",
    "Broker",
    "BrokerClient",
    "CalibrationSettings",
    "ControlMessage",
    "DecodeError",
    "EyeConfig",
    "EyeError",
    "EyeService",
    "FrameAssembler",
    "FrameMessage",
    "MultiViewSet",
    "Orchestrator",
    "OrchestratorConfig",
    "OrchestratorError",
    "RecordingError",
    "RecordingWriter",
    "WireError",
    "announce_broker",
    "build_index",
    "create_app",
    "decode_color",
    "decode_control_message",
    "decode_depth",
    "decode_frame_message",
    "encode_color",
    "encode_depth",
    "iter_recording",
    "load_index",
    "make_announce",
    "parse_announce",
    "quantize_depth",
    "recorded_eyes",
    "topic_matches",
    "validate_topic",
]
