"""Zero-shot retail concealment detection orchestrator.

Cheap continuous detection events flow in; a multi-signal behavioral
pre-filter gates calls to any OpenAI-compatible vision-language endpoint;
verdicts become reviewed alerts with bounded cost.
"""

from .analytics import CostParams, RunStats, call_volume_projection, confusion_metrics, cost_model
from .events import (
    BBox,
    Detection,
    FrameEvent,
    Keypoint,
    ParseError,
    StreamError,
    TrackedPerson,
    event_to_jsonl,
    parse_frame_event,
    validate_stream,
)
from .gateway import GatewayConfig, Verdict, VlmGateway, build_prompt, parse_verdict
from .pipeline import Pipeline, PipelineConfig, run_replay
from .prefilter import (
    PrefilterConfig,
    SignalReport,
    VlmCandidate,
    evaluate_trigger,
    hand_toward_body,
    near_object,
    update_pickup,
)
from .registry import TrackKey, TrackRegistry, TrackState, dwell_seconds
from .simulate import ScenarioConfig, generate_trace, trigger_eval

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "CostParams",
    "Detection",
    "FrameEvent",
    "GatewayConfig",
    "Keypoint",
    "ParseError",
    "Pipeline",
    "PipelineConfig",
    "PrefilterConfig",
    "RunStats",
    "ScenarioConfig",
    "SignalReport",
    "StreamError",
    "TrackKey",
    "TrackRegistry",
    "TrackState",
    "TrackedPerson",
    "Verdict",
    "VlmCandidate",
    "VlmGateway",
    "build_prompt",
    "call_volume_projection",
    "confusion_metrics",
    "cost_model",
    "dwell_seconds",
    "evaluate_trigger",
    "event_to_jsonl",
    "generate_trace",
    "hand_toward_body",
    "near_object",
    "parse_frame_event",
    "parse_verdict",
    "run_replay",
    "trigger_eval",
    "update_pickup",
    "validate_stream",
]
