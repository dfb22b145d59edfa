"""Wire and data model for per-frame detection events.

A producer (detector + tracker + pose estimator) emits one JSON object per
frame on a JSON Lines stream; this module validates those lines into typed
events and is the sole ingest contract of the pipeline.  Field names are
bit-exact:

    {"camera_id": "c1", "frame_index": 0, "timestamp_ms": 0,
     "image_ref": "frames/000000.jpg",            # optional
     "detections": [{"class_id": 39, "confidence": 0.8, "bbox": [x1,y1,x2,y2]}],
     "tracks": [{"track_id": 7, "bbox": [x1,y1,x2,y2],
                 "keypoints": [[x, y, conf] * 17]}]}   # keypoints optional

Timestamps are producer-side capture times in milliseconds; the engine never
reads a wall clock during replay.  Duplicate timestamps across consecutive
frames are legal (burst delivery), frame_index must strictly increase per
camera.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

PERSON_CLASS_ID = 0
NUM_KEYPOINTS = 17

# COCO keypoint indices used by the behavioral signals.
KP_HEAD = (0, 1, 2, 3, 4)
KP_SHOULDERS = (5, 6)
KP_WRISTS = (9, 10)
KP_HIPS = (11, 12)


class ParseError(ValueError):
    """A line failed JSON decoding, schema validation, or an invariant."""

    def __init__(self, message: str, field_name: Optional[str] = None):
        super().__init__(message)
        self.field_name = field_name


class StreamError(ValueError):
    """Per-camera ordering invariant violated across a sequence of events."""

    def __init__(self, message: str, position: Optional[int] = None):
        super().__init__(message)
        self.position = position


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in frame pixel coordinates, corner form."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)) or v < 0:
                raise ParseError(f"bbox.{name} must be finite and >= 0, got {v!r}", name)
        if self.x2 <= self.x1:
            raise ParseError(f"bbox requires x2 > x1, got x1={self.x1} x2={self.x2}", "bbox")
        if self.y2 <= self.y1:
            raise ParseError(f"bbox requires y2 > y1, got y1={self.y1} y2={self.y2}", "bbox")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    @property
    def diagonal(self) -> float:
        """Diagonal length; scales the object-proximity radius."""
        return math.hypot(self.width, self.height)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    conf: float

    def __post_init__(self):
        if not (0.0 <= self.conf <= 1.0):
            raise ParseError(f"keypoint conf must be in [0,1], got {self.conf}", "keypoints")


@dataclass(frozen=True)
class Detection:
    class_id: int
    confidence: float
    bbox: BBox

    def __post_init__(self):
        if self.class_id < 0:
            raise ParseError(f"class_id must be >= 0, got {self.class_id}", "class_id")
        if not (0.0 <= self.confidence <= 1.0):
            raise ParseError(f"confidence must be in [0,1], got {self.confidence}", "confidence")

    @property
    def is_person(self) -> bool:
        return self.class_id == PERSON_CLASS_ID


@dataclass(frozen=True)
class TrackedPerson:
    track_id: int
    bbox: BBox
    keypoints: Optional[tuple[Keypoint, ...]] = None

    def __post_init__(self):
        if self.track_id <= 0:
            raise ParseError(f"track_id must be positive, got {self.track_id}", "track_id")
        if self.keypoints is not None and len(self.keypoints) != NUM_KEYPOINTS:
            raise ParseError(
                f"keypoints length {len(self.keypoints)} != {NUM_KEYPOINTS}", "keypoints"
            )


@dataclass(frozen=True)
class FrameEvent:
    camera_id: str
    frame_index: int
    timestamp_ms: int
    detections: tuple[Detection, ...] = field(default_factory=tuple)
    tracks: tuple[TrackedPerson, ...] = field(default_factory=tuple)
    image_ref: Optional[str] = None

    def __post_init__(self):
        if self.frame_index < 0:
            raise ParseError(f"frame_index must be >= 0, got {self.frame_index}", "frame_index")
        if self.timestamp_ms < 0:
            raise ParseError(f"timestamp_ms must be >= 0, got {self.timestamp_ms}", "timestamp_ms")
        ids = [t.track_id for t in self.tracks]
        if len(ids) != len(set(ids)):
            raise ParseError(f"duplicate track_ids within one event: {sorted(ids)}", "tracks")


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise ParseError(f"missing field {where}.{key}", key)
    value = obj[key]
    # bool is an int subclass; never valid where a number is expected
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ParseError(
            f"field {where}.{key} has wrong type {type(value).__name__}", key
        )
    return value


def _parse_bbox(raw, where: str) -> BBox:
    if not isinstance(raw, list) or len(raw) != 4:
        raise ParseError(f"{where}.bbox must be a 4-element array", "bbox")
    vals = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"{where}.bbox entries must be numbers", "bbox")
        vals.append(float(v))
    return BBox(*vals)


def _parse_keypoints(raw, where: str) -> tuple[Keypoint, ...]:
    if not isinstance(raw, list):
        raise ParseError(f"{where}.keypoints must be an array", "keypoints")
    if len(raw) != NUM_KEYPOINTS:
        raise ParseError(
            f"invariant violation: {where}.keypoints length {len(raw)} != {NUM_KEYPOINTS}",
            "keypoints",
        )
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, list) or len(item) != 3:
            raise ParseError(f"{where}.keypoints[{i}] must be [x, y, conf]", "keypoints")
        x, y, conf = item
        for v in (x, y, conf):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParseError(f"{where}.keypoints[{i}] entries must be numbers", "keypoints")
        out.append(Keypoint(float(x), float(y), float(conf)))
    return tuple(out)


def parse_frame_event(line: str) -> FrameEvent:
    """Parse one JSONL line into a validated FrameEvent.

    Total over all inputs: raises ParseError (never anything else) on
    malformed JSON, schema violations, or invariant violations.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError("event must be a JSON object")

    camera_id = _require(obj, "camera_id", str, "event")
    frame_index = _require(obj, "frame_index", int, "event")
    timestamp_ms = _require(obj, "timestamp_ms", int, "event")
    image_ref = obj.get("image_ref")
    if image_ref is not None and not isinstance(image_ref, str):
        raise ParseError("field event.image_ref must be a string", "image_ref")

    raw_dets = _require(obj, "detections", list, "event")
    detections = []
    for i, d in enumerate(raw_dets):
        if not isinstance(d, dict):
            raise ParseError(f"detections[{i}] must be an object", "detections")
        where = f"detections[{i}]"
        class_id = _require(d, "class_id", int, where)
        confidence = float(_require(d, "confidence", (int, float), where))
        detections.append(Detection(class_id, confidence, _parse_bbox(d.get("bbox"), where)))

    raw_tracks = _require(obj, "tracks", list, "event")
    tracks = []
    for i, t in enumerate(raw_tracks):
        if not isinstance(t, dict):
            raise ParseError(f"tracks[{i}] must be an object", "tracks")
        where = f"tracks[{i}]"
        track_id = _require(t, "track_id", int, where)
        bbox = _parse_bbox(t.get("bbox"), where)
        keypoints = None
        if t.get("keypoints") is not None:
            keypoints = _parse_keypoints(t["keypoints"], where)
        tracks.append(TrackedPerson(track_id, bbox, keypoints))

    return FrameEvent(
        camera_id=camera_id,
        frame_index=frame_index,
        timestamp_ms=timestamp_ms,
        detections=tuple(detections),
        tracks=tuple(tracks),
        image_ref=image_ref,
    )


def event_to_dict(event: FrameEvent) -> dict:
    """Inverse of parse_frame_event up to structural equality."""
    obj: dict = {
        "camera_id": event.camera_id,
        "frame_index": event.frame_index,
        "timestamp_ms": event.timestamp_ms,
        "detections": [
            {"class_id": d.class_id, "confidence": d.confidence, "bbox": d.bbox.as_list()}
            for d in event.detections
        ],
        "tracks": [],
    }
    if event.image_ref is not None:
        obj["image_ref"] = event.image_ref
    for t in event.tracks:
        entry: dict = {"track_id": t.track_id, "bbox": t.bbox.as_list()}
        if t.keypoints is not None:
            entry["keypoints"] = [[k.x, k.y, k.conf] for k in t.keypoints]
        obj["tracks"].append(entry)
    return obj


def event_to_jsonl(event: FrameEvent) -> str:
    """Canonical single-line serialization (stable key order, no spaces)."""
    return json.dumps(event_to_dict(event), sort_keys=True, separators=(",", ":"))


def validate_stream(events: Iterable[FrameEvent]) -> None:
    """Check monotone frame_index (strict) and timestamp_ms (non-decreasing) per camera.

    Raises StreamError naming the offending position in the input sequence.
    """
    last: dict[str, tuple[int, int]] = {}
    for pos, ev in enumerate(events):
        prev = last.get(ev.camera_id)
        if prev is not None:
            prev_index, prev_ts = prev
            if ev.frame_index <= prev_index:
                raise StreamError(
                    f"regressing frame_index at position {pos} for camera "
                    f"{ev.camera_id!r}: {ev.frame_index} after {prev_index}",
                    pos,
                )
            if ev.timestamp_ms < prev_ts:
                raise StreamError(
                    f"regressing timestamp at position {pos} for camera "
                    f"{ev.camera_id!r}: {ev.timestamp_ms} after {prev_ts}",
                    pos,
                )
        last[ev.camera_id] = (ev.frame_index, ev.timestamp_ms)
