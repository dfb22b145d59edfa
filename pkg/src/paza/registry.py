"""Per-(camera, track) state across frames.

The registry owns dwell bookkeeping, the nearby-object memory feeding pickup
detection, the per-person VLM cooldown stamp, and each track's frame buffer.
Departed tracks are retained for a grace period (default 10 s) so queued
retries can still reference their buffers, then garbage-collected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .clips import BufferedFrame, FrameBuffer
from .events import BBox, FrameEvent, Keypoint


class StaleEvent(ValueError):
    """An event's timestamp regressed behind its camera's stream."""


@dataclass(frozen=True)
class TrackKey:
    camera_id: str
    track_id: int


@dataclass
class TrackState:
    key: TrackKey
    first_seen_ms: int
    last_seen_ms: int
    last_bbox: BBox
    buffer: FrameBuffer
    last_keypoints: Optional[tuple[Keypoint, ...]] = None
    nearby_classes_prev: set[int] = field(default_factory=set)
    pickup_active_until_ms: Optional[int] = None
    last_vlm_dispatch_ms: Optional[int] = None


@dataclass
class PersonObservation:
    """Transient read-model bundling one tracked person with the frame context."""

    track: TrackState
    detections: tuple
    timestamp_ms: int


def dwell_seconds(track: TrackState, now_ms: int) -> float:
    """Seconds since the track key was first observed."""
    return (now_ms - track.first_seen_ms) / 1000.0


class TrackRegistry:
    """Holds TrackStates keyed by (camera_id, track_id).

    Single writer per camera partition; gc and ingest for one camera are
    serialized by the caller.
    """

    def __init__(
        self,
        retention_ms: int = 10_000,
        buffer_horizon_ms: int = 5_000,
        buffer_cap: int = 100,
    ):
        self.retention_ms = retention_ms
        self.buffer_horizon_ms = buffer_horizon_ms
        self.buffer_cap = buffer_cap
        self.tracks: dict[TrackKey, TrackState] = {}
        self.keys_seen: int = 0
        self._last_event_ms: dict[str, int] = {}

    def ingest(self, event: FrameEvent) -> list[PersonObservation]:
        """Update state for every tracked person in the event.

        Creates TrackStates on first sight, pushes the frame into each
        person's buffer, and returns one observation per person for the
        pre-filter.  Raises StaleEvent on a per-camera timestamp regression
        to surface producer bugs rather than clamping silently.
        """
        last = self._last_event_ms.get(event.camera_id)
        if last is not None and event.timestamp_ms < last:
            raise StaleEvent(
                f"camera {event.camera_id!r} timestamp {event.timestamp_ms} "
                f"regresses behind {last}"
            )
        self._last_event_ms[event.camera_id] = event.timestamp_ms

        observations = []
        for person in event.tracks:
            key = TrackKey(event.camera_id, person.track_id)
            state = self.tracks.get(key)
            if state is None:
                state = TrackState(
                    key=key,
                    first_seen_ms=event.timestamp_ms,
                    last_seen_ms=event.timestamp_ms,
                    last_bbox=person.bbox,
                    buffer=FrameBuffer(self.buffer_horizon_ms, self.buffer_cap),
                )
                self.tracks[key] = state
                self.keys_seen += 1
            state.last_seen_ms = event.timestamp_ms
            state.last_bbox = person.bbox
            state.last_keypoints = person.keypoints
            state.buffer.push(
                BufferedFrame(
                    timestamp_ms=event.timestamp_ms,
                    person_bbox=person.bbox,
                    image_ref=event.image_ref,
                    keypoints=person.keypoints,
                )
            )
            observations.append(
                PersonObservation(
                    track=state,
                    detections=event.detections,
                    timestamp_ms=event.timestamp_ms,
                )
            )
        return observations

    def gc_expired(self, now_ms: int) -> list[TrackKey]:
        """Drop every track unseen for strictly more than retention_ms."""
        removed = [
            key
            for key, state in self.tracks.items()
            if now_ms - state.last_seen_ms > self.retention_ms
        ]
        for key in removed:
            state = self.tracks.pop(key)
            state.buffer.frames.clear()
        return removed
