"""Per-person frame buffering and temporal clip materialization.

Each tracked person owns a circular buffer covering the last T seconds of
frames.  When the pre-filter fires, a K-frame clip is sampled evenly from the
buffer, each frame cropped to the person box with padding.  Face pixelation
is applied to persisted alert snapshots only, never to analysis payloads.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .events import BBox, Keypoint, KP_HEAD


class OutOfOrderFrame(ValueError):
    pass


class EmptyBuffer(ValueError):
    pass


@dataclass(frozen=True)
class BufferedFrame:
    timestamp_ms: int
    person_bbox: BBox
    image_ref: Optional[str] = None
    keypoints: Optional[tuple[Keypoint, ...]] = None


@dataclass(frozen=True)
class ClipFrame:
    timestamp_ms: int
    crop_rect: BBox
    image_ref: Optional[str] = None
    keypoints: Optional[tuple[Keypoint, ...]] = None


@dataclass(frozen=True)
class ClipSpec:
    """Immutable K-frame clip handed to the dispatcher.

    label_total is the denominator used in frame labels; when the buffer held
    fewer than K frames it equals the actual frame count so labels never
    overstate the temporal span.
    """

    camera_id: str
    track_id: int
    frames: tuple[ClipFrame, ...]
    label_total: int

    def __post_init__(self):
        if not self.frames:
            raise EmptyBuffer("clip must contain at least one frame")


class FrameBuffer:
    """Time-bounded circular buffer of one person's recent frames.

    Eviction is purely time-based (newest - oldest <= horizon_ms); the hard
    cap of 2*T*FPS_nominal entries only guards against producers running far
    above nominal frame rate.
    """

    def __init__(self, horizon_ms: int = 5000, hard_cap: int = 100):
        self.horizon_ms = horizon_ms
        self.hard_cap = hard_cap
        self.frames: deque[BufferedFrame] = deque()

    def __len__(self) -> int:
        return len(self.frames)

    def push(self, frame: BufferedFrame) -> None:
        if self.frames and frame.timestamp_ms < self.frames[-1].timestamp_ms:
            raise OutOfOrderFrame(
                f"frame timestamp {frame.timestamp_ms} regresses behind "
                f"{self.frames[-1].timestamp_ms}"
            )
        self.frames.append(frame)
        newest = frame.timestamp_ms
        while self.frames and newest - self.frames[0].timestamp_ms > self.horizon_ms:
            self.frames.popleft()
        while len(self.frames) > self.hard_cap:
            self.frames.popleft()


def evenly_spaced_indices(n: int, k: int) -> list[int]:
    """Indices round_half_up(i*(n-1)/(k-1)) for i in 0..k-1; all of 0..n-1 when n < k."""
    if n <= 0:
        raise EmptyBuffer("cannot sample from an empty sequence")
    if n < k:
        return list(range(n))
    if k == 1:
        return [0]
    return [math.floor(i * (n - 1) / (k - 1) + 0.5) for i in range(k)]


def crop_with_padding(bbox: BBox, frame_w: float, frame_h: float, pad_frac: float = 0.2) -> BBox:
    """Expand the box by pad_frac of its width/height per side, clamped to the frame."""
    px = pad_frac * bbox.width
    py = pad_frac * bbox.height
    return BBox(
        max(0.0, bbox.x1 - px),
        max(0.0, bbox.y1 - py),
        min(float(frame_w), bbox.x2 + px),
        min(float(frame_h), bbox.y2 + py),
    )


def sample_clip(
    buffer: FrameBuffer,
    k: int,
    camera_id: str,
    track_id: int,
    frame_w: float,
    frame_h: float,
    pad_frac: float = 0.2,
) -> ClipSpec:
    """Sample k evenly-spaced frames (all frames when fewer are buffered)."""
    n = len(buffer.frames)
    if n == 0:
        raise EmptyBuffer(f"no buffered frames for track {track_id} on {camera_id}")
    ordered = list(buffer.frames)
    indices = evenly_spaced_indices(n, k)
    frames = tuple(
        ClipFrame(
            timestamp_ms=ordered[i].timestamp_ms,
            crop_rect=crop_with_padding(ordered[i].person_bbox, frame_w, frame_h, pad_frac),
            image_ref=ordered[i].image_ref,
            keypoints=ordered[i].keypoints,
        )
        for i in indices
    )
    return ClipSpec(camera_id=camera_id, track_id=track_id, frames=frames, label_total=len(frames))


def obfuscate_faces(
    image: np.ndarray,
    keypoints: Optional[tuple[Keypoint, ...]],
    conf_gate: float = 0.2,
    block: int = 16,
) -> np.ndarray:
    """Pixelate a disc over the head region; returns a new array.

    The disc is centered on the centroid of head keypoints above the
    confidence gate, radius max(1.5 * max pairwise head distance, 8 px).
    Pixels outside the disc are never altered; the image is returned
    unchanged when fewer than 2 head keypoints pass the gate.
    """
    if keypoints is None:
        return image
    head = [keypoints[i] for i in KP_HEAD if i < len(keypoints) and keypoints[i].conf > conf_gate]
    if len(head) < 2:
        return image

    cx = sum(k.x for k in head) / len(head)
    cy = sum(k.y for k in head) / len(head)
    spread = max(
        math.hypot(a.x - b.x, a.y - b.y) for i, a in enumerate(head) for b in head[i + 1:]
    )
    radius = max(1.5 * spread, 8.0)

    h, w = image.shape[:2]
    ys, xs = np.ogrid[:h, :w]
    disc = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
    if not disc.any():
        return image

    out = image.copy()
    x_lo = max(0, int((cx - radius) // block) * block)
    x_hi = min(w, int((cx + radius) // block + 1) * block)
    y_lo = max(0, int((cy - radius) // block) * block)
    y_hi = min(h, int((cy + radius) // block + 1) * block)
    for by in range(y_lo, y_hi, block):
        for bx in range(x_lo, x_hi, block):
            sub = disc[by:by + block, bx:bx + block]
            if not sub.any():
                continue
            region = out[by:by + block, bx:bx + block]
            mean = region[sub].mean(axis=0)
            region[sub] = mean.astype(region.dtype) if region.dtype.kind in "iu" else mean
    return out
