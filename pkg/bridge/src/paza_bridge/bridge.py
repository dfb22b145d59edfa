"""Frame sources, event assembly, and emitters.

The bridge's single contract: every emitted line is a schema-conformant
FrameEvent.  It never pre-filters; downstream owns all triggering logic.
"""

from __future__ import annotations

import json
import socket
import struct
import sys
from pathlib import Path
from typing import Iterator, Optional

import cv2
import numpy as np

from .config import BridgeConfig
from .detect import RawDetection, make_detector
from .track import IouTracker

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp")


def iter_frames(source: str, fallback_fps: float) -> Iterator[tuple[np.ndarray, float]]:
    """Yield (frame, fps) from a video file/URI or a directory of images."""
    path = Path(source)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise FileNotFoundError(f"no frame images in {source}")
        for p in files:
            frame = cv2.imread(str(p))
            if frame is None:
                raise IOError(f"cannot read frame image {p}")
            yield frame, fallback_fps
        return
    cap = cv2.VideoCapture(source)
    if not cap.isOpened():
        raise IOError(f"cannot open video source {source!r}")
    fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
    if not fps or fps != fps or fps <= 0:
        fps = fallback_fps
    try:
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            yield frame, fps
    finally:
        cap.release()


def event_dict(
    camera_id: str,
    frame_index: int,
    timestamp_ms: int,
    detections: list[RawDetection],
    tracks: list[tuple[int, RawDetection]],
) -> dict:
    obj = {
        "camera_id": camera_id,
        "frame_index": frame_index,
        "timestamp_ms": timestamp_ms,
        "detections": [
            {
                "class_id": d.class_id,
                "confidence": round(d.confidence, 4),
                "bbox": [d.x1, d.y1, d.x2, d.y2],
            }
            for d in detections
        ],
        "tracks": [],
    }
    for track_id, det in tracks:
        entry: dict = {"track_id": track_id, "bbox": [det.x1, det.y1, det.x2, det.y2]}
        if det.keypoints is not None and len(det.keypoints) == 17:
            entry["keypoints"] = [
                [x, y, max(0.0, min(1.0, c))] for x, y, c in det.keypoints
            ]
        obj["tracks"].append(entry)
    return obj


def generate_events(cfg: BridgeConfig) -> Iterator[dict]:
    detector = make_detector(cfg.backend, cfg.model)
    tracker = IouTracker(cfg.tracker_conf, cfg.track_buffer_frames)
    for frame_index, (frame, fps) in enumerate(iter_frames(cfg.source, cfg.fps)):
        raw = detector.detect(frame)
        detections = [d for d in raw if d.confidence >= cfg.detector_conf]
        tracks = tracker.update(detections)
        timestamp_ms = int(round(frame_index * 1000.0 / fps))
        yield event_dict(cfg.camera_id, frame_index, timestamp_ms, detections, tracks)


class StdoutEmitter:
    def send(self, obj: dict) -> None:
        sys.stdout.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")

    def close(self) -> None:
        sys.stdout.flush()


class TcpEmitter:
    """Length-delimited JSON over TCP: 4-byte big-endian length, then payload."""

    def __init__(self, host: str, port: int):
        self._sock = socket.create_connection((host, port), timeout=10)

    def send(self, obj: dict) -> None:
        payload = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
        self._sock.sendall(struct.pack(">I", len(payload)) + payload)

    def close(self) -> None:
        self._sock.close()


def make_emitter(spec: str):
    if spec == "stdout":
        return StdoutEmitter()
    if spec.startswith("tcp:"):
        _, host, port = spec.split(":", 2)
        return TcpEmitter(host, int(port))
    raise ValueError(f"unknown emit target {spec!r}")


def run_bridge(cfg: BridgeConfig, emitter=None) -> int:
    """Process the whole source; returns the number of events emitted."""
    emitter = emitter or make_emitter(cfg.emit)
    count = 0
    try:
        for obj in generate_events(cfg):
            emitter.send(obj)
            count += 1
    finally:
        emitter.close()
    return count
