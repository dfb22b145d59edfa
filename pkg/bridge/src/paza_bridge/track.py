"""Greedy IoU tracker with a miss buffer for identity persistence."""

from __future__ import annotations

from dataclasses import dataclass

from .detect import PERSON_CLASS_ID, RawDetection


def iou(a: RawDetection, b: tuple[float, float, float, float]) -> float:
    bx1, by1, bx2, by2 = b
    ix1, iy1 = max(a.x1, bx1), max(a.y1, by1)
    ix2, iy2 = min(a.x2, bx2), min(a.y2, by2)
    iw, ih = max(0.0, ix2 - ix1), max(0.0, iy2 - iy1)
    inter = iw * ih
    if inter <= 0:
        return 0.0
    area_a = (a.x2 - a.x1) * (a.y2 - a.y1)
    area_b = (bx2 - bx1) * (by2 - by1)
    return inter / (area_a + area_b - inter)


@dataclass
class _Track:
    track_id: int
    bbox: tuple[float, float, float, float]
    misses: int = 0


class IouTracker:
    """Associates person detections to stable ids frame over frame.

    A track survives up to `buffer_frames` consecutive misses (occlusion
    tolerance) but is only emitted on frames where it matched a detection.
    """

    def __init__(self, conf_threshold: float = 0.25, buffer_frames: int = 30,
                 iou_threshold: float = 0.1):
        self.conf_threshold = conf_threshold
        self.buffer_frames = buffer_frames
        self.iou_threshold = iou_threshold
        self._tracks: list[_Track] = []
        self._next_id = 1

    def update(self, detections: list[RawDetection]) -> list[tuple[int, RawDetection]]:
        """Returns (track_id, detection) for every person matched this frame."""
        persons = [
            d for d in detections
            if d.class_id == PERSON_CLASS_ID and d.confidence >= self.conf_threshold
        ]
        pairs = sorted(
            (
                (iou(det, track.bbox), di, ti)
                for di, det in enumerate(persons)
                for ti, track in enumerate(self._tracks)
            ),
            key=lambda p: -p[0],
        )
        matched_dets: dict[int, int] = {}
        matched_tracks: set[int] = set()
        for score, di, ti in pairs:
            if score < self.iou_threshold:
                break
            if di in matched_dets or ti in matched_tracks:
                continue
            matched_dets[di] = ti
            matched_tracks.add(ti)

        out = []
        for di, det in enumerate(persons):
            if di in matched_dets:
                track = self._tracks[matched_dets[di]]
                track.bbox = (det.x1, det.y1, det.x2, det.y2)
                track.misses = 0
            else:
                track = _Track(self._next_id, (det.x1, det.y1, det.x2, det.y2))
                self._next_id += 1
                self._tracks.append(track)
            out.append((track.track_id, det))

        emitted = {track_id for track_id, _ in out}
        survivors = []
        for track in self._tracks:
            if track.track_id in emitted:
                survivors.append(track)
                continue
            track.misses += 1
            if track.misses <= self.buffer_frames:
                survivors.append(track)
        self._tracks = survivors
        return out
