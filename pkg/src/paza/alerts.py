"""Alert persistence: append-only JSONL log plus snapshot retention.

Only CONFIRMED and UNCERTAIN verdicts become alerts.  Every state change
(creation, review) is appended as a full record; replaying the log
reconstructs the store, with the last record per alert_id winning.  Snapshot
images live beside the log as {alert_id}_{i}.jpg and are deleted once older
than the configured retention, while metadata rows are kept as an audit
trail.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .gateway import CONFIRMED, UNCERTAIN, Verdict
from .prefilter import VlmCandidate
from .registry import TrackKey

logger = logging.getLogger(__name__)

CLIP_PRE_MS = 4000
CLIP_POST_MS = 3000

REVIEW_PENDING = "pending"
REVIEW_CONFIRMED = "confirmed"
REVIEW_DISMISSED = "dismissed"


class StoreWrite(OSError):
    """Alert log or snapshot persistence failed."""


@dataclass
class AlertRecord:
    alert_id: str
    camera_id: str
    track_id: int
    created_ms: int
    category: str
    confidence: int
    description: str
    clip_frames: list = field(default_factory=list)
    review: str = REVIEW_PENDING
    review_note: Optional[str] = None

    def __post_init__(self):
        if self.category not in (CONFIRMED, UNCERTAIN):
            raise ValueError(f"alerts only persist CONFIRMED/UNCERTAIN, got {self.category}")

    @property
    def clip_window(self) -> tuple[int, int]:
        return (self.created_ms - CLIP_PRE_MS, self.created_ms + CLIP_POST_MS)

    def to_dict(self) -> dict:
        lo, hi = self.clip_window
        return {
            "alert_id": self.alert_id,
            "camera_id": self.camera_id,
            "track_id": self.track_id,
            "created_ms": self.created_ms,
            "category": self.category,
            "confidence": self.confidence,
            "description": self.description,
            "clip_frames": self.clip_frames,
            "clip_window_ms": [lo, hi],
            "review": self.review,
            "review_note": self.review_note,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AlertRecord":
        return cls(
            alert_id=obj["alert_id"],
            camera_id=obj["camera_id"],
            track_id=obj["track_id"],
            created_ms=obj["created_ms"],
            category=obj["category"],
            confidence=obj["confidence"],
            description=obj["description"],
            clip_frames=obj.get("clip_frames", []),
            review=obj.get("review", REVIEW_PENDING),
            review_note=obj.get("review_note"),
        )


class AlertStore:
    """Append-only alert log with an in-memory index rebuilt on startup."""

    LOG_NAME = "alerts.jsonl"

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.log_path = self.directory / self.LOG_NAME
        self.records: dict[str, AlertRecord] = {}
        self._order: list[str] = []
        self._seq = 0
        if self.log_path.exists():
            self._replay_log()

    def _replay_log(self) -> None:
        with open(self.log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = AlertRecord.from_dict(json.loads(line))
                if record.alert_id not in self.records:
                    self._order.append(record.alert_id)
                self.records[record.alert_id] = record
        self._seq = len(self._order)

    def next_alert_id(self) -> str:
        self._seq += 1
        return f"alert-{self._seq:05d}"

    def _append(self, record: AlertRecord) -> None:
        try:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        except OSError as exc:
            raise StoreWrite(f"cannot append to {self.log_path}: {exc}") from exc

    def add(self, record: AlertRecord) -> None:
        if record.alert_id not in self.records:
            self._order.append(record.alert_id)
        self.records[record.alert_id] = record
        self._append(record)

    def get(self, alert_id: str) -> Optional[AlertRecord]:
        return self.records.get(alert_id)

    def list_alerts(self, since_ms: Optional[int] = None) -> list[AlertRecord]:
        out = [self.records[a] for a in self._order]
        if since_ms is not None:
            out = [r for r in out if r.created_ms >= since_ms]
        return out

    def update_review(
        self, alert_id: str, decision: str, note: Optional[str] = None
    ) -> tuple[bool, Optional[AlertRecord]]:
        """Apply a review decision; (False, current) when not pending/found."""
        if decision not in (REVIEW_CONFIRMED, REVIEW_DISMISSED):
            raise ValueError(f"invalid review decision {decision!r}")
        record = self.records.get(alert_id)
        if record is None:
            return False, None
        if record.review != REVIEW_PENDING:
            return False, record
        record.review = decision
        record.review_note = note
        self._append(record)
        return True, record

    # -- snapshots ----------------------------------------------------------

    def snapshot_path(self, alert_id: str, index: int) -> Path:
        return self.directory / f"{alert_id}_{index}.jpg"

    def write_snapshot(self, alert_id: str, index: int, jpeg_bytes: bytes) -> Path:
        path = self.snapshot_path(alert_id, index)
        try:
            path.write_bytes(jpeg_bytes)
        except OSError as exc:
            raise StoreWrite(f"cannot write snapshot {path}: {exc}") from exc
        return path

    def cleanup_retention(self, now_ms: int, retention_h: float = 24.0) -> int:
        """Delete snapshot payloads older than retention; keep metadata rows.

        An alert's snapshots are removed once now - created_ms strictly
        exceeds the retention period.
        """
        retention_ms = retention_h * 3600 * 1000
        deleted = 0
        for alert_id in self._order:
            record = self.records[alert_id]
            if now_ms - record.created_ms <= retention_ms:
                continue
            for path in sorted(self.directory.glob(f"{alert_id}_*.jpg")):
                path.unlink()
                deleted += 1
        return deleted


def record_alert(
    store: AlertStore, verdict: Verdict, candidate: VlmCandidate, now_ms: int
) -> Optional[AlertRecord]:
    """Persist an alert for CONFIRMED/UNCERTAIN verdicts; None for NORMAL.

    SKIPPED never reaches this point — rate-limited candidates go to the
    retry queue instead of producing alerts.
    """
    if verdict.category not in (CONFIRMED, UNCERTAIN):
        return None
    record = AlertRecord(
        alert_id=store.next_alert_id(),
        camera_id=candidate.key.camera_id,
        track_id=candidate.key.track_id,
        created_ms=now_ms,
        category=verdict.category,
        confidence=verdict.confidence,
        description=verdict.description,
        clip_frames=[
            {
                "timestamp_ms": f.timestamp_ms,
                "image_ref": f.image_ref,
                "crop_rect": f.crop_rect.as_list(),
            }
            for f in candidate.clip.frames
        ],
    )
    store.add(record)
    return record
