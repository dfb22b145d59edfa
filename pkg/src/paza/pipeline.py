"""Event-driven orchestration engine.

Consumes validated FrameEvents, maintains track state and frame buffers,
evaluates the trigger predicate per person, and shepherds fired candidates
through the VLM gateway to alerts.  Every decision uses event timestamps
(virtual clock); replaying the same trace against the same mock script yields
a byte-identical run report.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from .alerts import AlertRecord, AlertStore, record_alert
from .analytics import RunStats
from .clips import sample_clip
from .events import FrameEvent
from .gateway import (
    CONFIRMED,
    NORMAL,
    OUTCOME_VERDICT,
    UNCERTAIN,
    CandidateOutcome,
    GatewayConfig,
    VlmGateway,
)
from .prefilter import PrefilterConfig, VlmCandidate, evaluate_trigger
from .registry import TrackKey, TrackRegistry
from .simulate import ShopperTruth, trigger_eval

logger = logging.getLogger(__name__)

TICK_INTERVAL_MS = 1000


@dataclass
class PipelineConfig:
    prefilter: PrefilterConfig = field(default_factory=PrefilterConfig)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    frame_w: int = 640
    frame_h: int = 640
    fps_nominal: float = 10.0
    pad_frac: float = 0.2
    track_retention_ms: int = 10_000
    retention_h: float = 24.0
    alert_dir: Optional[str] = None
    obfuscate_snapshots: bool = True


class Pipeline:
    """One pipeline instance per process; single writer per camera partition.

    The gateway is optional: without an endpoint the pre-filter still runs
    and candidates are only counted (dry mode, used for trigger-level
    evaluation).
    """

    def __init__(
        self,
        cfg: PipelineConfig,
        truths: Optional[list[ShopperTruth]] = None,
        alert_store: Optional[AlertStore] = None,
        on_alert: Optional[Callable[[AlertRecord], None]] = None,
    ):
        self.cfg = cfg
        self.registry = TrackRegistry(
            retention_ms=cfg.track_retention_ms,
            buffer_horizon_ms=int(cfg.prefilter.buffer_horizon_t_s * 1000),
            buffer_cap=max(1, int(2 * cfg.prefilter.buffer_horizon_t_s * cfg.fps_nominal)),
        )
        self.truths = truths
        self._behavior_by_key: dict[TrackKey, str] = {
            t.key: t.behavior for t in truths or []
        }
        tagger = None
        if truths:
            tagger = lambda cand: self._behavior_by_key.get(cand.key)  # noqa: E731
        self.gateway: Optional[VlmGateway] = None
        if cfg.gateway.api_url:
            self.gateway = VlmGateway(cfg.gateway, tagger=tagger)
        self.store = alert_store
        if self.store is None and cfg.alert_dir:
            self.store = AlertStore(cfg.alert_dir)
        self.on_alert = on_alert

        self.stats = RunStats()
        self.normal_verdicts = 0
        self.fired: list[tuple[TrackKey, int]] = []
        self.candidates: list[VlmCandidate] = []
        self.alerts: list[AlertRecord] = []
        self.clock_ms = 0
        self._first_ts: Optional[int] = None
        self._last_tick_ms: Optional[int] = None

    # -- ingest --------------------------------------------------------------

    def process_event(self, event: FrameEvent) -> None:
        now = event.timestamp_ms
        self.clock_ms = max(self.clock_ms, now)
        if self._first_ts is None:
            self._first_ts = now
        self.stats.frames_processed += 1

        for obs in self.registry.ingest(event):
            decision = evaluate_trigger(obs, self.cfg.prefilter, now)
            if not decision.fired:
                continue
            key = obs.track.key
            clip = sample_clip(
                obs.track.buffer,
                self.cfg.prefilter.clip_frames_k,
                key.camera_id,
                key.track_id,
                self.cfg.frame_w,
                self.cfg.frame_h,
                self.cfg.pad_frac,
            )
            candidate = VlmCandidate(key, now, decision.report, clip)
            self.stats.triggers_fired += 1
            self.fired.append((key, now))
            self.candidates.append(candidate)
            if self.gateway is not None:
                for outcome in self.gateway.submit(candidate, now):
                    self._handle_outcome(outcome)
        self._maybe_tick(now)

    def _maybe_tick(self, now_ms: int) -> None:
        if self._last_tick_ms is not None and now_ms - self._last_tick_ms < TICK_INTERVAL_MS:
            return
        self._last_tick_ms = now_ms
        self.pump(now_ms)

    def pump(self, now_ms: int) -> None:
        """Background work at event time now_ms: gc, retries, retention."""
        self.registry.gc_expired(now_ms)
        if self.gateway is not None:
            for outcome in self.gateway.retry_tick(now_ms):
                self._handle_outcome(outcome)
        if self.store is not None:
            self.store.cleanup_retention(now_ms, self.cfg.retention_h)

    # -- outcomes --------------------------------------------------------------

    def _handle_outcome(self, outcome: CandidateOutcome) -> None:
        if outcome.kind != OUTCOME_VERDICT:
            return  # expired/exhausted/dropped are tallied by gateway stats
        verdict = outcome.verdict
        assert verdict is not None
        if verdict.category == NORMAL:
            self.normal_verdicts += 1
            return
        if verdict.category not in (CONFIRMED, UNCERTAIN):
            return
        self.stats.alerts_by_category[verdict.category] = (
            self.stats.alerts_by_category.get(verdict.category, 0) + 1
        )
        if self.store is not None:
            record = record_alert(self.store, verdict, outcome.candidate, self.clock_ms)
            if record is not None:
                self.alerts.append(record)
                self._save_snapshots(record, outcome.candidate)
                if self.on_alert is not None:
                    self.on_alert(record)
        else:
            # no persistence configured; still surface the alert in-memory
            record = AlertRecord(
                alert_id=f"alert-{len(self.alerts) + 1:05d}",
                camera_id=outcome.candidate.key.camera_id,
                track_id=outcome.candidate.key.track_id,
                created_ms=self.clock_ms,
                category=verdict.category,
                confidence=verdict.confidence,
                description=verdict.description,
            )
            self.alerts.append(record)
            if self.on_alert is not None:
                self.on_alert(record)

    def _save_snapshots(self, record: AlertRecord, candidate: VlmCandidate) -> None:
        """Persist obfuscated crop snapshots when pixel data exists."""
        import os

        refs = [f for f in candidate.clip.frames if f.image_ref and os.path.exists(f.image_ref)]
        if not refs or self.store is None:
            return
        import io

        import numpy as np
        from PIL import Image

        from .clips import obfuscate_faces

        for i, frame in enumerate(refs):
            try:
                with Image.open(frame.image_ref) as img:
                    arr = np.asarray(img.convert("RGB"))
                if self.cfg.obfuscate_snapshots:
                    arr = obfuscate_faces(arr, frame.keypoints)
                r = frame.crop_rect
                crop = arr[int(r.y1):int(r.y2), int(r.x1):int(r.x2)]
                buf = io.BytesIO()
                Image.fromarray(crop).save(buf, format="JPEG", quality=85)
                self.store.write_snapshot(record.alert_id, i, buf.getvalue())
            except OSError as exc:
                logger.warning("snapshot save failed for %s: %s", record.alert_id, exc)

    # -- completion --------------------------------------------------------------

    def finish(self) -> None:
        """End of the virtual timeline: expire whatever is still queued.

        A replay cannot fabricate time beyond the recorded trace, so pending
        retries are terminally expired rather than dispatched against a
        timeline that never existed.
        """
        if self.gateway is not None:
            for outcome in self.gateway.flush_expire():
                self._handle_outcome(outcome)

    # -- reporting --------------------------------------------------------------

    def _merged_stats(self) -> RunStats:
        s = self.stats
        s.persons_tracked = self.registry.keys_seen
        if self.gateway is not None:
            g = self.gateway.stats
            s.vlm_calls = g.vlm_calls
            s.skips = g.skips
            s.retries = g.retries
            s.expired = g.expired
            s.exhausted = g.exhausted
            s.dropped = g.dropped
        return s

    def report(self) -> dict:
        stats = self._merged_stats().to_dict()
        stats["normal_verdicts"] = self.normal_verdicts
        report: dict = {
            "stats": stats,
            "unique_triggered_tracks": len({k for k, _ in self.fired}),
            "virtual_duration_ms": (
                self.clock_ms - self._first_ts if self._first_ts is not None else 0
            ),
            "config": {
                "tau_d_s": self.cfg.prefilter.tau_d_s,
                "rho": self.cfg.prefilter.rho,
                "theta_h": self.cfg.prefilter.theta_h,
                "tau_c_s": self.cfg.prefilter.tau_c_s,
                "rate_limit_per_min": self.cfg.gateway.rate_limit_per_min,
                "clip_frames_k": self.cfg.prefilter.clip_frames_k,
                "buffer_horizon_t_s": self.cfg.prefilter.buffer_horizon_t_s,
            },
        }
        if self.truths is not None:
            report["trigger_eval"] = trigger_eval([k for k, _ in self.fired], self.truths)
        return report

    def report_json(self) -> str:
        return json.dumps(self.report(), sort_keys=True, indent=2) + "\n"


def run_replay(
    events,
    cfg: PipelineConfig,
    truths: Optional[list[ShopperTruth]] = None,
    alert_store: Optional[AlertStore] = None,
) -> Pipeline:
    """Drive a full replay over an event sequence and finish the timeline."""
    pipeline = Pipeline(cfg, truths=truths, alert_store=alert_store)
    for event in events:
        pipeline.process_event(event)
    pipeline.finish()
    return pipeline
