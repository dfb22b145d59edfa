"""Behavioral suspicion pre-filter.

A tracked person becomes a VLM candidate only when they have dwelled long
enough AND at least one behavioral signal is active:

    near_obj   person center within rho * bbox-diagonal of a non-person
               detection center,
    hand_body  a wrist keypoint within theta_h * person-height of the torso
               centroid,
    pickup     a nearby object class vanished (or the nearby count dropped)
               between consecutive frames; sticky for pickup_persist_s.

A per-person cooldown then spaces out candidates.  All comparisons are
inclusive at the boundary and use event time exclusively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .clips import ClipSpec
from .events import BBox, Detection, Keypoint, KP_HIPS, KP_SHOULDERS, KP_WRISTS
from .registry import PersonObservation, TrackKey, TrackState, dwell_seconds

HOLD_DWELL_SHORT = "dwell_short"
HOLD_NO_SIGNAL = "no_signal"
HOLD_COOLDOWN = "cooldown"


@dataclass
class PrefilterConfig:
    """Trigger thresholds; every field is overridable via config file or env."""

    tau_d_s: float = 3.0            # minimum dwell before any trigger
    rho: float = 0.3                # object proximity, fraction of bbox diagonal
    theta_h: float = 0.3            # wrist-to-torso radius, fraction of person height
    tau_c_s: float = 10.0           # per-person cooldown between candidates
    rate_limit_per_min: int = 10    # global VLM hard cap
    clip_frames_k: int = 5
    buffer_horizon_t_s: float = 5.0
    keypoint_conf_gate: float = 0.2
    pickup_persist_s: float = 10.0

    def __post_init__(self):
        for name in (
            "tau_d_s", "rho", "theta_h", "tau_c_s", "rate_limit_per_min",
            "clip_frames_k", "buffer_horizon_t_s", "keypoint_conf_gate",
            "pickup_persist_s",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 < self.rho <= 1.0):
            raise ValueError("rho must be in (0, 1]")
        if not (0.0 < self.theta_h <= 1.0):
            raise ValueError("theta_h must be in (0, 1]")
        if self.clip_frames_k < 2:
            raise ValueError("clip_frames_k must be >= 2")


@dataclass(frozen=True)
class SignalReport:
    """Per-frame signal evaluation with evidence for explainability."""

    near_obj: bool
    hand_body: bool
    pickup: bool
    dwell_s: float
    details: dict = field(default_factory=dict)

    @property
    def any_signal(self) -> bool:
        return self.near_obj or self.hand_body or self.pickup


@dataclass
class TriggerDecision:
    fired: bool
    report: SignalReport
    hold_reason: Optional[str] = None


@dataclass
class VlmCandidate:
    key: TrackKey
    created_ms: int
    signal_report: SignalReport
    clip: ClipSpec
    attempts: int = 0  # actual dispatches performed; capped at 1 initial + 2 retries


def near_object(
    person_bbox: BBox, detections, rho: float = 0.3
) -> tuple[bool, float]:
    """Object-proximity signal.

    True iff the Euclidean distance from the person box center to any
    non-person detection center is <= rho * person box diagonal.  Returns the
    minimum center distance (inf when no non-person detections exist).
    """
    px, py = person_bbox.center
    min_dist = math.inf
    for det in detections:
        if det.is_person:
            continue
        dx_, dy_ = det.bbox.center
        d = math.hypot(dx_ - px, dy_ - py)
        if d < min_dist:
            min_dist = d
    return min_dist <= rho * person_bbox.diagonal, min_dist


def nearby_classes(person_bbox: BBox, detections, rho: float = 0.3) -> set[int]:
    """Non-person class ids within the near_object radius of the person."""
    px, py = person_bbox.center
    radius = rho * person_bbox.diagonal
    out: set[int] = set()
    for det in detections:
        if det.is_person:
            continue
        dx_, dy_ = det.bbox.center
        if math.hypot(dx_ - px, dy_ - py) <= radius:
            out.add(det.class_id)
    return out


def wrist_torso_distance(
    keypoints: Optional[tuple[Keypoint, ...]], conf_gate: float
) -> Optional[float]:
    """Min distance from a confident wrist to the torso centroid, or None.

    None whenever the pose is unusable: no keypoints, fewer than 2 torso
    keypoints (shoulders 5,6 / hips 11,12) above the gate, or no wrist
    (9, 10) above the gate.
    """
    if keypoints is None:
        return None
    torso = [keypoints[i] for i in (*KP_SHOULDERS, *KP_HIPS) if keypoints[i].conf > conf_gate]
    if len(torso) < 2:
        return None
    wrists = [keypoints[i] for i in KP_WRISTS if keypoints[i].conf > conf_gate]
    if not wrists:
        return None
    cx = sum(k.x for k in torso) / len(torso)
    cy = sum(k.y for k in torso) / len(torso)
    return min(math.hypot(w.x - cx, w.y - cy) for w in wrists)


def hand_toward_body(
    keypoints: Optional[tuple[Keypoint, ...]],
    person_bbox: BBox,
    cfg: PrefilterConfig,
) -> bool:
    """Wrist-to-torso signal; false whenever the pose is unusable.

    Pose-free producers simply never raise this signal and still work with
    the other two.
    """
    dist = wrist_torso_distance(keypoints, cfg.keypoint_conf_gate)
    return dist is not None and dist <= cfg.theta_h * person_bbox.height


def update_pickup(
    track: TrackState,
    nearby_classes_now: set[int],
    now_ms: int,
    cfg: PrefilterConfig,
) -> bool:
    """Compare nearby class sets between consecutive frames; sticky on loss.

    A disappearance (count drop or a previously-seen class gone) arms the
    pickup flag for pickup_persist_s; appearances never trigger.  Must be fed
    sets computed with the same radius as near_object.
    """
    prev = track.nearby_classes_prev
    if len(nearby_classes_now) < len(prev) or (prev - nearby_classes_now):
        track.pickup_active_until_ms = now_ms + int(cfg.pickup_persist_s * 1000)
    track.nearby_classes_prev = set(nearby_classes_now)
    return (
        track.pickup_active_until_ms is not None
        and now_ms <= track.pickup_active_until_ms
    )


def evaluate_trigger(
    obs: PersonObservation, cfg: PrefilterConfig, now_ms: int
) -> TriggerDecision:
    """Run all signals for one observation and decide Fire/Hold.

    Hold reasons are checked in order dwell_short, no_signal, cooldown.  On
    Fire the cooldown stamp is written immediately so a slow VLM cannot cause
    duplicate candidates for the same browsing episode.
    """
    track = obs.track
    bbox = track.last_bbox

    near, min_dist = near_object(bbox, obs.detections, cfg.rho)
    now_set = nearby_classes(bbox, obs.detections, cfg.rho)
    prev_set = set(track.nearby_classes_prev)
    pickup = update_pickup(track, now_set, now_ms, cfg)
    wrist_dist = wrist_torso_distance(track.last_keypoints, cfg.keypoint_conf_gate)
    hand = wrist_dist is not None and wrist_dist <= cfg.theta_h * bbox.height
    dwell = dwell_seconds(track, now_ms)

    details: dict = {
        "near_obj_min_distance_px": None if math.isinf(min_dist) else round(min_dist, 2),
        "near_obj_threshold_px": round(cfg.rho * bbox.diagonal, 2),
        "nearby_classes": sorted(now_set),
    }
    if pickup:
        details["pickup_classes_lost"] = sorted(prev_set - now_set)
    if wrist_dist is not None:
        details["hand_body_distance_px"] = round(wrist_dist, 2)
        details["hand_body_threshold_px"] = round(cfg.theta_h * bbox.height, 2)

    report = SignalReport(
        near_obj=near, hand_body=hand, pickup=pickup, dwell_s=dwell, details=details
    )

    if dwell < cfg.tau_d_s:
        return TriggerDecision(False, report, HOLD_DWELL_SHORT)
    if not report.any_signal:
        return TriggerDecision(False, report, HOLD_NO_SIGNAL)
    if (
        track.last_vlm_dispatch_ms is not None
        and now_ms - track.last_vlm_dispatch_ms < cfg.tau_c_s * 1000
    ):
        return TriggerDecision(False, report, HOLD_COOLDOWN)

    track.last_vlm_dispatch_ms = now_ms
    return TriggerDecision(True, report)
