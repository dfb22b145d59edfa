"""Deterministic synthetic shopper traces with ground-truth labels.

Shoppers follow piecewise-linear waypoint paths with Gaussian jitter through
a fixed scene (a shelf with two object classes), enough to exercise the
pre-filter geometry without physics.  Conceal shoppers are constructed to
satisfy the trigger definitions: they dwell past the threshold and hold a
wrist inside the torso zone for over a second.  The same seed always yields
a byte-identical trace.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .events import BBox, Detection, FrameEvent, Keypoint, TrackedPerson, event_to_jsonl, parse_frame_event
from .registry import TrackKey

BEHAVIOR_PASS = "pass_through"
BEHAVIOR_BROWSE = "browse"
BEHAVIOR_PICKUP = "pickup_no_conceal"
BEHAVIOR_CONCEAL = "conceal"
BEHAVIORS = (BEHAVIOR_PASS, BEHAVIOR_BROWSE, BEHAVIOR_PICKUP, BEHAVIOR_CONCEAL)

# Scene geometry (pixels, 640x640 frame).  The browse stand keeps a person's
# center within the near-object radius of shelf object A but outside B's.
PERSON_W = 70.0
PERSON_H = 180.0
SHELF_A = Detection(39, 0.8, BBox(470.0, 200.0, 490.0, 260.0))   # bottle
SHELF_B = Detection(41, 0.8, BBox(470.0, 360.0, 490.0, 410.0))   # cup
STAND = (445.0, 260.0)
CORRIDOR_Y = 560.0


@dataclass
class ScenarioConfig:
    cameras: int = 4
    fps: int = 10
    duration_s: int = 60
    arrival_rate_per_min: float = 6.0  # per camera
    browse_fraction: float = 0.08
    pickup_fraction: float = 0.03
    conceal_fraction: float = 0.02
    seed: int = 0
    frame_w: int = 640
    frame_h: int = 640

    def __post_init__(self):
        if self.fps < 1:
            raise ValueError("fps must be >= 1")
        fractions = (self.browse_fraction, self.pickup_fraction, self.conceal_fraction)
        if any(not (0.0 <= f <= 1.0) for f in fractions):
            raise ValueError("behavior fractions must be in [0,1]")
        if sum(fractions) > 1.0:
            raise ValueError("behavior fractions must sum to <= 1")


@dataclass(frozen=True)
class ShopperTruth:
    camera_id: str
    track_id: int
    behavior: str
    conceal_time_ms: Optional[int] = None

    @property
    def key(self) -> TrackKey:
        return TrackKey(self.camera_id, self.track_id)


@dataclass
class _Shopper:
    track_id: int
    entry_s: float
    behavior: str
    waypoints: list[tuple[float, float, float]]  # (t_rel_s, cx, cy)
    total_s: float
    conceal_window: Optional[tuple[float, float]]  # rel seconds, wrists-in phase
    pickup_at_s: Optional[float]  # rel seconds, shelf object vanishes
    jitter_seed: int


def _interp(waypoints, t_rel: float) -> tuple[float, float]:
    if t_rel <= waypoints[0][0]:
        return waypoints[0][1], waypoints[0][2]
    for (t0, x0, y0), (t1, x1, y1) in zip(waypoints, waypoints[1:]):
        if t_rel <= t1:
            a = (t_rel - t0) / (t1 - t0) if t1 > t0 else 1.0
            return x0 + a * (x1 - x0), y0 + a * (y1 - y0)
    return waypoints[-1][1], waypoints[-1][2]


def _build_shopper(track_id: int, entry_s: float, behavior: str, rng: random.Random) -> _Shopper:
    jitter_seed = rng.randrange(2**32)
    if behavior == BEHAVIOR_PASS:
        cross = 2.2 + 0.6 * rng.random()  # always under the dwell threshold
        waypoints = [(0.0, 60.0, CORRIDOR_Y), (cross, 580.0, CORRIDOR_Y)]
        return _Shopper(track_id, entry_s, behavior, waypoints, cross, None, None, jitter_seed)

    sx, sy = STAND
    browse = 5.0 + 3.0 * rng.random()
    conceal_window = None
    pickup_at = None
    t_in = 2.0
    t_leave = t_in + browse
    if behavior == BEHAVIOR_PICKUP:
        pickup_at = t_in + 0.6 * browse
    elif behavior == BEHAVIOR_CONCEAL:
        pickup_at = t_in + 0.5 * browse
        conceal_window = (t_leave, t_leave + 1.5)
        t_leave += 1.5
    total = t_leave + 2.0
    waypoints = [
        (0.0, 60.0, sy),
        (t_in, sx, sy),
        (t_leave, sx, sy),
        (total, 620.0, sy),
    ]
    return _Shopper(track_id, entry_s, behavior, waypoints, total, conceal_window, pickup_at, jitter_seed)


def _keypoints(cx: float, cy: float, wrists_in: bool, rng: random.Random) -> tuple[Keypoint, ...]:
    """Synthesize a 17-point COCO skeleton consistent with the person box."""
    w, h = PERSON_W, PERSON_H
    y1 = cy - h / 2
    torso_cx, torso_cy = cx, y1 + 0.37 * h
    if wrists_in:
        lw = (torso_cx - 5.0, torso_cy + 2.0)
        rw = (torso_cx + 5.0, torso_cy + 2.0)
    else:
        lw = (cx - 0.22 * w, y1 + 0.75 * h)
        rw = (cx + 0.22 * w, y1 + 0.75 * h)
    pts = [
        (cx, y1 + 0.08 * h),                  # 0 nose
        (cx - 4, y1 + 0.065 * h),             # 1 left eye
        (cx + 4, y1 + 0.065 * h),             # 2 right eye
        (cx - 8, y1 + 0.075 * h),             # 3 left ear
        (cx + 8, y1 + 0.075 * h),             # 4 right ear
        (cx - 0.18 * w, y1 + 0.22 * h),       # 5 left shoulder
        (cx + 0.18 * w, y1 + 0.22 * h),       # 6 right shoulder
        (cx - 0.26 * w, y1 + 0.45 * h),       # 7 left elbow
        (cx + 0.26 * w, y1 + 0.45 * h),       # 8 right elbow
        lw,                                   # 9 left wrist
        rw,                                   # 10 right wrist
        (cx - 0.14 * w, y1 + 0.52 * h),       # 11 left hip
        (cx + 0.14 * w, y1 + 0.52 * h),       # 12 right hip
        (cx - 0.12 * w, y1 + 0.75 * h),       # 13 left knee
        (cx + 0.12 * w, y1 + 0.75 * h),       # 14 right knee
        (cx - 0.12 * w, y1 + 0.95 * h),       # 15 left ankle
        (cx + 0.12 * w, y1 + 0.95 * h),       # 16 right ankle
    ]
    return tuple(
        Keypoint(max(0.0, x + rng.gauss(0, 1.0)), max(0.0, y + rng.gauss(0, 1.0)), 0.9)
        for x, y in pts
    )


def _spawn_shoppers(
    cfg: ScenarioConfig, cam_idx: int, forced: Optional[list] = None
) -> list[_Shopper]:
    rng = random.Random(cfg.seed * 1_000_003 + cam_idx * 7_919 + 17)
    shoppers: list[_Shopper] = []
    track_id = 0
    if cfg.arrival_rate_per_min > 0:
        t = 0.0
        while True:
            t += rng.expovariate(cfg.arrival_rate_per_min / 60.0)
            if t >= cfg.duration_s:
                break
            r = rng.random()
            if r < cfg.conceal_fraction:
                behavior = BEHAVIOR_CONCEAL
            elif r < cfg.conceal_fraction + cfg.pickup_fraction:
                behavior = BEHAVIOR_PICKUP
            elif r < cfg.conceal_fraction + cfg.pickup_fraction + cfg.browse_fraction:
                behavior = BEHAVIOR_BROWSE
            else:
                behavior = BEHAVIOR_PASS
            track_id += 1
            shoppers.append(_build_shopper(track_id, t, behavior, rng))
    for spec in forced or []:
        if spec.get("camera", 0) != cam_idx:
            continue
        track_id += 1
        shoppers.append(_build_shopper(track_id, spec["entry_s"], spec["behavior"], rng))
    return shoppers


def generate_trace(
    cfg: ScenarioConfig, forced: Optional[list] = None
) -> tuple[list[FrameEvent], list[ShopperTruth]]:
    """Render the scenario into FrameEvents plus per-shopper ground truth.

    `forced` entries ({"camera": idx, "entry_s": s, "behavior": b}) bypass the
    arrival process — used to pin down single-shopper scenarios in tests.
    """
    events: list[FrameEvent] = []
    truths: list[ShopperTruth] = []
    per_camera = []

    for cam_idx in range(cfg.cameras):
        camera_id = f"cam{cam_idx}"
        shoppers = _spawn_shoppers(cfg, cam_idx, forced)
        hide_windows: list[tuple[float, float]] = []
        for s in shoppers:
            if s.pickup_at_s is not None:
                hide_windows.append((s.entry_s + s.pickup_at_s, s.entry_s + s.total_s + 2.0))
            conceal_ms = None
            if s.conceal_window is not None:
                conceal_ms = int(round((s.entry_s + s.conceal_window[0]) * 1000))
            truths.append(ShopperTruth(camera_id, s.track_id, s.behavior, conceal_ms))
        jitters = {s.track_id: random.Random(s.jitter_seed) for s in shoppers}
        per_camera.append((camera_id, shoppers, hide_windows, jitters))

    n_frames = cfg.duration_s * cfg.fps
    for frame_i in range(n_frames):
        t_s = frame_i / cfg.fps
        ts_ms = int(round(frame_i * 1000 / cfg.fps))
        for camera_id, shoppers, hide_windows, jitters in per_camera:
            detections: list[Detection] = []
            if not any(lo <= t_s < hi for lo, hi in hide_windows):
                detections.append(SHELF_A)
            detections.append(SHELF_B)
            tracks: list[TrackedPerson] = []
            for s in shoppers:
                t_rel = t_s - s.entry_s
                if t_rel < 0 or t_rel >= s.total_s:
                    continue
                rng = jitters[s.track_id]
                cx, cy = _interp(s.waypoints, t_rel)
                cx += rng.gauss(0, 1.2)
                cy += rng.gauss(0, 1.2)
                bbox = BBox(
                    max(0.0, cx - PERSON_W / 2),
                    max(0.0, cy - PERSON_H / 2),
                    cx + PERSON_W / 2,
                    cy + PERSON_H / 2,
                )
                wrists_in = (
                    s.conceal_window is not None
                    and s.conceal_window[0] <= t_rel < s.conceal_window[1]
                )
                tracks.append(
                    TrackedPerson(s.track_id, bbox, _keypoints(cx, cy, wrists_in, rng))
                )
                detections.append(Detection(0, 0.9, bbox))
            events.append(
                FrameEvent(
                    camera_id=camera_id,
                    frame_index=frame_i,
                    timestamp_ms=ts_ms,
                    detections=tuple(detections),
                    tracks=tuple(tracks),
                )
            )
    return events, truths


def single_shopper_trace(
    behavior: str, seed: int = 0, duration_s: int = 20
) -> tuple[list[FrameEvent], list[ShopperTruth]]:
    """One camera, one shopper entering at t=1s with the given behavior."""
    cfg = ScenarioConfig(
        cameras=1, duration_s=duration_s, arrival_rate_per_min=0.0, seed=seed
    )
    return generate_trace(cfg, forced=[{"camera": 0, "entry_s": 1.0, "behavior": behavior}])


# -- persistence -------------------------------------------------------------

def truth_path_for(trace_path: str | Path) -> Path:
    p = Path(trace_path)
    name = p.name
    if name.endswith(".jsonl"):
        name = name[: -len(".jsonl")]
    return p.with_name(name + ".truth.jsonl")


def write_trace(
    events: list[FrameEvent], truths: list[ShopperTruth], trace_path: str | Path
) -> None:
    import json

    trace_path = Path(trace_path)
    with open(trace_path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(event_to_jsonl(ev) + "\n")
    with open(truth_path_for(trace_path), "w", encoding="utf-8") as fh:
        for t in truths:
            fh.write(
                json.dumps(
                    {
                        "camera_id": t.camera_id,
                        "track_id": t.track_id,
                        "behavior": t.behavior,
                        "conceal_time_ms": t.conceal_time_ms,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_trace(trace_path: str | Path) -> list[FrameEvent]:
    with open(trace_path, encoding="utf-8") as fh:
        return [parse_frame_event(line) for line in fh if line.strip()]


def read_truth(truth_path: str | Path) -> list[ShopperTruth]:
    import json

    out = []
    with open(truth_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(
                ShopperTruth(
                    obj["camera_id"], obj["track_id"], obj["behavior"], obj.get("conceal_time_ms")
                )
            )
    return out


# -- evaluation ---------------------------------------------------------------

def trigger_eval(
    fired_keys: list[TrackKey], truths: list[ShopperTruth]
) -> dict[str, Optional[float]]:
    """Trigger-level recall/precision against ground truth (not verdict-level)."""
    concealers = {t.key for t in truths if t.behavior == BEHAVIOR_CONCEAL}
    fired_set = set(fired_keys)
    recall = (
        len(concealers & fired_set) / len(concealers) if concealers else None
    )
    precision = (
        sum(1 for k in fired_keys if k in concealers) / len(fired_keys)
        if fired_keys
        else None
    )
    return {"trigger_recall": recall, "trigger_precision": precision}
