from __future__ import annotations

from dataclasses import dataclass


@dataclass
class BridgeConfig:
    """Bridge settings.

    source is a video file/camera URI or a directory of ordered frame images.
    The bridge does no filtering beyond the detector confidence threshold;
    all triggering logic lives downstream.
    """

    source: str = ""
    camera_id: str = "cam0"
    detector_conf: float = 0.5
    tracker_conf: float = 0.25
    track_buffer_frames: int = 30
    emit: str = "stdout"          # stdout | tcp:HOST:PORT
    backend: str = "motion"       # motion | yolo
    model: str = "yolo11s.pt"     # used by the yolo backend only
    fps: float = 10.0             # fallback when the source reports none

    def __post_init__(self):
        for name in ("detector_conf", "tracker_conf"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.track_buffer_frames < 1:
            raise ValueError("track_buffer_frames must be >= 1")
