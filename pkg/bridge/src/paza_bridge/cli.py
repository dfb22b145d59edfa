"""paza-bridge: run detection + tracking over video and emit FrameEvent JSONL."""

from __future__ import annotations

import argparse
import sys

from .bridge import run_bridge
from .config import BridgeConfig


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paza-bridge", description=__doc__)
    p.add_argument("--source", required=True, help="video file/URI or frame directory")
    p.add_argument("--camera-id", default="cam0")
    p.add_argument("--detector-conf", type=float, default=0.5)
    p.add_argument("--tracker-conf", type=float, default=0.25)
    p.add_argument("--track-buffer", type=int, default=30)
    p.add_argument("--backend", choices=("motion", "yolo"), default="motion")
    p.add_argument("--model", default="yolo11s.pt", help="yolo backend model weights")
    p.add_argument("--emit", default="stdout", help="stdout or tcp:HOST:PORT")
    p.add_argument("--fps", type=float, default=10.0, help="fps when the source reports none")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = BridgeConfig(
        source=args.source,
        camera_id=args.camera_id,
        detector_conf=args.detector_conf,
        tracker_conf=args.tracker_conf,
        track_buffer_frames=args.track_buffer,
        emit=args.emit,
        backend=args.backend,
        model=args.model,
        fps=args.fps,
    )
    try:
        run_bridge(cfg)
    except (IOError, RuntimeError, ValueError) as exc:
        print(f"paza-bridge: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
