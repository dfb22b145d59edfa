"""Thin detector/tracker bridge emitting the FrameEvent wire protocol."""

from .bridge import generate_events, run_bridge
from .config import BridgeConfig

__all__ = ["BridgeConfig", "generate_events", "run_bridge"]
