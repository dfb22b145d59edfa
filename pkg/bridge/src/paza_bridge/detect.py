"""Detection backends.

RawDetection boxes are absolute pixels, corner form.  The default backend is
a classical background-subtraction detector that needs no model weights; the
yolo backend adapts an ultralytics model (with pose keypoints when the chosen
model provides them) behind the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import cv2
import numpy as np

PERSON_CLASS_ID = 0


@dataclass
class RawDetection:
    class_id: int
    confidence: float
    x1: float
    y1: float
    x2: float
    y2: float
    keypoints: Optional[list[tuple[float, float, float]]] = None  # 17 x (x, y, conf)


class MotionDetector:
    """Foreground-blob detector via MOG2 background subtraction.

    Labels every sufficiently large moving blob as a person (class 0) with
    fixed confidence; good enough to exercise the wire protocol end to end
    on any footage without model weights.
    """

    def __init__(self, min_area: int = 400, confidence: float = 0.9):
        self.min_area = min_area
        self.confidence = confidence
        self._subtractor = cv2.createBackgroundSubtractorMOG2(
            history=50, varThreshold=32, detectShadows=False
        )

    def detect(self, frame: np.ndarray) -> list[RawDetection]:
        mask = self._subtractor.apply(frame)
        mask = cv2.morphologyEx(mask, cv2.MORPH_OPEN, np.ones((3, 3), np.uint8))
        contours, _ = cv2.findContours(mask, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE)
        out = []
        for contour in contours:
            if cv2.contourArea(contour) < self.min_area:
                continue
            x, y, w, h = cv2.boundingRect(contour)
            if w < 2 or h < 2:
                continue
            out.append(
                RawDetection(
                    PERSON_CLASS_ID, self.confidence,
                    float(x), float(y), float(x + w), float(y + h),
                )
            )
        return out


class UltralyticsDetector:
    """Adapter for YOLO-family models served by the ultralytics package.

    Pose-capable models ("*-pose") attach 17 COCO keypoints per person.
    """

    def __init__(self, model: str = "yolo11s.pt"):
        try:
            from ultralytics import YOLO
        except ImportError as exc:  # pragma: no cover - optional extra
            raise RuntimeError(
                "the yolo backend requires the 'ultralytics' package "
                "(pip install paza-bridge[yolo])"
            ) from exc
        self._model = YOLO(model)

    def detect(self, frame: np.ndarray) -> list[RawDetection]:  # pragma: no cover
        out = []
        for result in self._model(frame, verbose=False):
            boxes = result.boxes
            if boxes is None:
                continue
            kps = None
            if result.keypoints is not None:
                kps = result.keypoints.data.cpu().numpy()  # (n, 17, 3)
            for i in range(len(boxes)):
                x1, y1, x2, y2 = (float(v) for v in boxes.xyxy[i].tolist())
                det = RawDetection(
                    int(boxes.cls[i]), float(boxes.conf[i]),
                    max(0.0, x1), max(0.0, y1), max(x1 + 1.0, x2), max(y1 + 1.0, y2),
                )
                if kps is not None and i < len(kps) and det.class_id == PERSON_CLASS_ID:
                    det.keypoints = [
                        (float(x), float(y), float(c)) for x, y, c in kps[i]
                    ]
                out.append(det)
        return out


def make_detector(backend: str, model: str):
    if backend == "motion":
        return MotionDetector()
    if backend == "yolo":
        return UltralyticsDetector(model)
    raise ValueError(f"unknown detector backend {backend!r}")
