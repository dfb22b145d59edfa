"""Offline clip evaluation against a labeled manifest.

Mirrors the production verdict protocol but sends K=5 evenly-spaced FULL
frames per clip (no person crop): the offline protocol analyzes whole scenes,
whereas the live pipeline crops around a tracked person.  CONFIRMED and
UNCERTAIN count as positive detections, NORMAL as negative; clips whose VLM
call failed are excluded from the confusion counts and reported separately.

Manifest format (JSON): {"clips": [{"dir": "path/to/frames", "label": 1}, ...]}
where each directory holds ordered frame images and label 1 means concealment.
"""

from __future__ import annotations

import base64
import io
import json
import logging
from pathlib import Path

import requests

from .analytics import confusion_metrics
from .clips import evenly_spaced_indices
from .gateway import (
    CONFIRMED,
    SYSTEM_PROMPT,
    UNCERTAIN,
    GatewayConfig,
    parse_verdict,
)

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")
EVAL_FRAMES = 5


def _frame_data_url(path: Path) -> str:
    data = path.read_bytes()
    if path.suffix.lower() in (".jpg", ".jpeg"):
        payload = data
    else:
        from PIL import Image

        with Image.open(io.BytesIO(data)) as img:
            buf = io.BytesIO()
            img.convert("RGB").save(buf, format="JPEG", quality=85)
            payload = buf.getvalue()
    return "data:image/jpeg;base64," + base64.b64encode(payload).decode("ascii")


def _clip_request(cfg: GatewayConfig, image_urls: list[str]) -> dict:
    total = len(image_urls)
    content = []
    for i, url in enumerate(image_urls, start=1):
        content.append({"type": "text", "text": f"[Frame {i}/{total}]"})
        content.append({"type": "image_url", "image_url": {"url": url}})
    return {
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": content},
        ],
    }


def evaluate_clips(manifest_path: str, cfg: GatewayConfig) -> dict:
    """Run the clip protocol over every manifest entry and aggregate metrics."""
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    clips = manifest["clips"]
    session = requests.Session()
    headers = {"Content-Type": "application/json"}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"

    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    rows = []
    errors = []
    for entry in clips:
        clip_dir = Path(entry["dir"])
        label = int(entry["label"])
        frames = sorted(
            p for p in clip_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not frames:
            errors.append({"dir": str(clip_dir), "error": "no frame images"})
            continue
        selected = [frames[i] for i in evenly_spaced_indices(len(frames), EVAL_FRAMES)]
        try:
            body = _clip_request(cfg, [_frame_data_url(p) for p in selected])
            resp = session.post(
                cfg.completions_url,
                data=json.dumps(body, sort_keys=True),
                headers=headers,
                timeout=cfg.request_timeout_s,
            )
            if resp.status_code != 200:
                raise RuntimeError(f"upstream returned {resp.status_code}")
            content = resp.json()["choices"][0]["message"]["content"]
            verdict = parse_verdict(content)
        except Exception as exc:  # per-clip failures never abort the run
            logger.warning("clip %s failed: %s", clip_dir, exc)
            errors.append({"dir": str(clip_dir), "error": str(exc)})
            continue
        positive = verdict.category in (CONFIRMED, UNCERTAIN)
        if positive and label == 1:
            counts["tp"] += 1
        elif positive and label == 0:
            counts["fp"] += 1
        elif not positive and label == 0:
            counts["tn"] += 1
        else:
            counts["fn"] += 1
        rows.append(
            {
                "dir": str(clip_dir),
                "label": label,
                "category": verdict.category,
                "confidence": verdict.confidence,
            }
        )

    metrics = confusion_metrics(counts["tp"], counts["fp"], counts["tn"], counts["fn"])
    return {
        "clips_evaluated": len(rows),
        "counts": counts,
        "metrics": metrics,
        "errors": errors,
        "rows": rows,
    }
