"""Model-agnostic VLM client.

Talks to any OpenAI-compatible chat endpoint (POST {api_url}/v1/chat/completions);
the backend is selected purely by the VLM_API_URL and VLM_MODEL_NAME
environment variables.  The gateway enforces a sliding-window rate limit,
parses structured CONFIRMED/UNCERTAIN/NORMAL verdicts with a keyword
fallback, and runs a bounded FIFO retry queue so no suspicious candidate is
silently dropped by transient failures or rate-limit bursts.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import os
import re
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import requests

from .clips import ClipSpec
from .prefilter import VlmCandidate

logger = logging.getLogger(__name__)

CONFIRMED = "CONFIRMED"
UNCERTAIN = "UNCERTAIN"
NORMAL = "NORMAL"
SKIPPED = "SKIPPED"

CATEGORIES = (CONFIRMED, UNCERTAIN, NORMAL)

# Midpoints of the confidence bands, used when a response names a category
# but no numeric confidence.
BAND_MIDPOINT = {CONFIRMED: 85, UNCERTAIN: 50, NORMAL: 15}

# Concrete observable actions the model is asked to look for.  Enumerating
# behaviors (instead of asking "is this person stealing?") grounds the
# verdict in visible evidence.
BEHAVIORS = (
    "placing items into pockets or bags",
    "tucking items under clothing",
    "hiding items behind the body",
    "palming small items",
    "moving items from shelves toward the body",
)

OUTCOME_VERDICT = "verdict"
OUTCOME_EXPIRED = "expired"
OUTCOME_EXHAUSTED = "exhausted"
OUTCOME_DROPPED = "dropped"

MAX_ATTEMPTS_TOTAL = 3  # one initial dispatch plus two retries


class MissingPixels(RuntimeError):
    """A live-mode clip frame has no image to encode."""


class VerdictParse(ValueError):
    """Response text contains no recognizable category keyword."""


class DispatchError(RuntimeError):
    """A dispatch performed an HTTP attempt and failed; routed to retry."""

    def __init__(self, kind: str, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.kind = kind  # timeout | http_status | malformed | verdict_parse
        self.status = status


@dataclass
class GatewayConfig:
    api_url: str = ""
    model_name: str = ""
    api_key: str = ""
    rate_limit_per_min: int = 10
    retry_max: int = 2
    retry_window_s: float = 30.0
    queue_cap: int = 100
    request_timeout_s: float = 30.0
    temperature: float = 0.1
    max_tokens: int = 300

    def __post_init__(self):
        if self.rate_limit_per_min < 1:
            raise ValueError("rate_limit_per_min must be >= 1")
        if self.queue_cap < 1:
            raise ValueError("queue_cap must be >= 1")
        if self.retry_max < 0:
            raise ValueError("retry_max must be >= 0")

    @classmethod
    def from_env(cls, env=os.environ, **overrides) -> "GatewayConfig":
        kwargs = {
            "api_url": env.get("VLM_API_URL", ""),
            "model_name": env.get("VLM_MODEL_NAME", ""),
            "api_key": env.get("VLM_API_KEY", ""),
        }
        kwargs.update(overrides)
        return cls(**kwargs)

    @property
    def completions_url(self) -> str:
        return self.api_url.rstrip("/") + "/v1/chat/completions"


@dataclass
class Verdict:
    category: str
    confidence: int
    description: str
    raw: str = ""
    latency_ms: float = 0.0

    def __post_init__(self):
        if self.category not in (*CATEGORIES, SKIPPED):
            raise ValueError(f"unknown verdict category {self.category!r}")
        if not (0 <= self.confidence <= 100):
            raise ValueError(f"confidence out of range: {self.confidence}")


def skipped_verdict() -> Verdict:
    return Verdict(SKIPPED, 0, "", raw="")


class SlidingWindowLimiter:
    """At most `limit` permits in any trailing window of window_ms.

    The window is half-open: a dispatch recorded exactly window_ms ago no
    longer counts.  Sliding (not fixed-minute buckets) so the hard cap holds
    in every 60 s window, not just calendar minutes.
    """

    def __init__(self, limit: int, window_ms: int = 60_000):
        self.limit = limit
        self.window_ms = window_ms
        self.dispatch_times: deque[int] = deque()

    def try_acquire(self, now_ms: int) -> bool:
        while self.dispatch_times and self.dispatch_times[0] <= now_ms - self.window_ms:
            self.dispatch_times.popleft()
        if len(self.dispatch_times) < self.limit:
            self.dispatch_times.append(now_ms)
            return True
        return False


SYSTEM_PROMPT = (
    "You are a retail loss-prevention analyst reviewing a short sequence of "
    "security-camera frames showing one person. The frames are labeled in "
    "chronological order ([Frame 1/N] is earliest). Compare the frames over "
    "time: track which items are visible in each frame and where the person's "
    "hands move. An item that is visible in an early frame but missing in a "
    "later frame, while the person's hands moved toward their body, suggests "
    "concealment.\n"
    "Look specifically for these observable actions: "
    + "; ".join(BEHAVIORS)
    + ".\n"
    "Respond in exactly this format:\n"
    "<CATEGORY>\n"
    "Confidence: <0-100>\n"
    "<one or two sentences describing the observed behavior>\n"
    "where <CATEGORY> is one of:\n"
    "CONFIRMED - clear evidence of concealment (confidence 70-100)\n"
    "UNCERTAIN - suspicious but ambiguous (confidence 30-70)\n"
    "NORMAL - no concealment detected (confidence 0-30)\n"
    "Cite only actions you can actually see in the frames."
)


def _frame_description(frame, first_ts: int) -> str:
    r = frame.crop_rect
    rel = (frame.timestamp_ms - first_ts) / 1000.0
    return (
        f"t=+{rel:.1f}s person crop=({r.x1:.0f},{r.y1:.0f},{r.x2:.0f},{r.y2:.0f})"
    )


def build_prompt(
    clip: ClipSpec,
    cfg: GatewayConfig,
    images: Optional[list[Optional[str]]] = None,
    live: bool = False,
) -> dict:
    """Build the OpenAI-chat-format request body for one clip.

    `images` is an optional list of data URLs aligned with clip.frames; a
    None entry means no pixels are available for that frame.  In live mode a
    missing image raises MissingPixels; in trace mode the frame is described
    as text so the mock VLM can still exercise the full protocol.

    Deterministic: an identical clip (and images) yields a byte-identical
    body, which snapshot tests rely on.
    """
    if images is None:
        images = [None] * len(clip.frames)
    total = clip.label_total
    content: list[dict] = []
    first_ts = clip.frames[0].timestamp_ms
    for i, (frame, image_url) in enumerate(zip(clip.frames, images), start=1):
        content.append({"type": "text", "text": f"[Frame {i}/{total}]"})
        if image_url is not None:
            content.append({"type": "image_url", "image_url": {"url": image_url}})
        elif live:
            raise MissingPixels(f"frame {i}/{total} of clip has no image data")
        else:
            content.append({"type": "text", "text": _frame_description(frame, first_ts)})
    return {
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": content},
        ],
    }


def encode_clip_images(
    clip: ClipSpec, jpeg_quality: int = 80, max_side: int = 768
) -> list[Optional[str]]:
    """Load, crop, and re-encode each clip frame as a JPEG data URL.

    Frames without a readable image_ref yield None (trace mode).  Crops are
    downscaled so the long side is <= max_side before encoding.
    """
    from PIL import Image  # deferred: pixel-free replays never need PIL

    out: list[Optional[str]] = []
    for frame in clip.frames:
        if frame.image_ref is None or not os.path.exists(frame.image_ref):
            out.append(None)
            continue
        with Image.open(frame.image_ref) as img:
            img = img.convert("RGB")
            r = frame.crop_rect
            w, h = img.size
            box = (
                int(max(0, r.x1)),
                int(max(0, r.y1)),
                int(min(w, r.x2)),
                int(min(h, r.y2)),
            )
            crop = img.crop(box)
            if max(crop.size) > max_side:
                scale = max_side / max(crop.size)
                crop = crop.resize(
                    (max(1, int(crop.width * scale)), max(1, int(crop.height * scale)))
                )
            buf = io.BytesIO()
            crop.save(buf, format="JPEG", quality=jpeg_quality)
        data = base64.b64encode(buf.getvalue()).decode("ascii")
        out.append(f"data:image/jpeg;base64,{data}")
    return out


_STRUCTURED_RE = re.compile(
    r"^\s*(?:verdict\s*[:\-]\s*)?\b(CONFIRMED|UNCERTAIN|NORMAL)\b",
    re.IGNORECASE | re.MULTILINE,
)
_CONFIDENCE_RE = re.compile(r"confidence[^0-9]*(\d+)", re.IGNORECASE)


def parse_verdict(text: str, latency_ms: float = 0.0) -> Verdict:
    """Extract a structured verdict; fall back to keyword detection.

    Primary pass: a line-leading (optionally "verdict:"-prefixed) category
    token plus a "confidence <int>" value clamped to [0, 100]; the remaining
    text becomes the description.  Fallback: the highest-precedence category
    keyword anywhere in the text (CONFIRMED > UNCERTAIN > NORMAL) with the
    band midpoint when no confidence number appears.  Raises VerdictParse
    when no category keyword occurs at all.
    """
    conf_match = _CONFIDENCE_RE.search(text)

    structured = _STRUCTURED_RE.search(text)
    if structured:
        category = structured.group(1).upper()
        confidence = (
            max(0, min(100, int(conf_match.group(1))))
            if conf_match
            else BAND_MIDPOINT[category]
        )
        desc_lines = []
        for line in text.splitlines():
            if _STRUCTURED_RE.match(line) and category in line.upper():
                # drop the category line itself, keep any trailing prose on it
                remainder = re.sub(
                    r"^\s*(?:verdict\s*[:\-]\s*)?\b" + category + r"\b[:\s\-]*",
                    "",
                    line,
                    flags=re.IGNORECASE,
                ).strip()
                if remainder:
                    desc_lines.append(remainder)
                continue
            if _CONFIDENCE_RE.search(line) and len(line) < 40:
                continue
            if line.strip():
                desc_lines.append(line.strip())
        return Verdict(category, confidence, " ".join(desc_lines).strip(), text, latency_ms)

    lowered = text.lower()
    for category in (CONFIRMED, UNCERTAIN, NORMAL):
        if re.search(r"\b" + category.lower() + r"\b", lowered):
            confidence = (
                max(0, min(100, int(conf_match.group(1))))
                if conf_match
                else BAND_MIDPOINT[category]
            )
            return Verdict(category, confidence, text.strip(), text, latency_ms)

    raise VerdictParse(f"no category keyword in response: {text[:80]!r}")


@dataclass
class RetryEntry:
    candidate: VlmCandidate
    enqueued_ms: int
    attempts_used: int = 0  # failed dispatches so far (incl. initial), <= retry_max


@dataclass
class CandidateOutcome:
    """Exactly one of these is produced per candidate (terminal)."""

    kind: str  # verdict | expired | exhausted | dropped
    candidate: VlmCandidate
    verdict: Optional[Verdict] = None


@dataclass
class GatewayStats:
    vlm_calls: int = 0       # HTTP requests actually performed (incl. retries)
    skips: int = 0           # rate-limited non-calls
    retries: int = 0         # retry dispatches attempted from the queue
    expired: int = 0
    exhausted: int = 0
    dropped: int = 0


class VlmGateway:
    """Dispatch pipeline candidates and shepherd failures through retry.

    All timing arguments are event-time milliseconds; the gateway never
    consults a wall clock for decisions, which keeps replays deterministic.
    `tagger(candidate)` may return a behavior tag attached as a request
    header — used only by the hermetic test harness; production requests
    never carry it.
    """

    def __init__(
        self,
        cfg: GatewayConfig,
        tagger: Optional[Callable[[VlmCandidate], Optional[str]]] = None,
        session: Optional[requests.Session] = None,
    ):
        self.cfg = cfg
        self.limiter = SlidingWindowLimiter(cfg.rate_limit_per_min)
        self.queue: deque[RetryEntry] = deque()
        self.stats = GatewayStats()
        self.tagger = tagger
        self.session = session or requests.Session()

    # -- low-level ---------------------------------------------------------

    def _headers(self, candidate: VlmCandidate) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        if self.tagger is not None:
            tag = self.tagger(candidate)
            if tag:
                headers["X-Paza-Behavior"] = tag
        return headers

    def _http_call(self, candidate: VlmCandidate) -> Verdict:
        """One HTTP attempt; raises DispatchError on any failure."""
        body = build_prompt(
            candidate.clip, self.cfg, images=encode_clip_images(candidate.clip)
        )
        candidate.attempts += 1
        self.stats.vlm_calls += 1
        start = time.monotonic()
        try:
            resp = self.session.post(
                self.cfg.completions_url,
                data=json.dumps(body, sort_keys=True),
                headers=self._headers(candidate),
                timeout=self.cfg.request_timeout_s,
            )
        except requests.Timeout as exc:
            raise DispatchError("timeout", f"request timed out: {exc}") from exc
        except requests.RequestException as exc:
            raise DispatchError("http_status", f"transport failure: {exc}") from exc
        latency_ms = (time.monotonic() - start) * 1000.0
        if resp.status_code != 200:
            raise DispatchError(
                "http_status", f"upstream returned {resp.status_code}", resp.status_code
            )
        try:
            content = resp.json()["choices"][0]["message"]["content"]
            if not isinstance(content, str):
                raise TypeError("message content is not text")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise DispatchError("malformed", f"unparseable response body: {exc}") from exc
        try:
            return parse_verdict(content, latency_ms)
        except VerdictParse as exc:
            raise DispatchError("verdict_parse", str(exc)) from exc

    def dispatch(self, candidate: VlmCandidate, now_ms: int) -> Verdict:
        """Rate-gated dispatch: SKIPPED without an HTTP call when over budget."""
        if not self.limiter.try_acquire(now_ms):
            self.stats.skips += 1
            return skipped_verdict()
        return self._http_call(candidate)

    # -- queue -------------------------------------------------------------

    def enqueue(
        self, candidate: VlmCandidate, now_ms: int, attempts_used: int = 0
    ) -> Optional[CandidateOutcome]:
        """Queue a candidate for retry; returns the displaced outcome when full.

        attempts_used counts the candidate's failed dispatches so far (a
        rate-limited skip is not a failure).  Overflow drops the OLDEST entry
        (freshest evidence is the most actionable); the drop is counted,
        never silent.
        """
        displaced = None
        if len(self.queue) >= self.cfg.queue_cap:
            oldest = self.queue.popleft()
            self.stats.dropped += 1
            displaced = CandidateOutcome(OUTCOME_DROPPED, oldest.candidate)
            logger.warning("retry queue full; dropped oldest candidate %s", oldest.candidate.key)
        self.queue.append(RetryEntry(candidate, now_ms, attempts_used))
        return displaced

    def submit(self, candidate: VlmCandidate, now_ms: int) -> list[CandidateOutcome]:
        """Initial dispatch for a fresh candidate.

        Returns zero or more terminal outcomes: the candidate's own verdict
        when the call succeeded, plus any displacement caused by enqueueing.
        """
        outcomes: list[CandidateOutcome] = []
        try:
            verdict = self.dispatch(candidate, now_ms)
        except DispatchError as exc:
            logger.info("dispatch failed (%s) for %s; queued for retry", exc.kind, candidate.key)
            displaced = self.enqueue(candidate, now_ms, attempts_used=1)
            if displaced:
                outcomes.append(displaced)
            return outcomes
        if verdict.category == SKIPPED:
            displaced = self.enqueue(candidate, now_ms)
            if displaced:
                outcomes.append(displaced)
            return outcomes
        outcomes.append(CandidateOutcome(OUTCOME_VERDICT, candidate, verdict))
        return outcomes

    def retry_tick(self, now_ms: int) -> list[CandidateOutcome]:
        """One pass of the background retry worker at event time now_ms.

        Expires entries older than the retry window, then walks the queue in
        FIFO order giving each remaining entry at most one dispatch.  A
        rate-limited attempt consumes nothing and ends the pass (the budget
        is empty for everyone behind it too).
        """
        outcomes: list[CandidateOutcome] = []
        window_ms = int(self.cfg.retry_window_s * 1000)

        kept: deque[RetryEntry] = deque()
        while self.queue:
            entry = self.queue.popleft()
            if now_ms - entry.enqueued_ms > window_ms:
                self.stats.expired += 1
                outcomes.append(CandidateOutcome(OUTCOME_EXPIRED, entry.candidate))
            else:
                kept.append(entry)
        self.queue = kept

        budget_open = True
        requeue: deque[RetryEntry] = deque()
        while self.queue and budget_open:
            entry = self.queue.popleft()
            if not self.limiter.try_acquire(now_ms):
                requeue.append(entry)
                budget_open = False
                break
            self.stats.retries += 1
            try:
                verdict = self._http_call(entry.candidate)
            except DispatchError:
                if entry.attempts_used >= self.cfg.retry_max:
                    # failed again with the retry budget already spent
                    self.stats.exhausted += 1
                    outcomes.append(CandidateOutcome(OUTCOME_EXHAUSTED, entry.candidate))
                else:
                    entry.attempts_used += 1
                    requeue.append(entry)
                continue
            outcomes.append(CandidateOutcome(OUTCOME_VERDICT, entry.candidate, verdict))
        requeue.extend(self.queue)
        self.queue = requeue
        return outcomes

    def flush_expire(self) -> list[CandidateOutcome]:
        """Expire everything still queued (end of a replay's virtual timeline)."""
        outcomes = []
        while self.queue:
            entry = self.queue.popleft()
            self.stats.expired += 1
            outcomes.append(CandidateOutcome(OUTCOME_EXPIRED, entry.candidate))
        return outcomes
