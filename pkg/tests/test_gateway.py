"""Prompt construction, rate limiting, verdict parsing, dispatch, retries."""

import json
import random

import pytest

from paza.clips import BufferedFrame, FrameBuffer, sample_clip
from paza.events import BBox
from paza.gateway import (
    BEHAVIORS,
    CONFIRMED,
    NORMAL,
    OUTCOME_DROPPED,
    OUTCOME_EXHAUSTED,
    OUTCOME_EXPIRED,
    OUTCOME_VERDICT,
    SKIPPED,
    UNCERTAIN,
    DispatchError,
    GatewayConfig,
    SlidingWindowLimiter,
    VerdictParse,
    VlmGateway,
    build_prompt,
    parse_verdict,
    skipped_verdict,
)
from paza.mockvlm import MockRule, MockScript, MockVlmServer
from paza.prefilter import SignalReport, VlmCandidate
from paza.registry import TrackKey

BOX = BBox(100, 100, 170, 280)


def make_clip(n_frames=5, k=5):
    buf = FrameBuffer(horizon_ms=10**9, hard_cap=10**9)
    for i in range(n_frames):
        buf.push(BufferedFrame(timestamp_ms=i * 1000, person_bbox=BOX))
    return sample_clip(buf, k, "c1", 1, 640, 640)


def make_candidate(n_frames=5, created_ms=0, tid=1):
    report = SignalReport(near_obj=True, hand_body=False, pickup=False, dwell_s=4.0)
    return VlmCandidate(TrackKey("c1", tid), created_ms, report, make_clip(n_frames))


def gw_config(url, **kw):
    kw.setdefault("request_timeout_s", 0.5)
    return GatewayConfig(api_url=url, model_name="mock", **kw)


# -- build_prompt ---------------------------------------------------------------

def test_prompt_labels_five_frames():
    body = build_prompt(make_clip(5), gw_config("http://x"))
    texts = [p["text"] for p in body["messages"][1]["content"] if p["type"] == "text"]
    labels = [t for t in texts if t.startswith("[Frame")]
    assert labels == [f"[Frame {i}/5]" for i in range(1, 6)]
    assert body["model"] == "mock"
    assert body["temperature"] == 0.1
    assert body["max_tokens"] == 300


def test_prompt_labels_short_clip():
    body = build_prompt(make_clip(3), gw_config("http://x"))
    texts = [p["text"] for p in body["messages"][1]["content"] if p["type"] == "text"]
    labels = [t for t in texts if t.startswith("[Frame")]
    assert labels == ["[Frame 1/3]", "[Frame 2/3]", "[Frame 3/3]"]


def test_prompt_contains_all_behaviors():
    body = build_prompt(make_clip(5), gw_config("http://x"))
    system = body["messages"][0]["content"]
    for behavior in BEHAVIORS:
        assert behavior in system
    assert len(BEHAVIORS) == 5


def test_prompt_deterministic():
    cfg = gw_config("http://x")
    a = json.dumps(build_prompt(make_clip(5), cfg), sort_keys=True)
    b = json.dumps(build_prompt(make_clip(5), cfg), sort_keys=True)
    assert a == b


def test_prompt_image_parts_when_urls_given():
    clip = make_clip(2, k=2)
    body = build_prompt(clip, gw_config("http://x"), images=["data:x", "data:y"])
    kinds = [p["type"] for p in body["messages"][1]["content"]]
    assert kinds == ["text", "image_url", "text", "image_url"]


def test_prompt_live_mode_requires_pixels():
    from paza.gateway import MissingPixels

    with pytest.raises(MissingPixels):
        build_prompt(make_clip(2, k=2), gw_config("http://x"), live=True)


# -- rate limiter ----------------------------------------------------------------

def test_limiter_allows_tenth_blocks_eleventh():
    lim = SlidingWindowLimiter(10)
    for i in range(9):
        assert lim.try_acquire(i * 100)
    assert lim.try_acquire(1000)        # the 10th is permitted
    assert not lim.try_acquire(1001)    # the 11th is not


def test_limiter_window_slides():
    lim = SlidingWindowLimiter(10)
    for i in range(10):
        assert lim.try_acquire(i)
    now = 61_000
    assert lim.try_acquire(now)  # all 10 dispatches slid out of the window


def test_limiter_boundary_half_open():
    lim = SlidingWindowLimiter(1)
    assert lim.try_acquire(0)
    assert not lim.try_acquire(59_999)
    lim2 = SlidingWindowLimiter(1)
    assert lim2.try_acquire(0)
    assert lim2.try_acquire(60_000)  # exactly window_ms later no longer counts


def test_limiter_against_brute_force():
    rng = random.Random(17)
    lim = SlidingWindowLimiter(10)
    granted = []
    now = 0
    for _ in range(2000):
        now += rng.randrange(0, 2000)
        if lim.try_acquire(now):
            granted.append(now)
    for t in granted:
        window = [g for g in granted if t - 60_000 < g <= t]
        assert len(window) <= 10


# -- parse_verdict ------------------------------------------------------------------

def test_parse_structured():
    v = parse_verdict("CONFIRMED\nConfidence: 85\nPerson places bottle into jacket pocket")
    assert v.category == CONFIRMED
    assert v.confidence == 85
    assert v.description == "Person places bottle into jacket pocket"


def test_parse_fallback_keyword_midpoint():
    v = parse_verdict("I believe this is normal shopping behavior.")
    assert v.category == NORMAL
    assert v.confidence == 15
    assert v.description == "I believe this is normal shopping behavior."


def test_parse_no_keyword_raises():
    with pytest.raises(VerdictParse):
        parse_verdict("The weather is nice.")


def test_parse_multi_keyword_precedence():
    v = parse_verdict(
        "It looks normal at first, but this is uncertain and arguably confirmed concealment."
    )
    assert v.category == CONFIRMED  # precedence CONFIRMED > UNCERTAIN > NORMAL


def test_parse_confidence_clamped():
    assert parse_verdict("UNCERTAIN\nConfidence: 150\nhmm").confidence == 100


def test_parse_verdict_prefix_form():
    v = parse_verdict("Verdict: UNCERTAIN\nConfidence: 55\nHard to tell from the angle.")
    assert v.category == UNCERTAIN
    assert v.confidence == 55


def test_parse_structured_without_confidence_uses_midpoint():
    v = parse_verdict("NORMAL\nShopper inspects items and returns them.")
    assert v.confidence == 15
    assert "inspects" in v.description


# -- dispatch -----------------------------------------------------------------------

def test_dispatch_success_round_trip():
    script = MockScript.always("CONFIRMED\nConfidence: 85\nPerson pockets an item.")
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url))
        verdict = gw.dispatch(make_candidate(), 0)
        assert verdict.category == CONFIRMED
        assert verdict.confidence == 85
        assert gw.stats.vlm_calls == 1
        assert mock.request_count == 1


def test_dispatch_rate_limited_makes_no_http_call():
    script = MockScript.always("NORMAL\nConfidence: 10\nok")
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url, rate_limit_per_min=1))
        assert gw.dispatch(make_candidate(), 0).category == NORMAL
        v = gw.dispatch(make_candidate(tid=2), 1)
        assert v.category == SKIPPED
        assert v.confidence == 0 and v.description == ""
        assert mock.request_count == 1
        assert gw.stats.skips == 1


@pytest.mark.parametrize("fault,status", [("http_500", 500), ("http_429", 429)])
def test_dispatch_http_error_raises(fault, status):
    script = MockScript(rules=[MockRule(match="default", respond="x", fault=fault)])
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url))
        with pytest.raises(DispatchError) as exc_info:
            gw.dispatch(make_candidate(), 0)
        assert exc_info.value.kind == "http_status"
        assert exc_info.value.status == status


def test_dispatch_malformed_raises():
    script = MockScript(rules=[MockRule(match="default", fault="malformed")])
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url))
        with pytest.raises(DispatchError) as exc_info:
            gw.dispatch(make_candidate(), 0)
        assert exc_info.value.kind == "malformed"


def test_dispatch_timeout_raises():
    script = MockScript(
        rules=[MockRule(match="default", fault="timeout")], timeout_sleep_s=0.8
    )
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url, request_timeout_s=0.15))
        with pytest.raises(DispatchError) as exc_info:
            gw.dispatch(make_candidate(), 0)
        assert exc_info.value.kind == "timeout"


def test_dispatch_unparseable_verdict_raises():
    script = MockScript.always("The weather is nice.")
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url))
        with pytest.raises(DispatchError) as exc_info:
            gw.dispatch(make_candidate(), 0)
        assert exc_info.value.kind == "verdict_parse"


# -- retry queue ----------------------------------------------------------------------

def test_retry_skip_then_two_failures_then_success():
    # enqueued at t=0 by rate limiting; fails at 5 s and 12 s; succeeds at 20 s
    script = MockScript(
        rules=[
            MockRule(match="default", fault="http_500", times=2),
            MockRule(match="default", respond="UNCERTAIN\nConfidence: 50\nmaybe"),
        ]
    )
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url, rate_limit_per_min=1))
        gw.limiter.try_acquire(0)  # burn the budget so submit() skips
        assert gw.submit(make_candidate(), 0) == []
        assert len(gw.queue) == 1
        # free the budget before each scheduled retry tick
        gw.limiter.dispatch_times.clear()
        assert gw.retry_tick(5_000) == []       # 500, attempts_used 0 -> 1
        assert gw.queue[0].attempts_used == 1
        gw.limiter.dispatch_times.clear()
        assert gw.retry_tick(12_000) == []      # 500 again -> attempts_used 2
        assert gw.queue[0].attempts_used == 2
        gw.limiter.dispatch_times.clear()
        outcomes = gw.retry_tick(20_000)
        assert len(outcomes) == 1
        assert outcomes[0].kind == OUTCOME_VERDICT
        assert outcomes[0].verdict.category == UNCERTAIN
        assert outcomes[0].candidate.attempts == 3  # initial + 2 retries
        assert len(gw.queue) == 0


def test_retry_initial_failure_then_success_counts_one_attempt():
    script = MockScript(
        rules=[
            MockRule(match="default", fault="http_500", times=1),
            MockRule(match="default", respond="CONFIRMED\nConfidence: 90\nyes"),
        ]
    )
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url))
        assert gw.submit(make_candidate(), 0) == []  # 500 -> queued
        assert gw.queue[0].attempts_used == 1
        outcomes = gw.retry_tick(5_000)
        assert [o.kind for o in outcomes] == [OUTCOME_VERDICT]
        assert outcomes[0].candidate.attempts == 2


def test_retry_exhausted_after_budget():
    script = MockScript(rules=[MockRule(match="default", fault="http_500")])
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url))
        gw.submit(make_candidate(), 0)            # initial failure, attempts_used=1
        assert gw.retry_tick(5_000) == []         # retry 1 fails -> attempts_used=2
        outcomes = gw.retry_tick(10_000)          # retry 2 fails -> exhausted
        assert [o.kind for o in outcomes] == [OUTCOME_EXHAUSTED]
        assert outcomes[0].candidate.attempts == 3
        assert gw.stats.exhausted == 1
        assert len(gw.queue) == 0


def test_retry_expires_after_window():
    script = MockScript.always("NORMAL\nConfidence: 5\nok")
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url, rate_limit_per_min=1))
        gw.limiter.try_acquire(0)
        gw.submit(make_candidate(), 0)  # skipped -> queued
        assert gw.retry_tick(30_000) == []  # exactly 30 s: not expired yet
        outcomes = gw.retry_tick(31_000)
        assert [o.kind for o in outcomes] == [OUTCOME_EXPIRED]
        assert gw.stats.expired == 1


def test_rate_limited_retry_does_not_consume_attempts():
    script = MockScript.always("NORMAL\nConfidence: 5\nok")
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url, rate_limit_per_min=1))
        gw.limiter.try_acquire(0)
        gw.submit(make_candidate(), 0)
        for t in (1_000, 2_000, 3_000):
            assert gw.retry_tick(t) == []  # budget still burned
        assert gw.queue[0].attempts_used == 0
        assert mock.request_count == 0


def test_queue_overflow_drops_oldest():
    script = MockScript.always("NORMAL\nConfidence: 5\nok")
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url, rate_limit_per_min=1, queue_cap=100))
        gw.limiter.try_acquire(0)
        displaced = []
        for i in range(101):
            outcomes = gw.submit(make_candidate(created_ms=i, tid=i + 1), i)
            displaced.extend(o for o in outcomes if o.kind == OUTCOME_DROPPED)
        assert len(gw.queue) == 100
        assert len(displaced) == 1
        assert displaced[0].candidate.key == TrackKey("c1", 1)  # the oldest
        assert gw.stats.dropped == 1


def test_flush_expire_terminalizes_everything():
    script = MockScript.always("NORMAL\nConfidence: 5\nok")
    with MockVlmServer(script) as mock:
        gw = VlmGateway(gw_config(mock.url, rate_limit_per_min=1))
        gw.limiter.try_acquire(0)
        for i in range(5):
            gw.submit(make_candidate(tid=i + 1), 0)
        outcomes = gw.flush_expire()
        assert len(outcomes) == 5
        assert all(o.kind == OUTCOME_EXPIRED for o in outcomes)
        assert len(gw.queue) == 0


def test_skipped_verdict_shape():
    v = skipped_verdict()
    assert v.category == SKIPPED and v.confidence == 0 and v.description == ""
