"""Offline clip evaluation protocol against the scripted mock endpoint."""

import io
import json

import pytest
from PIL import Image

from paza.evaluate import evaluate_clips
from paza.gateway import GatewayConfig
from paza.mockvlm import MockRule, MockScript, MockVlmServer

CONFIRMED_TEXT = "CONFIRMED\nConfidence: 90\nConceals item in bag."
NORMAL_TEXT = "NORMAL\nConfidence: 10\nRegular shopping."


@pytest.fixture(scope="module")
def frame_bytes():
    img = Image.new("RGB", (16, 12), (120, 90, 30))
    buf = io.BytesIO()
    img.save(buf, format="JPEG")
    return buf.getvalue()


def make_clip_dir(root, name, frame_bytes, n_frames=5):
    clip = root / name
    clip.mkdir(parents=True)
    for i in range(n_frames):
        (clip / f"{i:03d}.jpg").write_bytes(frame_bytes)
    return clip


def write_manifest(root, entries):
    path = root / "manifest.json"
    path.write_text(json.dumps({"clips": entries}))
    return str(path)


def gw(url):
    return GatewayConfig(api_url=url, model_name="mock", request_timeout_s=5)


def test_single_confirmed_positive_clip(tmp_path, frame_bytes):
    clip = make_clip_dir(tmp_path, "clip0", frame_bytes)
    manifest = write_manifest(tmp_path, [{"dir": str(clip), "label": 1}])
    with MockVlmServer(MockScript.always(CONFIRMED_TEXT)) as mock:
        report = evaluate_clips(manifest, gw(mock.url))
    assert report["counts"] == {"tp": 1, "fp": 0, "tn": 0, "fn": 0}
    assert report["clips_evaluated"] == 1


def test_all_normal_endpoint_degenerate(tmp_path, frame_bytes):
    entries = []
    for i in range(4):
        clip = make_clip_dir(tmp_path, f"clip{i}", frame_bytes)
        entries.append({"dir": str(clip), "label": 1 if i < 2 else 0})
    manifest = write_manifest(tmp_path, entries)
    with MockVlmServer(MockScript.always(NORMAL_TEXT)) as mock:
        report = evaluate_clips(manifest, gw(mock.url))
    assert report["metrics"]["recall"] == 0.0
    assert report["metrics"]["specificity"] == 1.0


def test_samples_five_frames_from_long_clip(tmp_path, frame_bytes):
    clip = make_clip_dir(tmp_path, "long", frame_bytes, n_frames=50)
    manifest = write_manifest(tmp_path, [{"dir": str(clip), "label": 0}])
    with MockVlmServer(MockScript.always(NORMAL_TEXT)) as mock:
        evaluate_clips(manifest, gw(mock.url))
        body = json.loads(mock.requests[0]["body"])
    labels = [
        p["text"]
        for p in body["messages"][1]["content"]
        if p["type"] == "text" and p["text"].startswith("[Frame")
    ]
    assert labels == [f"[Frame {i}/5]" for i in range(1, 6)]
    images = [p for p in body["messages"][1]["content"] if p["type"] == "image_url"]
    assert len(images) == 5
    assert images[0]["image_url"]["url"].startswith("data:image/jpeg;base64,")


def test_failed_clips_become_error_rows(tmp_path, frame_bytes):
    good = make_clip_dir(tmp_path, "good", frame_bytes)
    empty = tmp_path / "empty"
    empty.mkdir()
    bad = make_clip_dir(tmp_path, "bad", frame_bytes)
    manifest = write_manifest(
        tmp_path,
        [
            {"dir": str(good), "label": 1},
            {"dir": str(empty), "label": 1},
            {"dir": str(bad), "label": 0},
        ],
    )
    script = MockScript(
        rules=[
            MockRule(match="default", respond=CONFIRMED_TEXT, times=1),
            MockRule(match="default", fault="http_500", times=1),
            MockRule(match="default", respond=NORMAL_TEXT),
        ]
    )
    with MockVlmServer(script) as mock:
        report = evaluate_clips(manifest, gw(mock.url))
    assert report["clips_evaluated"] == 1
    assert report["counts"] == {"tp": 1, "fp": 0, "tn": 0, "fn": 0}
    assert len(report["errors"]) == 2  # empty dir + http 500


def test_reference_confusion_reproduction(tmp_path, frame_bytes):
    """169 clips scripted to produce the 51/6/77/35 confusion split."""
    entries = []
    responses = []
    # 51 detected positives, 35 missed positives, 77 clean negatives, 6 false alarms
    plan = [(1, CONFIRMED_TEXT)] * 51 + [(1, NORMAL_TEXT)] * 35
    plan += [(0, NORMAL_TEXT)] * 77 + [(0, CONFIRMED_TEXT)] * 6
    for i, (label, text) in enumerate(plan):
        clip = make_clip_dir(tmp_path, f"clip{i:03d}", frame_bytes, n_frames=5)
        entries.append({"dir": str(clip), "label": label})
        responses.append(text)
    manifest = write_manifest(tmp_path, entries)

    rules = [MockRule(match="default", respond=text, times=1) for text in responses]
    rules.append(MockRule(match="default", respond=NORMAL_TEXT))
    with MockVlmServer(MockScript(rules=rules)) as mock:
        report = evaluate_clips(manifest, gw(mock.url))

    assert report["counts"] == {"tp": 51, "fn": 35, "tn": 77, "fp": 6}
    m = report["metrics"]
    assert m["precision"] == pytest.approx(0.895, abs=1e-3)
    assert m["recall"] == pytest.approx(0.593, abs=1e-3)
    assert m["specificity"] == pytest.approx(0.928, abs=1e-3)
    assert m["accuracy"] == pytest.approx(0.757, abs=1e-3)
    assert m["f1"] == pytest.approx(0.713, abs=1e-3)
