"""Frame buffers, clip sampling, crop padding, and face pixelation."""

import random

import numpy as np
import pytest

from paza.clips import (
    BufferedFrame,
    EmptyBuffer,
    FrameBuffer,
    OutOfOrderFrame,
    crop_with_padding,
    evenly_spaced_indices,
    obfuscate_faces,
    sample_clip,
)
from paza.events import BBox, Keypoint

BOX = BBox(100, 100, 170, 280)


def bf(ts, bbox=BOX):
    return BufferedFrame(timestamp_ms=ts, person_bbox=bbox)


def filled(timestamps, horizon_ms=5000, cap=100):
    buf = FrameBuffer(horizon_ms, cap)
    for ts in timestamps:
        buf.push(bf(ts))
    return buf


def test_push_into_empty():
    buf = filled([0])
    assert len(buf) == 1


def test_time_eviction_trace():
    buf = filled(range(0, 7000, 1000), horizon_ms=5000)
    # after pushing t=6000, t=0 is evicted (6000 - 0 > 5000); 1000..6000 remain
    assert len(buf) == 6
    assert buf.frames[0].timestamp_ms == 1000


def test_hard_cap_eviction():
    # 101 frames within the horizon at cap 2*5*10 = 100
    buf = filled(range(0, 101 * 10, 10), horizon_ms=5000, cap=100)
    assert len(buf) == 100
    assert buf.frames[0].timestamp_ms == 10


def test_out_of_order_push_rejected():
    buf = filled([0, 100])
    with pytest.raises(OutOfOrderFrame):
        buf.push(bf(50))
    buf.push(bf(100))  # equal timestamp allowed


def test_span_invariant_random_pushes():
    rng = random.Random(3)
    buf = FrameBuffer(5000, 100)
    ts = 0
    for _ in range(500):
        ts += rng.randrange(0, 800)
        buf.push(bf(ts))
        assert buf.frames[-1].timestamp_ms - buf.frames[0].timestamp_ms <= 5000
        assert len(buf) <= 100


# -- sampling -----------------------------------------------------------------

def test_even_indices_50_5():
    assert evenly_spaced_indices(50, 5) == [0, 12, 25, 37, 49]


def test_even_indices_identity_when_equal():
    assert evenly_spaced_indices(5, 5) == [0, 1, 2, 3, 4]


def test_even_indices_all_when_short():
    assert evenly_spaced_indices(3, 5) == [0, 1, 2]


def test_even_indices_identity_for_all_n():
    for n in range(2, 40):
        assert evenly_spaced_indices(n, n) == list(range(n))


def test_sample_clip_timestamps_ascending_subset():
    rng = random.Random(9)
    for _ in range(100):
        n = rng.randrange(1, 80)
        timestamps = sorted(rng.sample(range(100_000), n))
        buf = filled(timestamps, horizon_ms=10**9, cap=10**9)
        clip = sample_clip(buf, 5, "c1", 1, 640, 640)
        got = [f.timestamp_ms for f in clip.frames]
        assert got == sorted(got)
        assert len(set(got)) == len(got)
        assert set(got) <= set(timestamps)
        assert clip.label_total == len(clip.frames) == min(n, 5)


def test_sample_clip_empty_buffer():
    with pytest.raises(EmptyBuffer):
        sample_clip(FrameBuffer(), 5, "c1", 1, 640, 640)


# -- cropping -----------------------------------------------------------------

def test_crop_padding_hand_arithmetic():
    out = crop_with_padding(BBox(100, 100, 200, 300), 640, 480, 0.2)
    assert out.as_list() == [80.0, 60.0, 220.0, 340.0]


def test_crop_padding_clamps_to_frame():
    out = crop_with_padding(BBox(0, 0, 100, 100), 640, 480, 0.2)
    assert out.as_list() == [0.0, 0.0, 120.0, 120.0]


def test_crop_padding_zero_is_identity():
    out = crop_with_padding(BOX, 640, 480, 0.0)
    assert out == BOX


def test_crop_contains_bbox_and_stays_in_frame():
    rng = random.Random(21)
    for _ in range(300):
        x1, y1 = rng.uniform(0, 600), rng.uniform(0, 440)
        bbox = BBox(x1, y1, x1 + rng.uniform(1, 200), y1 + rng.uniform(1, 200))
        out = crop_with_padding(bbox, 640, 480, rng.uniform(0, 1))
        assert 0 <= out.x1 <= out.x2 <= 640
        assert 0 <= out.y1 <= out.y2 <= 480
        # crop must contain bbox ∩ frame
        assert out.x1 <= max(bbox.x1, 0) and out.y1 <= max(bbox.y1, 0)
        assert out.x2 >= min(bbox.x2, 640) and out.y2 >= min(bbox.y2, 480)


# -- obfuscation ----------------------------------------------------------------

def head_kps(points, conf=0.9):
    pts = [Keypoint(0.0, 0.0, 0.05) for _ in range(17)]
    for i, (x, y) in enumerate(points):
        pts[i] = Keypoint(float(x), float(y), conf)
    return tuple(pts)


def random_image(rng, h=96, w=96):
    return np.array(
        [[[rng.randrange(256) for _ in range(3)] for _ in range(w)] for _ in range(h)],
        dtype=np.uint8,
    )


def test_obfuscation_radius_and_locality():
    rng = random.Random(2)
    img = random_image(rng)
    # head keypoints clustered with max pairwise distance 20 -> radius 30
    kps = head_kps([(40, 40), (60, 40), (50, 45), (45, 42), (55, 42)])
    out = obfuscate_faces(img, kps)
    cx = np.mean([40, 60, 50, 45, 55])
    cy = np.mean([40, 40, 45, 42, 42])
    radius = 30.0
    ys, xs = np.ogrid[:96, :96]
    disc = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
    # untouched outside the disc
    assert np.array_equal(out[~disc], img[~disc])
    # actually pixelated inside
    assert not np.array_equal(out[disc], img[disc])


def test_obfuscation_requires_two_head_keypoints():
    rng = random.Random(4)
    img = random_image(rng)
    kps = head_kps([(40, 40)])  # only one above the gate
    out = obfuscate_faces(img, kps)
    assert np.array_equal(out, img)
    assert np.array_equal(obfuscate_faces(img, None), img)


def test_obfuscation_idempotent():
    rng = random.Random(6)
    img = random_image(rng)
    kps = head_kps([(48, 48), (64, 48), (56, 52)])
    once = obfuscate_faces(img, kps)
    twice = obfuscate_faces(once, kps)
    assert np.array_equal(once, twice)
