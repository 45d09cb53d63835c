import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shotline.binio import FormatError
from shotline.frames import FrameSequence, read_fseq, write_fseq
from shotline.segment import (SegmenterParams, Shot, boundary_score, detect_shots,
                              frame_histogram, read_shot_list, write_shot_list)


def solid_frame(rgb, h=16, w=16):
    return np.full((h, w, 3), rgb, dtype=np.uint8)


def color_sequence(segments, h=16, w=16, noise_sigma=0.0, seed=0):
    """Frames from (rgb, length) segments, with optional pixel noise."""
    rng = np.random.default_rng(seed)
    frames = []
    for rgb, length in segments:
        for _ in range(length):
            frame = np.full((h, w, 3), rgb, dtype=np.float64)
            if noise_sigma > 0:
                frame = frame + rng.normal(0, noise_sigma, frame.shape)
            frames.append(np.clip(frame, 0, 255).astype(np.uint8))
    return FrameSequence(np.stack(frames))


# -- histograms ---------------------------------------------------------------

def test_histogram_solid_color_single_bin():
    hist = frame_histogram(solid_frame((255, 0, 0)))
    assert hist.max() == 1.0
    assert (hist > 0).sum() == 1
    assert abs(hist.sum() - 1.0) < 1e-12


def test_histogram_hue_rotation_changes_bins():
    # same saturation and value, hue moved by 120 degrees
    red = frame_histogram(solid_frame((200, 40, 40)))
    green = frame_histogram(solid_frame((40, 200, 40)))
    assert not np.array_equal(red, green)


def test_histogram_two_color_split():
    frame = np.zeros((10, 10, 3), dtype=np.uint8)
    frame[:5] = (255, 0, 0)
    frame[5:] = (0, 0, 255)
    hist = frame_histogram(frame)
    expected = np.zeros(128)
    for half in (solid_frame((255, 0, 0), 5, 10), solid_frame((0, 0, 255), 5, 10)):
        expected += frame_histogram(half) * 0.5
    assert np.allclose(hist, expected)
    assert sorted(hist[hist > 0].tolist()) == [0.5, 0.5]


def test_boundary_score_identical_is_zero():
    hist = frame_histogram(solid_frame((12, 200, 99)))
    assert boundary_score(hist, hist) == 0.0


def test_boundary_score_disjoint_one_hots():
    h1 = np.zeros(128)
    h2 = np.zeros(128)
    h1[3] = 1.0
    h2[40] = 1.0
    assert abs(boundary_score(h1, h2) - 2.0) < 1e-6


def test_boundary_score_matches_direct_sum():
    rng = np.random.default_rng(5)
    h1 = rng.random(128)
    h1 /= h1.sum()
    h2 = rng.random(128)
    h2 /= h2.sum()
    direct = sum((a - b) ** 2 / (a + b + 1e-10) for a, b in zip(h1, h2))
    assert abs(boundary_score(h1, h2) - direct) < 1e-12


def test_boundary_score_length_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        boundary_score(np.ones(4) / 4, np.ones(5) / 5)


# -- detection ------------------------------------------------------------------

def test_constant_sequence_is_one_shot():
    seq = color_sequence([((0, 128, 255), 100)])
    shots = detect_shots(seq, video_id="v")
    assert shots == [Shot("v", 0, 0, 100)]


def test_red_blue_cut_recovered_exactly():
    seq = color_sequence([((255, 0, 0), 50), ((0, 0, 255), 50)])
    shots = detect_shots(seq, video_id="v")
    assert [(s.start, s.end) for s in shots] == [(0, 50), (50, 100)]


def test_five_segments_recovered():
    colors = [(255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0), (128, 0, 200)]
    lengths = [20, 13, 31, 9, 27]
    seq = color_sequence(list(zip(colors, lengths)), noise_sigma=4.0, seed=3)
    shots = detect_shots(seq, video_id="v")
    expected_bounds = np.cumsum(lengths)[:-1].tolist()
    assert [s.start for s in shots[1:]] == expected_bounds


def test_empty_sequence_rejected():
    with pytest.raises(ValueError, match="empty"):
        detect_shots(FrameSequence(np.zeros((0, 4, 4, 3), dtype=np.uint8)))


def test_short_shots_merge_into_predecessor():
    # middle segment shorter than min_shot_len disappears into its predecessor
    seq = color_sequence([((255, 0, 0), 30), ((0, 255, 0), 3), ((0, 0, 255), 30)])
    shots = detect_shots(seq, video_id="v")
    assert sum(s.length for s in shots) == 63
    assert all(s.length >= 8 for s in shots)
    assert [(s.start, s.end) for s in shots] == [(0, 33), (33, 63)]


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(1, 40)), min_size=1, max_size=6),
       st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_shots_always_tile_input(segments, seed):
    palette = [(255, 0, 0), (0, 255, 0), (0, 0, 255), (200, 200, 0), (0, 180, 180), (90, 90, 90)]
    seq = color_sequence([(palette[c], n) for c, n in segments], noise_sigma=6.0, seed=seed)
    shots = detect_shots(seq, video_id="v")
    assert shots[0].start == 0
    assert shots[-1].end == seq.frame_count
    for a, b in zip(shots, shots[1:]):
        assert a.end == b.start
    assert [s.ordinal for s in shots] == list(range(len(shots)))


def test_detection_is_deterministic():
    seq = color_sequence([((255, 0, 0), 40), ((0, 0, 255), 40)], noise_sigma=8.0, seed=9)
    assert detect_shots(seq) == detect_shots(seq)


def test_noisy_cut_benchmark_small():
    # the full 200-sequence benchmark runs in the acceptance suite
    rng = np.random.default_rng(77)
    palette = [(230, 30, 30), (30, 230, 30), (30, 30, 230), (220, 220, 30), (150, 30, 220)]
    hits = total_true = total_pred = 0
    for i in range(20):
        k = int(rng.integers(2, 5))
        colors = rng.choice(len(palette), size=k, replace=False)
        lengths = rng.integers(10, 40, size=k)
        seq = color_sequence([(palette[c], int(n)) for c, n in zip(colors, lengths)],
                             noise_sigma=8.0, seed=1000 + i)
        true_cuts = set(np.cumsum(lengths)[:-1].tolist())
        pred_cuts = {s.start for s in detect_shots(seq)[1:]}
        hits += len(true_cuts & pred_cuts)
        total_true += len(true_cuts)
        total_pred += len(pred_cuts)
    assert hits / total_true >= 0.95
    assert hits / total_pred >= 0.95


# -- params and io -----------------------------------------------------------------

def test_params_validated():
    with pytest.raises(ValueError):
        SegmenterParams(window=0)
    with pytest.raises(ValueError):
        SegmenterParams(threshold_scale=-1)


def test_shot_validation():
    with pytest.raises(ValueError):
        Shot("v", 0, 5, 5)


def test_shot_list_round_trip(tmp_path):
    shots = [Shot("vid a", 0, 0, 10), Shot("vid a", 1, 10, 25)]
    path = tmp_path / "shots.tsv"
    write_shot_list(path, shots)
    assert read_shot_list(path) == shots
    assert path.read_text() == "vid a\t0\t0\t10\nvid a\t1\t10\t25\n"


def test_fseq_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    seq = FrameSequence(rng.integers(0, 256, (7, 6, 5, 3), dtype=np.uint8).astype(np.uint8))
    path = tmp_path / "clip.fseq"
    write_fseq(path, seq)
    loaded = read_fseq(path)
    assert np.array_equal(loaded.frames, seq.frames)
    write_fseq(tmp_path / "clip2.fseq", loaded)
    assert path.read_bytes() == (tmp_path / "clip2.fseq").read_bytes()


def test_fseq_truncation_reports_offset(tmp_path):
    seq = FrameSequence(np.zeros((3, 4, 4, 3), dtype=np.uint8))
    path = tmp_path / "clip.fseq"
    write_fseq(path, seq)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(FormatError, match="byte"):
        read_fseq(path)
