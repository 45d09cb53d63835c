import numpy as np
import pytest

from shotline import autodiff as ad
from shotline.autodiff import Tensor
from shotline.encoder import (HistogramEdgeExtractor, encode_shot, encode_video,
                              extract_features, sample_frames, sample_shots)
from shotline.frames import FrameSequence
from shotline.segment import Shot

from _util import check_gradients


def make_seq(colors):
    return FrameSequence(np.stack([np.full((8, 8, 3), c, dtype=np.uint8) for c in colors]))


# -- sampling -------------------------------------------------------------------

def test_sample_frames_segment_centers():
    assert sample_frames(Shot("v", 0, 0, 30), 3) == [5, 15, 25]


def test_sample_frames_degenerate_repeat():
    assert sample_frames(Shot("v", 0, 0, 1), 3) == [0, 0, 0]


def test_sample_frames_center_formula():
    assert sample_frames(Shot("v", 0, 10, 16), 3) == [11, 13, 15]


def test_sample_frames_train_mode_stays_in_segments():
    shot = Shot("v", 0, 0, 30)
    rng = np.random.default_rng(0)
    for _ in range(20):
        picks = sample_frames(shot, 3, rng)
        assert 0 <= picks[0] < 10 and 10 <= picks[1] < 20 and 20 <= picks[2] < 30


def test_sample_frames_train_deterministic_given_seed():
    shot = Shot("v", 0, 5, 95)
    a = sample_frames(shot, 3, np.random.default_rng(42))
    b = sample_frames(shot, 3, np.random.default_rng(42))
    assert a == b


def test_sample_shots_exact_count():
    assert sample_shots(8, 8) == list(range(8))


def test_sample_shots_even_spacing():
    assert sample_shots(16, 8) == [0, 2, 4, 6, 8, 10, 12, 14]


def test_sample_shots_with_replacement_when_short():
    picks = sample_shots(3, 8, np.random.default_rng(1))
    assert len(picks) == 8
    assert set(picks) <= {0, 1, 2}
    assert picks == sorted(picks)


def test_sample_shots_distinct_in_train_mode():
    picks = sample_shots(20, 8, np.random.default_rng(3))
    assert len(set(picks)) == 8
    assert picks == sorted(picks)


def test_sample_shots_empty_error():
    with pytest.raises(ValueError):
        sample_shots(0, 4)


# -- descriptor ------------------------------------------------------------------

def test_descriptor_shape_and_blocks():
    ext = HistogramEdgeExtractor(projection_dim=None)
    desc = ext.describe(np.full((8, 8, 3), (10, 200, 30), dtype=np.uint8))
    assert desc.shape == (138,)
    assert np.isfinite(desc).all()
    assert abs(desc[:128].sum() - 1.0) < 1e-5
    assert abs(desc[128:136].sum() - 1.0) < 1e-5


def test_descriptor_deterministic():
    rng = np.random.default_rng(0)
    frame = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
    ext = HistogramEdgeExtractor(projection_dim=None)
    assert np.array_equal(ext.describe(frame), ext.describe(frame))


# -- pooling ---------------------------------------------------------------------

def test_encode_shot_identical_frames():
    ext = HistogramEdgeExtractor(projection_dim=None)
    seq = make_seq([(200, 10, 10)] * 9)
    feat = encode_shot(Shot("v", 0, 0, 9), seq, ext, m=3)
    assert np.allclose(feat.data, ext.describe(seq.frame(0)), atol=1e-7)


def test_encode_shot_two_frame_average():
    ext = HistogramEdgeExtractor(projection_dim=None)
    seq = make_seq([(255, 0, 0), (0, 0, 255)])
    feat = encode_shot(Shot("v", 0, 0, 2), seq, ext, m=2)
    u = ext.describe(seq.frame(0))
    v = ext.describe(seq.frame(1))
    assert np.array_equal(feat.data, np.stack([u, v]).mean(axis=0))


def test_encode_shot_matches_loop_oracle():
    rng = np.random.default_rng(8)
    frames = rng.integers(0, 256, (12, 8, 8, 3)).astype(np.uint8)
    seq = FrameSequence(frames)
    ext = HistogramEdgeExtractor(projection_dim=16, rng=np.random.default_rng(1))
    shot = Shot("v", 0, 2, 11)
    feat = encode_shot(shot, seq, ext, m=3)
    picks = sample_frames(shot, 3)
    projected = np.stack([ext.describe(seq.frame(i)) for i in picks]) @ ext.projection.data
    assert np.array_equal(feat.data, projected.mean(axis=0))


def test_encode_shot_out_of_bounds():
    ext = HistogramEdgeExtractor(projection_dim=None)
    seq = make_seq([(1, 2, 3)] * 4)
    with pytest.raises(ValueError, match="outside"):
        encode_shot(Shot("v", 0, 0, 9), seq, ext, m=3)


def test_encode_video_identical_shots():
    ext = HistogramEdgeExtractor(projection_dim=None)
    seq = make_seq([(10, 20, 200)] * 12)
    shots = [Shot("v", i, i * 4, (i + 1) * 4) for i in range(3)]
    video = encode_video(shots, seq, ext, n=3, m=2)
    shot0 = encode_shot(shots[0], seq, ext, m=2)
    assert np.allclose(video.data, shot0.data, atol=1e-7)


def test_encode_video_matches_loop_oracle():
    rng = np.random.default_rng(4)
    frames = rng.integers(0, 256, (20, 8, 8, 3)).astype(np.uint8)
    seq = FrameSequence(frames)
    ext = HistogramEdgeExtractor(projection_dim=None)
    shots = [Shot("v", i, i * 5, (i + 1) * 5) for i in range(4)]
    video = encode_video(shots, seq, ext, n=2, m=3)
    picks = sample_shots(4, 2)
    pooled = np.stack([encode_shot(shots[i], seq, ext, m=3).data for i in picks])
    assert np.array_equal(video.data, pooled.mean(axis=0))


def test_pooling_permutation_invariance():
    rng = np.random.default_rng(0)
    rows = rng.normal(0, 1, (6, 10)).astype(np.float32)
    perm = rng.permutation(6)
    assert np.allclose(ad.mean_rows(Tensor(rows)).data,
                       ad.mean_rows(Tensor(rows[perm])).data, atol=1e-6)


def test_pooling_linearity():
    rng = np.random.default_rng(1)
    rows = rng.normal(0, 1, (5, 7)).astype(np.float32)
    assert np.allclose(ad.mean_rows(Tensor(rows * 3.0)).data,
                       3.0 * ad.mean_rows(Tensor(rows)).data, atol=1e-5)


def test_gradient_through_both_pooling_levels():
    # projection -> per-shot mean -> stack -> video mean, as encode_video builds it
    rng = np.random.default_rng(12)
    proj = Tensor(rng.normal(0, 0.5, (9, 4)), requires_grad=True)
    shots_raw = [Tensor(rng.normal(0, 1, (3, 9))) for _ in range(4)]
    w = Tensor(rng.normal(0, 1, (4,)))

    def loss():
        pooled = [ad.mean_rows(ad.matmul(raw, proj)) for raw in shots_raw]
        video = ad.mean_rows(ad.stack_rows(pooled))
        return ad.sum_all(ad.hadamard(video, w))

    check_gradients(loss, [proj])


def test_extract_features_center_sampling(tmp_path):
    rng = np.random.default_rng(3)
    frames = rng.integers(0, 256, (10, 8, 8, 3)).astype(np.uint8)
    seq = FrameSequence(frames)
    ext = HistogramEdgeExtractor(projection_dim=None)
    shots = [Shot("vid", 0, 0, 5), Shot("vid", 1, 5, 10)]
    store = extract_features(seq, shots, ext, m=3)
    assert store.dim == 138
    assert len(store) == 2
    expected = np.stack([ext.describe(seq.frame(i)) for i in sample_frames(shots[1], 3)]).mean(axis=0)
    assert np.array_equal(store.get("vid", 1), expected)
