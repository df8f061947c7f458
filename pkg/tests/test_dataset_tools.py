import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdttrack.data_model import BoundingBox, Sequence, TriModalFrame, generate_segmented_sequence
from rdttrack.dataset_tools import (
    AlignmentMap,
    apply_alignment,
    estimate_alignment,
    read_points,
    select_representative_frames,
)
from rdttrack.errors import ParseError, RankDeficiencyError


def _pooled_gray(frame, side=16):
    # independent descriptor: luma then block means
    g = frame.rgb.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    h, w = g.shape
    return g.reshape(side, h // side, side, w // side).mean(axis=(1, 3)).ravel()


def _constant_sequence(n):
    f = TriModalFrame(np.full((16, 16, 3), 0.3, np.float32), np.zeros((16, 16), np.float32), np.zeros((16, 16), np.float32))
    return Sequence([f] * n, {0: BoundingBox(1, 1, 4, 4)})


def test_k_equals_n_returns_all():
    seq = generate_segmented_sequence([3, 3], seed=0)
    assert select_representative_frames(seq, 6) == list(range(6))


def test_identical_frames_k1():
    assert select_representative_frames(_constant_sequence(10), 1) == [0]


def test_identical_frames_fewer_than_k_warns():
    with pytest.warns(RuntimeWarning):
        out = select_representative_frames(_constant_sequence(6), 3)
    assert out == [0]


def test_k_out_of_range():
    seq = _constant_sequence(4)
    with pytest.raises(ValueError):
        select_representative_frames(seq, 5)
    with pytest.raises(ValueError):
        select_representative_frames(seq, 0)


@pytest.mark.parametrize("seed", range(5))
def test_one_frame_per_segment(seed):
    seq = generate_segmented_sequence([15, 15, 15], seed=seed)
    sel = select_representative_frames(seq, 3, seed=seed)
    assert len(sel) == 3
    assert sorted(i // 15 for i in sel) == [0, 1, 2]
    # independent membership check: each pick is nearest its own segment's mean descriptor
    desc = np.stack([_pooled_gray(f) for f in seq.frames])
    means = [desc[s * 15:(s + 1) * 15].mean(0) for s in range(3)]
    for i in sel:
        d = [np.linalg.norm(desc[i] - m) for m in means]
        assert int(np.argmin(d)) == i // 15


def test_selection_deterministic():
    seq = generate_segmented_sequence([10, 10, 10, 10], seed=3)
    assert select_representative_frames(seq, 4, seed=1) == select_representative_frames(seq, 4, seed=1)


def _corr(src, dst):
    return np.stack([src, dst], axis=1)


def _apply(h, pts):
    p = np.c_[pts, np.ones(len(pts))] @ h.T
    return p[:, :2] / p[:, 2:]


def test_identity_alignment():
    src = np.array([[0, 0], [100, 0], [0, 80], [100, 80], [50, 40]], float)
    amap = estimate_alignment(_corr(src, src))
    assert np.allclose(amap.matrix, np.eye(3), atol=1e-9)


def test_translation_exact():
    rng = np.random.default_rng(0)
    src = rng.uniform(0, 640, (20, 2))
    amap = estimate_alignment(_corr(src, src + [5, 3]))
    assert amap.rms_error < 1e-9
    assert np.abs(amap.matrix - np.array([[1, 0, 5], [0, 1, 3], [0, 0, 1]])).max() < 1e-9


H_TRUE = np.array([[1.02, 0.03, 12.0], [-0.02, 0.98, -7.0], [1e-4, -5e-5, 1.0]])


def test_projective_with_noise():
    rng = np.random.default_rng(1)
    src = rng.uniform(0, 640, (20, 2))
    dst = _apply(H_TRUE, src)
    amap = estimate_alignment(_corr(src, dst + rng.normal(0, 0.2, dst.shape)))
    err = np.sqrt(np.mean(np.sum((amap.transform(src) - dst) ** 2, axis=1)))
    assert err <= 0.5
    assert amap.rms_error <= 0.5


def test_matrix_recovered_noise_free():
    rng = np.random.default_rng(2)
    src = rng.uniform(0, 640, (12, 2))
    amap = estimate_alignment(_corr(src, _apply(H_TRUE, src)))
    assert np.linalg.norm(amap.matrix - H_TRUE) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_scale_invariance(seed, s):
    rng = np.random.default_rng(seed)
    src = rng.uniform(0, 100, (10, 2))
    dst = _apply(H_TRUE, src)
    a = estimate_alignment(_corr(src, dst))
    b = estimate_alignment(_corr(src * s, dst * s))
    scale = np.diag([s, s, 1.0])
    expected = scale @ a.matrix @ np.linalg.inv(scale)
    assert np.allclose(b.matrix, expected / expected[2, 2], rtol=1e-6, atol=1e-8)


def test_too_few_points():
    src = np.array([[0, 0], [1, 0], [0, 1]], float)
    with pytest.raises(ValueError):
        estimate_alignment(_corr(src, src))


def test_collinear_points():
    src = np.c_[np.arange(6.0), 2 * np.arange(6.0)]
    with pytest.raises(RankDeficiencyError):
        estimate_alignment(_corr(src, src + 1))


def test_affine_fallback():
    rng = np.random.default_rng(3)
    src = rng.uniform(0, 100, (8, 2))
    a = np.array([[1.1, 0.1, 4.0], [-0.05, 0.9, 2.0], [0, 0, 1]])
    amap = estimate_alignment(_corr(src, _apply(a, src)), affine=True)
    assert np.allclose(amap.matrix, a, atol=1e-9)


def test_apply_identity_and_shift():
    rng = np.random.default_rng(4)
    img = rng.random((40, 50)).astype(np.float32)
    assert np.array_equal(apply_alignment(AlignmentMap(np.eye(3), 0.0), img, (40, 50)), img)
    shifted = apply_alignment(AlignmentMap(np.array([[1, 0, 3], [0, 1, 2], [0, 0, 1.0]]), 0.0), img, (40, 50))
    assert np.allclose(shifted[2:, 3:], img[:-2, :-3])
    assert np.all(shifted[:2] == 0) and np.all(shifted[:, :3] == 0)


def test_apply_round_trip_interior():
    yy, xx = np.mgrid[0:120, 0:160]
    img = (0.5 + 0.25 * np.sin(xx / 9.0) * np.cos(yy / 7.0)).astype(np.float32)
    fwd = AlignmentMap(np.array([[1.0, 0.02, 3.5], [-0.01, 1.0, -2.0], [0, 0, 1.0]]), 0.0)
    inv = AlignmentMap(np.linalg.inv(fwd.matrix) / np.linalg.inv(fwd.matrix)[2, 2], 0.0)
    back = apply_alignment(inv, apply_alignment(fwd, img, (120, 160)), (120, 160))
    assert np.abs(back[15:-15, 15:-15] - img[15:-15, 15:-15]).max() <= 2 / 255


def test_apply_rejects_singular():
    with pytest.raises(RankDeficiencyError):
        apply_alignment(AlignmentMap(np.array([[1, 2, 0], [2, 4, 0], [0, 0, 1.0]]), 0.0), np.zeros((4, 4)), (4, 4))


def test_text_round_trip():
    amap = AlignmentMap(H_TRUE, 0.1)
    assert np.array_equal(AlignmentMap.from_text(amap.to_text()).matrix, amap.matrix)


def test_read_points(tmp_path):
    p = tmp_path / "pts.txt"
    p.write_text("# xt yt xr yr\n1 2 3 4\n5,6,7,8\n")
    pts = read_points(p)
    assert pts.shape == (2, 2, 2)
    assert pts[1, 1].tolist() == [7, 8]
    p.write_text("1 2 3 4\n1 2 3\n")
    with pytest.raises(ParseError, match="line 2"):
        read_points(p)
