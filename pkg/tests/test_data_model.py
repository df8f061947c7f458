import math
import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdttrack.data_model import (
    BoundingBox,
    DegradationProfile,
    Sequence,
    TriModalFrame,
    format_box,
    generate_segmented_sequence,
    generate_synthetic_sequence,
    load_sequence,
    parse_box,
    read_groundtruth,
    save_sequence,
)
from rdttrack.errors import InvalidBoxError, LoadError, ModalityAlignmentError, ParseError


def test_box_rejects_non_positive_size():
    with pytest.raises(InvalidBoxError):
        BoundingBox(0, 0, 0, 5)
    with pytest.raises(InvalidBoxError):
        BoundingBox(0, 0, 5, -1)
    # negative corners are legal (partially out of frame)
    assert BoundingBox(-3, -4, 2, 2).center == (-2, -3)


@given(
    st.floats(-1e4, 1e4, allow_nan=False),
    st.floats(-1e4, 1e4, allow_nan=False),
    st.floats(1e-3, 1e4),
    st.floats(1e-3, 1e4),
)
def test_box_text_round_trip(x, y, w, h):
    b = BoundingBox(x, y, w, h)
    assert parse_box(format_box(b)) == b


def test_round_trip_on_disk(tmp_path):
    seq = generate_synthetic_sequence(10, seed=3, name="rt")
    save_sequence(seq, tmp_path)
    back = load_sequence(tmp_path, "rt")
    assert len(back) == 10
    assert len(back.annotations) == 10
    assert back.annotations == seq.annotations
    for a, b in zip(seq.frames, back.frames):
        assert np.abs(a.rgb - b.rgb).max() <= 0.5 / 255 + 1e-7
        assert np.abs(a.depth - b.depth).max() <= 0.5 / 65535 + 1e-7
        assert np.abs(a.tir - b.tir).max() <= 0.5 / 65535 + 1e-7
        assert b.depth.ndim == 2 and b.tir.ndim == 2


def test_sparse_annotations_round_trip(tmp_path):
    seq = generate_synthetic_sequence(8, seed=1, name="sparse").with_annotations([3, 5])
    save_sequence(seq, tmp_path)
    text = (tmp_path / "sparse" / "groundtruth.txt").read_text().splitlines()
    assert [ln.split(":")[0] for ln in text] == ["0", "3", "5"]
    back = load_sequence(tmp_path, "sparse")
    assert back.annotations == seq.annotations
    assert not back.is_dense


def test_missing_modality_folder(tmp_path):
    save_sequence(generate_synthetic_sequence(4, seed=0, name="s"), tmp_path)
    shutil.rmtree(tmp_path / "s" / "tir")
    with pytest.raises(ModalityAlignmentError, match="tir"):
        load_sequence(tmp_path, "s")
    # alignment errors are load errors
    with pytest.raises(LoadError):
        load_sequence(tmp_path, "s")


def test_frame_count_mismatch(tmp_path):
    save_sequence(generate_synthetic_sequence(4, seed=0, name="s"), tmp_path)
    (tmp_path / "s" / "depth" / "000003.png").unlink()
    with pytest.raises(ModalityAlignmentError, match="frame counts"):
        load_sequence(tmp_path, "s")


def test_malformed_groundtruth_reports_line(tmp_path):
    save_sequence(generate_synthetic_sequence(3, seed=0, name="s"), tmp_path)
    gt = tmp_path / "s" / "groundtruth.txt"
    lines = gt.read_text().splitlines()
    lines[1] = "10,20,0,30"
    gt.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as err:
        load_sequence(tmp_path, "s")
    assert err.value.line_number == 2
    # same verdict as the box invariant checker
    with pytest.raises(InvalidBoxError):
        BoundingBox(10, 20, 0, 30)


def test_groundtruth_non_numeric(tmp_path):
    p = tmp_path / "gt.txt"
    p.write_text("1,2,3,4\n1,2,x,4\n")
    with pytest.raises(ParseError, match="line 2"):
        read_groundtruth(p)


def test_generation_is_deterministic():
    a = generate_synthetic_sequence(2, DegradationProfile(), seed=0)
    b = generate_synthetic_sequence(2, DegradationProfile(), seed=0)
    for fa, fb in zip(a.frames, b.frames):
        assert np.array_equal(fa.rgb, fb.rgb)
        assert np.array_equal(fa.depth, fb.depth)
        assert np.array_equal(fa.tir, fb.tir)
    assert a.annotations == b.annotations


def test_generation_rejects_short_length():
    with pytest.raises(ValueError):
        generate_synthetic_sequence(1)


def _mean_intensity(frames):
    # plain accumulation, independent of numpy reductions
    total, count = 0.0, 0
    for f in frames:
        vals = f.rgb.astype(np.float64).ravel().tolist()
        total += math.fsum(vals)
        count += len(vals)
    return total / count


def test_rgb_darkening_interval():
    prof = DegradationProfile(rgb_darken=[(0, 10, 0.05)])
    seq = generate_synthetic_sequence(20, prof, seed=4)
    dark = _mean_intensity(seq.frames[:10])
    bright = _mean_intensity(seq.frames[10:])
    assert dark < 0.1 * bright


def test_depth_flatten_gives_constant_depth():
    seq = generate_synthetic_sequence(6, DegradationProfile(depth_flatten=[(0, 6)]), seed=2)
    for i, f in enumerate(seq.frames):
        b = seq.annotations[i]
        patch = f.depth[int(b.y):int(b.y + b.h), int(b.x):int(b.x + b.w)]
        assert patch.var() < 1e-6


def test_tir_crossover_removes_target_contrast():
    prof = DegradationProfile(tir_crossover=[(2, 4)], noise_sigma={"rgb": 0, "depth": 0, "tir": 0})
    seq = generate_synthetic_sequence(6, prof, seed=5)
    for i, f in enumerate(seq.frames):
        b = seq.annotations[i]
        inside = f.tir[int(b.y):int(b.y + b.h), int(b.x):int(b.x + b.w)].mean()
        if 2 <= i < 4:
            assert inside < 0.5
        else:
            assert inside > 0.75


def test_overlapping_intervals_rejected():
    with pytest.raises(ValueError, match="overlap"):
        DegradationProfile(depth_flatten=[(0, 5), (4, 8)])
    with pytest.raises(ValueError):
        DegradationProfile(rgb_darken=[(0, 5, 1.5)])


def test_interval_beyond_length_rejected():
    with pytest.raises(ValueError):
        generate_synthetic_sequence(5, DegradationProfile(depth_flatten=[(0, 9)]))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_ground_truth_overlaps_rendered_target(seed):
    prof = DegradationProfile(noise_sigma={"rgb": 0, "depth": 0, "tir": 0})
    seq = generate_synthetic_sequence(5, prof, seed=seed)
    for i, f in enumerate(seq.frames):
        assert f.rgb.shape[:2] == f.depth.shape == f.tir.shape
        mask = f.tir > 0.75  # only the target is that hot
        b = seq.annotations[i]
        ys, xs = np.nonzero(mask)
        inside = (xs >= b.x) & (xs < b.x + b.w) & (ys >= b.y) & (ys < b.y + b.h)
        assert inside.any()
        assert inside.sum() == b.w * b.h  # box matches the rendered target exactly


def test_segmented_sequence_layout():
    seq = generate_segmented_sequence([4, 5, 6], seed=1)
    assert len(seq) == 15
    assert [f.timestamp_index for f in seq.frames] == list(range(15))
    assert seq.is_dense


def test_sequence_requires_frame_zero_annotation():
    f = TriModalFrame(np.zeros((4, 4, 3), np.float32), np.zeros((4, 4), np.float32), np.zeros((4, 4), np.float32))
    with pytest.raises(ValueError):
        Sequence([f, f], {1: BoundingBox(0, 0, 1, 1)})


def test_frame_requires_aligned_modalities():
    with pytest.raises(ModalityAlignmentError):
        TriModalFrame(np.zeros((4, 4, 3)), np.zeros((4, 5)), np.zeros((4, 4)))
