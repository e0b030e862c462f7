import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcstrack.imaging import (HAAR_KINDS, FeatureBank, HaarFeature, build_integral, eval_haar,
                              generate_feature_pool, rect_sum, rgb_to_gray)
from dcstrack.validation import BoundsError, DegenerateFeatureError, Rect

from conftest import naive_rect_sum


def test_integral_table_shape_and_zero_border(rng):
    ii = build_integral(rng.random((7, 9)))
    assert ii.table.shape == (8, 10)
    assert not ii.table[0].any() and not ii.table[:, 0].any()


def test_full_rect_sum_is_total(rng):
    frame = rng.random((12, 17))
    ii = build_integral(frame)
    assert rect_sum(ii, Rect(0, 0, 17, 12)) == pytest.approx(frame.sum(), abs=1e-10)


def test_single_pixel_sum(rng):
    frame = rng.random((5, 5))
    ii = build_integral(frame)
    assert rect_sum(ii, Rect(3, 1, 1, 1)) == pytest.approx(frame[1, 3], abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rect_sum_matches_naive_loop(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 20, size=2)
    frame = rng.random((h, w))
    x, y = rng.integers(0, w), rng.integers(0, h)
    rw, rh = rng.integers(1, w - x + 1), rng.integers(1, h - y + 1)
    got = rect_sum(build_integral(frame), Rect(int(x), int(y), int(rw), int(rh)))
    assert got == pytest.approx(naive_rect_sum(frame, x, y, rw, rh), abs=1e-9)


@pytest.mark.parametrize("r", [Rect(-1, 0, 2, 2), Rect(0, 0, 11, 1), Rect(5, 5, 1, 6)])
def test_rect_sum_out_of_bounds(r):
    with pytest.raises(BoundsError):
        rect_sum(build_integral(np.zeros((10, 10))), r)


def test_constant_patch_gives_zero_response():
    ii = build_integral(np.full((40, 40), 0.7))
    for f in generate_feature_pool(0, 50):
        assert eval_haar(ii, f, Rect(3, 4, 30, 30)) == pytest.approx(0.0, abs=1e-12)


def test_two_rect_step_edge():
    # left half 0, right half 1: left-minus-right feature over the full patch
    frame = np.zeros((10, 10))
    frame[:, 5:] = 1.0
    f = HaarFeature("two-rect-vertical", (0.0, 0.0, 1.0, 1.0))
    assert eval_haar(build_integral(frame), f, Rect(0, 0, 10, 10)) == pytest.approx(-0.5)


def test_degenerate_feature_rejected():
    f = HaarFeature("three-rect", (0.0, 0.0, 0.1, 0.5))
    with pytest.raises(DegenerateFeatureError):
        f.subrects(20, 20)


def test_feature_box_must_fit_unit_square():
    with pytest.raises(ValueError):
        HaarFeature("four-rect", (0.5, 0.0, 0.6, 0.5))
    with pytest.raises(ValueError):
        HaarFeature("five-rect", (0.0, 0.0, 0.5, 0.5))


def test_subrects_tile_equal_cells():
    for kind in HAAR_KINDS:
        cells = HaarFeature(kind, (0.1, 0.2, 0.8, 0.7)).subrects(30, 30)
        assert len({(w, h) for _, _, w, h, _ in cells}) == 1
        assert sum(wt for *_, wt in cells) == 0


def test_feature_pool_is_seeded():
    assert generate_feature_pool(3, 20) == generate_feature_pool(3, 20)
    assert generate_feature_pool(3, 20) != generate_feature_pool(4, 20)


def test_feature_bank_matches_eval_haar(rng):
    frame = rng.random((60, 80))
    ii = build_integral(frame)
    feats = [f for f in generate_feature_pool(rng, 40)]
    bank = FeatureBank(feats, 20, 16, offset=(3, 2))
    xs = np.array([0, 10, 40])
    ys = np.array([0, 5, 30])
    resp = bank.responses(ii, xs, ys)
    for i, (x, y) in enumerate(zip(xs, ys)):
        for j, f in enumerate(feats):
            want = eval_haar(ii, f, Rect(x + 3, y + 2, 20, 16))
            assert resp[i, j] == pytest.approx(want, abs=1e-12)
    sub = bank.subset([5, 1])
    np.testing.assert_allclose(sub.responses(ii, xs, ys), resp[:, [5, 1]], atol=1e-15)


def test_rgb_to_gray_luma():
    px = np.array([[[255, 255, 255], [255, 0, 0]]], dtype=np.uint8)
    np.testing.assert_allclose(rgb_to_gray(px), [[1.0, 0.299]])
