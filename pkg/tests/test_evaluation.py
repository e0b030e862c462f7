import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcstrack.evaluation import (PRESETS, SyntheticSpec, center_error, make_planted_pool,
                                 make_synthetic_sequence, overlap, reacquisition_delay,
                                 run_protocol, selection_benchmark, success_rate)
from dcstrack.validation import ProtocolError, Rect

rects = st.builds(Rect, st.integers(-50, 50), st.integers(-50, 50), st.integers(1, 40),
                  st.integers(1, 40))


def test_metric_examples():
    a = Rect(0, 0, 10, 10)
    assert center_error(a, a) == 0.0
    assert overlap(a, a) == 1.0
    assert overlap(a, Rect(20, 20, 5, 5)) == 0.0
    assert overlap(a, Rect(10, 0, 10, 10)) == 0.0  # touching edges
    assert abs(overlap(a, Rect(5, 0, 10, 10)) - 1 / 3) <= 1e-12
    assert abs(center_error(Rect(-1, -1, 2, 2), Rect(2, 3, 2, 2)) - 5.0) <= 1e-12
    assert center_error(Rect(-1, -1, 2, 2), Rect(2, 3, 2, 2), squared=True) == 25.0


def pixel_iou(a, b):
    # count pixels on a shared grid
    ox, oy = min(a.x, b.x), min(a.y, b.y)
    W = max(a.x + a.w, b.x + b.w) - ox
    H = max(a.y + a.h, b.y + b.h) - oy
    ma = np.zeros((H, W), bool)
    mb = np.zeros((H, W), bool)
    ma[a.y - oy:a.y - oy + a.h, a.x - ox:a.x - ox + a.w] = True
    mb[b.y - oy:b.y - oy + b.h, b.x - ox:b.x - ox + b.w] = True
    return (ma & mb).sum() / (ma | mb).sum()


@given(rects, rects, rects)
def test_metric_properties(a, b, c):
    assert overlap(a, b) == overlap(b, a)
    assert 0.0 <= overlap(a, b) <= 1.0
    assert abs(overlap(a, b) - pixel_iou(a, b)) <= 1e-12
    assert center_error(a, b) == center_error(b, a)
    assert center_error(a, c) <= center_error(a, b) + center_error(b, c) + 1e-9
    ax, ay = a.x + a.w / 2, a.y + a.h / 2
    bx, by = b.x + b.w / 2, b.y + b.h / 2
    assert center_error(a, b) == pytest.approx(math.hypot(ax - bx, ay - by), abs=1e-12)


def test_success_rate_examples_and_oracle(rng):
    assert success_rate([1.0] * 7) == 1.0
    assert success_rate([0.6, 0.4], 0.5) == 0.5
    assert success_rate([0.5]) == 0.0
    ov = rng.uniform(size=300)
    assert success_rate(ov, 0.3) == sum(1 for v in ov if v > 0.3) / 300
    rates = [success_rate(ov, t) for t in np.linspace(0.01, 0.99, 50)]
    assert all(x >= y for x, y in zip(rates, rates[1:]))
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            success_rate(ov, bad)


class ScriptedTracker:
    """Returns the ground truth shifted by a seed-dependent offset."""

    def __init__(self, gt, seed):
        self.gt, self.seed = gt, seed

    def track_sequence(self, frames, init):
        return [(r.shift(self.seed % 3, 0), 0.5) for r, _ in zip(self.gt, frames)]


def test_run_protocol_averages_and_seeds():
    gt = [Rect(10 + t, 10, 20, 20) for t in range(8)]
    frames = [None] * 8
    seen = []

    def factory(seed):
        seen.append(seed)
        return ScriptedTracker(gt, seed)

    rep = run_protocol(frames, gt, factory, n_runs=5, seed=3)
    assert seen == [3, 4, 5, 6, 7]
    assert rep.n_runs == 5
    per_run = [r.mean_position_error for r in rep.runs]
    assert per_run == [0.0, 1.0, 2.0, 0.0, 1.0]
    assert rep.mean_position_error == pytest.approx(np.mean(per_run), abs=1e-15)
    assert rep.success_rate == pytest.approx(np.mean([r.success_rate for r in rep.runs]))
    again = run_protocol(frames, gt, factory, n_runs=5, seed=3)
    assert [r.mean_position_error for r in again.runs] == per_run
    keys = rep.summary()
    assert {"mean_position_error", "success_rate", "n_runs", "run4_seed"} <= set(keys)


def test_run_protocol_missing_ground_truth():
    gt = [Rect(0, 0, 5, 5)] * 3
    with pytest.raises(ProtocolError, match=r"\[3, 4\]"):
        run_protocol([None] * 5, gt, lambda s: ScriptedTracker(gt, s), n_runs=1)
    with pytest.raises(ValueError):
        run_protocol([None] * 3, gt, lambda s: ScriptedTracker(gt, s), n_runs=0)


def test_zero_velocity_sequence():
    frames, gt, occ = make_synthetic_sequence(PRESETS["static"])
    assert len(set(gt)) == 1 and len(frames) == 50
    assert all(o is None for o in occ)
    assert all(0.0 <= f.min() and f.max() <= 1.0 for f in frames)


def test_occluder_covers_half_the_target():
    spec = PRESETS["occlusion"]
    frames, gt, occ = make_synthetic_sequence(spec)
    for t, (r, o) in enumerate(zip(gt, occ)):
        if 40 <= t <= 60:
            mask = np.zeros((spec.height, spec.width), bool)
            mask[o.y:o.y + o.h, o.x:o.x + o.w] = True
            covered = mask[r.y:r.y + r.h, r.x:r.x + r.w].sum()
            assert abs(covered - 0.5 * r.area) <= r.h  # 1 px column of slack
        else:
            assert o is None


def test_synthetic_determinism_and_bounds():
    spec = SyntheticSpec(n_frames=10, seed=4)
    a, ga, _ = make_synthetic_sequence(spec)
    b, gb, _ = make_synthetic_sequence(spec)
    assert ga == gb
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))
    with pytest.raises(ValueError):
        make_synthetic_sequence(SyntheticSpec(amplitude=(200.0, 0.0)))


def test_reacquisition_delay():
    ov = [0.9] * 5 + [0.1] * 5 + [0.2, 0.7, 0.8]
    assert reacquisition_delay(ov, 9) == 2
    assert reacquisition_delay([0.0] * 6, 3) is None


def test_planted_pool_error_counts(rng):
    phi, y, truth, planted, errs = make_planted_pool(rng, noise_rate=0.2)
    assert phi.shape == (50, 200)
    measured = (phi != truth[:, None]).mean(axis=0)
    np.testing.assert_array_equal(measured, errs)
    assert errs[planted] == pytest.approx(0.05, abs=0.011)
    assert np.delete(errs, planted).min() >= 0.3
    assert (y != truth).sum() == 10


def test_selection_benchmark_small_run():
    rows = selection_benchmark((0.0, 0.2), trials=3, seed=1)
    assert [r.noise_rate for r in rows] == [0.0, 0.2]
    for r in rows:
        assert r.trials == 3 and 0 <= r.l1_recovered <= 3 and 0 <= r.error_recovered <= 3
    # noiseless labels: the planted column has the lowest batch error by construction
    assert rows[0].error_rate == 1.0
