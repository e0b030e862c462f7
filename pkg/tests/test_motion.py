import numpy as np
import pytest

from dcstrack.evaluation import SyntheticSpec, center_error, make_synthetic_sequence
from dcstrack.motion import (PartBoostTracker, generate_candidates, generate_training_samples,
                             locate, sample_positions)
from dcstrack.validation import BoundsError, Rect, SamplingError


def count_disc_points(r):
    n = 0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            n += dx * dx + dy * dy <= r * r
    return n


def test_zero_radius_is_previous_box():
    assert generate_candidates(Rect(10, 10, 5, 5), 0, 1, 100, 100) == [Rect(10, 10, 5, 5)]


def test_radius_five_interior_count():
    cands = generate_candidates(Rect(40, 40, 10, 10), 5, 1, 100, 100)
    assert len(cands) == count_disc_points(5) == 81


def test_candidates_clipped_and_ordered():
    p = Rect(2, 3, 10, 10)
    cands = generate_candidates(p, 6, 1, 20, 18)
    assert p in cands
    assert all(c.inside(20, 18) for c in cands)
    keys = [(c.y, c.x) for c in cands]
    assert keys == sorted(keys)


def test_candidate_stride():
    cands = generate_candidates(Rect(40, 40, 10, 10), 4, 2, 100, 100)
    assert all((c.x - 40) % 2 == 0 and (c.y - 40) % 2 == 0 for c in cands)
    assert len(cands) == 13


def test_candidates_previous_out_of_bounds():
    with pytest.raises(BoundsError):
        generate_candidates(Rect(95, 0, 10, 10), 3, 1, 100, 100)


def test_locate_rules():
    only = [Rect(1, 1, 2, 2)]
    assert locate(only, [0.3]) == (only[0], 0.3)
    cands = generate_candidates(Rect(20, 20, 5, 5), 3, 1, 60, 60)
    assert locate(cands, np.full(len(cands), 0.5))[0] == cands[0]
    with pytest.raises(ValueError):
        locate([], [])


def test_locate_distance_scoring_oracle():
    target = Rect(23, 18, 5, 5)
    cands = generate_candidates(Rect(20, 20, 5, 5), 6, 1, 60, 60)
    scores = [-center_error(target, c) for c in cands]
    assert locate(cands, scores)[0] == target


def test_training_samples_geometry():
    p = Rect(60, 50, 20, 20)
    samples = generate_training_samples(p, 200, 160, seed=4, pos_radius=4, neg_inner=8,
                                        neg_outer=30, n_neg=50)
    pos = [s for s in samples if s.region_label == 1]
    neg = [s for s in samples if s.region_label == -1]
    assert p in [s.location for s in pos]
    assert len(pos) == count_disc_points(4) and len(neg) == 50
    for s in neg:
        d = center_error(p, s.location)
        assert 8 < d <= 30
        assert s.label == -1 and s.origin == "geometric"
    again = generate_training_samples(p, 200, 160, seed=4, pos_radius=4, neg_inner=8,
                                      neg_outer=30, n_neg=50)
    assert again == samples


def test_classifier_labels_threshold():
    p = Rect(60, 50, 20, 20)

    def labeler(rects):
        return [0.9 if r == p else 0.2 for r in rects]

    samples = generate_training_samples(p, 200, 160, seed=0, labeler=labeler, neg_outer=30)
    assert sum(s.label == 1 for s in samples) == 1
    assert all(s.origin == "classifier" for s in samples)


def test_empty_annulus():
    with pytest.raises(SamplingError):
        sample_positions(Rect(0, 0, 10, 10), 12, 12, np.random.default_rng(0),
                         neg_inner=8, neg_outer=20)


def _small_sequence(n, velocity=(0, 0), seed=0):
    spec = SyntheticSpec(n_frames=n, width=120, height=100, target_size=24, amplitude=(0, 0),
                         seed=seed)
    frames, truth, _ = make_synthetic_sequence(spec)
    if velocity != (0, 0):
        vx, vy = velocity
        frames = [np.roll(frames[0], (vy * t, vx * t), axis=(0, 1)) for t in range(n)]
        truth = [truth[0].shift(vx * t, vy * t) for t in range(n)]
    return frames, truth


@pytest.mark.slow
def test_identical_frames_do_not_drift():
    frames, truth = _small_sequence(1)
    out = PartBoostTracker(random_state=0).track_sequence([frames[0]] * 50, truth[0])
    drift = max(center_error(truth[0], r) for r, _ in out)
    assert drift <= 1.0, f"drift {drift:.2f} px"


@pytest.mark.slow
def test_constant_motion_error_bound():
    frames, truth = _small_sequence(15, velocity=(3, 0))
    assert truth[-1].inside(120, 100)
    out = PartBoostTracker(random_state=0).track_sequence(frames, truth[0])
    errs = [center_error(g, r) for g, (r, _) in zip(truth, out)]
    assert max(errs) <= 3.0, f"max per-frame error {max(errs):.2f} px"


def test_track_contract_and_determinism():
    frames, truth = _small_sequence(6)
    a = PartBoostTracker(random_state=3, search_radius=10, pool_size=40, n_selectors=5)
    b = PartBoostTracker(random_state=3, search_radius=10, pool_size=40, n_selectors=5)
    ra = a.track_sequence(frames, truth[0])
    rb = b.track_sequence(frames, truth[0])
    assert ra == rb
    for (prev, _), (cur, conf) in zip(ra, ra[1:]):
        assert center_error(prev, cur) <= 10
        assert 0.0 <= conf <= 1.0
    assert len(a.diagnostics_) == 6
    assert all(0 <= d.label_noise <= 1 for d in a.diagnostics_)
    assert a.diagnostics_[0].label_mode == "geometric"
    assert a.diagnostics_[1].label_mode == "classifier"


def test_geometric_mode_has_no_label_noise():
    frames, truth = _small_sequence(4)
    tr = PartBoostTracker(label_mode="geometric", pool_size=30, n_selectors=4,
                          search_radius=8)
    tr.track_sequence(frames, truth[0])
    assert all(d.label_noise == 0 for d in tr.diagnostics_)


def test_tracker_validation():
    frames, truth = _small_sequence(1)
    with pytest.raises(BoundsError):
        PartBoostTracker().fit(frames[0], Rect(110, 0, 24, 24))
    with pytest.raises(ValueError):
        PartBoostTracker(label_mode="oracle").fit(frames[0], truth[0])
    tr = PartBoostTracker(pool_size=30, n_selectors=4).fit(frames[0], truth[0])
    with pytest.raises(ValueError):
        tr.track(np.zeros((50, 50)))
    assert tr.get_params()["n_parts"] == 5
